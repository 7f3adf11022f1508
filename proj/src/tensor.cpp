/* Copyright 2026 The jetforge Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include <jetforge/error.hpp>
#include <jetforge/io.hpp>
#include <jetforge/quantizer.hpp>
#include <jetforge/tensor.hpp>

namespace jetforge
{
std::vector<float> tensor_buffer::values() const
{
    if (type != dtype::i8)
        return data;
    if (!qparams)
        fail(errc::missing_qparams, "i8 tensor without quantization parameters");
    std::vector<float> out(qdata.size());
    for (std::size_t i = 0; i < qdata.size(); i++)
        out[i] = quant::dequantize(qdata[i], *qparams);
    return out;
}

std::vector<std::uint8_t> encode_raw_tensor(const tensor_buffer &t)
{
    std::vector<std::uint8_t> out;
    for (auto d : { t.shape.n, t.shape.c, t.shape.h, t.shape.w })
        append_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    auto values = t.values();
    auto offset = out.size();
    out.resize(offset + values.size() * sizeof(float));
    std::memcpy(out.data() + offset, values.data(), values.size() * sizeof(float));
    return out;
}

tensor_buffer decode_raw_tensor(std::span<const std::uint8_t> bytes)
{
    byte_reader reader(bytes);
    if (!reader.can_read(16))
        fail(errc::truncated_file, "raw tensor shorter than its 16-byte header");
    tensor_shape shape;
    shape.n = static_cast<int>(reader.read<std::uint32_t>());
    shape.c = static_cast<int>(reader.read<std::uint32_t>());
    shape.h = static_cast<int>(reader.read<std::uint32_t>());
    shape.w = static_cast<int>(reader.read<std::uint32_t>());
    if (shape.n < 1 || shape.c < 1 || shape.h < 1 || shape.w < 1)
        fail(errc::invalid_argument, "raw tensor has a non-positive dimension");
    if (reader.remaining() != shape.size() * sizeof(float))
        fail(errc::truncated_file, "raw tensor " + to_string(shape) + " needs " + std::to_string(shape.size() * 4)
                + " data bytes, file has " + std::to_string(reader.remaining()));
    auto t = tensor_buffer::zeros(shape);
    reader.read_floats(t.data.data(), t.data.size());
    return t;
}

tensor_buffer read_raw_tensor(const std::filesystem::path &path)
{
    return decode_raw_tensor(read_file_bytes(path));
}

void write_raw_tensor(const tensor_buffer &t, const std::filesystem::path &path)
{
    write_file_bytes(path, encode_raw_tensor(t));
}
}
