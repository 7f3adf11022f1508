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
#pragma once

#include <jetforge/graph.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace jetforge
{
enum class dtype
{
    f32,
    f16sim, // binary16-representable values held in f32 storage
    i8
};

/// Dense N,C,H,W row-major tensor. Floating types use `data`; i8 uses
/// `qdata` together with `qparams`.
struct tensor_buffer
{
    tensor_shape shape {};
    dtype type = dtype::f32;
    std::vector<float> data;
    std::vector<std::int8_t> qdata;
    std::optional<quant_params> qparams;

    static tensor_buffer zeros(const tensor_shape &shape)
    {
        return { shape, dtype::f32, std::vector<float>(shape.size(), 0.0f), {}, std::nullopt };
    }

    static tensor_buffer from(const tensor_shape &shape, std::vector<float> values)
    {
        return { shape, dtype::f32, std::move(values), {}, std::nullopt };
    }

    std::size_t size() const noexcept { return shape.size(); }

    /// Real values regardless of storage type.
    std::vector<float> values() const;

    float at(int c, int y, int x) const
    {
        return data[(static_cast<std::size_t>(c) * shape.h + y) * shape.w + x];
    }
};

// Raw tensor dump: four little-endian u32 (n, c, h, w) then n*c*h*w f32.
std::vector<std::uint8_t> encode_raw_tensor(const tensor_buffer &t);
tensor_buffer decode_raw_tensor(std::span<const std::uint8_t> bytes);
tensor_buffer read_raw_tensor(const std::filesystem::path &path);
void write_raw_tensor(const tensor_buffer &t, const std::filesystem::path &path);
}
