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
#include <jetforge/image.hpp>
#include <jetforge/io.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

namespace jetforge
{
namespace
{
class pnm_header_reader
{
public:
    explicit pnm_header_reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    int next_int()
    {
        skip_space_and_comments();
        if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_]))
            fail(errc::invalid_argument, "PNM header: expected a number");
        long value = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_]))
        {
            value = value * 10 + (bytes_[pos_++] - '0');
            if (value > 1 << 24)
                fail(errc::invalid_argument, "PNM header: number too large");
        }
        return static_cast<int>(value);
    }

    /// Consumes the single whitespace byte that ends the header.
    std::size_t data_offset()
    {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_]))
            fail(errc::invalid_argument, "PNM header: missing separator before pixel data");
        return pos_ + 1;
    }

    std::size_t pos_ = 2;

private:
    void skip_space_and_comments()
    {
        while (pos_ < bytes_.size())
        {
            if (bytes_[pos_] == '#')
            {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n')
                    pos_++;
            }
            else if (std::isspace(bytes_[pos_]))
                pos_++;
            else
                break;
        }
    }

    std::span<const std::uint8_t> bytes_;
};
}

image decode_pnm(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
        fail(errc::invalid_argument, "not a binary PGM/PPM image (expected P5 or P6)");
    image img;
    img.channels = bytes[1] == '6' ? 3 : 1;
    pnm_header_reader reader(bytes);
    img.width = reader.next_int();
    img.height = reader.next_int();
    auto maxval = reader.next_int();
    if (img.width < 1 || img.height < 1)
        fail(errc::empty_image, "image has zero width or height");
    if (maxval != 255)
        fail(errc::invalid_argument, "only maxval 255 is supported, got " + std::to_string(maxval));
    auto offset = reader.data_offset();
    auto pixels = static_cast<std::size_t>(img.width) * img.height;
    if (bytes.size() - offset != pixels * img.channels)
        fail(errc::truncated_file, "pixel data length does not match the header");

    img.data.resize(pixels * img.channels);
    for (std::size_t i = 0; i < pixels; i++)
    {
        for (int c = 0; c < img.channels; c++)
            img.data[c * pixels + i] = bytes[offset + i * img.channels + c] / 255.0f;
    }
    return img;
}

image read_pnm(const std::filesystem::path &path)
{
    return decode_pnm(read_file_bytes(path));
}

std::vector<std::uint8_t> encode_pnm(const image &img)
{
    if (img.channels != 1 && img.channels != 3)
        fail(errc::invalid_argument, "PNM output needs 1 or 3 channels");
    auto header = std::string(img.channels == 3 ? "P6" : "P5") + "\n" + std::to_string(img.width) + " "
        + std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    auto pixels = static_cast<std::size_t>(img.width) * img.height;
    for (std::size_t i = 0; i < pixels; i++)
    {
        for (int c = 0; c < img.channels; c++)
        {
            auto v = std::clamp(img.data[c * pixels + i], 0.0f, 1.0f);
            out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
        }
    }
    return out;
}

void write_pnm(const image &img, const std::filesystem::path &path)
{
    write_file_bytes(path, encode_pnm(img));
}
}
