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

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace jetforge
{
/// Planar image with values in [0, 1]; data is channel-major.
struct image
{
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> data;

    float at(int c, int y, int x) const
    {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    float &at(int c, int y, int x)
    {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
};

/// Binary PGM (P5) or PPM (P6) with maxval 255.
image decode_pnm(std::span<const std::uint8_t> bytes);
image read_pnm(const std::filesystem::path &path);
std::vector<std::uint8_t> encode_pnm(const image &img);
void write_pnm(const image &img, const std::filesystem::path &path);
}
