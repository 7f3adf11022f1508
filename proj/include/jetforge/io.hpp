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

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace jetforge
{
inline constexpr std::string_view tool_name = "jetforge";
inline constexpr std::string_view tool_version = "0.1.0";

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path &path);
std::string read_file_text(const std::filesystem::path &path);
void write_file_bytes(const std::filesystem::path &path, std::span<const std::uint8_t> bytes);
void write_file_text(const std::filesystem::path &path, std::string_view text);

/// FNV-1a 64-bit, hex encoded. Used for artifact checksums.
std::string checksum_hex(std::span<const std::uint8_t> bytes);

static_assert(std::endian::native == std::endian::little, "serialization assumes a little-endian host");

template <class T>
void append_le(std::vector<std::uint8_t> &out, T value)
{
    auto offset = out.size();
    out.resize(offset + sizeof(T));
    std::memcpy(out.data() + offset, &value, sizeof(T));
}

/// Bounds-checked little-endian reader over a byte span.
class byte_reader
{
public:
    explicit byte_reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
    std::size_t position() const noexcept { return pos_; }

    bool can_read(std::size_t n) const noexcept { return remaining() >= n; }

    template <class T>
    T read()
    {
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    void read_floats(float *dst, std::size_t count)
    {
        std::memcpy(dst, bytes_.data() + pos_, count * sizeof(float));
        pos_ += count * sizeof(float);
    }

    std::span<const std::uint8_t> take(std::size_t n)
    {
        auto result = bytes_.subspan(pos_, n);
        pos_ += n;
        return result;
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};
}
