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

#include <cstdio>
#include <fstream>
#include <iterator>

namespace jetforge
{
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(errc::io_error, "cannot open '" + path.string() + "'");
    return { std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>() };
}

std::string read_file_text(const std::filesystem::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(errc::io_error, "cannot open '" + path.string() + "'");
    return { std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>() };
}

void write_file_bytes(const std::filesystem::path &path, std::span<const std::uint8_t> bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        fail(errc::io_error, "cannot write '" + path.string() + "'");
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        fail(errc::io_error, "short write to '" + path.string() + "'");
}

void write_file_text(const std::filesystem::path &path, std::string_view text)
{
    write_file_bytes(path, { reinterpret_cast<const std::uint8_t *>(text.data()), text.size() });
}

std::string checksum_hex(std::span<const std::uint8_t> bytes)
{
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (auto b : bytes)
    {
        hash ^= b;
        hash *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}
}
