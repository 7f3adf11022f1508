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
#include <span>
#include <vector>

namespace jetforge
{
// Container layout:
//   "UIR1" | u32 version | u64 manifest length | manifest JSON (UTF-8)
//   | f32 weight blobs, little-endian, in the order of manifest["weights"]
inline constexpr char container_magic[4] = { 'U', 'I', 'R', '1' };
inline constexpr std::uint32_t container_version = 1;

std::vector<std::uint8_t> serialize_container(const graph &g);
graph deserialize_container(std::span<const std::uint8_t> bytes);

void save_container(const graph &g, const std::filesystem::path &path);
graph load_container(const std::filesystem::path &path);
}
