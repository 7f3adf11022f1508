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

#include <jetforge/datasets.hpp>
#include <jetforge/graph.hpp>
#include <jetforge/image.hpp>
#include <jetforge/tensor.hpp>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace fixtures
{
std::filesystem::path data_dir();
std::filesystem::path cfg_path(const std::string &name);
std::string read_cfg(const std::string &name);

/// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string &tag);

/// Fills every convolution and batch norm of a parsed skeleton with seeded
/// random values of sensible magnitude.
jetforge::graph fill_random_weights(jetforge::graph skeleton, std::uint64_t seed);
std::vector<std::uint8_t> random_weights_file(const jetforge::graph &skeleton, std::uint64_t seed);

jetforge::tensor_buffer random_tensor(const jetforge::tensor_shape &shape, std::mt19937_64 &rng, float lo, float hi);

/// Chain of `layers` conv + batch norm (+ activation) blocks on a 1x3x32x32
/// input ending in a 1x1 conv and a yolo head. Occasional residual adds and
/// convolutions with their own bias are mixed in.
jetforge::graph random_conv_bn_network(std::mt19937_64 &rng, int layers);

// Synthetic detection task: 64x64 scenes of colored squares on a noisy
// background, three classes (red, green, blue), and a hand-built detector
// that averages each 16x16 cell and scores it with a 1x1 head.
std::string synthetic_detector_cfg();
jetforge::graph synthetic_detector();
std::vector<std::uint8_t> synthetic_detector_weights();

struct scene
{
    jetforge::image img;
    std::vector<jetforge::data::annotation_box> boxes;
};

scene render_scene(std::uint64_t seed);

/// Writes scene_XXXX.ppm files and a manifest.jsonl; returns the manifest.
jetforge::data::dataset_manifest write_synthetic_dataset(const std::filesystem::path &dir, int count,
    std::uint64_t seed);
}
