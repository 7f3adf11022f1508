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
#include <jetforge/detect.hpp>
#include <jetforge/error.hpp>
#include <jetforge/eval.hpp>
#include <jetforge/executor.hpp>
#include <jetforge/quantizer.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace jetforge::pipeline
{
/// Images named by a manifest (paths relative to the manifest's directory)
/// or, for a directory, its manifest.jsonl if present and otherwise every
/// .ppm/.pgm file in name order.
std::vector<std::filesystem::path> list_images(const std::filesystem::path &dir_or_manifest);

/// Letterboxed network inputs for the given image files.
quant::image_source letterboxed_source(const graph &g, std::vector<std::filesystem::path> paths);

/// Runs the detector over every manifest image. Image keys in the result are
/// the manifest's image strings.
std::vector<detect::image_detections> detect_manifest(const graph &g, exec_mode mode,
    const data::dataset_manifest &manifest, const std::filesystem::path &base_dir, const detect::detect_config &config);

struct pipeline_config
{
    std::filesystem::path cfg;
    std::filesystem::path weights;
    std::filesystem::path calib_dir;
    std::filesystem::path out_dir;
    std::filesystem::path eval_manifest; // defaults to calib_dir/manifest.jsonl
    std::vector<std::string> passes { "fuse-conv-bn", "decompose-leaky", "fold-scale" };
    quant::calibration_config calibration;
    int bench_iterations = 200;
    int bench_warmup = 20;
    std::uint64_t seed = 0;
    detect::detect_config detection;
    eval::eval_config evaluation;
    std::map<std::string, std::string> echo; // effective config written into artifacts
};

struct pipeline_result
{
    std::vector<std::filesystem::path> artifacts;
    double map_f32 = 0.0;
    double map_i8 = 0.0;
};

/// Thrown when a stage fails; what() starts with the stage name.
class stage_error : public error
{
public:
    stage_error(const std::string &stage, const error &cause)
        : error(cause.code(), "stage '" + stage + "' failed: " + cause.what()), stage_(stage)
    {
    }
    const std::string &stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

pipeline_result run_pipeline(const pipeline_config &config);
}
