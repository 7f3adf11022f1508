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

#include <optional>
#include <string>
#include <vector>

namespace jetforge::eval
{
enum class match_label
{
    tp,
    fp,
    ignored
};

struct match_result
{
    std::vector<match_label> labels;                 // per detection
    std::vector<std::optional<std::size_t>> matched; // per ground truth: detection index
};

struct eval_config
{
    double iou_threshold = 0.5;
    /// Minimum intersection over detection area for a detection to fall
    /// inside an ignore region.
    double ignore_threshold = 0.5;
    bool ignore_eval = true;
};

/// Greedy matching for one image and class. `dets` must already be in
/// descending confidence order.
match_result match_detections(const std::vector<detect::rect> &dets, const std::vector<detect::rect> &gts,
    const std::vector<detect::rect> &ignore_regions, const eval_config &config = {});

struct ranked_detection
{
    double confidence = 0.0;
    bool tp = false;
};

/// All-points interpolated AP. Detections are sorted here (stable, by
/// descending confidence). Returns nullopt when there is no ground truth.
std::optional<double> average_precision(std::vector<ranked_detection> dets, std::size_t gt_count);

struct class_report
{
    int class_id = 0;
    std::string name;
    std::size_t gt_count = 0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t ignored = 0;
    std::optional<double> ap;
};

struct eval_report
{
    std::vector<class_report> classes;
    double map = 0.0;
    std::size_t images = 0;
    std::size_t detections = 0;
    eval_config config;
};

eval_report evaluate(const std::vector<detect::image_detections> &dets, const data::dataset_manifest &manifest,
    const eval_config &config = {});

std::string report_to_json(const eval_report &report, const std::map<std::string, std::string> &run_config);
std::string report_to_table(const eval_report &report);
}
