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

#include <jetforge/detect.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace jetforge::data
{
inline constexpr std::array<std::string_view, 6> unified_classes { "person", "car", "bicycle", "motorbike", "bus",
    "truck" };

/// Class id used for ignore regions. Never a valid unified class.
inline constexpr int ignore_class = -1;

std::optional<int> unified_class_id(std::string_view name);

struct category_mapping
{
    enum class outcome
    {
        supported,
        ignore,
        dropped
    };
    outcome result = outcome::dropped;
    int class_id = ignore_class; // valid when result == supported
};

category_mapping map_coco_category(std::string_view name, bool iscrowd);
/// Unknown Visdrone names are rejected with UnknownCategory.
category_mapping map_visdrone_category(std::string_view name);

struct annotation_box
{
    detect::rect bbox; // pixels
    int class_id = ignore_class;

    bool ignore() const { return class_id == ignore_class; }
};

struct annotation_record
{
    std::string image;
    int width = 0;
    int height = 0;
    std::vector<annotation_box> boxes;
    std::string source;
};

struct ingest_config
{
    /// Prepended (with a '/') to every image file name.
    std::string image_prefix;
    std::vector<std::string> *warnings = nullptr;
};

std::vector<annotation_record> ingest_coco(std::string_view annotation_json, const ingest_config &config);
std::vector<annotation_record> ingest_coco_file(const std::filesystem::path &path, const ingest_config &config);

/// Visdrone numeric category id to name, read from "id name" lines.
using visdrone_categories = std::map<int, std::string>;
visdrone_categories parse_visdrone_categories(std::string_view text);
visdrone_categories default_visdrone_categories();

/// Width and height from a PNM, PNG, or JPEG header.
std::pair<int, int> probe_image_size(const std::filesystem::path &path);

/// Parses one Visdrone annotation file for an image of the given size.
annotation_record parse_visdrone_file(std::string_view text, const std::string &file_label, std::string image,
    int width, int height, const visdrone_categories &categories, std::vector<std::string> *warnings);

/// Reads every *.txt in annotation_dir; the image with the same stem is
/// looked up in image_dir to learn its dimensions.
std::vector<annotation_record> ingest_visdrone(const std::filesystem::path &annotation_dir,
    const std::filesystem::path &image_dir, const visdrone_categories &categories, const ingest_config &config);

struct dataset_manifest
{
    std::vector<annotation_record> records; // sorted by image path
    std::map<std::string, std::size_t> source_counts;
    std::array<std::size_t, unified_classes.size()> class_histogram {};
    std::size_t ignore_count = 0;
    std::size_t negative_count = 0;
};

dataset_manifest merge(const std::vector<std::vector<annotation_record>> &sources);

std::string manifest_to_jsonl(const dataset_manifest &m, const std::map<std::string, std::string> &config);
dataset_manifest manifest_from_jsonl(std::string_view text);
dataset_manifest load_manifest(const std::filesystem::path &path);

using box_size = std::pair<double, double>;

/// IoU of two boxes sharing a center.
double centered_iou(const box_size &a, const box_size &b);
double mean_best_iou(const std::vector<box_size> &boxes, const std::vector<box_size> &anchors);

struct kmeans_result
{
    std::vector<box_size> anchors; // ascending area
    double mean_iou = 0.0;
    std::vector<double> history;   // mean IoU after each accepted Lloyd iteration
    int iterations = 0;
};

kmeans_result kmeans_anchors(const std::vector<box_size> &boxes, int k, std::uint64_t seed, int max_iterations = 300);

/// k anchors spaced evenly between the smallest and largest box dimensions.
std::vector<box_size> minmax_anchors(const std::vector<box_size> &boxes, int k);

/// Non-ignore box sizes mapped into a target_w x target_h letterbox.
std::vector<box_size> letterboxed_sizes(const dataset_manifest &m, int target_w, int target_h);

struct resolution_schedule
{
    int min_w = 416;
    int max_w = 960;
    int min_h = 256;
    int max_h = 544;
    int period = 10;
    std::uint64_t seed = 0;
};

/// Multiple of 32 in [min_h, max_h] closest to w*9/16; ties go to the larger.
int height_for_width(int w, const resolution_schedule &schedule = {});
std::vector<int> legal_widths(const resolution_schedule &schedule = {});
std::pair<int, int> sample_resolution(std::uint64_t iteration, const resolution_schedule &schedule);
}
