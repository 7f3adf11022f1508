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

#include <jetforge/executor.hpp>
#include <jetforge/image.hpp>
#include <jetforge/tensor.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace jetforge::detect
{
/// Center-format box, normalized to the network input.
struct box
{
    double cx = 0.0;
    double cy = 0.0;
    double w = 0.0;
    double h = 0.0;

    double x1() const { return cx - w / 2; }
    double y1() const { return cy - h / 2; }
    double x2() const { return cx + w / 2; }
    double y2() const { return cy + h / 2; }

    static box from_corners(double x1, double y1, double x2, double y2)
    {
        return { (x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1 };
    }
};

/// Axis-aligned rectangle in source-image pixels, top-left origin.
struct rect
{
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    double area() const { return w > 0 && h > 0 ? w * h : 0.0; }
};

struct detection_box
{
    box bbox;
    int class_id = 0;
    double confidence = 0.0;
    int grid_x = 0;
    int grid_y = 0;
    int anchor = 0;
};

struct pixel_detection
{
    rect bbox;
    int class_id = 0;
    double confidence = 0.0;
};

struct letterbox_transform
{
    double scale = 1.0;
    int pad_x = 0;
    int pad_y = 0;
    int content_w = 0;
    int content_h = 0;
    int source_w = 0;
    int source_h = 0;
    int target_w = 0;
    int target_h = 0;
};

constexpr float letterbox_pad = 0.5f;

letterbox_transform plan_letterbox(int source_w, int source_h, int target_w, int target_h);

/// Aspect-preserving bilinear resize into a centered target canvas filled
/// with mid-gray. A single-channel image is replicated when `channels` is 3.
std::pair<tensor_buffer, letterbox_transform> letterbox(const image &img, int target_w, int target_h,
    int channels = 3);

double sigmoid(double x);

/// Decodes one yolo head. Anchors are (w, h) in input pixels; one box is
/// emitted per class whose confidence reaches `threshold`.
std::vector<detection_box> decode_head(const tensor_buffer &feature, const std::vector<std::pair<double, double>> &anchors,
    int num_classes, int input_w, int input_h, double threshold);

double iou(const box &a, const box &b);
double iou(const rect &a, const rect &b);
double intersection(const rect &a, const rect &b);

/// Per-class greedy suppression; confidence ties keep input order.
std::vector<detection_box> nms(const std::vector<detection_box> &dets, double iou_threshold = 0.45);

std::vector<pixel_detection> unletterbox(const std::vector<detection_box> &dets, const letterbox_transform &t);

struct detect_config
{
    double conf_threshold = 0.005;
    double nms_threshold = 0.45;
};

/// Letterbox, execute, decode every head, suppress, and map back to pixels.
std::vector<pixel_detection> run_detector(const graph &g, const executor &exec, const image &img,
    const detect_config &config);

struct image_detections
{
    std::string image;
    std::vector<pixel_detection> detections;
};

/// JSON lines: a {"header": ...} line, then one detection per line.
std::string detections_to_jsonl(const std::vector<image_detections> &all, const std::map<std::string, std::string> &config);
std::vector<image_detections> detections_from_jsonl(std::string_view text);
}
