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
#include <jetforge/detect.hpp>
#include <jetforge/error.hpp>
#include <jetforge/io.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

using nlohmann::json;

namespace jetforge::detect
{
letterbox_transform plan_letterbox(int source_w, int source_h, int target_w, int target_h)
{
    if (source_w < 1 || source_h < 1)
        fail(errc::empty_image, "cannot letterbox an empty image");
    if (target_w < 1 || target_h < 1 || target_w % 32 != 0 || target_h % 32 != 0)
        fail(errc::invalid_argument, "letterbox target must be a positive multiple of 32");
    letterbox_transform t;
    t.source_w = source_w;
    t.source_h = source_h;
    t.target_w = target_w;
    t.target_h = target_h;
    t.scale = std::min(static_cast<double>(target_w) / source_w, static_cast<double>(target_h) / source_h);
    t.content_w = std::clamp(static_cast<int>(std::lround(source_w * t.scale)), 1, target_w);
    t.content_h = std::clamp(static_cast<int>(std::lround(source_h * t.scale)), 1, target_h);
    t.pad_x = (target_w - t.content_w) / 2;
    t.pad_y = (target_h - t.content_h) / 2;
    return t;
}

std::pair<tensor_buffer, letterbox_transform> letterbox(const image &img, int target_w, int target_h, int channels)
{
    if (img.width < 1 || img.height < 1 || img.data.empty())
        fail(errc::empty_image, "cannot letterbox an empty image");
    if (img.channels != channels && img.channels != 1)
        fail(errc::shape_mismatch, "image has " + std::to_string(img.channels) + " channels, network expects "
                + std::to_string(channels));
    auto t = plan_letterbox(img.width, img.height, target_w, target_h);
    tensor_buffer out = tensor_buffer::from({ 1, channels, target_h, target_w },
        std::vector<float>(static_cast<std::size_t>(channels) * target_h * target_w, letterbox_pad));

    auto sx = static_cast<double>(t.content_w) / img.width;
    auto sy = static_cast<double>(t.content_h) / img.height;
    for (int y = 0; y < t.content_h; y++)
    {
        auto fy = std::clamp((y + 0.5) / sy - 0.5, 0.0, static_cast<double>(img.height - 1));
        auto y0 = static_cast<int>(fy);
        auto y1 = std::min(y0 + 1, img.height - 1);
        auto wy = fy - y0;
        for (int x = 0; x < t.content_w; x++)
        {
            auto fx = std::clamp((x + 0.5) / sx - 0.5, 0.0, static_cast<double>(img.width - 1));
            auto x0 = static_cast<int>(fx);
            auto x1 = std::min(x0 + 1, img.width - 1);
            auto wx = fx - x0;
            for (int c = 0; c < channels; c++)
            {
                auto sc = img.channels == 1 ? 0 : c;
                auto top = img.at(sc, y0, x0) * (1 - wx) + img.at(sc, y0, x1) * wx;
                auto bottom = img.at(sc, y1, x0) * (1 - wx) + img.at(sc, y1, x1) * wx;
                out.data[(static_cast<std::size_t>(c) * target_h + y + t.pad_y) * target_w + x + t.pad_x]
                    = static_cast<float>(top * (1 - wy) + bottom * wy);
            }
        }
    }
    return { std::move(out), t };
}

double sigmoid(double x)
{
    return 1.0 / (1.0 + std::exp(-x));
}

std::vector<detection_box> decode_head(const tensor_buffer &feature, const std::vector<std::pair<double, double>> &anchors,
    int num_classes, int input_w, int input_h, double threshold)
{
    auto &s = feature.shape;
    auto per_anchor = 5 + num_classes;
    if (anchors.empty() || s.c != static_cast<int>(anchors.size()) * per_anchor)
        fail(errc::channel_mismatch, "head has " + std::to_string(s.c) + " channels, expected "
                + std::to_string(anchors.size()) + " x (5 + " + std::to_string(num_classes) + ")");
    auto values = feature.values();
    auto plane = static_cast<std::size_t>(s.h) * s.w;
    auto at = [&](int a, int field, int i, int j) {
        return static_cast<double>(values[static_cast<std::size_t>(a * per_anchor + field) * plane
            + static_cast<std::size_t>(i) * s.w + j]);
    };

    std::vector<detection_box> out;
    for (int a = 0; a < static_cast<int>(anchors.size()); a++)
    {
        for (int i = 0; i < s.h; i++)
        {
            for (int j = 0; j < s.w; j++)
            {
                auto objectness = sigmoid(at(a, 4, i, j));
                if (objectness < threshold)
                    continue;
                box b { (sigmoid(at(a, 0, i, j)) + j) / s.w, (sigmoid(at(a, 1, i, j)) + i) / s.h,
                    anchors[a].first * std::exp(at(a, 2, i, j)) / input_w,
                    anchors[a].second * std::exp(at(a, 3, i, j)) / input_h };
                for (int c = 0; c < num_classes; c++)
                {
                    auto conf = objectness * sigmoid(at(a, 5 + c, i, j));
                    if (conf >= threshold)
                        out.push_back({ b, c, conf, j, i, a });
                }
            }
        }
    }
    return out;
}

double intersection(const rect &a, const rect &b)
{
    auto w = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
    auto h = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
    return w > 0 && h > 0 ? w * h : 0.0;
}

double iou(const rect &a, const rect &b)
{
    if (a.area() <= 0.0 || b.area() <= 0.0)
        return 0.0;
    auto inter = intersection(a, b);
    return inter / (a.area() + b.area() - inter);
}

double iou(const box &a, const box &b)
{
    return iou(rect { a.x1(), a.y1(), a.w, a.h }, rect { b.x1(), b.y1(), b.w, b.h });
}

std::vector<detection_box> nms(const std::vector<detection_box> &dets, double iou_threshold)
{
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), std::size_t { 0 });
    std::stable_sort(order.begin(), order.end(),
        [&](auto a, auto b) { return dets[a].confidence > dets[b].confidence; });

    std::vector<detection_box> kept;
    for (auto i : order)
    {
        bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const detection_box &k) {
            return k.class_id == dets[i].class_id && iou(k.bbox, dets[i].bbox) >= iou_threshold;
        });
        if (!suppressed)
            kept.push_back(dets[i]);
    }
    return kept;
}

std::vector<pixel_detection> unletterbox(const std::vector<detection_box> &dets, const letterbox_transform &t)
{
    auto sx = static_cast<double>(t.content_w) / t.source_w;
    auto sy = static_cast<double>(t.content_h) / t.source_h;
    std::vector<pixel_detection> out;
    out.reserve(dets.size());
    for (auto &d : dets)
    {
        auto x1 = std::clamp((d.bbox.x1() * t.target_w - t.pad_x) / sx, 0.0, static_cast<double>(t.source_w));
        auto y1 = std::clamp((d.bbox.y1() * t.target_h - t.pad_y) / sy, 0.0, static_cast<double>(t.source_h));
        auto x2 = std::clamp((d.bbox.x2() * t.target_w - t.pad_x) / sx, 0.0, static_cast<double>(t.source_w));
        auto y2 = std::clamp((d.bbox.y2() * t.target_h - t.pad_y) / sy, 0.0, static_cast<double>(t.source_h));
        out.push_back({ { x1, y1, x2 - x1, y2 - y1 }, d.class_id, d.confidence });
    }
    return out;
}

std::vector<pixel_detection> run_detector(const graph &g, const executor &exec, const image &img,
    const detect_config &config)
{
    auto [input, transform] = letterbox(img, g.input_shape.w, g.input_shape.h, g.input_shape.c);
    auto trace = exec.run(input, retention::heads_only);

    std::vector<detection_box> all;
    for (auto &node : g.nodes)
    {
        if (!node.is<yolo_head>())
            continue;
        auto &head = node.as<yolo_head>();
        std::vector<std::pair<double, double>> anchors;
        for (auto idx : head.anchor_indices)
        {
            if (idx < 0 || idx >= static_cast<int>(g.metadata.anchors.size()))
                fail(errc::invalid_graph, "head '" + node.id + "' references missing anchor " + std::to_string(idx));
            anchors.push_back(g.metadata.anchors[idx]);
        }
        auto dets = decode_head(trace.at(node.output), anchors, head.num_classes, g.input_shape.w, g.input_shape.h,
            config.conf_threshold);
        all.insert(all.end(), dets.begin(), dets.end());
    }
    return unletterbox(nms(all, config.nms_threshold), transform);
}

std::string detections_to_jsonl(const std::vector<image_detections> &all, const std::map<std::string, std::string> &config)
{
    std::ostringstream out;
    json header = { { "header", { { "tool", tool_name }, { "version", tool_version }, { "config", config } } } };
    out << header.dump() << "\n";
    for (auto &img : all)
    {
        for (auto &d : img.detections)
        {
            json line = { { "image", img.image }, { "class", d.class_id }, { "confidence", d.confidence },
                { "bbox", { d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h } } };
            out << line.dump() << "\n";
        }
    }
    return out.str();
}

std::vector<image_detections> detections_from_jsonl(std::string_view text)
{
    std::vector<image_detections> out;
    std::map<std::string, std::size_t> index;
    std::istringstream in { std::string(text) };
    std::string line;
    int line_no = 0;
    while (std::getline(in, line))
    {
        line_no++;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try
        {
            auto j = json::parse(line);
            if (j.contains("header"))
                continue;
            auto name = j.at("image").get<std::string>();
            auto bbox = j.at("bbox");
            if (!bbox.is_array() || bbox.size() != 4)
                fail(errc::malformed_json, "detections line " + std::to_string(line_no) + ": bbox needs 4 numbers");
            pixel_detection d { { bbox[0].get<double>(), bbox[1].get<double>(), bbox[2].get<double>(),
                                    bbox[3].get<double>() },
                j.at("class").get<int>(), j.at("confidence").get<double>() };
            auto [it, fresh] = index.try_emplace(name, out.size());
            if (fresh)
                out.push_back({ name, {} });
            out[it->second].detections.push_back(d);
        }
        catch (const json::exception &e)
        {
            fail(errc::malformed_json, "detections line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}
}
