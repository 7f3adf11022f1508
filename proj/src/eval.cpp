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
#include <jetforge/eval.hpp>
#include <jetforge/io.hpp>

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>

namespace jetforge::eval
{
match_result match_detections(const std::vector<detect::rect> &dets, const std::vector<detect::rect> &gts,
    const std::vector<detect::rect> &ignore_regions, const eval_config &config)
{
    match_result r;
    r.labels.resize(dets.size(), match_label::fp);
    r.matched.resize(gts.size());
    for (std::size_t d = 0; d < dets.size(); d++)
    {
        std::optional<std::size_t> best;
        double best_iou = config.iou_threshold;
        for (std::size_t g = 0; g < gts.size(); g++)
        {
            if (r.matched[g])
                continue;
            auto v = detect::iou(dets[d], gts[g]);
            if (v >= best_iou && (!best || v > best_iou))
            {
                best = g;
                best_iou = v;
            }
        }
        if (best)
        {
            r.labels[d] = match_label::tp;
            r.matched[*best] = d;
            continue;
        }
        auto area = dets[d].area();
        if (config.ignore_eval && area > 0.0)
        {
            for (auto &region : ignore_regions)
            {
                if (detect::intersection(dets[d], region) / area >= config.ignore_threshold)
                {
                    r.labels[d] = match_label::ignored;
                    break;
                }
            }
        }
    }
    return r;
}

std::optional<double> average_precision(std::vector<ranked_detection> dets, std::size_t gt_count)
{
    if (gt_count == 0)
        return std::nullopt;
    std::stable_sort(dets.begin(), dets.end(), [](auto &a, auto &b) { return a.confidence > b.confidence; });

    std::vector<double> precision(dets.size()), recall(dets.size());
    std::size_t tp = 0;
    for (std::size_t i = 0; i < dets.size(); i++)
    {
        tp += dets[i].tp ? 1 : 0;
        precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
        recall[i] = static_cast<double>(tp) / static_cast<double>(gt_count);
    }
    for (std::size_t i = dets.size(); i-- > 1;)
        precision[i - 1] = std::max(precision[i - 1], precision[i]);

    double ap = 0.0, previous_recall = 0.0;
    for (std::size_t i = 0; i < dets.size(); i++)
    {
        ap += (recall[i] - previous_recall) * precision[i];
        previous_recall = recall[i];
    }
    return ap;
}

eval_report evaluate(const std::vector<detect::image_detections> &dets, const data::dataset_manifest &manifest,
    const eval_config &config)
{
    constexpr auto class_count = data::unified_classes.size();
    eval_report report;
    report.config = config;
    report.images = manifest.records.size();

    std::map<std::string, const data::annotation_record *> by_image;
    for (auto &r : manifest.records)
        by_image[r.image] = &r;

    // Detections grouped per image in file order; ranking is global per class.
    std::map<std::string, std::vector<std::pair<std::size_t, detect::pixel_detection>>> per_image;
    std::size_t order = 0;
    for (auto &img : dets)
    {
        if (!by_image.contains(img.image))
            fail(errc::unknown_image, "detections reference image '" + img.image + "' which is not in the manifest");
        for (auto &d : img.detections)
        {
            if (d.class_id < 0 || d.class_id >= static_cast<int>(class_count))
                fail(errc::unknown_class_id, "detection for '" + img.image + "' has class id " + std::to_string(d.class_id));
            per_image[img.image].push_back({ order++, d });
        }
    }
    report.detections = order;

    std::vector<std::vector<std::pair<std::size_t, ranked_detection>>> ranked(class_count);
    report.classes.resize(class_count);
    for (std::size_t c = 0; c < class_count; c++)
    {
        report.classes[c].class_id = static_cast<int>(c);
        report.classes[c].name = std::string(data::unified_classes[c]);
    }

    for (auto &record : manifest.records)
    {
        std::vector<detect::rect> ignore_regions;
        for (auto &b : record.boxes)
        {
            if (b.ignore())
                ignore_regions.push_back(b.bbox);
            else
                report.classes[b.class_id].gt_count++;
        }
        auto found = per_image.find(record.image);
        for (std::size_t c = 0; c < class_count; c++)
        {
            std::vector<detect::rect> gts;
            for (auto &b : record.boxes)
            {
                if (b.class_id == static_cast<int>(c))
                    gts.push_back(b.bbox);
            }
            std::vector<std::pair<std::size_t, detect::pixel_detection>> mine;
            if (found != per_image.end())
            {
                for (auto &entry : found->second)
                {
                    if (entry.second.class_id == static_cast<int>(c))
                        mine.push_back(entry);
                }
            }
            std::stable_sort(mine.begin(), mine.end(),
                [](auto &a, auto &b) { return a.second.confidence > b.second.confidence; });
            std::vector<detect::rect> rects;
            for (auto &m : mine)
                rects.push_back(m.second.bbox);
            auto result = match_detections(rects, gts, ignore_regions, config);
            for (std::size_t i = 0; i < mine.size(); i++)
            {
                auto &cr = report.classes[c];
                switch (result.labels[i])
                {
                case match_label::tp: cr.tp++; break;
                case match_label::fp: cr.fp++; break;
                case match_label::ignored: cr.ignored++; continue;
                }
                ranked[c].push_back({ mine[i].first, { mine[i].second.confidence, result.labels[i] == match_label::tp } });
            }
        }
    }

    double sum = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < class_count; c++)
    {
        // Restore global file order so confidence ties break by input order.
        std::sort(ranked[c].begin(), ranked[c].end(), [](auto &a, auto &b) { return a.first < b.first; });
        std::vector<ranked_detection> list;
        for (auto &r : ranked[c])
            list.push_back(r.second);
        auto &cr = report.classes[c];
        cr.ap = average_precision(std::move(list), cr.gt_count);
        if (cr.ap)
        {
            sum += *cr.ap;
            present++;
        }
    }
    report.map = present > 0 ? sum / static_cast<double>(present) : 0.0;
    return report;
}

std::string report_to_json(const eval_report &report, const std::map<std::string, std::string> &run_config)
{
    auto classes = nlohmann::json::array();
    for (auto &c : report.classes)
    {
        classes.push_back({ { "class_id", c.class_id }, { "name", c.name }, { "gt_count", c.gt_count }, { "tp", c.tp },
            { "fp", c.fp }, { "ignored", c.ignored },
            { "ap", c.ap ? nlohmann::json(*c.ap) : nlohmann::json(nullptr) } });
    }
    nlohmann::json j = { { "header", { { "tool", tool_name }, { "version", tool_version }, { "config", run_config } } },
        { "iou_threshold", report.config.iou_threshold }, { "ignore_threshold", report.config.ignore_threshold },
        { "ignore_eval", report.config.ignore_eval }, { "images", report.images }, { "detections", report.detections },
        { "classes", classes }, { "map", report.map } };
    return j.dump(2) + "\n";
}

std::string report_to_table(const eval_report &report)
{
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line, "%-10s %8s %8s %8s %8s %8s\n", "class", "gt", "tp", "fp", "ignored", "ap");
    out += line;
    for (auto &c : report.classes)
    {
        char ap[32];
        if (c.ap)
            std::snprintf(ap, sizeof ap, "%.4f", *c.ap);
        else
            std::snprintf(ap, sizeof ap, "%s", "absent");
        std::snprintf(line, sizeof line, "%-10s %8zu %8zu %8zu %8zu %8s\n", c.name.c_str(), c.gt_count, c.tp, c.fp,
            c.ignored, ap);
        out += line;
    }
    std::snprintf(line, sizeof line, "mAP@%.2f = %.4f\n", report.config.iou_threshold, report.map);
    out += line;
    return out;
}
}
