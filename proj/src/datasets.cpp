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
#include <jetforge/datasets.hpp>
#include <jetforge/error.hpp>
#include <jetforge/io.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>

using nlohmann::json;

namespace jetforge::data
{
namespace
{
void warn(std::vector<std::string> *warnings, std::string message)
{
    if (warnings)
        warnings->push_back(std::move(message));
}

std::string join_path(const std::string &prefix, const std::string &name)
{
    if (prefix.empty())
        return name;
    return prefix.back() == '/' ? prefix + name : prefix + "/" + name;
}

/// Clips to the image; returns false (with a warning) when nothing is left.
bool clip_box(detect::rect &r, int width, int height, const std::string &where, std::vector<std::string> *warnings)
{
    auto x1 = std::clamp(r.x, 0.0, static_cast<double>(width));
    auto y1 = std::clamp(r.y, 0.0, static_cast<double>(height));
    auto x2 = std::clamp(r.x + r.w, 0.0, static_cast<double>(width));
    auto y2 = std::clamp(r.y + r.h, 0.0, static_cast<double>(height));
    r = { x1, y1, x2 - x1, y2 - y1 };
    if (r.w > 0.0 && r.h > 0.0)
        return true;
    warn(warnings, where + ": zero-area box after clipping, dropped");
    return false;
}

std::string trim(std::string s)
{
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::uint32_t be16(const std::vector<std::uint8_t> &b, std::size_t i)
{
    return (static_cast<std::uint32_t>(b[i]) << 8) | b[i + 1];
}

std::uint32_t be32(const std::vector<std::uint8_t> &b, std::size_t i)
{
    return (be16(b, i) << 16) | be16(b, i + 2);
}
}

std::optional<int> unified_class_id(std::string_view name)
{
    auto it = std::find(unified_classes.begin(), unified_classes.end(), name);
    if (it == unified_classes.end())
        return std::nullopt;
    return static_cast<int>(it - unified_classes.begin());
}

category_mapping map_coco_category(std::string_view name, bool iscrowd)
{
    using outcome = category_mapping::outcome;
    auto id = unified_class_id(name == "motorcycle" ? "motorbike" : name);
    if (!id || name == "motorbike")
        return { outcome::dropped, ignore_class };
    if (iscrowd)
        return { outcome::ignore, ignore_class };
    return { outcome::supported, *id };
}

category_mapping map_visdrone_category(std::string_view name)
{
    using outcome = category_mapping::outcome;
    static const std::map<std::string_view, int, std::less<>> supported { { "pedestrian", 0 }, { "people", 0 },
        { "car", 1 }, { "van", 1 }, { "bicycle", 2 }, { "motor", 3 }, { "bus", 4 }, { "truck", 5 } };
    static const std::set<std::string_view, std::less<>> ignored { "ignored-regions", "others", "tricycle",
        "awning-tricycle" };
    if (auto it = supported.find(name); it != supported.end())
        return { outcome::supported, it->second };
    if (ignored.contains(name))
        return { outcome::ignore, ignore_class };
    fail(errc::unknown_category, "unknown Visdrone category '" + std::string(name) + "'");
}

std::vector<annotation_record> ingest_coco(std::string_view annotation_json, const ingest_config &config)
{
    json j;
    try
    {
        j = json::parse(annotation_json);
    }
    catch (const json::exception &e)
    {
        fail(errc::malformed_json, std::string("COCO annotations: ") + e.what());
    }

    try
    {
        std::map<std::int64_t, std::string> categories;
        for (auto &c : j.at("categories"))
            categories[c.at("id").get<std::int64_t>()] = c.at("name").get<std::string>();

        std::map<std::int64_t, std::size_t> by_id;
        std::vector<annotation_record> records;
        for (auto &img : j.at("images"))
        {
            annotation_record r;
            r.image = join_path(config.image_prefix, img.at("file_name").get<std::string>());
            r.width = img.at("width").get<int>();
            r.height = img.at("height").get<int>();
            r.source = "coco";
            if (r.width < 1 || r.height < 1)
                fail(errc::malformed_json, "COCO image '" + r.image + "' has no size");
            if (!by_id.emplace(img.at("id").get<std::int64_t>(), records.size()).second)
                fail(errc::malformed_json, "COCO image id repeated for '" + r.image + "'");
            records.push_back(std::move(r));
        }

        for (auto &a : j.at("annotations"))
        {
            auto cat_id = a.at("category_id").get<std::int64_t>();
            auto cat = categories.find(cat_id);
            if (cat == categories.end())
                fail(errc::unknown_category_id, "COCO annotation uses unknown category id " + std::to_string(cat_id));
            auto img = by_id.find(a.at("image_id").get<std::int64_t>());
            if (img == by_id.end())
                fail(errc::malformed_json, "COCO annotation references an unknown image id");
            auto iscrowd = a.contains("iscrowd") && a["iscrowd"].get<int>() == 1;
            auto mapping = map_coco_category(cat->second, iscrowd);
            if (mapping.result == category_mapping::outcome::dropped)
                continue;
            auto &bb = a.at("bbox");
            if (!bb.is_array() || bb.size() != 4)
                fail(errc::malformed_json, "COCO bbox must have four numbers");
            auto &rec = records[img->second];
            detect::rect r { bb[0].get<double>(), bb[1].get<double>(), bb[2].get<double>(), bb[3].get<double>() };
            if (clip_box(r, rec.width, rec.height, rec.image, config.warnings))
                rec.boxes.push_back({ r, mapping.class_id });
        }
        return records;
    }
    catch (const json::exception &e)
    {
        fail(errc::malformed_json, std::string("COCO annotations: ") + e.what());
    }
}

std::vector<annotation_record> ingest_coco_file(const std::filesystem::path &path, const ingest_config &config)
{
    return ingest_coco(read_file_text(path), config);
}

visdrone_categories parse_visdrone_categories(std::string_view text)
{
    visdrone_categories out;
    std::istringstream in { std::string(text) };
    std::string line;
    int line_no = 0;
    while (std::getline(in, line))
    {
        line_no++;
        line = trim(line.substr(0, line.find('#')));
        if (line.empty())
            continue;
        std::istringstream fields(line);
        int id = 0;
        std::string name, extra;
        if (!(fields >> id >> name) || (fields >> extra))
            fail(errc::malformed_line, "category map line " + std::to_string(line_no) + ": expected '<id> <name>'");
        map_visdrone_category(name); // rejects names the remap table does not know
        if (!out.emplace(id, name).second)
            fail(errc::malformed_line, "category map line " + std::to_string(line_no) + ": id repeated");
    }
    return out;
}

visdrone_categories default_visdrone_categories()
{
    return { { 0, "ignored-regions" }, { 1, "pedestrian" }, { 2, "people" }, { 3, "bicycle" }, { 4, "car" },
        { 5, "van" }, { 6, "truck" }, { 7, "tricycle" }, { 8, "awning-tricycle" }, { 9, "bus" }, { 10, "motor" },
        { 11, "others" } };
}

std::pair<int, int> probe_image_size(const std::filesystem::path &path)
{
    auto b = read_file_bytes(path);
    if (b.size() >= 2 && b[0] == 'P' && (b[1] == '5' || b[1] == '6'))
    {
        auto img = decode_pnm(b);
        return { img.width, img.height };
    }
    if (b.size() >= 24 && b[0] == 0x89 && b[1] == 'P' && b[2] == 'N' && b[3] == 'G')
        return { static_cast<int>(be32(b, 16)), static_cast<int>(be32(b, 20)) };
    if (b.size() >= 4 && b[0] == 0xFF && b[1] == 0xD8)
    {
        std::size_t i = 2;
        while (i + 9 < b.size())
        {
            if (b[i] != 0xFF)
            {
                i++;
                continue;
            }
            auto marker = b[i + 1];
            bool sof = marker >= 0xC0 && marker <= 0xCF && marker != 0xC4 && marker != 0xC8 && marker != 0xCC;
            if (sof)
                return { static_cast<int>(be16(b, i + 7)), static_cast<int>(be16(b, i + 5)) };
            if (marker == 0xD8 || marker == 0x01 || (marker >= 0xD0 && marker <= 0xD7) || marker == 0xFF)
            {
                i += marker == 0xFF ? 1 : 2;
                continue;
            }
            i += 2 + be16(b, i + 2);
        }
    }
    fail(errc::invalid_argument, "cannot determine image size of " + path.string());
}

annotation_record parse_visdrone_file(std::string_view text, const std::string &file_label, std::string image,
    int width, int height, const visdrone_categories &categories, std::vector<std::string> *warnings)
{
    annotation_record rec { std::move(image), width, height, {}, "visdrone" };
    std::istringstream in { std::string(text) };
    std::string line;
    int line_no = 0;
    while (std::getline(in, line))
    {
        line_no++;
        line = trim(line);
        if (line.empty())
            continue;
        if (line.back() == ',')
            line.pop_back(); // some releases end lines with a comma
        std::vector<std::string> fields;
        std::istringstream parts(line);
        std::string field;
        while (std::getline(parts, field, ','))
            fields.push_back(trim(field));
        auto where = file_label + ":" + std::to_string(line_no);
        if (fields.size() != 8)
            fail(errc::malformed_line, where + ": expected 8 comma-separated fields, got " + std::to_string(fields.size()));
        std::array<double, 8> v {};
        for (std::size_t i = 0; i < 8; i++)
        {
            std::size_t used = 0;
            try
            {
                v[i] = std::stod(fields[i], &used);
            }
            catch (const std::exception &)
            {
                used = 0;
            }
            if (used == 0 || used != fields[i].size())
                fail(errc::malformed_line, where + ": field " + std::to_string(i + 1) + " is not a number");
        }
        auto cat_id = static_cast<int>(v[5]);
        auto cat = categories.find(cat_id);
        if (cat == categories.end() || static_cast<double>(cat_id) != v[5])
            fail(errc::unknown_category, where + ": unknown category id " + fields[5]);
        auto mapping = map_visdrone_category(cat->second);
        detect::rect r { v[0], v[1], v[2], v[3] };
        if (clip_box(r, width, height, where, warnings))
            rec.boxes.push_back({ r, mapping.class_id });
    }
    return rec;
}

std::vector<annotation_record> ingest_visdrone(const std::filesystem::path &annotation_dir,
    const std::filesystem::path &image_dir, const visdrone_categories &categories, const ingest_config &config)
{
    if (!std::filesystem::is_directory(annotation_dir))
        fail(errc::io_error, "annotation directory not found: " + annotation_dir.string());
    std::vector<std::filesystem::path> files;
    for (auto &entry : std::filesystem::directory_iterator(annotation_dir))
    {
        if (entry.is_regular_file() && entry.path().extension() == ".txt")
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    std::vector<annotation_record> out;
    for (auto &file : files)
    {
        std::optional<std::filesystem::path> image_path;
        for (auto ext : { ".jpg", ".jpeg", ".png", ".ppm", ".pgm" })
        {
            auto candidate = image_dir / (file.stem().string() + ext);
            if (std::filesystem::exists(candidate))
            {
                image_path = candidate;
                break;
            }
        }
        if (!image_path)
            fail(errc::io_error, "no image found for annotation " + file.string());
        auto [w, h] = probe_image_size(*image_path);
        out.push_back(parse_visdrone_file(read_file_text(file), file.filename().string(),
            join_path(config.image_prefix, image_path->filename().string()), w, h, categories, config.warnings));
    }
    return out;
}

dataset_manifest merge(const std::vector<std::vector<annotation_record>> &sources)
{
    dataset_manifest m;
    for (auto &list : sources)
        m.records.insert(m.records.end(), list.begin(), list.end());
    std::sort(m.records.begin(), m.records.end(), [](auto &a, auto &b) { return a.image < b.image; });
    for (std::size_t i = 1; i < m.records.size(); i++)
    {
        if (m.records[i].image == m.records[i - 1].image)
            fail(errc::duplicate_image_path, "image path appears twice: " + m.records[i].image);
    }
    for (auto &r : m.records)
    {
        m.source_counts[r.source]++;
        if (r.boxes.empty())
            m.negative_count++;
        for (auto &b : r.boxes)
        {
            if (b.ignore())
                m.ignore_count++;
            else
                m.class_histogram.at(static_cast<std::size_t>(b.class_id))++;
        }
    }
    return m;
}

std::string manifest_to_jsonl(const dataset_manifest &m, const std::map<std::string, std::string> &config)
{
    json histogram = json::object();
    for (std::size_t c = 0; c < unified_classes.size(); c++)
        histogram[std::string(unified_classes[c])] = m.class_histogram[c];
    json header = { { "tool", tool_name }, { "version", tool_version }, { "config", config },
        { "records", m.records.size() }, { "source_counts", m.source_counts }, { "class_histogram", histogram },
        { "ignore_count", m.ignore_count }, { "negative_count", m.negative_count } };
    std::ostringstream out;
    out << json { { "header", header } }.dump() << "\n";
    for (auto &r : m.records)
    {
        auto boxes = json::array();
        for (auto &b : r.boxes)
        {
            json jb = { { "bbox", { b.bbox.x, b.bbox.y, b.bbox.w, b.bbox.h } } };
            if (b.ignore())
                jb["ignore"] = true;
            else
                jb["class"] = b.class_id;
            boxes.push_back(jb);
        }
        out << json { { "image", r.image }, { "width", r.width }, { "height", r.height }, { "source", r.source },
            { "boxes", boxes } }
                   .dump()
            << "\n";
    }
    return out.str();
}

dataset_manifest manifest_from_jsonl(std::string_view text)
{
    std::vector<annotation_record> records;
    std::istringstream in { std::string(text) };
    std::string line;
    int line_no = 0;
    while (std::getline(in, line))
    {
        line_no++;
        if (trim(line).empty())
            continue;
        try
        {
            auto j = json::parse(line);
            if (j.contains("header"))
                continue;
            annotation_record r;
            r.image = j.at("image").get<std::string>();
            r.width = j.at("width").get<int>();
            r.height = j.at("height").get<int>();
            r.source = j.value("source", "");
            for (auto &b : j.at("boxes"))
            {
                auto &bb = b.at("bbox");
                annotation_box box { { bb.at(0).get<double>(), bb.at(1).get<double>(), bb.at(2).get<double>(),
                                         bb.at(3).get<double>() },
                    ignore_class };
                if (!b.value("ignore", false))
                {
                    box.class_id = b.at("class").get<int>();
                    if (box.class_id < 0 || box.class_id >= static_cast<int>(unified_classes.size()))
                        fail(errc::unknown_class_id, "manifest line " + std::to_string(line_no) + ": class id "
                                + std::to_string(box.class_id) + " out of range");
                }
                r.boxes.push_back(box);
            }
            records.push_back(std::move(r));
        }
        catch (const json::exception &e)
        {
            fail(errc::malformed_json, "manifest line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return merge({ records });
}

dataset_manifest load_manifest(const std::filesystem::path &path)
{
    return manifest_from_jsonl(read_file_text(path));
}

double centered_iou(const box_size &a, const box_size &b)
{
    auto inter = std::min(a.first, b.first) * std::min(a.second, b.second);
    auto uni = a.first * a.second + b.first * b.second - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

double mean_best_iou(const std::vector<box_size> &boxes, const std::vector<box_size> &anchors)
{
    if (boxes.empty())
        return 0.0;
    double sum = 0.0;
    for (auto &b : boxes)
    {
        double best = 0.0;
        for (auto &a : anchors)
            best = std::max(best, centered_iou(b, a));
        sum += best;
    }
    return sum / static_cast<double>(boxes.size());
}

namespace
{
std::vector<int> assign(const std::vector<box_size> &boxes, const std::vector<box_size> &centroids)
{
    std::vector<int> out(boxes.size());
    for (std::size_t i = 0; i < boxes.size(); i++)
    {
        double best = -1.0;
        for (std::size_t c = 0; c < centroids.size(); c++)
        {
            auto v = centered_iou(boxes[i], centroids[c]);
            if (v > best)
            {
                best = v;
                out[i] = static_cast<int>(c);
            }
        }
    }
    return out;
}

/// Box with the largest distance to its nearest centroid; first one on ties.
std::size_t farthest_box(const std::vector<box_size> &boxes, const std::vector<box_size> &centroids)
{
    std::size_t far = 0;
    double worst = -1.0;
    for (std::size_t i = 0; i < boxes.size(); i++)
    {
        double nearest = std::numeric_limits<double>::infinity();
        for (auto &c : centroids)
            nearest = std::min(nearest, 1.0 - centered_iou(boxes[i], c));
        if (nearest > worst)
        {
            worst = nearest;
            far = i;
        }
    }
    return far;
}
}

kmeans_result kmeans_anchors(const std::vector<box_size> &boxes, int k, std::uint64_t seed, int max_iterations)
{
    std::set<box_size> distinct(boxes.begin(), boxes.end());
    if (boxes.empty() || k < 1 || static_cast<std::size_t>(k) > distinct.size())
        fail(errc::too_few_boxes, "k-means needs at least k=" + std::to_string(k) + " distinct boxes, have "
                + std::to_string(distinct.size()));
    for (auto &b : boxes)
    {
        if (!(b.first > 0.0 && b.second > 0.0))
            fail(errc::invalid_argument, "box sizes must be positive");
    }

    // k-means++ seeding with d = 1 - IoU.
    std::mt19937_64 rng(seed);
    std::vector<box_size> centroids;
    centroids.push_back(boxes[std::uniform_int_distribution<std::size_t>(0, boxes.size() - 1)(rng)]);
    while (centroids.size() < static_cast<std::size_t>(k))
    {
        std::vector<double> weights(boxes.size());
        double total = 0.0;
        for (std::size_t i = 0; i < boxes.size(); i++)
        {
            double nearest = std::numeric_limits<double>::infinity();
            for (auto &c : centroids)
                nearest = std::min(nearest, 1.0 - centered_iou(boxes[i], c));
            weights[i] = nearest * nearest;
            total += weights[i];
        }
        // total > 0: some distinct box is not yet a centroid.
        auto target = std::uniform_real_distribution<double>(0.0, total)(rng);
        std::size_t pick = boxes.size();
        double acc = 0.0;
        for (std::size_t i = 0; i < boxes.size() && pick == boxes.size(); i++)
        {
            acc += weights[i];
            if (weights[i] > 0.0 && target < acc)
                pick = i;
        }
        if (pick == boxes.size())
        {
            pick = boxes.size() - 1;
            while (weights[pick] == 0.0)
                pick--; // reached only through rounding at the tail
        }
        centroids.push_back(boxes[pick]);
    }

    kmeans_result result;
    auto assignment = assign(boxes, centroids);

    for (int iter = 0; iter < max_iterations; iter++)
    {
        std::vector<box_size> next(centroids.size(), { 0.0, 0.0 });
        std::vector<std::size_t> members(centroids.size(), 0);
        for (std::size_t i = 0; i < boxes.size(); i++)
        {
            next[assignment[i]].first += boxes[i].first;
            next[assignment[i]].second += boxes[i].second;
            members[assignment[i]]++;
        }
        for (std::size_t c = 0; c < next.size(); c++)
        {
            if (members[c] > 0)
            {
                next[c].first /= static_cast<double>(members[c]);
                next[c].second /= static_cast<double>(members[c]);
            }
        }
        for (std::size_t c = 0; c < next.size(); c++)
        {
            if (members[c] == 0)
                next[c] = boxes[farthest_box(boxes, next)];
        }

        // The first update always stands (a seed taken from the data can
        // beat the cluster mean). After that a mean update is not guaranteed
        // to help under 1 - IoU, so a step that lowers the score is undone.
        auto score = mean_best_iou(boxes, next);
        if (!result.history.empty() && score < result.history.back())
            break;
        centroids = std::move(next);
        result.history.push_back(score);
        result.iterations = iter + 1;
        auto reassigned = assign(boxes, centroids);
        if (reassigned == assignment)
            break;
        assignment = std::move(reassigned);
    }

    std::sort(centroids.begin(), centroids.end(),
        [](auto &a, auto &b) { return a.first * a.second < b.first * b.second; });
    result.anchors = std::move(centroids);
    result.mean_iou = mean_best_iou(boxes, result.anchors);
    return result;
}

std::vector<box_size> minmax_anchors(const std::vector<box_size> &boxes, int k)
{
    if (boxes.empty() || k < 1)
        fail(errc::too_few_boxes, "need boxes and k >= 1");
    auto [wmin, wmax] = std::minmax_element(boxes.begin(), boxes.end(), [](auto &a, auto &b) { return a.first < b.first; });
    auto [hmin, hmax] = std::minmax_element(boxes.begin(), boxes.end(), [](auto &a, auto &b) { return a.second < b.second; });
    std::vector<box_size> out;
    for (int i = 0; i < k; i++)
    {
        auto t = k == 1 ? 0.5 : static_cast<double>(i) / (k - 1);
        out.push_back({ wmin->first + t * (wmax->first - wmin->first), hmin->second + t * (hmax->second - hmin->second) });
    }
    return out;
}

std::vector<box_size> letterboxed_sizes(const dataset_manifest &m, int target_w, int target_h)
{
    std::vector<box_size> out;
    for (auto &r : m.records)
    {
        auto t = detect::plan_letterbox(r.width, r.height, target_w, target_h);
        auto sx = static_cast<double>(t.content_w) / r.width;
        auto sy = static_cast<double>(t.content_h) / r.height;
        for (auto &b : r.boxes)
        {
            if (!b.ignore())
                out.push_back({ b.bbox.w * sx, b.bbox.h * sy });
        }
    }
    return out;
}

int height_for_width(int w, const resolution_schedule &s)
{
    auto ideal = w * 9.0 / 16.0;
    int best = -1;
    for (int h = (s.min_h + 31) / 32 * 32; h <= s.max_h; h += 32)
    {
        if (best < 0 || std::fabs(h - ideal) <= std::fabs(best - ideal))
            best = h;
    }
    if (best < 0)
        fail(errc::invalid_argument, "resolution schedule has no legal height");
    return best;
}

std::vector<int> legal_widths(const resolution_schedule &s)
{
    std::vector<int> out;
    for (int w = (s.min_w + 31) / 32 * 32; w <= s.max_w; w += 32)
        out.push_back(w);
    return out;
}

std::pair<int, int> sample_resolution(std::uint64_t iteration, const resolution_schedule &s)
{
    if (s.period < 1)
        fail(errc::invalid_argument, "resolution period must be at least 1");
    auto widths = legal_widths(s);
    if (widths.empty())
        fail(errc::invalid_argument, "resolution schedule has no legal width");
    auto block = iteration / static_cast<std::uint64_t>(s.period);
    std::seed_seq seq { static_cast<std::uint32_t>(s.seed), static_cast<std::uint32_t>(s.seed >> 32),
        static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32) };
    std::mt19937_64 rng(seq);
    auto w = widths[std::uniform_int_distribution<std::size_t>(0, widths.size() - 1)(rng)];
    return { w, height_for_width(w, s) };
}
}
