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
// One PASS/FAIL line per acceptance criterion. Tolerances and time limits
// are pinned below; the exit status is nonzero when any criterion fails.
#include "fixtures.hpp"

#include <jetforge/bench.hpp>
#include <jetforge/container.hpp>
#include <jetforge/darknet.hpp>
#include <jetforge/datasets.hpp>
#include <jetforge/error.hpp>
#include <jetforge/eval.hpp>
#include <jetforge/executor.hpp>
#include <jetforge/io.hpp>
#include <jetforge/optimizer.hpp>
#include <jetforge/pipeline.hpp>
#include <jetforge/quantizer.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <random>
#include <sstream>

using namespace jetforge;
namespace fs = std::filesystem;

namespace
{
constexpr double leaky_abs_tol = 1e-6;
constexpr double fusion_rel_tol = 1e-4;
constexpr double fusion_abs_tol = 1e-6;
constexpr double i8_map_drop = 0.02;
constexpr double f16_map_drop = 0.005;

struct outcome
{
    bool pass = false;
    std::string detail;
};

int failures = 0;

void criterion(int number, const char *name, double limit_s, const std::function<outcome()> &body)
{
    auto start = std::chrono::steady_clock::now();
    outcome o;
    try
    {
        o = body();
    }
    catch (const std::exception &e)
    {
        o = { false, std::string("exception: ") + e.what() };
    }
    auto seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (limit_s > 0 && seconds > limit_s)
    {
        o.pass = false;
        o.detail += " (over the " + std::to_string(static_cast<int>(limit_s)) + " s limit)";
    }
    failures += !o.pass;
    std::printf("%s %2d %s: %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", number, name, o.detail.c_str(), seconds);
    std::fflush(stdout);
}

std::string fmt(const char *f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

graph yolov3(std::uint64_t seed)
{
    return fixtures::fill_random_weights(darknet::parse_cfg(fixtures::read_cfg("yolov3.cfg")), seed);
}

// Exhaustive KL search written from the definition, independent of the
// library's cut_divergence. A histogram with at most one populated bin has
// no meaningful scan; its candidate is that bin widened by one.
double oracle_divergence(const std::vector<std::uint64_t> &h, int cut, int levels)
{
    std::vector<double> p(h.begin(), h.begin() + cut);
    for (std::size_t i = cut; i < h.size(); i++)
        p.back() += static_cast<double>(h[i]);
    std::vector<double> q(p.size(), 0.0);
    for (int level = 0; level < levels; level++)
    {
        double mass = 0;
        int nonzero = 0;
        std::vector<int> members;
        for (int i = 0; i < cut; i++)
            if (static_cast<long long>(i) * levels / cut == level)
                members.push_back(i);
        for (int i : members)
        {
            mass += static_cast<double>(h[i]);
            nonzero += p[i] > 0;
        }
        for (int i : members)
            if (p[i] > 0)
                q[i] = mass / nonzero;
    }
    double ps = 0, qs = 0;
    for (std::size_t i = 0; i < p.size(); i++)
    {
        ps += p[i];
        qs += q[i];
    }
    if (qs == 0)
        return std::numeric_limits<double>::infinity();
    double kl = 0;
    for (std::size_t i = 0; i < p.size(); i++)
    {
        if (p[i] == 0)
            continue;
        if (q[i] == 0)
            return std::numeric_limits<double>::infinity();
        kl += p[i] / ps * std::log((p[i] / ps) / (q[i] / qs));
    }
    return kl;
}

int oracle_best_cut(const std::vector<std::uint64_t> &h, int levels)
{
    auto populated = std::count_if(h.begin(), h.end(), [](auto c) { return c != 0; });
    if (populated <= 1)
    {
        auto bin = std::find_if(h.begin(), h.end(), [](auto c) { return c != 0; }) - h.begin();
        return bin == static_cast<long>(h.size()) ? 1 : static_cast<int>(bin) + 1;
    }
    int best = static_cast<int>(h.size());
    double best_kl = std::numeric_limits<double>::infinity();
    for (int cut = levels; cut <= static_cast<int>(h.size()); cut++)
    {
        // Keeping a single populated bin gives a meaningless zero.
        if (std::count_if(h.begin(), h.begin() + cut, [](auto c) { return c != 0; }) < 2)
            continue;
        auto kl = oracle_divergence(h, cut, levels);
        if (kl <= best_kl)
        {
            best_kl = kl;
            best = cut;
        }
    }
    return best;
}

std::vector<std::vector<std::uint64_t>> calibration_fixtures(int bins)
{
    std::mt19937_64 rng(2024);
    std::vector<std::vector<std::uint64_t>> out;
    auto bin_of = [&](double x) { return static_cast<std::size_t>(std::clamp(x, 0.0, bins - 1.0)); };
    for (int i = 0; i < 5; i++)
    {
        std::vector<std::uint64_t> h(bins, 0);
        std::uniform_real_distribution<double> u(0, bins * (0.5 + 0.1 * i));
        for (int s = 0; s < 20000; s++)
            h[bin_of(u(rng))]++;
        out.push_back(h);
    }
    for (int i = 0; i < 5; i++)
    {
        std::vector<std::uint64_t> h(bins, 0);
        std::normal_distribution<double> n(0, bins / (3.0 + i));
        for (int s = 0; s < 20000; s++)
            h[bin_of(std::fabs(n(rng)))]++;
        out.push_back(h);
    }
    for (int i = 0; i < 5; i++)
    {
        std::vector<std::uint64_t> h(bins, 0);
        std::normal_distribution<double> n(bins / 4.0, bins / 12.0);
        for (int s = 0; s < 20000; s++)
            h[bin_of(n(rng))]++;
        h[bins - 1 - i] += 1 + i;
        out.push_back(h);
    }
    for (int i = 0; i < 5; i++)
    {
        std::vector<std::uint64_t> h(bins, 0);
        if (i < 3)
        {
            h[7 * i + 3] = 1000;
        }
        else
        {
            // A stray count below a narrow bulk.
            h[16 + i] = 1;
            for (int b = 30; b < 36 + 4 * i; b++)
                h[b] = 400;
        }
        out.push_back(h);
    }
    for (int i = 0; i < 5; i++)
    {
        std::vector<std::uint64_t> h(bins, 0);
        std::uniform_int_distribution<int> c(0, 50);
        for (auto &v : h)
            v = c(rng) < 10 ? 0 : c(rng);
        out.push_back(h);
    }
    return out;
}

std::vector<std::string> csv_row(const std::string &csv, std::size_t index)
{
    std::istringstream in(csv);
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line))
    {
        if (line.empty() || line[0] == '#' || line.rfind("variant,", 0) == 0)
            continue;
        if (row++ != index)
            continue;
        std::vector<std::string> fields;
        std::istringstream cells(line);
        std::string cell;
        while (std::getline(cells, cell, ','))
            fields.push_back(cell);
        return fields;
    }
    return {};
}

struct eval_case
{
    data::dataset_manifest manifest;
    std::vector<detect::image_detections> dets;
};

// Ground truth in the left half of each image, ignore regions in the right
// half, so detections inside an ignore region cannot match a ground truth.
eval_case random_eval_case(std::mt19937_64 &rng)
{
    std::uniform_real_distribution<double> u(0, 1);
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    eval_case ec;
    std::vector<data::annotation_record> records;
    for (int i = pick(1, 4); i > 0; i--)
    {
        data::annotation_record r { "img" + std::to_string(i), 200, 100, {}, "r" };
        for (int b = pick(0, 4); b > 0; b--)
            r.boxes.push_back({ { u(rng) * 70, u(rng) * 70, 10 + u(rng) * 20, 10 + u(rng) * 20 }, pick(0, 5) });
        for (int b = pick(1, 2); b > 0; b--)
            r.boxes.push_back({ { 120 + u(rng) * 20, u(rng) * 40, 40, 40 }, data::ignore_class });
        detect::image_detections d { r.image, {} };
        for (auto &gt : r.boxes)
        {
            if (gt.ignore() || u(rng) < 0.3)
                continue;
            d.detections.push_back({ { gt.bbox.x + (u(rng) - 0.5) * 6, gt.bbox.y + (u(rng) - 0.5) * 6, gt.bbox.w,
                                         gt.bbox.h },
                u(rng) < 0.8 ? gt.class_id : pick(0, 5), u(rng) });
        }
        for (int f = pick(0, 3); f > 0; f--)
            d.detections.push_back({ { u(rng) * 80, u(rng) * 80, 15, 15 }, pick(0, 5), u(rng) });
        ec.dets.push_back(d);
        records.push_back(r);
    }
    ec.manifest = data::merge({ records });
    return ec;
}

std::int64_t median_latency(const graph &g, int iterations)
{
    return bench::run_bench(g, exec_mode::f32, iterations, 1, "x", 0).median_ns;
}
}

int main()
{
    criterion(1, "leaky decomposition equivalence", 5, [] {
        std::mt19937_64 rng(1);
        std::uniform_real_distribution<double> xs(-100, 100);
        double worst = 0;
        for (int i = 0; i < 1000000; i++)
        {
            auto x = xs(rng);
            auto want = x >= 0 ? x : 0.1 * x;
            worst = std::max(worst, std::fabs(opt::decomposed_leaky(x, 0.1) - want));
        }
        return outcome { worst <= leaky_abs_tol, fmt("max |leakyB - leaky| = %.3g over 1e6 inputs", worst) };
    });

    criterion(2, "fusion equivalence", 60, [] {
        std::mt19937_64 rng(2);
        double worst = 0;
        int bad = 0;
        for (int trial = 0; trial < 50; trial++)
        {
            auto g = fixtures::random_conv_bn_network(rng, 3 + trial % 8);
            auto x = fixtures::random_tensor(g.input_shape, rng, 0, 1);
            auto base = execute(g, x, exec_mode::f32).at("yolo");
            auto fused = execute(opt::fuse_conv_bn(g).g, x, exec_mode::f32).at("yolo");
            for (std::size_t i = 0; i < base.data.size(); i++)
            {
                double want = base.data[i], got = fused.data[i];
                auto err = std::fabs(got - want);
                bad += err > fusion_abs_tol + fusion_rel_tol * std::fabs(want);
                worst = std::max(worst, err / (fusion_abs_tol + fusion_rel_tol * std::fabs(want)));
            }
        }
        return outcome { bad == 0, fmt("50 networks, %d values out of tolerance, worst error / tolerance %.3g", bad,
                                       worst) };
    });

    criterion(3, "precision boundary", 0, [] {
        auto parsed = darknet::parse_cfg(fixtures::read_cfg("yolov3.cfg"));
        auto leaky = darknet::compute_stats(parsed).leaky_activations;
        auto fused = opt::fuse_conv_bn(yolov3(3)).g;
        auto plan = opt::plan_precision(fused, exec_mode::i8, opt::plugin_policy::leaky_as_plugin);
        auto n = plan.conversions.size();
        return outcome { leaky == 72 && n == 144, fmt("%d leaky activations, %zu conversion points", leaky, n) };
    });

    criterion(4, "entropy calibration oracle", 10, [] {
        const int bins = 64, levels = 16;
        int agree = 0, total = 0;
        std::string first_miss;
        for (auto &counts : calibration_fixtures(bins))
        {
            auto h = quant::activation_histogram::for_range("t", 0.0, 4.0, bins);
            h.counts = counts;
            auto got = quant::entropy_calibrate(h, levels).cut_bins;
            auto want = oracle_best_cut(counts, levels);
            total++;
            if (got == want)
                agree++;
            else if (first_miss.empty())
                first_miss = fmt(", fixture %d: %d vs %d", total - 1, got, want);
        }
        return outcome { agree == total && total == 25, fmt("%d/%d candidate indices match%s", agree, total,
                                                             first_miss.c_str()) };
    });

    criterion(5, "quantization fidelity", 300, [] {
        auto dir = fixtures::temp_dir("acceptance_quant");
        auto manifest = fixtures::write_synthetic_dataset(dir, 200, 5);
        auto g = opt::run_passes(fixtures::synthetic_detector(), { "fuse-conv-bn", "decompose-leaky", "fold-scale" },
            nullptr)
                     .g;
        quant::calibration_config cc;
        cc.image_count = 200;
        cc.seed = 5;
        auto ranges = quant::calibrate(g, pipeline::letterboxed_source(g, pipeline::list_images(dir)), cc);
        auto quantized = g;
        quantized.qparams = ranges.ranges;
        auto map_of = [&](const graph &model, exec_mode mode) {
            auto dets = pipeline::detect_manifest(model, mode, manifest, dir, {});
            return eval::evaluate(dets, manifest).map;
        };
        auto f32 = map_of(g, exec_mode::f32);
        auto f16 = map_of(g, exec_mode::f16);
        auto i8 = map_of(quantized, exec_mode::i8);
        return outcome { i8 >= f32 - i8_map_drop && f16 >= f32 - f16_map_drop,
            fmt("mAP f32 %.4f, f16 %.4f, i8 %.4f on 200 images", f32, f16, i8) };
    });

    criterion(6, "resolution schedule", 0, [] {
        auto fixed = [](int w) {
            data::resolution_schedule s;
            s.min_w = s.max_w = w;
            return data::sample_resolution(0, s);
        };
        bool ok = fixed(608) == std::pair { 608, 352 } && fixed(960) == std::pair { 960, 544 };
        auto widths = data::legal_widths();
        int wrong = 0;
        for (int w : widths)
        {
            auto h = data::height_for_width(w);
            auto ideal = w * 9.0 / 16.0;
            bool legal = h % 32 == 0 && h >= 256 && h <= 544;
            for (int other = 256; other <= 544; other += 32)
                legal = legal && std::fabs(h - ideal) <= std::fabs(other - ideal);
            wrong += !legal;
        }
        ok = ok && widths.size() == 18 && wrong == 0;
        return outcome { ok, fmt("608 -> %d, 960 -> %d, %zu widths, %d with a non-minimal height",
                                 fixed(608).second, fixed(960).second, widths.size(), wrong) };
    });

    criterion(7, "dataset rules", 0, [] {
        auto base = fixtures::data_dir() / "datasets";
        auto coco = data::ingest_coco_file(base / "coco" / "instances.json", { "coco", nullptr });
        auto vis = data::ingest_visdrone(base / "visdrone" / "annotations", base / "visdrone" / "images",
            data::default_visdrone_categories(), { "visdrone", nullptr });
        auto m = data::merge({ coco, vis });
        const std::array<std::size_t, 6> want { 14, 6, 2, 2, 2, 3 };
        bool ok = m.class_histogram == want && m.ignore_count == 3 && m.negative_count == 5;
        auto &h = m.class_histogram;
        return outcome { ok, fmt("histogram {%zu,%zu,%zu,%zu,%zu,%zu}, %zu ignore, %zu negatives", h[0], h[1], h[2],
                                 h[3], h[4], h[5], m.ignore_count, m.negative_count) };
    });

    criterion(8, "anchor clustering", 0, [] {
        std::vector<data::box_size> four { { 10, 12 }, { 12, 10 }, { 40, 60 }, { 60, 40 } };
        // Brute force over every 2-partition with mean-size anchors.
        double best = -1;
        for (unsigned mask = 1; mask < 15; mask++)
        {
            data::box_size a { 0, 0 }, b { 0, 0 };
            int na = 0, nb = 0;
            for (int i = 0; i < 4; i++)
            {
                auto &t = (mask >> i & 1) ? a : b;
                t.first += four[i].first;
                t.second += four[i].second;
                ((mask >> i & 1) ? na : nb)++;
            }
            best = std::max(best, data::mean_best_iou(four, { { a.first / na, a.second / na },
                                                                  { b.first / nb, b.second / nb } }));
        }
        auto small = data::kmeans_anchors(four, 2, 0);
        bool ok = std::fabs(small.mean_iou - best) <= 1e-12;

        std::vector<data::box_size> boxes;
        {
            std::istringstream in(read_file_text(fixtures::data_dir() / "anchors" / "boxes200.txt"));
            std::string line;
            while (std::getline(in, line))
            {
                if (line.empty() || line[0] == '#')
                    continue;
                std::istringstream fields(line);
                double w, h;
                fields >> w >> h;
                boxes.push_back({ w, h });
            }
        }
        auto big = data::kmeans_anchors(boxes, 9, 0);
        bool monotone = !big.history.empty();
        for (std::size_t i = 1; i < big.history.size(); i++)
            monotone = monotone && big.history[i] >= big.history[i - 1];
        auto baseline = data::mean_best_iou(boxes, data::minmax_anchors(boxes, 9));
        ok = ok && boxes.size() == 200 && monotone && big.mean_iou >= baseline;
        return outcome { ok, fmt("4 boxes: %.6f vs optimum %.6f; 200 boxes: %s over %zu iterations, %.4f vs min-max "
                                 "%.4f",
                                 small.mean_iou, best, monotone ? "non-decreasing" : "DECREASING", big.history.size(),
                                 big.mean_iou, baseline) };
    });

    criterion(9, "evaluation correctness", 0, [] {
        auto dir = fixtures::data_dir() / "eval";
        auto report = eval::evaluate(detect::detections_from_jsonl(read_file_text(dir / "detections.jsonl")),
            data::load_manifest(dir / "manifest.jsonl"));
        auto close = [](std::optional<double> got, double want) { return got && std::fabs(*got - want) <= 1e-12; };
        bool fixture = close(report.classes[0].ap, 0.5) && close(report.classes[1].ap, 2.0 / 3.0)
            && close(report.map, 7.0 / 12.0);
        for (std::size_t c = 2; c < report.classes.size(); c++)
            fixture = fixture && !report.classes[c].ap;

        std::mt19937_64 rng(9);
        std::uniform_real_distribution<double> u(0, 1);
        int identical = 0;
        for (int trial = 0; trial < 100; trial++)
        {
            auto ec = random_eval_case(rng);
            auto before = eval::evaluate(ec.dets, ec.manifest).map;
            auto extra = ec.dets;
            for (auto &record : ec.manifest.records)
                for (auto &b : record.boxes)
                    if (b.ignore())
                        std::find_if(extra.begin(), extra.end(), [&](auto &d) { return d.image == record.image; })
                            ->detections.push_back(
                            { { b.bbox.x + 5, b.bbox.y + 5, 20, 20 }, static_cast<int>(u(rng) * 6), u(rng) });
            auto after = eval::evaluate(extra, ec.manifest).map;
            identical += std::memcmp(&before, &after, sizeof(double)) == 0;
        }
        return outcome { fixture && identical == 100,
            fmt("fixture mAP %.6f (want %.6f), ignore invariance %d/100", report.map, 7.0 / 12.0, identical) };
    });

    criterion(10, "structural speedup proxy", 0, [] {
        auto g = yolov3(10);
        auto fused = opt::run_passes(g, { "fuse-conv-bn", "decompose-leaky", "fold-scale" }, nullptr).g;
        const int iterations = 3;
        auto base = bench::run_bench(g, exec_mode::f32, iterations, 1, "baseline", 0);
        auto opt_row = bench::run_bench(fused, exec_mode::f32, iterations, 1, "leakyB", 0);
        auto csv = bench::stats_to_csv({ base, opt_row }, {});
        auto b = csv_row(csv, 0), f = csv_row(csv, 1);
        auto nodes_b = std::stoull(b.at(5)), nodes_f = std::stoull(f.at(5));
        auto macs_b = std::stoull(b.at(6)), macs_f = std::stoull(f.at(6));
        auto med_b = std::stoll(b.at(2)), med_f = std::stoll(f.at(2));
        bool nodes_ok = nodes_f < nodes_b, macs_ok = macs_f == macs_b, latency_ok = med_f <= med_b;
        return outcome { nodes_ok && macs_ok && latency_ok,
            fmt("nodes %llu -> %llu (%s), conv MACs %llu -> %llu (%s), median %.1f -> %.1f ms (%s)", nodes_b, nodes_f,
                nodes_ok ? "ok" : "not below baseline", macs_b, macs_f, macs_ok ? "ok" : "changed", med_b / 1e6,
                med_f / 1e6, latency_ok ? "ok" : "slower") };
    });

    criterion(11, "round-trip integrity", 0, [] {
        bool ok = true;
        std::string detail;
        auto dir = fixtures::temp_dir("acceptance_roundtrip");
        for (auto name : { "yolov3.cfg", "tiny6.cfg", "shortcut_chain.cfg" })
        {
            auto skeleton = darknet::parse_cfg(fixtures::read_cfg(name));
            auto weights = fixtures::random_weights_file(skeleton, 11);
            auto g = darknet::load_weights(weights, skeleton);
            save_container(g, dir / "a.uir");
            auto loaded = load_container(dir / "a.uir");
            save_container(loaded, dir / "b.uir");
            bool same_container = read_file_bytes(dir / "a.uir") == read_file_bytes(dir / "b.uir");
            bool same_weights = darknet::write_weights(loaded) == weights;
            ok = ok && same_container && same_weights;
            detail += fmt("%s%s: container %s, weights %s", detail.empty() ? "" : "; ", name,
                same_container ? "identical" : "DIFFERENT", same_weights ? "bit-exact" : "CHANGED");
        }
        return outcome { ok, detail };
    });

    std::printf("%d of 11 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
