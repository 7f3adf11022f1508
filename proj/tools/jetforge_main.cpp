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
#include <jetforge/bench.hpp>
#include <jetforge/container.hpp>
#include <jetforge/darknet.hpp>
#include <jetforge/datasets.hpp>
#include <jetforge/detect.hpp>
#include <jetforge/error.hpp>
#include <jetforge/eval.hpp>
#include <jetforge/io.hpp>
#include <jetforge/optimizer.hpp>
#include <jetforge/pipeline.hpp>
#include <jetforge/quantizer.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>

namespace fs = std::filesystem;
using namespace jetforge;

namespace
{
constexpr int exit_ok = 0;
constexpr int exit_validation = 1;
constexpr int exit_usage = 2;

/// Thrown for failures that are the caller's fault (bad flags, missing
/// inputs); mapped to exit code 2.
struct usage_error : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

/// Every option of the subcommand chain that has a long name, with its
/// effective value.
std::map<std::string, std::string> effective_config(const CLI::App *app)
{
    std::map<std::string, std::string> out;
    for (auto *a = app; a; a = a->get_parent())
    {
        for (auto *opt : a->get_options())
        {
            auto name = opt->get_single_name();
            if (name.empty() || name == "help" || name == "config")
                continue;
            std::string value;
            if (opt->count() > 0 || opt->get_expected_min() == 0)
            {
                auto results = opt->results();
                for (std::size_t i = 0; i < results.size(); i++)
                    value += (i ? "," : "") + results[i];
            }
            if (value.empty())
                value = opt->get_default_str();
            out.emplace(name, value);
        }
    }
    out["tool_version"] = tool_version;
    return out;
}

void require_file(const fs::path &p, const std::string &what)
{
    if (!fs::exists(p))
        fail(errc::io_error, what + " not found: " + p.string());
}

exec_mode mode_flag(const std::string &mode)
{
    try
    {
        return parse_exec_mode(mode);
    }
    catch (const error &e)
    {
        throw usage_error(e.what());
    }
}

void print_stats(const graph &g)
{
    auto stats = darknet::compute_stats(g);
    std::printf("nodes: %zu\n", stats.node_total);
    for (auto &[kind, n] : stats.node_counts)
        std::printf("  %-20s %d\n", kind.c_str(), n);
    std::printf("parameters: %zu\n", stats.parameter_count);
    std::printf("leaky activations: %d\n", stats.leaky_activations);
    std::printf("total MACs: %llu\n", static_cast<unsigned long long>(stats.total_macs));
}

graph load_model_with_ranges(const fs::path &model, const std::string &ranges)
{
    require_file(model, "model");
    auto g = load_container(model);
    if (!ranges.empty())
    {
        require_file(ranges, "ranges file");
        g.qparams = quant::load_ranges(ranges).ranges;
    }
    return g;
}
}

int main(int argc, char **argv)
{
    CLI::App app { "jetforge: darknet detector optimization, quantization, and evaluation toolkit" };
    app.require_subcommand(1);
    app.set_config("--config", "", "INI config file; [section] names match subcommands, flags override it");
    std::uint64_t seed = 0;
    app.add_option("--seed", seed, "Global seed")->envname("JETFORGE_SEED")->capture_default_str();
    app.set_version_flag("--version", std::string(tool_version));

    // convert
    auto *convert = app.add_subcommand("convert", "Parse darknet cfg + weights into a model container");
    std::string cfg_path, weights_path, convert_out;
    double bn_eps = darknet::default_bn_eps;
    convert->add_option("--cfg", cfg_path, "darknet cfg")->required();
    convert->add_option("--weights", weights_path, "darknet weights")->required();
    convert->add_option("-o,--output", convert_out, "output container")->required();
    convert->add_option("--bn-eps", bn_eps, "batch norm epsilon")->capture_default_str();

    // optimize
    auto *optimize = app.add_subcommand("optimize", "Apply graph rewrite passes");
    std::string opt_model, opt_out, opt_report;
    std::vector<std::string> passes;
    optimize->add_option("-m,--model", opt_model, "input container")->required();
    optimize->add_option("--passes", passes, "comma list: fuse-conv-bn, decompose-leaky, fold-scale, relu-swap, leaky-plugin")
        ->delimiter(',')
        ->required();
    optimize->add_option("-o,--output", opt_out, "output container")->required();
    optimize->add_option("--report", opt_report, "pass report JSON (stdout when omitted)");

    // calibrate
    auto *calibrate = app.add_subcommand("calibrate", "Entropy-calibrate activation ranges");
    std::string cal_model, cal_dir, cal_out;
    quant::calibration_config cal_config;
    calibrate->add_option("-m,--model", cal_model, "model container")->required();
    calibrate->add_option("--calib-dir", cal_dir, "image directory or manifest.jsonl")->required();
    calibrate->add_option("--count", cal_config.image_count, "images to sample")->capture_default_str();
    calibrate->add_option("--bins", cal_config.bin_count, "histogram bins")->capture_default_str();
    calibrate->add_option("--levels", cal_config.levels, "quantization levels")->capture_default_str();
    calibrate->add_option("-o,--output", cal_out, "ranges JSON")->required();

    // quantize
    auto *quantize = app.add_subcommand("quantize", "Attach calibrated ranges to a model");
    std::string q_model, q_ranges, q_out;
    quantize->add_option("-m,--model", q_model, "model container")->required();
    quantize->add_option("--ranges", q_ranges, "ranges JSON")->required();
    quantize->add_option("-o,--output", q_out, "quantized container")->required();

    // detect
    auto *detect_cmd = app.add_subcommand("detect", "Run the detector over images");
    std::string d_model, d_images, d_out, d_mode = "f32", d_ranges;
    detect::detect_config d_config;
    d_config.conf_threshold = 0.25;
    detect_cmd->add_option("-m,--model", d_model, "model container")->required();
    detect_cmd->add_option("--images", d_images, "image directory or manifest.jsonl")->required();
    detect_cmd->add_option("--mode", d_mode, "f32|f16|i8")->capture_default_str();
    detect_cmd->add_option("--ranges", d_ranges, "ranges JSON (i8 without a quantized model)");
    detect_cmd->add_option("--conf", d_config.conf_threshold, "confidence threshold")->capture_default_str();
    detect_cmd->add_option("--nms", d_config.nms_threshold, "NMS IoU threshold")->capture_default_str();
    detect_cmd->add_option("-o,--output", d_out, "detections JSONL")->required();

    // eval
    auto *eval_cmd = app.add_subcommand("eval", "mAP@0.5 with ignore regions");
    std::string e_dets, e_manifest, e_out, e_ignore = "on";
    eval::eval_config e_config;
    eval_cmd->add_option("--detections", e_dets, "detections JSONL")->required();
    eval_cmd->add_option("--manifest", e_manifest, "dataset manifest JSONL")->required();
    eval_cmd->add_option("--iou", e_config.iou_threshold, "match IoU threshold")->capture_default_str();
    eval_cmd->add_option("--ignore-threshold", e_config.ignore_threshold, "intersection over detection area")
        ->capture_default_str();
    eval_cmd->add_option("--ignore-eval", e_ignore, "on|off")->check(CLI::IsMember({ "on", "off" }))->capture_default_str();
    eval_cmd->add_option("-o,--output", e_out, "report JSON");

    // bench
    auto *bench_cmd = app.add_subcommand("bench", "Latency / structure benchmark");
    std::string b_model, b_mode = "f32", b_out, b_ranges, b_variant = "baseline";
    int b_iters = 200, b_warmup = 20;
    bench_cmd->add_option("-m,--model", b_model, "model container")->required();
    bench_cmd->add_option("--mode", b_mode, "f32|f16|i8")->capture_default_str();
    bench_cmd->add_option("--variant", b_variant, "baseline|leakyA|leakyB|relu")->capture_default_str();
    bench_cmd->add_option("--ranges", b_ranges, "ranges JSON (i8)");
    bench_cmd->add_option("--iters", b_iters, "timed iterations")->capture_default_str();
    bench_cmd->add_option("--warmup", b_warmup, "discarded warmup runs")->capture_default_str();
    bench_cmd->add_option("-o,--output", b_out, "stats CSV")->required();

    // dataset
    auto *dataset = app.add_subcommand("dataset", "Dataset tooling");
    dataset->require_subcommand(1);
    auto *merge_cmd = dataset->add_subcommand("merge", "Ingest COCO / Visdrone and write a unified manifest");
    std::vector<std::string> coco_files;
    std::string coco_prefix, vis_ann, vis_img, vis_map, vis_prefix, merge_out;
    merge_cmd->add_option("--coco", coco_files, "COCO instances JSON (repeatable)");
    merge_cmd->add_option("--coco-prefix", coco_prefix, "prefix for COCO image paths");
    merge_cmd->add_option("--visdrone-annotations", vis_ann, "Visdrone annotation directory");
    merge_cmd->add_option("--visdrone-images", vis_img, "Visdrone image directory");
    merge_cmd->add_option("--visdrone-map", vis_map, "Visdrone id -> name mapping file");
    merge_cmd->add_option("--visdrone-prefix", vis_prefix, "prefix for Visdrone image paths");
    merge_cmd->add_option("-o,--output", merge_out, "manifest JSONL")->required();

    auto *anchors_cmd = dataset->add_subcommand("anchors", "Recluster anchors with IoU k-means");
    std::string a_manifest, a_out;
    int a_k = 9, a_w = 608, a_h = 352;
    anchors_cmd->add_option("--manifest", a_manifest, "dataset manifest JSONL")->required();
    anchors_cmd->add_option("-k", a_k, "anchor count")->capture_default_str();
    anchors_cmd->add_option("--width", a_w, "network width")->capture_default_str();
    anchors_cmd->add_option("--height", a_h, "network height")->capture_default_str();
    anchors_cmd->add_option("-o,--output", a_out, "anchors JSON (stdout when omitted)");

    // pipeline
    auto *pipe = app.add_subcommand("pipeline", "convert, optimize, calibrate, quantize, bench, eval");
    pipeline::pipeline_config p_config;
    std::string p_cfg, p_weights, p_calib, p_out, p_eval;
    pipe->add_option("--cfg", p_cfg, "darknet cfg")->required();
    pipe->add_option("--weights", p_weights, "darknet weights")->required();
    pipe->add_option("--calib-dir", p_calib, "calibration images (manifest.jsonl or .ppm/.pgm files)")->required();
    pipe->add_option("--out-dir", p_out, "artifact directory")->required();
    pipe->add_option("--eval-manifest", p_eval, "evaluation manifest (default: <calib-dir>/manifest.jsonl)");
    pipe->add_option("--count", p_config.calibration.image_count, "calibration images")->capture_default_str();
    pipe->add_option("--iters", p_config.bench_iterations, "bench iterations")->capture_default_str();
    pipe->add_option("--warmup", p_config.bench_warmup, "bench warmup")->capture_default_str();
    pipe->add_option("--conf", p_config.detection.conf_threshold, "eval confidence threshold")->capture_default_str();

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::Success &e)
    {
        return app.exit(e);
    }
    catch (const CLI::ParseError &e)
    {
        app.exit(e);
        return exit_usage;
    }

    try
    {
        if (*convert)
        {
            require_file(cfg_path, "cfg file");
            require_file(weights_path, "weights file");
            std::vector<std::string> warnings;
            graph g;
            try
            {
                g = darknet::parse_cfg(read_file_text(cfg_path), &warnings, { bn_eps });
            }
            catch (const darknet::cfg_error &e)
            {
                std::fprintf(stderr, "%s:%d: %s\n", cfg_path.c_str(), e.line(), e.what());
                return exit_validation;
            }
            for (auto &w : warnings)
                std::fprintf(stderr, "%s: warning: %s\n", cfg_path.c_str(), w.c_str());
            g = darknet::load_weights(read_file_bytes(weights_path), std::move(g));
            g.metadata.producer = effective_config(convert);
            save_container(g, convert_out);
            print_stats(g);
        }
        else if (*optimize)
        {
            require_file(opt_model, "model");
            std::vector<opt::pass_report> reports;
            auto result = opt::run_passes(load_container(opt_model), passes, &reports);
            result.g.metadata.producer = effective_config(optimize);
            save_container(result.g, opt_out);
            for (auto &r : reports)
            {
                for (auto &w : r.warnings)
                    std::fprintf(stderr, "%s\n", w.c_str());
            }
            nlohmann::json doc = { { "header", { { "tool", tool_name }, { "version", tool_version },
                                                  { "config", effective_config(optimize) } } },
                { "passes", nlohmann::json::parse(opt::reports_to_json(reports)) } };
            if (opt_report.empty())
                std::cout << doc.dump(2) << "\n";
            else
                write_file_text(opt_report, doc.dump(2) + "\n");
        }
        else if (*calibrate)
        {
            require_file(cal_model, "model");
            require_file(cal_dir, "calibration images");
            cal_config.seed = seed;
            auto g = load_container(cal_model);
            auto ranges = quant::calibrate(g, pipeline::letterboxed_source(g, pipeline::list_images(cal_dir)), cal_config);
            ranges.producer = effective_config(calibrate);
            quant::save_ranges(ranges, cal_out);
            std::printf("calibrated %zu tensors from %zu images\n", ranges.ranges.size(), ranges.count);
        }
        else if (*quantize)
        {
            auto g = load_model_with_ranges(q_model, q_ranges);
            std::vector<std::string> missing;
            for (auto &node : g.nodes)
            {
                if (node.precision == precision_class::quantizable && !g.qparams.contains(node.output))
                    missing.push_back(node.output);
            }
            if (!missing.empty())
                fail(errc::missing_qparams, "ranges file lacks " + std::to_string(missing.size()) + " tensors, first '"
                        + missing.front() + "'");
            g.metadata.producer = effective_config(quantize);
            save_container(g, q_out);
        }
        else if (*detect_cmd)
        {
            auto mode = mode_flag(d_mode);
            auto g = load_model_with_ranges(d_model, d_ranges);
            require_file(d_images, "images");
            executor exec(g, mode);
            std::vector<detect::image_detections> all;
            for (auto &path : pipeline::list_images(d_images))
                all.push_back({ path.string(), detect::run_detector(g, exec, read_pnm(path), d_config) });
            write_file_text(d_out, detect::detections_to_jsonl(all, effective_config(detect_cmd)));
        }
        else if (*eval_cmd)
        {
            require_file(e_dets, "detections file");
            require_file(e_manifest, "manifest");
            e_config.ignore_eval = e_ignore == "on";
            auto report = eval::evaluate(detect::detections_from_jsonl(read_file_text(e_dets)),
                data::load_manifest(e_manifest), e_config);
            std::cout << eval::report_to_table(report);
            if (!e_out.empty())
                write_file_text(e_out, eval::report_to_json(report, effective_config(eval_cmd)));
        }
        else if (*bench_cmd)
        {
            auto mode = mode_flag(b_mode);
            if (b_iters < 1)
                throw usage_error("need at least 1 iteration");
            auto g = load_model_with_ranges(b_model, b_ranges);
            if (mode == exec_mode::i8 && g.qparams.empty())
                throw usage_error("MissingRanges: i8 mode requires --ranges or a quantized model");
            auto variant = opt::run_passes(g, bench::variant_passes(b_variant), nullptr).g;
            auto stats = bench::run_bench(variant, mode, b_iters, b_warmup, b_variant, seed);
            write_file_text(b_out, bench::stats_to_csv({ stats }, effective_config(bench_cmd)));
            std::printf("%s %s median %lld ns, p5 %lld ns, p95 %lld ns, %zu nodes, %llu MACs\n", stats.variant.c_str(),
                stats.mode.c_str(), static_cast<long long>(stats.median_ns), static_cast<long long>(stats.p5_ns),
                static_cast<long long>(stats.p95_ns), stats.nodes, static_cast<unsigned long long>(stats.macs));
        }
        else if (*merge_cmd)
        {
            std::vector<std::string> warnings;
            std::vector<std::vector<data::annotation_record>> sources;
            for (auto &f : coco_files)
            {
                require_file(f, "COCO annotations");
                sources.push_back(data::ingest_coco_file(f, { coco_prefix, &warnings }));
            }
            if (!vis_ann.empty())
            {
                if (vis_img.empty())
                    throw usage_error("--visdrone-images is required with --visdrone-annotations");
                auto categories = data::default_visdrone_categories();
                if (!vis_map.empty())
                {
                    require_file(vis_map, "Visdrone category map");
                    categories = data::parse_visdrone_categories(read_file_text(vis_map));
                }
                sources.push_back(data::ingest_visdrone(vis_ann, vis_img, categories, { vis_prefix, &warnings }));
            }
            if (sources.empty())
                throw usage_error("nothing to merge: give --coco and/or --visdrone-annotations");
            for (auto &w : warnings)
                std::fprintf(stderr, "warning: %s\n", w.c_str());
            auto m = data::merge(sources);
            write_file_text(merge_out, data::manifest_to_jsonl(m, effective_config(merge_cmd)));
            std::printf("%zu images, %zu negatives, %zu ignore boxes\n", m.records.size(), m.negative_count,
                m.ignore_count);
        }
        else if (*anchors_cmd)
        {
            require_file(a_manifest, "manifest");
            auto boxes = data::letterboxed_sizes(data::load_manifest(a_manifest), a_w, a_h);
            auto result = data::kmeans_anchors(boxes, a_k, seed);
            auto anchors = nlohmann::json::array();
            for (auto &a : result.anchors)
                anchors.push_back({ a.first, a.second });
            nlohmann::json doc = { { "header", { { "tool", tool_name }, { "version", tool_version },
                                                  { "config", effective_config(anchors_cmd) } } },
                { "anchors", anchors }, { "mean_iou", result.mean_iou }, { "iterations", result.iterations },
                { "history", result.history } };
            if (a_out.empty())
                std::cout << doc.dump(2) << "\n";
            else
                write_file_text(a_out, doc.dump(2) + "\n");
        }
        else if (*pipe)
        {
            p_config.cfg = p_cfg;
            p_config.weights = p_weights;
            p_config.calib_dir = p_calib;
            p_config.out_dir = p_out;
            p_config.eval_manifest = p_eval;
            p_config.seed = seed;
            p_config.calibration.seed = seed;
            p_config.echo = effective_config(pipe);
            auto result = pipeline::run_pipeline(p_config);
            for (auto &a : result.artifacts)
                std::printf("%s\n", a.string().c_str());
            std::printf("mAP f32 %.4f, i8 %.4f\n", result.map_f32, result.map_i8);
        }
    }
    catch (const usage_error &e)
    {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_usage;
    }
    catch (const error &e)
    {
        std::fprintf(stderr, "error: %s\n", e.what());
        return is_io_error(e.code()) ? exit_usage : exit_validation;
    }
    return exit_ok;
}
