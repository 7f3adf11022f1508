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
#include <jetforge/error.hpp>
#include <jetforge/image.hpp>
#include <jetforge/io.hpp>
#include <jetforge/optimizer.hpp>
#include <jetforge/pipeline.hpp>

#include <json.hpp>

#include <algorithm>

namespace fs = std::filesystem;

namespace jetforge::pipeline
{
std::vector<fs::path> list_images(const fs::path &dir_or_manifest)
{
    auto manifest_path = dir_or_manifest;
    if (fs::is_directory(dir_or_manifest))
    {
        manifest_path = dir_or_manifest / "manifest.jsonl";
        if (!fs::exists(manifest_path))
        {
            std::vector<fs::path> out;
            for (auto &entry : fs::directory_iterator(dir_or_manifest))
            {
                auto ext = entry.path().extension();
                if (entry.is_regular_file() && (ext == ".ppm" || ext == ".pgm"))
                    out.push_back(entry.path());
            }
            std::sort(out.begin(), out.end());
            return out;
        }
    }
    else if (!fs::exists(dir_or_manifest))
        fail(errc::io_error, "image directory or manifest not found: " + dir_or_manifest.string());

    auto manifest = data::load_manifest(manifest_path);
    std::vector<fs::path> out;
    for (auto &r : manifest.records)
        out.push_back(manifest_path.parent_path() / r.image);
    return out;
}

quant::image_source letterboxed_source(const graph &g, std::vector<fs::path> paths)
{
    quant::image_source source;
    source.size = paths.size();
    source.load = [&g, paths = std::move(paths)](std::size_t i) {
        return detect::letterbox(read_pnm(paths.at(i)), g.input_shape.w, g.input_shape.h, g.input_shape.c).first;
    };
    return source;
}

std::vector<detect::image_detections> detect_manifest(const graph &g, exec_mode mode,
    const data::dataset_manifest &manifest, const fs::path &base_dir, const detect::detect_config &config)
{
    executor exec(g, mode);
    std::vector<detect::image_detections> out;
    for (auto &r : manifest.records)
        out.push_back({ r.image, detect::run_detector(g, exec, read_pnm(base_dir / r.image), config) });
    return out;
}

namespace
{
template <class Fn>
auto stage(const std::string &name, Fn &&fn)
{
    try
    {
        return fn();
    }
    catch (const stage_error &)
    {
        throw;
    }
    catch (const error &e)
    {
        throw stage_error(name, e);
    }
}
}

pipeline_result run_pipeline(const pipeline_config &config)
{
    pipeline_result result;
    auto out = config.out_dir;
    auto echo = config.echo;
    stage("setup", [&] {
        std::error_code ec;
        fs::create_directories(out, ec);
        if (ec)
            fail(errc::io_error, "cannot create output directory " + out.string() + ": " + ec.message());
        return 0;
    });
    auto record = [&](const fs::path &p) { result.artifacts.push_back(p); };

    auto model = stage("convert", [&] {
        auto g = darknet::load_weights(read_file_bytes(config.weights), darknet::parse_cfg(read_file_text(config.cfg)));
        g.metadata.producer = echo;
        save_container(g, out / "model.uir");
        record(out / "model.uir");
        return g;
    });

    auto optimized = stage("optimize", [&] {
        auto g = opt::run_passes(model, config.passes, nullptr).g;
        save_container(g, out / "optimized.uir");
        record(out / "optimized.uir");
        return g;
    });

    auto ranges = stage("calibrate", [&] {
        auto r = quant::calibrate(optimized, letterboxed_source(optimized, list_images(config.calib_dir)),
            config.calibration);
        r.producer = echo;
        quant::save_ranges(r, out / "ranges.json");
        record(out / "ranges.json");
        return r;
    });

    auto quantized = stage("quantize", [&] {
        auto g = optimized;
        g.qparams = ranges.ranges;
        save_container(g, out / "quantized.uir");
        record(out / "quantized.uir");
        return g;
    });

    stage("bench", [&] {
        std::vector<bench::bench_stats> rows;
        rows.push_back(bench::run_bench(optimized, exec_mode::f32, config.bench_iterations, config.bench_warmup,
            "optimized", config.seed));
        rows.push_back(bench::run_bench(optimized, exec_mode::f16, config.bench_iterations, config.bench_warmup,
            "optimized", config.seed));
        rows.push_back(bench::run_bench(quantized, exec_mode::i8, config.bench_iterations, config.bench_warmup,
            "optimized", config.seed));
        write_file_text(out / "bench.csv", bench::stats_to_csv(rows, echo));
        record(out / "bench.csv");
        return 0;
    });

    stage("eval", [&] {
        auto manifest_path = config.eval_manifest.empty() ? config.calib_dir / "manifest.jsonl" : config.eval_manifest;
        auto manifest = data::load_manifest(manifest_path);
        auto base = manifest_path.parent_path();
        auto run = [&](const graph &g, exec_mode mode, const std::string &file) {
            auto dets = detect_manifest(g, mode, manifest, base, config.detection);
            auto report = eval::evaluate(dets, manifest, config.evaluation);
            auto run_echo = echo;
            run_echo["mode"] = std::string(to_string(mode));
            write_file_text(out / file, eval::report_to_json(report, run_echo));
            record(out / file);
            return report.map;
        };
        result.map_f32 = run(optimized, exec_mode::f32, "eval_f32.json");
        result.map_i8 = run(quantized, exec_mode::i8, "eval_i8.json");
        return 0;
    });

    stage("manifest", [&] {
        auto files = nlohmann::json::array();
        for (auto &p : result.artifacts)
        {
            auto bytes = read_file_bytes(p);
            files.push_back({ { "file", p.filename().string() }, { "bytes", bytes.size() },
                { "checksum", checksum_hex(bytes) } });
        }
        nlohmann::json j = { { "header", { { "tool", tool_name }, { "version", tool_version }, { "config", echo } } },
            { "artifacts", files }, { "map_f32", result.map_f32 }, { "map_i8", result.map_i8 } };
        write_file_text(out / "manifest.json", j.dump(2) + "\n");
        record(out / "manifest.json");
        return 0;
    });
    return result;
}
}
