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
#include <jetforge/darknet.hpp>
#include <jetforge/error.hpp>
#include <jetforge/io.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

namespace jetforge::bench
{
double percentile(const std::vector<std::int64_t> &sorted, double q)
{
    if (sorted.empty())
        fail(errc::invalid_argument, "percentile of an empty sample");
    auto pos = q * static_cast<double>(sorted.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    auto hi = std::min(lo + 1, sorted.size() - 1);
    auto frac = pos - static_cast<double>(lo);
    return static_cast<double>(sorted[lo]) + frac * static_cast<double>(sorted[hi] - sorted[lo]);
}

void summarize(bench_stats &stats)
{
    auto sorted = stats.latencies_ns;
    std::sort(sorted.begin(), sorted.end());
    stats.median_ns = std::llround(percentile(sorted, 0.5));
    stats.p5_ns = std::llround(percentile(sorted, 0.05));
    stats.p95_ns = std::llround(percentile(sorted, 0.95));
}

std::vector<std::string> variant_passes(std::string_view variant)
{
    if (variant == "baseline")
        return {};
    if (variant == "leakyA")
        return { "fuse-conv-bn", "leaky-plugin" };
    if (variant == "leakyB")
        return { "fuse-conv-bn", "decompose-leaky", "fold-scale" };
    if (variant == "relu")
        return { "relu-swap", "fuse-conv-bn" };
    fail(errc::invalid_argument, "unknown variant '" + std::string(variant) + "' (baseline, leakyA, leakyB, relu)");
}

tensor_buffer bench_input(const graph &g, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    auto t = tensor_buffer::zeros(g.input_shape);
    for (auto &v : t.data)
        v = dist(rng);
    return t;
}

bench_stats run_bench(const graph &g, exec_mode mode, int iterations, int warmup, const std::string &variant,
    std::uint64_t seed)
{
    if (iterations < 1)
        fail(errc::invalid_argument, "need at least 1 iteration");
    if (warmup < 0)
        fail(errc::invalid_argument, "warmup count cannot be negative");
    if (mode == exec_mode::i8 && g.qparams.empty())
        fail(errc::missing_qparams, "i8 benchmarking needs calibrated ranges");

    bench_stats stats;
    stats.variant = variant;
    stats.mode = std::string(to_string(mode));
    stats.warmup = warmup;
    stats.iterations = iterations;
    stats.nodes = g.nodes.size();
    stats.macs = darknet::compute_stats(g).total_macs;

    executor exec(g, mode);
    auto input = bench_input(g, seed);
    for (int i = 0; i < warmup; i++)
        exec.run(input, retention::heads_only);
    for (int i = 0; i < iterations; i++)
    {
        auto start = std::chrono::steady_clock::now();
        auto trace = exec.run(input, retention::heads_only);
        auto stop = std::chrono::steady_clock::now();
        stats.latencies_ns.push_back(std::chrono::duration_cast<std::chrono::nanoseconds>(stop - start).count());
    }
    summarize(stats);
    return stats;
}

std::string stats_to_csv(const std::vector<bench_stats> &rows, const std::map<std::string, std::string> &config)
{
    std::ostringstream out;
    out << "# tool=" << tool_name << " version=" << tool_version << "\n";
    for (auto &[k, v] : config)
        out << "# " << k << "=" << v << "\n";
    out << "variant,mode,median_ns,p5_ns,p95_ns,nodes,macs\n";
    for (auto &r : rows)
        out << r.variant << "," << r.mode << "," << r.median_ns << "," << r.p5_ns << "," << r.p95_ns << "," << r.nodes
            << "," << r.macs << "\n";
    return out.str();
}
}
