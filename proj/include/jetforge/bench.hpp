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
#include <jetforge/graph.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace jetforge::bench
{
struct bench_stats
{
    std::string variant;
    std::string mode;
    std::vector<std::int64_t> latencies_ns; // post-warmup runs, in run order
    std::int64_t median_ns = 0;
    std::int64_t p5_ns = 0;
    std::int64_t p95_ns = 0;
    int warmup = 0;
    int iterations = 0;
    std::size_t nodes = 0;
    std::uint64_t macs = 0;
};

/// Linear interpolation between closest ranks; `sorted` must be ascending.
double percentile(const std::vector<std::int64_t> &sorted, double q);

void summarize(bench_stats &stats);

/// Passes that turn a parsed network into the named variant: baseline,
/// leakyA (leaky kept as an f32 plugin), leakyB (decomposed), relu (swapped).
std::vector<std::string> variant_passes(std::string_view variant);

/// A fixed pseudo-random input in [0, 1] for the graph's input shape.
tensor_buffer bench_input(const graph &g, std::uint64_t seed);

/// Times executor runs only; input preparation and postprocessing are
/// outside the measured region.
bench_stats run_bench(const graph &g, exec_mode mode, int iterations, int warmup, const std::string &variant,
    std::uint64_t seed);

std::string stats_to_csv(const std::vector<bench_stats> &rows, const std::map<std::string, std::string> &config);
}
