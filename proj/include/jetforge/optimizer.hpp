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

namespace jetforge::opt
{
struct pass_report
{
    std::string pass;
    std::size_t nodes_before = 0;
    std::size_t nodes_after = 0;
    std::vector<std::string> removed;
    std::vector<std::string> created;
    std::int64_t mac_delta = 0;
    std::vector<std::string> warnings;
};

struct pass_result
{
    graph g;
    pass_report report;
};

/// Folds a batch norm into the convolution it directly follows, then absorbs
/// a following ReLU or linear activation into the convolution. Leaky
/// activations are left alone. Only single-consumer chains are rewritten.
pass_result fuse_conv_bn(const graph &g);

/// Rewrites leaky(x) as s = alpha*x; y = s + ((1-alpha)/alpha) * relu(s).
/// The add keeps the leaky node's id, so consumers are untouched.
pass_result decompose_leaky(const graph &g);

/// Multiplies a scale that is the sole consumer of a convolution into that
/// convolution's kernel and bias.
pass_result fold_scale_into_conv(const graph &g);

/// Swaps every leaky for a ReLU. The weights are not retrained, so the
/// report carries a warning whenever something changed.
pass_result replace_leaky_with_relu(const graph &g);

/// Marks every leaky node plugin-only (the variant that keeps leaky as an
/// f32 plugin).
pass_result mark_leaky_plugins(const graph &g);

/// Decomposed leaky evaluated in double with the exact factors the
/// decomposition emits.
double decomposed_leaky(double x, double alpha);

const std::vector<std::string> &pass_names();
pass_result run_pass(std::string_view name, const graph &g);
pass_result run_passes(const graph &g, const std::vector<std::string> &names, std::vector<pass_report> *reports);

std::string reports_to_json(const std::vector<pass_report> &reports);

enum class precision
{
    i8,
    f16,
    f32
};

std::string_view to_string(precision p);

enum class plugin_policy
{
    leaky_as_plugin,
    leaky_native
};

struct conversion_point
{
    std::string tensor;
    precision from;
    precision to;
    std::vector<std::string> consumers;
};

struct precision_plan
{
    std::map<std::string, precision> node_precision;
    /// One entry per (tensor, consumer precision) pair that differs from the
    /// producer's precision. Host transfers at the graph input and outputs
    /// are not counted.
    std::vector<conversion_point> conversions;
};

precision_plan plan_precision(const graph &g, exec_mode mode, plugin_policy policy);
}
