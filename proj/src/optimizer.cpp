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
#include <jetforge/darknet.hpp>
#include <jetforge/error.hpp>
#include <jetforge/optimizer.hpp>

#include <json.hpp>

#include <cmath>
#include <set>

namespace jetforge::opt
{
namespace
{
std::int64_t total_macs(const graph &g)
{
    return static_cast<std::int64_t>(darknet::compute_stats(g).total_macs);
}

pass_report begin_report(std::string name, const graph &g)
{
    pass_report r;
    r.pass = std::move(name);
    r.nodes_before = g.nodes.size();
    r.mac_delta = -total_macs(g);
    return r;
}

pass_result finish(graph g, pass_report r)
{
    r.nodes_after = g.nodes.size();
    r.mac_delta += total_macs(g);
    return { std::move(g), std::move(r) };
}

/// Drops the marked nodes and points every reference to a dropped tensor at
/// its replacement.
void remove_nodes(graph &g, const std::set<std::string> &dropped, const std::map<std::string, std::string> &renames)
{
    std::erase_if(g.nodes, [&](const layer_node &n) { return dropped.contains(n.id); });
    for (auto &n : g.nodes)
    {
        for (auto &in : n.inputs)
        {
            auto it = renames.find(in);
            while (it != renames.end())
            {
                in = it->second;
                it = renames.find(in);
            }
        }
    }
    for (auto &id : dropped)
    {
        g.weights.erase_layer(id);
        g.qparams.erase(id);
    }
}

/// The convolution producing `tensor` if it feeds exactly one node.
layer_node *sole_consumer_conv(graph &g, const std::string &tensor)
{
    auto producer = g.producer_of(tensor);
    if (!producer || !g.nodes[*producer].is<convolution>())
        return nullptr;
    if (g.consumers_of(tensor).size() != 1)
        return nullptr;
    return &g.nodes[*producer];
}

void fold_bn(graph &g, layer_node &conv_node, const layer_node &bn)
{
    auto &conv = conv_node.as<convolution>();
    auto &gamma = g.weights.get(bn.id, weight_role::bn_gamma);
    auto &beta = g.weights.get(bn.id, weight_role::bn_beta);
    auto &mean = g.weights.get(bn.id, weight_role::bn_mean);
    auto &var = g.weights.get(bn.id, weight_role::bn_var);
    auto kernel = g.weights.get(conv_node.id, weight_role::kernel);
    auto oc = static_cast<std::size_t>(conv.out_channels);
    auto per = kernel.size() / oc;
    std::vector<float> bias(oc, 0.0f);
    if (conv.has_bias)
        bias = g.weights.get(conv_node.id, weight_role::bias);

    auto eps = bn.as<batch_norm>().eps;
    for (std::size_t c = 0; c < oc; c++)
    {
        auto f = static_cast<double>(gamma[c]) / std::sqrt(static_cast<double>(var[c]) + eps);
        for (std::size_t i = 0; i < per; i++)
            kernel[c * per + i] = static_cast<float>(kernel[c * per + i] * f);
        bias[c] = static_cast<float>((static_cast<double>(bias[c]) - mean[c]) * f + beta[c]);
    }
    conv.has_bias = true;
    g.weights.set(conv_node.id, weight_role::kernel, std::move(kernel));
    g.weights.set(conv_node.id, weight_role::bias, std::move(bias));
}

void require_free_id(const graph &g, const std::string &id)
{
    if (g.find_node(id) || id == g.input_id)
        fail(errc::invalid_graph, "rewrite would create duplicate node id '" + id + "'");
}

bool is_leaky_conv(const layer_node &n)
{
    return n.is<convolution>() && n.as<convolution>().fused_activation.kind == activation::kind_t::leaky;
}
}

pass_result fuse_conv_bn(const graph &input)
{
    auto g = input;
    auto report = begin_report("fuse-conv-bn", g);

    std::set<std::string> dropped;
    std::map<std::string, std::string> renames;
    for (auto &node : input.nodes)
    {
        if (!node.is<batch_norm>() || node.inputs.size() != 1)
            continue;
        auto conv = sole_consumer_conv(g, node.inputs[0]);
        if (!conv)
            continue;
        fold_bn(g, *conv, node);
        dropped.insert(node.id);
        renames[node.id] = conv->id;
        report.removed.push_back(node.id);
    }
    remove_nodes(g, dropped, renames);

    dropped.clear();
    renames.clear();
    for (auto &node : g.nodes)
    {
        if (!(node.is_activation(activation::kind_t::relu) || node.is_activation(activation::kind_t::linear)))
            continue;
        if (node.inputs.size() != 1 || node.precision == precision_class::plugin_only)
            continue;
        auto conv = sole_consumer_conv(g, node.inputs[0]);
        if (!conv || conv->as<convolution>().fused_activation.kind != activation::kind_t::linear)
            continue;
        conv->as<convolution>().fused_activation = node.as<activation_layer>().act;
        dropped.insert(node.id);
        renames[node.id] = conv->id;
        report.removed.push_back(node.id);
    }
    remove_nodes(g, dropped, renames);
    return finish(std::move(g), std::move(report));
}

pass_result decompose_leaky(const graph &input)
{
    graph g = input;
    g.nodes.clear();
    auto report = begin_report("decompose-leaky", input);

    for (auto &node : input.nodes)
    {
        if (is_leaky_conv(node))
            fail(errc::invalid_graph, "convolution '" + node.id + "' has a fused leaky; decompose before fusing it");
        if (!node.is_activation(activation::kind_t::leaky))
        {
            g.nodes.push_back(node);
            continue;
        }
        auto alpha = node.as<activation_layer>().act.alpha;
        if (!(alpha > 0.0 && alpha < 1.0))
            fail(errc::alpha_out_of_range, "leaky '" + node.id + "' has alpha " + std::to_string(alpha)
                    + "; decomposition needs 0 < alpha < 1");

        auto first = node.id + "_scale";
        auto relu = node.id + "_relu";
        auto second = node.id + "_rscale";
        for (auto &id : { first, relu, second })
            require_free_id(input, id);

        g.nodes.push_back({ first, scale {}, node.inputs, first });
        g.nodes.push_back({ relu, activation_layer { activation::relu() }, { first }, relu });
        g.nodes.push_back({ second, scale {}, { relu }, second });
        g.nodes.push_back({ node.id, add {}, { first, second }, node.output });
        g.weights.set(first, weight_role::scale_factors, { static_cast<float>(alpha) });
        g.weights.set(second, weight_role::scale_factors, { static_cast<float>((1.0 - alpha) / alpha) });

        report.removed.push_back(node.id);
        for (auto &id : { first, relu, second, node.id })
            report.created.push_back(id);
    }
    return finish(std::move(g), std::move(report));
}

double decomposed_leaky(double x, double alpha)
{
    auto s = alpha * x;
    return s + (1.0 - alpha) / alpha * std::max(s, 0.0);
}

pass_result fold_scale_into_conv(const graph &input)
{
    auto g = input;
    auto report = begin_report("fold-scale", g);

    std::set<std::string> dropped;
    std::map<std::string, std::string> renames;
    for (auto &node : input.nodes)
    {
        if (!node.is<scale>() || node.inputs.size() != 1)
            continue;
        auto conv_node = sole_consumer_conv(g, node.inputs[0]);
        if (!conv_node)
            continue;
        auto &conv = conv_node->as<convolution>();
        if (conv.fused_activation.kind != activation::kind_t::linear)
            continue;

        auto &factors = g.weights.get(node.id, weight_role::scale_factors);
        auto oc = static_cast<std::size_t>(conv.out_channels);
        if (factors.size() != 1 && factors.size() != oc)
            continue;
        auto factor = [&](std::size_t c) { return static_cast<double>(factors.size() == 1 ? factors[0] : factors[c]); };

        auto kernel = g.weights.get(conv_node->id, weight_role::kernel);
        auto per = kernel.size() / oc;
        for (std::size_t c = 0; c < oc; c++)
        {
            for (std::size_t i = 0; i < per; i++)
                kernel[c * per + i] = static_cast<float>(kernel[c * per + i] * factor(c));
        }
        g.weights.set(conv_node->id, weight_role::kernel, std::move(kernel));
        if (conv.has_bias)
        {
            auto bias = g.weights.get(conv_node->id, weight_role::bias);
            for (std::size_t c = 0; c < oc; c++)
                bias[c] = static_cast<float>(bias[c] * factor(c));
            g.weights.set(conv_node->id, weight_role::bias, std::move(bias));
        }
        dropped.insert(node.id);
        renames[node.id] = conv_node->id;
        report.removed.push_back(node.id);
    }
    remove_nodes(g, dropped, renames);
    return finish(std::move(g), std::move(report));
}

pass_result replace_leaky_with_relu(const graph &input)
{
    auto g = input;
    auto report = begin_report("relu-swap", g);
    int swapped = 0;
    for (auto &node : g.nodes)
    {
        if (node.is_activation(activation::kind_t::leaky))
        {
            node.as<activation_layer>().act = activation::relu();
            swapped++;
        }
        else if (is_leaky_conv(node))
        {
            node.as<convolution>().fused_activation = activation::relu();
            swapped++;
        }
    }
    if (swapped > 0)
        report.warnings.push_back("WARNING: " + std::to_string(swapped)
            + " leaky activations replaced by ReLU; the weights are NOT valid for this network without retraining");
    return finish(std::move(g), std::move(report));
}

pass_result mark_leaky_plugins(const graph &input)
{
    auto g = input;
    auto report = begin_report("leaky-plugin", g);
    for (auto &node : g.nodes)
    {
        if (node.is_activation(activation::kind_t::leaky))
            node.precision = precision_class::plugin_only;
    }
    return finish(std::move(g), std::move(report));
}

const std::vector<std::string> &pass_names()
{
    static const std::vector<std::string> names { "fuse-conv-bn", "decompose-leaky", "fold-scale", "relu-swap",
        "leaky-plugin" };
    return names;
}

pass_result run_pass(std::string_view name, const graph &g)
{
    if (name == "fuse-conv-bn")
        return fuse_conv_bn(g);
    if (name == "decompose-leaky")
        return decompose_leaky(g);
    if (name == "fold-scale")
        return fold_scale_into_conv(g);
    if (name == "relu-swap")
        return replace_leaky_with_relu(g);
    if (name == "leaky-plugin")
        return mark_leaky_plugins(g);
    fail(errc::invalid_argument, "unknown pass '" + std::string(name) + "'");
}

pass_result run_passes(const graph &g, const std::vector<std::string> &names, std::vector<pass_report> *reports)
{
    pass_result current { g, {} };
    for (auto &name : names)
    {
        auto next = run_pass(name, current.g);
        if (reports)
            reports->push_back(next.report);
        current = std::move(next);
    }
    return current;
}

std::string reports_to_json(const std::vector<pass_report> &reports)
{
    auto list = nlohmann::json::array();
    for (auto &r : reports)
    {
        list.push_back({ { "pass", r.pass }, { "nodes_before", r.nodes_before }, { "nodes_after", r.nodes_after },
            { "removed", r.removed }, { "created", r.created }, { "mac_delta", r.mac_delta },
            { "warnings", r.warnings } });
    }
    return list.dump(2);
}

std::string_view to_string(precision p)
{
    switch (p)
    {
    case precision::i8: return "i8";
    case precision::f16: return "f16";
    case precision::f32: return "f32";
    }
    return "?";
}

precision_plan plan_precision(const graph &g, exec_mode mode, plugin_policy policy)
{
    precision_plan plan;
    auto native = mode == exec_mode::i8 ? precision::i8 : mode == exec_mode::f16 ? precision::f16 : precision::f32;
    for (auto &node : g.nodes)
    {
        bool plugin = node.precision == precision_class::plugin_only
            || (policy == plugin_policy::leaky_as_plugin
                && (node.is_activation(activation::kind_t::leaky) || is_leaky_conv(node)));
        plan.node_precision[node.id] = plugin ? precision::f32 : native;
    }

    for (auto &node : g.nodes)
    {
        auto from = plan.node_precision.at(node.id);
        std::map<precision, std::vector<std::string>> by_precision;
        for (auto c : g.consumers_of(node.output))
        {
            auto &consumer = g.nodes[c];
            by_precision[plan.node_precision.at(consumer.id)].push_back(consumer.id);
        }
        for (auto &[to, consumers] : by_precision)
        {
            if (to != from)
                plan.conversions.push_back({ node.output, from, to, consumers });
        }
    }
    return plan;
}
}
