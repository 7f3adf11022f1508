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
#include <jetforge/graph.hpp>

#include <algorithm>
#include <queue>
#include <set>
#include <unordered_map>

namespace jetforge
{
namespace
{
template <class... Ts>
struct overloaded : Ts...
{
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

int conv_out_dim(int in, int kernel, int stride, int pad)
{
    auto span = in + 2 * pad - kernel;
    if (span < 0)
        return 0;
    return span / stride + 1;
}
}

std::string to_string(const tensor_shape &shape)
{
    return std::to_string(shape.n) + "x" + std::to_string(shape.c) + "x" + std::to_string(shape.h) + "x"
        + std::to_string(shape.w);
}

std::string_view to_string(activation::kind_t kind)
{
    switch (kind)
    {
    case activation::kind_t::linear: return "linear";
    case activation::kind_t::relu: return "relu";
    case activation::kind_t::leaky: return "leaky";
    }
    return "linear";
}

std::string_view kind_name(const layer_kind &kind)
{
    return std::visit(overloaded {
                          [](const convolution &) { return std::string_view("Convolution"); },
                          [](const batch_norm &) { return std::string_view("BatchNorm"); },
                          [](const activation_layer &) { return std::string_view("Activation"); },
                          [](const scale &) { return std::string_view("Scale"); },
                          [](const upsample &) { return std::string_view("Upsample"); },
                          [](const add &) { return std::string_view("Add"); },
                          [](const concat &) { return std::string_view("Concat"); },
                          [](const max_pool &) { return std::string_view("MaxPool"); },
                          [](const yolo_head &) { return std::string_view("YoloHead"); },
                      },
        kind);
}

std::string_view to_string(weight_role role)
{
    switch (role)
    {
    case weight_role::kernel: return "kernel";
    case weight_role::bias: return "bias";
    case weight_role::bn_gamma: return "bn_gamma";
    case weight_role::bn_beta: return "bn_beta";
    case weight_role::bn_mean: return "bn_mean";
    case weight_role::bn_var: return "bn_var";
    case weight_role::scale_factors: return "scale_factors";
    }
    return "kernel";
}

std::optional<weight_role> parse_weight_role(std::string_view name)
{
    for (auto role : { weight_role::kernel, weight_role::bias, weight_role::bn_gamma, weight_role::bn_beta,
             weight_role::bn_mean, weight_role::bn_var, weight_role::scale_factors })
    {
        if (to_string(role) == name)
            return role;
    }
    return std::nullopt;
}

void weight_store::set(const std::string &layer, weight_role role, std::vector<float> values)
{
    entries_[{ layer, role }] = std::move(values);
}

bool weight_store::contains(const std::string &layer, weight_role role) const
{
    return entries_.count({ layer, role }) != 0;
}

const std::vector<float> &weight_store::get(const std::string &layer, weight_role role) const
{
    auto it = entries_.find({ layer, role });
    if (it == entries_.end())
        fail(errc::invalid_graph, "missing weight " + layer + "/" + std::string(to_string(role)));
    return it->second;
}

std::vector<float> *weight_store::find(const std::string &layer, weight_role role)
{
    auto it = entries_.find({ layer, role });
    return it == entries_.end() ? nullptr : &it->second;
}

const std::vector<float> *weight_store::find(const std::string &layer, weight_role role) const
{
    auto it = entries_.find({ layer, role });
    return it == entries_.end() ? nullptr : &it->second;
}

void weight_store::erase_layer(const std::string &layer)
{
    std::erase_if(entries_, [&](const auto &entry) { return entry.first.first == layer; });
}

std::size_t weight_store::parameter_count() const noexcept
{
    std::size_t total = 0;
    for (auto &[key, values] : entries_)
        total += values.size();
    return total;
}

const layer_node *graph::find_node(std::string_view id) const
{
    auto it = std::find_if(nodes.begin(), nodes.end(), [&](const layer_node &n) { return n.id == id; });
    return it == nodes.end() ? nullptr : &*it;
}

layer_node *graph::find_node(std::string_view id)
{
    auto it = std::find_if(nodes.begin(), nodes.end(), [&](const layer_node &n) { return n.id == id; });
    return it == nodes.end() ? nullptr : &*it;
}

std::optional<std::size_t> graph::producer_of(std::string_view tensor) const
{
    for (std::size_t i = 0; i < nodes.size(); i++)
    {
        if (nodes[i].output == tensor)
            return i;
    }
    return std::nullopt;
}

std::vector<std::size_t> graph::consumers_of(std::string_view tensor) const
{
    std::vector<std::size_t> result;
    for (std::size_t i = 0; i < nodes.size(); i++)
    {
        if (std::find(nodes[i].inputs.begin(), nodes[i].inputs.end(), tensor) != nodes[i].inputs.end())
            result.push_back(i);
    }
    return result;
}

std::vector<std::string> graph::output_tensors() const
{
    std::set<std::string> consumed;
    for (auto &node : nodes)
        consumed.insert(node.inputs.begin(), node.inputs.end());

    std::vector<std::string> result;
    for (auto &node : nodes)
    {
        if (node.is<yolo_head>() || !consumed.count(node.output))
            result.push_back(node.output);
    }
    return result;
}

std::vector<std::size_t> topological_order(const graph &g)
{
    std::unordered_map<std::string, std::size_t> producer;
    for (std::size_t i = 0; i < g.nodes.size(); i++)
    {
        if (!producer.emplace(g.nodes[i].output, i).second)
            fail(errc::invalid_graph, "tensor '" + g.nodes[i].output + "' produced more than once");
    }

    std::vector<std::size_t> pending(g.nodes.size(), 0);
    std::vector<std::vector<std::size_t>> users(g.nodes.size());
    for (std::size_t i = 0; i < g.nodes.size(); i++)
    {
        for (auto &in : g.nodes[i].inputs)
        {
            if (in == g.input_id)
                continue;
            auto it = producer.find(in);
            if (it == producer.end())
                fail(errc::invalid_graph, "node '" + g.nodes[i].id + "' reads unknown tensor '" + in + "'");
            pending[i]++;
            users[it->second].push_back(i);
        }
    }

    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
    for (std::size_t i = 0; i < g.nodes.size(); i++)
    {
        if (pending[i] == 0)
            ready.push(i);
    }

    std::vector<std::size_t> order;
    order.reserve(g.nodes.size());
    while (!ready.empty())
    {
        auto i = ready.top();
        ready.pop();
        order.push_back(i);
        for (auto u : users[i])
        {
            if (--pending[u] == 0)
                ready.push(u);
        }
    }

    if (order.size() != g.nodes.size())
    {
        std::string names;
        for (std::size_t i = 0; i < g.nodes.size(); i++)
        {
            if (pending[i] != 0)
                names += (names.empty() ? "" : ", ") + g.nodes[i].id;
        }
        fail(errc::invalid_graph, "cycle through nodes: " + names);
    }
    return order;
}

shape_map infer_shapes(const graph &g)
{
    return infer_shapes(g, topological_order(g));
}

shape_map infer_shapes(const graph &g, const std::vector<std::size_t> &order)
{
    shape_map shapes;
    shapes[g.input_id] = g.input_shape;

    auto input_shape = [&](const layer_node &node, std::size_t i) -> const tensor_shape & {
        auto it = shapes.find(node.inputs.at(i));
        if (it == shapes.end())
            fail(errc::invalid_graph, "node '" + node.id + "' input '" + node.inputs[i] + "' has no shape");
        return it->second;
    };
    auto check_positive = [&](const layer_node &node, const tensor_shape &s) {
        if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1)
            fail(errc::underflow_shape, "node '" + node.id + "' output " + to_string(s));
    };

    for (auto idx : order)
    {
        auto &node = g.nodes[idx];
        auto arity_error = [&]() { fail(errc::invalid_graph, "node '" + node.id + "' has wrong input count"); };
        tensor_shape out;
        std::visit(overloaded {
                       [&](const convolution &conv) {
                           if (node.inputs.size() != 1)
                               arity_error();
                           auto in = input_shape(node, 0);
                           if (conv.kernel < 1 || conv.stride < 1 || conv.pad < 0 || conv.out_channels < 1)
                               fail(errc::invalid_graph, "node '" + node.id + "' has invalid convolution parameters");
                           out = { in.n, conv.out_channels, conv_out_dim(in.h, conv.kernel, conv.stride, conv.pad),
                               conv_out_dim(in.w, conv.kernel, conv.stride, conv.pad) };
                       },
                       [&](const max_pool &pool) {
                           if (node.inputs.size() != 1)
                               arity_error();
                           auto in = input_shape(node, 0);
                           if (pool.kernel < 1 || pool.stride < 1 || pool.pad < 0)
                               fail(errc::invalid_graph, "node '" + node.id + "' has invalid pooling parameters");
                           auto dim = [&](int d) {
                               auto span = d + pool.pad - pool.kernel;
                               return span < 0 ? 0 : span / pool.stride + 1;
                           };
                           out = { in.n, in.c, dim(in.h), dim(in.w) };
                       },
                       [&](const upsample &up) {
                           if (node.inputs.size() != 1)
                               arity_error();
                           if (up.factor < 2)
                               fail(errc::invalid_graph, "node '" + node.id + "' upsample factor must be >= 2");
                           auto in = input_shape(node, 0);
                           out = { in.n, in.c, in.h * up.factor, in.w * up.factor };
                       },
                       [&](const add &) {
                           if (node.inputs.size() < 2)
                               arity_error();
                           out = input_shape(node, 0);
                           for (std::size_t i = 1; i < node.inputs.size(); i++)
                           {
                               if (input_shape(node, i) != out)
                                   fail(errc::shape_mismatch, "node '" + node.id + "' adds " + to_string(out) + " and "
                                           + to_string(input_shape(node, i)));
                           }
                       },
                       [&](const concat &) {
                           if (node.inputs.empty())
                               arity_error();
                           out = input_shape(node, 0);
                           for (std::size_t i = 1; i < node.inputs.size(); i++)
                           {
                               auto &s = input_shape(node, i);
                               if (s.n != out.n || s.h != out.h || s.w != out.w)
                                   fail(errc::shape_mismatch, "node '" + node.id + "' concatenates " + to_string(out)
                                           + " and " + to_string(s));
                               out.c += s.c;
                           }
                       },
                       [&](const yolo_head &head) {
                           if (node.inputs.size() != 1)
                               arity_error();
                           out = input_shape(node, 0);
                           auto expected = static_cast<int>(head.anchor_indices.size()) * (5 + head.num_classes);
                           if (out.c != expected)
                               fail(errc::shape_mismatch, "node '" + node.id + "' expects " + std::to_string(expected)
                                       + " channels, got " + std::to_string(out.c));
                       },
                       [&](const auto &) {
                           if (node.inputs.size() != 1)
                               arity_error();
                           out = input_shape(node, 0);
                       },
                   },
            node.kind);
        check_positive(node, out);
        shapes[node.output] = out;
    }
    return shapes;
}

int conv_input_channels(const graph &g, const layer_node &node, const shape_map &shapes)
{
    (void)g;
    return shapes.at(node.inputs.at(0)).c;
}

std::optional<std::size_t> expected_weight_length(const layer_node &node, weight_role role, const shape_map &shapes)
{
    auto out_it = shapes.find(node.output);
    if (out_it == shapes.end() || node.inputs.empty())
        return std::nullopt;
    auto in_it = shapes.find(node.inputs.front());
    if (in_it == shapes.end())
        return std::nullopt;
    auto &in = in_it->second;
    auto &out = out_it->second;

    if (auto conv = std::get_if<convolution>(&node.kind))
    {
        if (role == weight_role::kernel)
            return static_cast<std::size_t>(conv->out_channels) * in.c * conv->kernel * conv->kernel;
        if (role == weight_role::bias && conv->has_bias)
            return static_cast<std::size_t>(conv->out_channels);
        return std::nullopt;
    }
    if (node.is<batch_norm>())
    {
        if (role == weight_role::bn_gamma || role == weight_role::bn_beta || role == weight_role::bn_mean
            || role == weight_role::bn_var)
            return static_cast<std::size_t>(out.c);
        return std::nullopt;
    }
    return std::nullopt;
}

std::vector<diagnostic> validate(const graph &g)
{
    std::vector<diagnostic> diags;
    if (g.input_id.empty() || g.input_shape.n < 1 || g.input_shape.c < 1 || g.input_shape.h < 1
        || g.input_shape.w < 1)
        diags.push_back({ "", "no input" });
    if (g.nodes.empty())
    {
        // nothing reads the input, so there is no input to speak of
        if (diags.empty())
            diags.push_back({ "", "no input" });
        return diags;
    }
    if (!diags.empty())
        return diags;

    if (g.input_shape.n != 1)
        diags.push_back({ "", "batch size must be 1, got " + std::to_string(g.input_shape.n) });
    if (g.input_shape.h % 32 != 0 || g.input_shape.w % 32 != 0)
        diags.push_back({ "", "input " + std::to_string(g.input_shape.w) + "x" + std::to_string(g.input_shape.h)
                                  + " is not a multiple of 32" });

    std::set<std::string> ids;
    for (auto &node : g.nodes)
    {
        if (node.id.empty())
            diags.push_back({ node.id, "node without id" });
        else if (!ids.insert(node.id).second)
            diags.push_back({ node.id, "duplicate node id" });
        if (node.output == g.input_id)
            diags.push_back({ node.id, "overwrites the graph input tensor" });
        if (auto act = std::get_if<activation_layer>(&node.kind))
        {
            if (act->act.kind == activation::kind_t::leaky && !(act->act.alpha > 0.0 && act->act.alpha < 1.0))
                diags.push_back({ node.id, "leaky alpha must lie in (0, 1)" });
        }
        if (auto conv = std::get_if<convolution>(&node.kind))
        {
            auto &act = conv->fused_activation;
            if (act.kind == activation::kind_t::leaky && !(act.alpha > 0.0 && act.alpha < 1.0))
                diags.push_back({ node.id, "fused leaky alpha must lie in (0, 1)" });
        }
        if (auto bn = std::get_if<batch_norm>(&node.kind); bn && !(bn->eps > 0.0))
            diags.push_back({ node.id, "batch norm epsilon must be positive" });
    }

    std::vector<std::size_t> order;
    try
    {
        order = topological_order(g);
    }
    catch (const error &e)
    {
        diags.push_back({ "", e.what() });
        return diags;
    }

    shape_map shapes;
    try
    {
        shapes = infer_shapes(g, order);
    }
    catch (const error &e)
    {
        diags.push_back({ "", e.what() });
        return diags;
    }

    for (auto &node : g.nodes)
    {
        for (auto role : { weight_role::kernel, weight_role::bias, weight_role::bn_gamma, weight_role::bn_beta,
                 weight_role::bn_mean, weight_role::bn_var })
        {
            auto expected = expected_weight_length(node, role, shapes);
            auto present = g.weights.find(node.id, role);
            if (expected && !present)
                diags.push_back({ node.id, "missing weight " + std::string(to_string(role)) });
            else if (expected && present->size() != *expected)
                diags.push_back({ node.id, "weight " + std::string(to_string(role)) + " has "
                                      + std::to_string(present->size()) + " values, expected "
                                      + std::to_string(*expected) });
            else if (!expected && present)
                diags.push_back({ node.id, "unexpected weight " + std::string(to_string(role)) });
        }
        if (node.is<batch_norm>())
        {
            if (auto var = g.weights.find(node.id, weight_role::bn_var))
            {
                if (std::any_of(var->begin(), var->end(), [](float v) { return !(v >= 0.0f); }))
                    diags.push_back({ node.id, "negative batch norm variance" });
            }
        }
        if (node.is<scale>())
        {
            auto factors = g.weights.find(node.id, weight_role::scale_factors);
            auto channels = static_cast<std::size_t>(shapes.at(node.output).c);
            if (!factors)
                diags.push_back({ node.id, "missing weight scale_factors" });
            else if (factors->size() != 1 && factors->size() != channels)
                diags.push_back({ node.id, "scale has " + std::to_string(factors->size())
                                      + " factors, expected 1 or " + std::to_string(channels) });
        }
        else if (g.weights.contains(node.id, weight_role::scale_factors))
        {
            diags.push_back({ node.id, "unexpected weight scale_factors" });
        }
    }

    std::set<std::string> node_ids(ids);
    for (auto &[key, values] : g.weights.entries())
    {
        if (!node_ids.count(key.first))
            diags.push_back({ key.first, "weights for unknown layer" });
    }
    return diags;
}
}
