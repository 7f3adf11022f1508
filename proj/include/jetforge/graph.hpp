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

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace jetforge
{
struct tensor_shape
{
    int n = 1;
    int c = 1;
    int h = 1;
    int w = 1;

    std::size_t size() const noexcept
    {
        return static_cast<std::size_t>(n) * c * h * w;
    }

    friend bool operator==(const tensor_shape &, const tensor_shape &) = default;
};

std::string to_string(const tensor_shape &shape);

struct activation
{
    enum class kind_t
    {
        linear,
        relu,
        leaky
    };

    kind_t kind = kind_t::linear;
    double alpha = 0.0; // leaky slope, only meaningful for kind_t::leaky

    static activation linear() { return {}; }
    static activation relu() { return { kind_t::relu, 0.0 }; }
    static activation leaky(double alpha) { return { kind_t::leaky, alpha }; }

    friend bool operator==(const activation &, const activation &) = default;
};

std::string_view to_string(activation::kind_t kind);

// Layer kinds. A convolution may carry a fused activation that it applies
// inline to its own output.
struct convolution
{
    int out_channels = 0;
    int kernel = 1;
    int stride = 1;
    int pad = 0;
    bool has_bias = false;
    activation fused_activation {};

    friend bool operator==(const convolution &, const convolution &) = default;
};

struct batch_norm
{
    double eps = 1e-6;
    friend bool operator==(const batch_norm &, const batch_norm &) = default;
};

struct activation_layer
{
    activation act {};
    friend bool operator==(const activation_layer &, const activation_layer &) = default;
};

/// Multiplies its input by factors held in the weight store under
/// weight_role::scale_factors: one value (scalar) or one per channel.
struct scale
{
    friend bool operator==(const scale &, const scale &) = default;
};

struct upsample
{
    int factor = 2;
    friend bool operator==(const upsample &, const upsample &) = default;
};

struct add
{
    friend bool operator==(const add &, const add &) = default;
};

struct concat
{
    friend bool operator==(const concat &, const concat &) = default;
};

/// Darknet semantics: `pad` is the total padding, split as pad/2 before.
struct max_pool
{
    int kernel = 2;
    int stride = 2;
    int pad = 1;
    friend bool operator==(const max_pool &, const max_pool &) = default;
};

struct yolo_head
{
    std::vector<int> anchor_indices;
    int num_classes = 0;
    friend bool operator==(const yolo_head &, const yolo_head &) = default;
};

using layer_kind = std::variant<convolution, batch_norm, activation_layer, scale, upsample, add, concat,
    max_pool, yolo_head>;

std::string_view kind_name(const layer_kind &kind);

enum class precision_class
{
    quantizable,
    plugin_only
};

struct layer_node
{
    std::string id;
    layer_kind kind;
    std::vector<std::string> inputs;
    std::string output;
    precision_class precision = precision_class::quantizable;

    template <class T>
    bool is() const noexcept
    {
        return std::holds_alternative<T>(kind);
    }

    template <class T>
    const T &as() const
    {
        return std::get<T>(kind);
    }

    template <class T>
    T &as()
    {
        return std::get<T>(kind);
    }

    bool is_activation(activation::kind_t k) const noexcept
    {
        auto act = std::get_if<activation_layer>(&kind);
        return act && act->act.kind == k;
    }

    friend bool operator==(const layer_node &, const layer_node &) = default;
};

enum class weight_role
{
    kernel,
    bias,
    bn_gamma,
    bn_beta,
    bn_mean,
    bn_var,
    scale_factors
};

std::string_view to_string(weight_role role);
std::optional<weight_role> parse_weight_role(std::string_view name);

class weight_store
{
public:
    using key_type = std::pair<std::string, weight_role>;

    void set(const std::string &layer, weight_role role, std::vector<float> values);
    bool contains(const std::string &layer, weight_role role) const;
    const std::vector<float> &get(const std::string &layer, weight_role role) const;
    std::vector<float> *find(const std::string &layer, weight_role role);
    const std::vector<float> *find(const std::string &layer, weight_role role) const;
    void erase_layer(const std::string &layer);

    std::size_t parameter_count() const noexcept;
    const std::map<key_type, std::vector<float>> &entries() const noexcept { return entries_; }

    friend bool operator==(const weight_store &, const weight_store &) = default;

private:
    std::map<key_type, std::vector<float>> entries_;
};

/// Affine per-tensor activation range: lo maps to -128 and hi to 127.
struct quant_params
{
    double lo = 0.0;
    double hi = 0.0;
    double scale = 0.0;
    std::int32_t zero_point = 0;

    friend bool operator==(const quant_params &, const quant_params &) = default;
};

struct graph_metadata
{
    std::vector<std::string> class_names;
    /// Anchor (w, h) pairs in network-input pixels.
    std::vector<std::pair<double, double>> anchors;
    /// Free-form producer information (tool version, effective config).
    std::map<std::string, std::string> producer;

    friend bool operator==(const graph_metadata &, const graph_metadata &) = default;
};

struct graph
{
    std::vector<layer_node> nodes;
    std::string input_id = "input";
    tensor_shape input_shape {};
    weight_store weights;
    graph_metadata metadata;
    /// Activation ranges keyed by tensor id; populated by calibration.
    std::map<std::string, quant_params> qparams;

    const layer_node *find_node(std::string_view id) const;
    layer_node *find_node(std::string_view id);

    /// Index of the node producing `tensor`, or nullopt for the graph input
    /// and unknown tensors.
    std::optional<std::size_t> producer_of(std::string_view tensor) const;
    std::vector<std::size_t> consumers_of(std::string_view tensor) const;

    /// Tensors no node consumes, plus every yolo head output, in node order.
    std::vector<std::string> output_tensors() const;

    friend bool operator==(const graph &, const graph &) = default;
};

struct diagnostic
{
    std::string node;
    std::string message;
};

using shape_map = std::map<std::string, tensor_shape>;

/// Node indices in a topological order; ties resolved by original position.
/// Throws invalid_graph if the graph has a cycle or a dangling reference.
std::vector<std::size_t> topological_order(const graph &g);

shape_map infer_shapes(const graph &g);
shape_map infer_shapes(const graph &g, const std::vector<std::size_t> &order);

/// Empty iff the graph is structurally sound and its shapes infer.
std::vector<diagnostic> validate(const graph &g);

/// Expected length of a weight array for the given node and role, or nullopt
/// if that role does not belong to the node.
std::optional<std::size_t> expected_weight_length(const layer_node &node, weight_role role,
    const shape_map &shapes);

/// Input channels of a convolution node, read from its input tensor shape.
int conv_input_channels(const graph &g, const layer_node &node, const shape_map &shapes);
}
