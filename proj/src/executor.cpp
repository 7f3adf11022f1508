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
#include "parallel.hpp"

#include <jetforge/error.hpp>
#include <jetforge/executor.hpp>
#include <jetforge/half.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace jetforge
{
namespace
{
// Smallest o with o * stride + offset >= 0.
int first_valid(int offset, int stride)
{
    if (offset >= 0)
        return 0;
    return (-offset + stride - 1) / stride;
}

// One past the largest o with o * stride + offset <= limit - 1.
int last_valid(int offset, int stride, int limit, int out)
{
    auto span = limit - 1 - offset;
    if (span < 0)
        return 0;
    return std::min(out, span / stride + 1);
}

void check_finite(std::span<const float> values, const std::string &node)
{
    for (auto v : values)
    {
        if (!std::isfinite(v))
            fail(errc::non_finite_detected, "node '" + node + "' produced a non-finite value");
    }
}

std::vector<float> rounded_copy(std::span<const float> values)
{
    std::vector<float> out(values.begin(), values.end());
    round_to_half(out);
    return out;
}
}

std::string_view to_string(exec_mode mode)
{
    switch (mode)
    {
    case exec_mode::f32: return "f32";
    case exec_mode::f16: return "f16";
    case exec_mode::i8: return "i8";
    }
    return "f32";
}

exec_mode parse_exec_mode(std::string_view name)
{
    if (name == "f32")
        return exec_mode::f32;
    if (name == "f16")
        return exec_mode::f16;
    if (name == "i8")
        return exec_mode::i8;
    fail(errc::invalid_argument, "unknown mode '" + std::string(name) + "' (expected f32, f16 or i8)");
}

const tensor_buffer &execution_trace::at(const std::string &id) const
{
    auto it = tensors.find(id);
    if (it == tensors.end())
        fail(errc::invalid_argument, "tensor '" + id + "' is not in the trace");
    return it->second;
}

float apply_activation(float x, const activation &act) noexcept
{
    switch (act.kind)
    {
    case activation::kind_t::linear: return x;
    case activation::kind_t::relu: return x > 0.0f ? x : 0.0f;
    case activation::kind_t::leaky: return leaky(x, static_cast<float>(act.alpha));
    }
    return x;
}

tensor_buffer conv2d(const tensor_buffer &input, std::span<const float> kernel, std::span<const float> bias,
    const convolution &conv)
{
    auto &in = input.shape;
    auto k = conv.kernel, s = conv.stride, p = conv.pad;
    auto out_h = (in.h + 2 * p - k) / s + 1;
    auto out_w = (in.w + 2 * p - k) / s + 1;
    auto out = tensor_buffer::zeros({ 1, conv.out_channels, out_h, out_w });
    if (kernel.size() != static_cast<std::size_t>(conv.out_channels) * in.c * k * k)
        fail(errc::shape_mismatch, "kernel length does not match the convolution");

    auto plane = static_cast<std::size_t>(out_h) * out_w;
    auto in_plane = static_cast<std::size_t>(in.h) * in.w;
    detail::parallel_for(static_cast<std::size_t>(conv.out_channels), 4, [&](std::size_t oc) {
        float *dst = out.data.data() + oc * plane;
        for (int ic = 0; ic < in.c; ic++)
        {
            const float *src = input.data.data() + ic * in_plane;
            const float *wk = kernel.data() + (oc * in.c + ic) * k * k;
            for (int ky = 0; ky < k; ky++)
            {
                auto y_off = ky - p;
                auto oy_begin = first_valid(y_off, s);
                auto oy_end = last_valid(y_off, s, in.h, out_h);
                for (int kx = 0; kx < k; kx++)
                {
                    auto w = wk[ky * k + kx];
                    auto x_off = kx - p;
                    auto ox_begin = first_valid(x_off, s);
                    auto ox_end = last_valid(x_off, s, in.w, out_w);
                    for (int oy = oy_begin; oy < oy_end; oy++)
                    {
                        const float *row = src + static_cast<std::size_t>(oy * s + y_off) * in.w;
                        float *orow = dst + static_cast<std::size_t>(oy) * out_w;
                        if (s == 1)
                        {
                            for (int ox = ox_begin; ox < ox_end; ox++)
                                orow[ox] += w * row[ox + x_off];
                        }
                        else
                        {
                            for (int ox = ox_begin; ox < ox_end; ox++)
                                orow[ox] += w * row[ox * s + x_off];
                        }
                    }
                }
            }
        }
        auto b = bias.empty() ? 0.0f : bias[oc];
        for (std::size_t i = 0; i < plane; i++)
            dst[i] = apply_activation(bias.empty() ? dst[i] : dst[i] + b, conv.fused_activation);
    });
    return out;
}

tensor_buffer batchnorm(const tensor_buffer &input, std::span<const float> gamma, std::span<const float> beta,
    std::span<const float> mean, std::span<const float> var, double eps)
{
    auto c = static_cast<std::size_t>(input.shape.c);
    if (gamma.size() != c || beta.size() != c || mean.size() != c || var.size() != c)
        fail(errc::shape_mismatch, "batch norm parameters do not match the channel count");
    auto out = input;
    out.type = dtype::f32;
    auto plane = static_cast<std::size_t>(input.shape.h) * input.shape.w;
    for (std::size_t ch = 0; ch < c; ch++)
    {
        auto factor = static_cast<float>(gamma[ch] / std::sqrt(static_cast<double>(var[ch]) + eps));
        float *v = out.data.data() + ch * plane;
        for (std::size_t i = 0; i < plane; i++)
            v[i] = (v[i] - mean[ch]) * factor + beta[ch];
    }
    return out;
}

tensor_buffer upsample_nearest(const tensor_buffer &input, int factor)
{
    if (factor < 2)
        fail(errc::invalid_argument, "upsample factor must be >= 2");
    auto &in = input.shape;
    auto out = tensor_buffer::zeros({ 1, in.c, in.h * factor, in.w * factor });
    for (int c = 0; c < in.c; c++)
    {
        for (int y = 0; y < out.shape.h; y++)
        {
            for (int x = 0; x < out.shape.w; x++)
                out.data[(static_cast<std::size_t>(c) * out.shape.h + y) * out.shape.w + x]
                    = input.at(c, y / factor, x / factor);
        }
    }
    return out;
}

tensor_buffer maxpool2d(const tensor_buffer &input, const max_pool &pool)
{
    auto &in = input.shape;
    auto out_h = (in.h + pool.pad - pool.kernel) / pool.stride + 1;
    auto out_w = (in.w + pool.pad - pool.kernel) / pool.stride + 1;
    auto offset = -pool.pad / 2;
    auto out = tensor_buffer::zeros({ 1, in.c, out_h, out_w });
    for (int c = 0; c < in.c; c++)
    {
        for (int oy = 0; oy < out_h; oy++)
        {
            for (int ox = 0; ox < out_w; ox++)
            {
                auto best = -std::numeric_limits<float>::max();
                for (int ky = 0; ky < pool.kernel; ky++)
                {
                    auto iy = oy * pool.stride + offset + ky;
                    if (iy < 0 || iy >= in.h)
                        continue;
                    for (int kx = 0; kx < pool.kernel; kx++)
                    {
                        auto ix = ox * pool.stride + offset + kx;
                        if (ix >= 0 && ix < in.w)
                            best = std::max(best, input.at(c, iy, ix));
                    }
                }
                out.data[(static_cast<std::size_t>(c) * out_h + oy) * out_w + ox] = best;
            }
        }
    }
    return out;
}

tensor_buffer scale_tensor(const tensor_buffer &input, std::span<const float> factors)
{
    auto c = static_cast<std::size_t>(input.shape.c);
    if (factors.size() != 1 && factors.size() != c)
        fail(errc::shape_mismatch, "scale factor count does not match the channel count");
    auto out = input;
    out.type = dtype::f32;
    auto plane = static_cast<std::size_t>(input.shape.h) * input.shape.w;
    for (std::size_t ch = 0; ch < c; ch++)
    {
        auto f = factors.size() == 1 ? factors[0] : factors[ch];
        float *v = out.data.data() + ch * plane;
        for (std::size_t i = 0; i < plane; i++)
            v[i] *= f;
    }
    return out;
}

namespace
{
tensor_buffer add_tensors(const std::vector<const tensor_buffer *> &inputs)
{
    auto out = *inputs.front();
    out.type = dtype::f32;
    for (std::size_t i = 1; i < inputs.size(); i++)
    {
        auto &other = inputs[i]->data;
        for (std::size_t j = 0; j < out.data.size(); j++)
            out.data[j] += other[j];
    }
    return out;
}

tensor_buffer concat_tensors(const std::vector<const tensor_buffer *> &inputs)
{
    auto shape = inputs.front()->shape;
    shape.c = 0;
    for (auto in : inputs)
        shape.c += in->shape.c;
    tensor_buffer out;
    out.shape = shape;
    out.data.reserve(shape.size());
    for (auto in : inputs)
        out.data.insert(out.data.end(), in->data.begin(), in->data.end());
    return out;
}

enum class node_precision
{
    f32,
    f16,
    i8
};
}

struct executor::impl
{
    struct prepared
    {
        const layer_node *node = nullptr;
        node_precision precision = node_precision::f32;
        std::vector<std::size_t> inputs; // slots
        std::size_t output = 0;
        std::vector<std::size_t> release; // slots dead after this node

        // views into the graph's weights, or into the owned copies below
        std::span<const float> kernel, bias, gamma, beta, mean, var, factors;
        std::vector<float> own_kernel, own_bias, own_gamma, own_beta, own_mean, own_var, own_factors;
        quant::channel_weights qweights;
        std::vector<quant_params> input_qparams;
        std::optional<quant_params> output_qparams;
    };

    const graph *g = nullptr;
    exec_mode mode = exec_mode::f32;
    std::vector<prepared> steps;
    std::unordered_map<std::string, std::size_t> slot_of;
    std::vector<std::string> slot_names;
    std::vector<bool> keep_for_heads;

    std::size_t slot(const std::string &tensor)
    {
        auto [it, inserted] = slot_of.emplace(tensor, slot_names.size());
        if (inserted)
            slot_names.push_back(tensor);
        return it->second;
    }
};

executor::executor(const graph &g, exec_mode mode) : impl_(std::make_unique<impl>())
{
    impl_->g = &g;
    impl_->mode = mode;
    auto order = topological_order(g);
    auto shapes = infer_shapes(g, order);
    impl_->slot(g.input_id);

    auto require_qparams = [&](const std::string &tensor, const std::string &node) -> const quant_params & {
        auto it = g.qparams.find(tensor);
        if (it == g.qparams.end())
            fail(errc::missing_qparams, "tensor '" + tensor + "' (node '" + node + "') has no quantization range");
        return it->second;
    };

    for (auto idx : order)
    {
        auto &node = g.nodes[idx];
        impl::prepared step;
        step.node = &node;
        for (auto &in : node.inputs)
            step.inputs.push_back(impl_->slot(in));
        step.output = impl_->slot(node.output);

        switch (mode)
        {
        case exec_mode::f32: step.precision = node_precision::f32; break;
        case exec_mode::f16:
            step.precision = node.precision == precision_class::plugin_only ? node_precision::f32 : node_precision::f16;
            break;
        case exec_mode::i8:
            step.precision = node.precision == precision_class::plugin_only ? node_precision::f32 : node_precision::i8;
            break;
        }

        auto view = [&](weight_role role, std::vector<float> &own) -> std::span<const float> {
            auto w = g.weights.find(node.id, role);
            if (!w)
                return {};
            if (step.precision == node_precision::f16)
            {
                own = rounded_copy(*w);
                return own;
            }
            return *w;
        };
        step.kernel = view(weight_role::kernel, step.own_kernel);
        step.bias = view(weight_role::bias, step.own_bias);
        step.gamma = view(weight_role::bn_gamma, step.own_gamma);
        step.beta = view(weight_role::bn_beta, step.own_beta);
        step.mean = view(weight_role::bn_mean, step.own_mean);
        step.var = view(weight_role::bn_var, step.own_var);
        step.factors = view(weight_role::scale_factors, step.own_factors);

        if (auto conv = std::get_if<convolution>(&node.kind))
        {
            if (step.kernel.empty())
                fail(errc::invalid_graph, "convolution '" + node.id + "' has no kernel");
            if (conv->has_bias && step.bias.empty())
                fail(errc::invalid_graph, "convolution '" + node.id + "' has no bias");
            if (step.precision == node_precision::i8)
                step.qweights = quant::quantize_weights(step.kernel, conv->out_channels);
        }

        if (step.precision == node_precision::i8)
        {
            for (auto &in : node.inputs)
                step.input_qparams.push_back(require_qparams(in, node.id));
            step.output_qparams = require_qparams(node.output, node.id);
        }
        impl_->steps.push_back(std::move(step));
    }

    // liveness for heads-only retention
    std::vector<std::size_t> last_use(impl_->slot_names.size(), 0);
    for (std::size_t i = 0; i < impl_->steps.size(); i++)
    {
        for (auto s : impl_->steps[i].inputs)
            last_use[s] = i;
    }
    impl_->keep_for_heads.assign(impl_->slot_names.size(), false);
    for (auto &out : g.output_tensors())
        impl_->keep_for_heads[impl_->slot_of.at(out)] = true;
    for (std::size_t s = 0; s < last_use.size(); s++)
    {
        if (!impl_->keep_for_heads[s] && last_use[s] < impl_->steps.size())
            impl_->steps[last_use[s]].release.push_back(s);
    }
}

executor::~executor() = default;
executor::executor(executor &&) noexcept = default;
executor &executor::operator=(executor &&) noexcept = default;

exec_mode executor::mode() const noexcept
{
    return impl_->mode;
}

execution_trace executor::run(const tensor_buffer &input, retention keep) const
{
    auto &self = *impl_;
    auto &g = *self.g;
    if (input.shape != g.input_shape)
        fail(errc::shape_mismatch, "input " + to_string(input.shape) + " does not match graph input "
                + to_string(g.input_shape));

    std::vector<tensor_buffer> slots(self.slot_names.size());
    auto &first = slots[self.slot_of.at(g.input_id)];
    first = tensor_buffer::from(input.shape, input.values());
    if (self.mode == exec_mode::f16)
    {
        round_to_half(first.data);
        first.type = dtype::f16sim;
    }

    for (auto &step : self.steps)
    {
        auto &node = *step.node;
        tensor_buffer result;

        if (step.precision == node_precision::i8)
        {
            std::vector<tensor_buffer> quantized;
            for (std::size_t i = 0; i < step.inputs.size(); i++)
            {
                auto &buf = slots[step.inputs[i]];
                if (buf.type == dtype::i8 && buf.qparams == step.input_qparams[i])
                    quantized.push_back(buf);
                else
                    quantized.push_back(quant::quantize_tensor(tensor_buffer::from(buf.shape, buf.values()),
                        step.input_qparams[i]));
            }

            if (auto conv = std::get_if<convolution>(&node.kind))
            {
                result = quant::quantized_conv(quantized.front(), step.qweights, step.bias, *conv, step.output_qparams);
            }
            else
            {
                // Remaining quantizable layers: requantize around the f32 kernel.
                std::vector<tensor_buffer> real;
                for (auto &q : quantized)
                    real.push_back(tensor_buffer::from(q.shape, q.values()));
                std::vector<const tensor_buffer *> ptrs;
                for (auto &r : real)
                    ptrs.push_back(&r);
                tensor_buffer f;
                std::visit(
                    [&](const auto &k) {
                        using T = std::decay_t<decltype(k)>;
                        if constexpr (std::is_same_v<T, batch_norm>)
                            f = batchnorm(real[0], step.gamma, step.beta, step.mean, step.var, k.eps);
                        else if constexpr (std::is_same_v<T, activation_layer>)
                        {
                            f = real[0];
                            for (auto &v : f.data)
                                v = apply_activation(v, k.act);
                        }
                        else if constexpr (std::is_same_v<T, scale>)
                            f = scale_tensor(real[0], step.factors);
                        else if constexpr (std::is_same_v<T, upsample>)
                            f = upsample_nearest(real[0], k.factor);
                        else if constexpr (std::is_same_v<T, add>)
                            f = add_tensors(ptrs);
                        else if constexpr (std::is_same_v<T, concat>)
                            f = concat_tensors(ptrs);
                        else if constexpr (std::is_same_v<T, max_pool>)
                            f = maxpool2d(real[0], k);
                        else if constexpr (std::is_same_v<T, yolo_head>)
                            f = real[0];
                        else
                            fail(errc::invalid_graph, "unhandled layer kind");
                    },
                    node.kind);
                check_finite(f.data, node.id);
                result = quant::quantize_tensor(f, *step.output_qparams);
            }
        }
        else
        {
            // f32 and f16 share the kernels; f16 inputs and weights are
            // already binary16 values and the output is rounded below.
            std::vector<tensor_buffer> converted;
            converted.reserve(step.inputs.size());
            std::vector<const tensor_buffer *> ptrs;
            for (auto s : step.inputs)
            {
                auto &buf = slots[s];
                if (buf.type == dtype::i8)
                {
                    converted.push_back(tensor_buffer::from(buf.shape, buf.values()));
                    ptrs.push_back(&converted.back());
                }
                else
                {
                    ptrs.push_back(&buf);
                }
            }

            auto &x = *ptrs.front();
            std::visit(
                [&](const auto &k) {
                    using T = std::decay_t<decltype(k)>;
                    if constexpr (std::is_same_v<T, convolution>)
                        result = conv2d(x, step.kernel, step.bias, k);
                    else if constexpr (std::is_same_v<T, batch_norm>)
                        result = batchnorm(x, step.gamma, step.beta, step.mean, step.var, k.eps);
                    else if constexpr (std::is_same_v<T, activation_layer>)
                    {
                        result = tensor_buffer::from(x.shape, x.data);
                        for (auto &v : result.data)
                            v = apply_activation(v, k.act);
                    }
                    else if constexpr (std::is_same_v<T, scale>)
                        result = scale_tensor(x, step.factors);
                    else if constexpr (std::is_same_v<T, upsample>)
                        result = upsample_nearest(x, k.factor);
                    else if constexpr (std::is_same_v<T, add>)
                        result = add_tensors(ptrs);
                    else if constexpr (std::is_same_v<T, concat>)
                        result = concat_tensors(ptrs);
                    else if constexpr (std::is_same_v<T, max_pool>)
                        result = maxpool2d(x, k);
                    else if constexpr (std::is_same_v<T, yolo_head>)
                        result = tensor_buffer::from(x.shape, x.data);
                },
                node.kind);

            result.type = dtype::f32;
            if (step.precision == node_precision::f16)
            {
                round_to_half(result.data);
                result.type = dtype::f16sim;
            }
            check_finite(result.data, node.id);
        }

        slots[step.output] = std::move(result);
        if (keep == retention::heads_only)
        {
            for (auto s : step.release)
                slots[s] = {};
        }
    }

    execution_trace trace;
    for (std::size_t s = 0; s < slots.size(); s++)
    {
        if (keep == retention::all || self.keep_for_heads[s])
            trace.tensors.emplace(self.slot_names[s], std::move(slots[s]));
    }
    return trace;
}

execution_trace execute(const graph &g, const tensor_buffer &input, exec_mode mode, retention keep)
{
    return executor(g, mode).run(input, keep);
}
}
