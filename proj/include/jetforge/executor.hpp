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

#include <jetforge/graph.hpp>
#include <jetforge/quantizer.hpp>
#include <jetforge/tensor.hpp>

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace jetforge
{
enum class exec_mode
{
    f32,
    f16,
    i8
};

std::string_view to_string(exec_mode mode);
exec_mode parse_exec_mode(std::string_view name);

enum class retention
{
    all,
    heads_only
};

struct execution_trace
{
    std::map<std::string, tensor_buffer> tensors;

    const tensor_buffer &at(const std::string &id) const;
};

inline float leaky(float x, float alpha) noexcept
{
    return x >= 0.0f ? x : alpha * x;
}

float apply_activation(float x, const activation &act) noexcept;

// Reference kernels on single-image tensors.

/// Direct convolution. Each output element accumulates in f32 over input
/// channel, then kernel row, then kernel column; bias is added after the sum
/// and the fused activation last.
tensor_buffer conv2d(const tensor_buffer &input, std::span<const float> kernel, std::span<const float> bias,
    const convolution &conv);
tensor_buffer batchnorm(const tensor_buffer &input, std::span<const float> gamma, std::span<const float> beta,
    std::span<const float> mean, std::span<const float> var, double eps);
tensor_buffer upsample_nearest(const tensor_buffer &input, int factor);
tensor_buffer maxpool2d(const tensor_buffer &input, const max_pool &pool);
tensor_buffer scale_tensor(const tensor_buffer &input, std::span<const float> factors);

/// Prepared interpreter for one graph and precision mode. Weight rounding
/// and quantization happen once in the constructor; run() is const and
/// reentrant.
class executor
{
public:
    executor(const graph &g, exec_mode mode);
    ~executor();
    executor(executor &&) noexcept;
    executor &operator=(executor &&) noexcept;

    execution_trace run(const tensor_buffer &input, retention keep = retention::all) const;

    exec_mode mode() const noexcept;

private:
    struct impl;
    std::unique_ptr<impl> impl_;
};

execution_trace execute(const graph &g, const tensor_buffer &input, exec_mode mode, retention keep = retention::all);
}
