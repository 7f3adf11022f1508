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
#include <jetforge/tensor.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace jetforge::quant
{
inline constexpr int qmin = -128;
inline constexpr int qmax = 127;

/// Affine parameters with quantize(lo) = -128 and quantize(hi) = 127.
quant_params make_quant_params(double lo, double hi);

inline std::int8_t quantize(float x, const quant_params &qp) noexcept
{
    auto q = std::nearbyint(static_cast<double>(x) / qp.scale) + qp.zero_point;
    q = std::fmin(std::fmax(q, static_cast<double>(qmin)), static_cast<double>(qmax));
    return static_cast<std::int8_t>(q);
}

inline float dequantize(std::int8_t q, const quant_params &qp) noexcept
{
    return static_cast<float>((static_cast<std::int32_t>(q) - qp.zero_point) * qp.scale);
}

tensor_buffer quantize_tensor(const tensor_buffer &t, const quant_params &qp);

/// Symmetric per-output-channel int8 weights.
struct channel_weights
{
    std::vector<std::int8_t> values;
    std::vector<float> scales; // one per output channel
};

/// scale_c = max|w_c| / 127 and q = clamp(round(w / scale_c), -127, 127).
/// An all-zero channel gets scale 1 and zero weights.
channel_weights quantize_weights(std::span<const float> kernel, int out_channels);

/// Integer convolution: acc = sum (q_in - zp) * q_w in 32 bits, real value
/// acc * scale_in * scale_c + bias, then the fused activation. Emits i8 with
/// `output_qparams` when given, otherwise f32. Throws accumulator_overflow
/// if any partial sum leaves the int32 range.
tensor_buffer quantized_conv(const tensor_buffer &input, const channel_weights &weights, std::span<const float> bias,
    const convolution &conv, const std::optional<quant_params> &output_qparams);

struct activation_histogram
{
    std::string tensor;
    int bin_count = 2048;
    double observed_min = 0.0;
    double observed_max = 0.0;
    /// Signed tensors are binned by |x|; non-negative ones by x. Either way
    /// the bins cover [0, edge_hi] uniformly.
    bool abs_valued = false;
    double edge_hi = 1.0;
    std::vector<std::uint64_t> counts;
    std::uint64_t samples = 0;

    double bin_width() const noexcept { return edge_hi / bin_count; }

    /// Empty histogram whose bins cover the given observed range.
    static activation_histogram for_range(std::string tensor, double min, double max, int bins);
    void add(std::span<const float> values);
    void merge(const activation_histogram &other);
};

struct calibration_config
{
    std::size_t image_count = 1000;
    std::uint64_t seed = 0;
    int bin_count = 2048;
    int levels = 256;
};

/// Calibration images, loaded lazily by index.
struct image_source
{
    std::size_t size = 0;
    std::function<tensor_buffer(std::size_t)> load;
};

/// Sorted indices of a seeded sample of `count` images out of `total` (all
/// of them when count >= total).
std::vector<std::size_t> sample_indices(std::size_t total, std::size_t count, std::uint64_t seed);

/// Two passes over the sampled images in F32: observed ranges first, then
/// fixed-edge bins. One histogram per tensor (graph input and every node
/// output).
std::map<std::string, activation_histogram> collect_histograms(const graph &g, const image_source &images,
    const calibration_config &config);

/// Sum over P(i) > 0 of P(i) ln(P(i)/Q(i)); +infinity if Q(i) = 0 there.
double kl_divergence(std::span<const double> p, std::span<const double> q);

struct calibration_result
{
    double lo = 0.0;
    double hi = 0.0;
    int cut_bins = 0; // number of leading bins kept
    double kl = 0.0;
    bool degenerate = false;
};

/// Reference and candidate distributions for keeping the first `cut` bins.
/// Exposed for diagnostics; entropy_calibrate scans it over every cut.
double cut_divergence(std::span<const std::uint64_t> counts, int cut, int levels);

/// Entropy calibration: scans cuts in [levels, bin_count] that keep at least
/// two populated bins and takes the one with minimum KL divergence,
/// preferring the larger range on ties.
calibration_result entropy_calibrate(const activation_histogram &hist, int levels = 256);

struct ranges_file
{
    std::map<std::string, quant_params> ranges;
    std::uint64_t seed = 0;
    std::size_t count = 0;
    int bin_count = 2048;
    std::map<std::string, std::string> producer;
};

std::string ranges_to_json(const ranges_file &ranges);
ranges_file ranges_from_json(std::string_view text);
void save_ranges(const ranges_file &ranges, const std::filesystem::path &path);
ranges_file load_ranges(const std::filesystem::path &path);

/// Runs calibration end to end and returns per-tensor quantization params.
ranges_file calibrate(const graph &g, const image_source &images, const calibration_config &config);
}
