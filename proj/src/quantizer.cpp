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
#include <jetforge/executor.hpp>
#include <jetforge/io.hpp>
#include <jetforge/quantizer.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

using nlohmann::json;

namespace jetforge::quant
{
quant_params make_quant_params(double lo, double hi)
{
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
        fail(errc::invalid_argument, "quantization range needs finite lo < hi");
    quant_params qp;
    qp.lo = lo;
    qp.hi = hi;
    qp.scale = (hi - lo) / 255.0;
    auto zp = qmin - std::nearbyint(lo / qp.scale);
    if (zp < std::numeric_limits<std::int32_t>::min() || zp > std::numeric_limits<std::int32_t>::max())
        fail(errc::invalid_argument, "quantization range too far from zero");
    qp.zero_point = static_cast<std::int32_t>(zp);
    return qp;
}

tensor_buffer quantize_tensor(const tensor_buffer &t, const quant_params &qp)
{
    tensor_buffer out;
    out.shape = t.shape;
    out.type = dtype::i8;
    out.qparams = qp;
    auto values = t.values();
    out.qdata.resize(values.size());
    for (std::size_t i = 0; i < values.size(); i++)
        out.qdata[i] = quantize(values[i], qp);
    return out;
}

channel_weights quantize_weights(std::span<const float> kernel, int out_channels)
{
    if (out_channels < 1 || kernel.size() % static_cast<std::size_t>(out_channels) != 0)
        fail(errc::length_mismatch, "kernel length is not a multiple of the output channel count");
    auto per_channel = kernel.size() / static_cast<std::size_t>(out_channels);
    channel_weights result;
    result.values.resize(kernel.size());
    result.scales.resize(static_cast<std::size_t>(out_channels));
    for (std::size_t c = 0; c < result.scales.size(); c++)
    {
        auto w = kernel.subspan(c * per_channel, per_channel);
        double max_abs = 0.0;
        for (auto v : w)
        {
            if (!std::isfinite(v))
                fail(errc::invalid_argument, "non-finite weight in channel " + std::to_string(c));
            max_abs = std::max(max_abs, std::fabs(static_cast<double>(v)));
        }
        if (max_abs == 0.0)
        {
            result.scales[c] = 1.0f;
            continue; // values already zero
        }
        auto s = max_abs / 127.0;
        result.scales[c] = static_cast<float>(s);
        for (std::size_t i = 0; i < per_channel; i++)
        {
            auto q = std::clamp(std::nearbyint(w[i] / s), -127.0, 127.0);
            result.values[c * per_channel + i] = static_cast<std::int8_t>(q);
        }
    }
    return result;
}

tensor_buffer quantized_conv(const tensor_buffer &input, const channel_weights &weights, std::span<const float> bias,
    const convolution &conv, const std::optional<quant_params> &output_qparams)
{
    if (input.type != dtype::i8 || !input.qparams)
        fail(errc::missing_qparams, "quantized convolution needs an i8 input with parameters");
    auto &in = input.shape;
    auto &qp = *input.qparams;
    auto k = conv.kernel, s = conv.stride, p = conv.pad;
    auto out_h = (in.h + 2 * p - k) / s + 1;
    auto out_w = (in.w + 2 * p - k) / s + 1;
    auto kk = static_cast<std::size_t>(k) * k;
    if (weights.values.size() != static_cast<std::size_t>(conv.out_channels) * in.c * kk
        || weights.scales.size() != static_cast<std::size_t>(conv.out_channels))
        fail(errc::length_mismatch, "quantized kernel does not match the convolution");

    // Worst case |q_in - zp| <= 255 + |zp| and |q_w| <= 127 over in.c * k * k terms.
    auto worst = (255.0 + std::abs(static_cast<double>(qp.zero_point))) * 127.0 * static_cast<double>(in.c * kk);
    bool may_overflow = worst > static_cast<double>(std::numeric_limits<std::int32_t>::max());

    std::vector<std::int32_t> centered(input.qdata.size());
    for (std::size_t i = 0; i < centered.size(); i++)
        centered[i] = static_cast<std::int32_t>(input.qdata[i]) - qp.zero_point;

    tensor_buffer out;
    out.shape = { 1, conv.out_channels, out_h, out_w };
    auto plane = static_cast<std::size_t>(out_h) * out_w;
    std::vector<float> real(out.shape.size());
    std::vector<std::int64_t> acc(plane);

    for (int oc = 0; oc < conv.out_channels; oc++)
    {
        std::fill(acc.begin(), acc.end(), 0);
        for (int ic = 0; ic < in.c; ic++)
        {
            const std::int32_t *src = centered.data() + static_cast<std::size_t>(ic) * in.h * in.w;
            const std::int8_t *wk = weights.values.data() + (static_cast<std::size_t>(oc) * in.c + ic) * kk;
            for (int ky = 0; ky < k; ky++)
            {
                for (int kx = 0; kx < k; kx++)
                {
                    std::int64_t w = wk[ky * k + kx];
                    if (w == 0)
                        continue;
                    for (int oy = 0; oy < out_h; oy++)
                    {
                        auto iy = oy * s - p + ky;
                        if (iy < 0 || iy >= in.h)
                            continue; // padding is real zero, i.e. q == zero_point
                        for (int ox = 0; ox < out_w; ox++)
                        {
                            auto ix = ox * s - p + kx;
                            if (ix >= 0 && ix < in.w)
                                acc[static_cast<std::size_t>(oy) * out_w + ox] += w * src[iy * in.w + ix];
                        }
                    }
                    if (may_overflow)
                    {
                        for (auto a : acc)
                        {
                            if (a > std::numeric_limits<std::int32_t>::max()
                                || a < std::numeric_limits<std::int32_t>::min())
                                fail(errc::accumulator_overflow, "int32 accumulator overflow; layer needs wider accumulation");
                        }
                    }
                }
            }
        }
        auto multiplier = qp.scale * static_cast<double>(weights.scales[oc]);
        auto b = bias.empty() ? 0.0 : static_cast<double>(bias[oc]);
        for (std::size_t i = 0; i < plane; i++)
        {
            auto v = static_cast<float>(static_cast<double>(acc[i]) * multiplier + b);
            real[static_cast<std::size_t>(oc) * plane + i] = apply_activation(v, conv.fused_activation);
        }
    }

    for (auto v : real)
    {
        if (!std::isfinite(v))
            fail(errc::non_finite_detected, "quantized convolution produced a non-finite value");
    }

    if (!output_qparams)
    {
        out.type = dtype::f32;
        out.data = std::move(real);
        return out;
    }
    out.type = dtype::i8;
    out.qparams = output_qparams;
    out.qdata.resize(real.size());
    for (std::size_t i = 0; i < real.size(); i++)
        out.qdata[i] = quantize(real[i], *output_qparams);
    return out;
}

activation_histogram activation_histogram::for_range(std::string tensor, double min, double max, int bins)
{
    if (bins < 1)
        fail(errc::invalid_argument, "histogram needs at least one bin");
    activation_histogram h;
    h.tensor = std::move(tensor);
    h.bin_count = bins;
    h.observed_min = min;
    h.observed_max = max;
    h.abs_valued = min < 0.0;
    auto top = h.abs_valued ? std::max(-min, max) : max;
    h.edge_hi = top > 0.0 ? top : 1.0;
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    return h;
}

void activation_histogram::add(std::span<const float> values)
{
    auto width = bin_width();
    auto last = static_cast<std::size_t>(bin_count - 1);
    for (auto v : values)
    {
        double x = abs_valued ? std::fabs(static_cast<double>(v)) : static_cast<double>(v);
        auto bin = x <= 0.0 ? std::size_t { 0 } : std::min(last, static_cast<std::size_t>(x / width));
        counts[bin]++;
    }
    samples += values.size();
}

void activation_histogram::merge(const activation_histogram &other)
{
    if (other.bin_count != bin_count || other.edge_hi != edge_hi || other.abs_valued != abs_valued)
        fail(errc::length_mismatch, "histograms with different edges cannot merge");
    for (std::size_t i = 0; i < counts.size(); i++)
        counts[i] += other.counts[i];
    samples += other.samples;
}

std::vector<std::size_t> sample_indices(std::size_t total, std::size_t count, std::uint64_t seed)
{
    std::vector<std::size_t> indices(total);
    std::iota(indices.begin(), indices.end(), std::size_t { 0 });
    if (count >= total)
        return indices;
    std::mt19937_64 rng(seed);
    std::shuffle(indices.begin(), indices.end(), rng);
    indices.resize(count);
    std::sort(indices.begin(), indices.end());
    return indices;
}

std::map<std::string, activation_histogram> collect_histograms(const graph &g, const image_source &images,
    const calibration_config &config)
{
    if (config.image_count < 1 || images.size == 0)
        fail(errc::empty_calibration_set, "calibration needs at least one image");
    auto indices = sample_indices(images.size, config.image_count, config.seed);
    executor exec(g, exec_mode::f32);

    auto run = [&](std::size_t index) {
        try
        {
            return exec.run(images.load(index), retention::all);
        }
        catch (const error &e)
        {
            if (e.code() == errc::non_finite_detected)
                fail(errc::non_finite_activation, e.what());
            throw;
        }
    };

    std::map<std::string, std::pair<double, double>> ranges;
    for (auto index : indices)
    {
        auto trace = run(index);
        for (auto &[id, buf] : trace.tensors)
        {
            auto [lo, hi] = std::minmax_element(buf.data.begin(), buf.data.end());
            auto [it, fresh] = ranges.try_emplace(id, *lo, *hi);
            if (!fresh)
            {
                it->second.first = std::min<double>(it->second.first, *lo);
                it->second.second = std::max<double>(it->second.second, *hi);
            }
        }
    }

    std::map<std::string, activation_histogram> hists;
    for (auto &[id, range] : ranges)
        hists.emplace(id, activation_histogram::for_range(id, range.first, range.second, config.bin_count));
    for (auto index : indices)
    {
        auto trace = run(index);
        for (auto &[id, buf] : trace.tensors)
            hists.at(id).add(buf.data);
    }
    return hists;
}

double kl_divergence(std::span<const double> p, std::span<const double> q)
{
    if (p.size() != q.size())
        fail(errc::length_mismatch, "distributions have different lengths");
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); i++)
    {
        if (p[i] <= 0.0)
            continue;
        if (q[i] <= 0.0)
            return std::numeric_limits<double>::infinity();
        sum += p[i] * std::log(p[i] / q[i]);
    }
    return sum;
}

double cut_divergence(std::span<const std::uint64_t> counts, int cut, int levels)
{
    auto n = static_cast<std::size_t>(cut);
    std::vector<double> reference(n), candidate(n, 0.0);
    for (std::size_t i = 0; i < n; i++)
        reference[i] = static_cast<double>(counts[i]);
    double outliers = 0.0;
    for (std::size_t i = n; i < counts.size(); i++)
        outliers += static_cast<double>(counts[i]);
    reference[n - 1] += outliers;

    // Bin i of the kept range falls into quantization level floor(i*levels/cut).
    // Each level's in-range mass is spread evenly over the level's bins that
    // are nonempty in the reference.
    std::vector<double> level_mass(static_cast<std::size_t>(levels), 0.0);
    std::vector<std::size_t> level_nonzero(static_cast<std::size_t>(levels), 0);
    auto level_of = [&](std::size_t i) { return i * static_cast<std::size_t>(levels) / n; };
    for (std::size_t i = 0; i < n; i++)
    {
        level_mass[level_of(i)] += static_cast<double>(counts[i]);
        if (reference[i] > 0.0)
            level_nonzero[level_of(i)]++;
    }
    for (std::size_t i = 0; i < n; i++)
    {
        if (reference[i] > 0.0)
            candidate[i] = level_mass[level_of(i)] / static_cast<double>(level_nonzero[level_of(i)]);
    }

    auto p_total = std::accumulate(reference.begin(), reference.end(), 0.0);
    auto q_total = std::accumulate(candidate.begin(), candidate.end(), 0.0);
    if (p_total <= 0.0 || q_total <= 0.0)
        return std::numeric_limits<double>::infinity();
    for (auto &v : reference)
        v /= p_total;
    for (auto &v : candidate)
        v /= q_total;
    return kl_divergence(reference, candidate);
}

calibration_result entropy_calibrate(const activation_histogram &hist, int levels)
{
    if (levels < 2)
        fail(errc::invalid_argument, "need at least two quantization levels");
    auto width = hist.bin_width();
    auto to_range = [&](double top) -> std::pair<double, double> {
        if (hist.abs_valued)
            return { -top * 128.0 / 127.0, top };
        return { 0.0, top };
    };

    auto nonempty = std::count_if(hist.counts.begin(), hist.counts.end(), [](auto c) { return c != 0; });
    if (nonempty <= 1 || hist.bin_count < levels)
    {
        // All mass in a single bin: that bin widened by one bin width.
        auto bin = std::distance(hist.counts.begin(),
            std::find_if(hist.counts.begin(), hist.counts.end(), [](auto c) { return c != 0; }));
        if (bin == static_cast<long>(hist.counts.size()))
            bin = 0;
        calibration_result r;
        r.degenerate = true;
        r.cut_bins = static_cast<int>(bin) + 1;
        r.hi = (static_cast<double>(bin) + 2.0) * width;
        r.lo = hist.abs_valued ? -r.hi * 128.0 / 127.0 : (static_cast<double>(bin) - 1.0) * width;
        r.kl = std::numeric_limits<double>::infinity();
        if (nonempty > 1)
        {
            // more bins than levels are required for a meaningful scan
            auto range = to_range(hist.edge_hi);
            r.lo = range.first;
            r.hi = range.second;
            r.cut_bins = hist.bin_count;
        }
        return r;
    }

    calibration_result best;
    best.kl = std::numeric_limits<double>::infinity();
    best.cut_bins = hist.bin_count;
    // A cut that keeps a single populated bin makes P and Q the same point
    // mass, so its zero divergence says nothing; such cuts are skipped.
    auto populated = std::count_if(hist.counts.begin(), hist.counts.begin() + (levels - 1), [](auto c) { return c != 0; });
    for (int cut = levels; cut <= hist.bin_count; cut++)
    {
        populated += hist.counts[static_cast<std::size_t>(cut) - 1] != 0;
        if (populated < 2)
            continue;
        auto kl = cut_divergence(hist.counts, cut, levels);
        if (kl <= best.kl)
        {
            best.kl = kl;
            best.cut_bins = cut;
        }
    }
    auto [lo, hi] = to_range(best.cut_bins * width);
    best.lo = lo;
    best.hi = hi;
    return best;
}

std::string ranges_to_json(const ranges_file &ranges)
{
    json tensors = json::object();
    for (auto &[id, q] : ranges.ranges)
        tensors[id] = { { "lo", q.lo }, { "hi", q.hi }, { "scale", q.scale }, { "zero_point", q.zero_point } };
    json j = { { "header", { { "tool", tool_name }, { "version", tool_version }, { "config", ranges.producer } } },
        { "calibration", { { "seed", ranges.seed }, { "count", ranges.count }, { "bin_count", ranges.bin_count } } },
        { "tensors", tensors } };
    return j.dump(2) + "\n";
}

ranges_file ranges_from_json(std::string_view text)
{
    try
    {
        auto j = json::parse(text);
        ranges_file r;
        auto &cal = j.at("calibration");
        r.seed = cal.at("seed").get<std::uint64_t>();
        r.count = cal.at("count").get<std::size_t>();
        r.bin_count = cal.at("bin_count").get<int>();
        if (j.contains("header") && j["header"].contains("config"))
            r.producer = j["header"]["config"].get<std::map<std::string, std::string>>();
        for (auto &[id, q] : j.at("tensors").items())
            r.ranges[id] = { q.at("lo").get<double>(), q.at("hi").get<double>(), q.at("scale").get<double>(),
                q.at("zero_point").get<std::int32_t>() };
        return r;
    }
    catch (const json::exception &e)
    {
        fail(errc::malformed_json, std::string("ranges file: ") + e.what());
    }
}

void save_ranges(const ranges_file &ranges, const std::filesystem::path &path)
{
    write_file_text(path, ranges_to_json(ranges));
}

ranges_file load_ranges(const std::filesystem::path &path)
{
    return ranges_from_json(read_file_text(path));
}

ranges_file calibrate(const graph &g, const image_source &images, const calibration_config &config)
{
    auto hists = collect_histograms(g, images, config);
    ranges_file result;
    result.seed = config.seed;
    result.count = std::min(config.image_count, images.size);
    result.bin_count = config.bin_count;
    for (auto &[id, hist] : hists)
    {
        auto cal = entropy_calibrate(hist, config.levels);
        result.ranges[id] = make_quant_params(cal.lo, cal.hi);
    }
    return result;
}
}
