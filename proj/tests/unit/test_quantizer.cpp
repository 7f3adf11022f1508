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
#include <doctest.h>

#include "fixtures.hpp"

#include <jetforge/darknet.hpp>
#include <jetforge/executor.hpp>
#include <jetforge/quantizer.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

using namespace jetforge;

namespace
{
// Written from the definition: P keeps `cut` bins with the tail folded into
// the last one, Q merges P's in-range bins into `levels` groups and spreads
// each group's mass over its nonzero bins.
double oracle_divergence(const std::vector<std::uint64_t> &h, int cut, int levels)
{
    std::vector<double> p(h.begin(), h.begin() + cut);
    for (std::size_t i = cut; i < h.size(); i++)
        p.back() += static_cast<double>(h[i]);
    std::vector<double> q(p.size(), 0.0);
    for (int level = 0; level < levels; level++)
    {
        double mass = 0;
        int nonzero = 0;
        std::vector<int> members;
        for (int i = 0; i < cut; i++)
            if (static_cast<long long>(i) * levels / cut == level)
                members.push_back(i);
        for (int i : members)
        {
            mass += static_cast<double>(h[i]);
            nonzero += p[i] > 0;
        }
        for (int i : members)
            if (p[i] > 0)
                q[i] = mass / nonzero;
    }
    double ps = 0, qs = 0;
    for (std::size_t i = 0; i < p.size(); i++)
    {
        ps += p[i];
        qs += q[i];
    }
    if (qs == 0)
        return std::numeric_limits<double>::infinity();
    double kl = 0;
    for (std::size_t i = 0; i < p.size(); i++)
    {
        if (p[i] == 0)
            continue;
        if (q[i] == 0)
            return std::numeric_limits<double>::infinity();
        kl += p[i] / ps * std::log((p[i] / ps) / (q[i] / qs));
    }
    return kl;
}

int oracle_best_cut(const std::vector<std::uint64_t> &h, int levels)
{
    int best = static_cast<int>(h.size());
    double best_kl = std::numeric_limits<double>::infinity();
    for (int cut = levels; cut <= static_cast<int>(h.size()); cut++)
    {
        // Keeping a single populated bin gives a meaningless zero.
        if (std::count_if(h.begin(), h.begin() + cut, [](auto c) { return c != 0; }) < 2)
            continue;
        auto kl = oracle_divergence(h, cut, levels);
        if (kl <= best_kl)
        {
            best_kl = kl;
            best = cut;
        }
    }
    return best;
}

quant::activation_histogram histogram_of(const std::vector<std::uint64_t> &counts, bool abs_valued)
{
    auto h = quant::activation_histogram::for_range("t", abs_valued ? -2.0 : 0.0, 2.0, static_cast<int>(counts.size()));
    h.counts = counts;
    return h;
}

quant::image_source random_images(tensor_shape shape, std::size_t n, std::uint64_t seed)
{
    return { n, [=](std::size_t i) {
                std::mt19937_64 rng(seed + i);
                return fixtures::random_tensor(shape, rng, 0, 1);
            } };
}
}

TEST_SUITE("quantizer")
{
    TEST_CASE("KL divergence examples")
    {
        std::vector<double> p { 0.5, 0.5 }, q { 0.25, 0.75 };
        // 0.5 ln 2 + 0.5 ln(2/3)
        CHECK(quant::kl_divergence(p, q) == doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0)));
        CHECK(quant::kl_divergence(p, p) == 0.0);
        std::vector<double> hole { 1.0, 0.0 };
        CHECK(std::isinf(quant::kl_divergence(p, hole)));
        CHECK(quant::kl_divergence(hole, p) == doctest::Approx(std::log(2.0)));
        std::vector<double> three { 1, 0, 0 };
        CHECK_THROWS_AS(quant::kl_divergence(p, three), error);
    }

    TEST_CASE("affine parameters map the range ends to the int8 ends")
    {
        auto qp = quant::make_quant_params(-1.0, 3.0);
        CHECK(qp.scale == doctest::Approx(4.0 / 255.0));
        CHECK(quant::quantize(-1.0f, qp) == -128);
        CHECK(quant::quantize(3.0f, qp) == 127);
        CHECK(quant::quantize(-50.0f, qp) == -128);
        CHECK(quant::quantize(50.0f, qp) == 127);
        CHECK_THROWS_AS(quant::make_quant_params(1.0, 1.0), error);
    }

    TEST_CASE("round trip error is at most half a step inside the range")
    {
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> ends(-10, 10);
        for (int r = 0; r < 10; r++)
        {
            auto a = ends(rng), b = ends(rng);
            auto qp = quant::make_quant_params(std::min(a, b), std::max(a, b) + 0.01);
            std::uniform_real_distribution<float> xs(static_cast<float>(qp.lo), static_cast<float>(qp.hi));
            double worst = 0;
            for (int i = 0; i < 100000; i++)
            {
                auto x = xs(rng);
                worst = std::max(worst, std::fabs(quant::dequantize(quant::quantize(x, qp), qp) - double(x)));
            }
            CHECK(worst <= qp.scale / 2 * (1 + 1e-6) + 1e-6);
        }
    }

    TEST_CASE("per-channel weight quantization")
    {
        // max |w| = 1.27 so the scale is 0.01; 0.5 / 0.01 = 50.
        std::vector<float> w { 0.5f, -1.27f, 0.0f, 0.0f };
        auto q = quant::quantize_weights(w, 2);
        CHECK(q.scales[0] == doctest::Approx(0.01));
        CHECK(q.values[0] == 50);
        CHECK(q.values[1] == -127);
        CHECK(q.scales[1] == 1.0f);
        CHECK(q.values[2] == 0);
        CHECK(q.values[3] == 0);
        CHECK_THROWS_AS(quant::quantize_weights(w, 3), error);
    }

    TEST_CASE("quantized convolution stays within the weight rounding bound")
    {
        std::mt19937_64 rng(8);
        for (int trial = 0; trial < 10; trial++)
        {
            convolution conv { 4, 3, 1 + trial % 2, 1, true, {} };
            auto x = fixtures::random_tensor({ 1, 3, 9, 8 }, rng, -1, 2);
            std::vector<float> k(4 * 3 * 9), b { 0.1f, 0, -0.3f, 0.2f };
            std::normal_distribution<float> d;
            for (auto &v : k)
                v = d(rng);
            auto qp = quant::make_quant_params(-1, 2);
            auto qx = quant::quantize_tensor(x, qp);
            auto xd = tensor_buffer::from(x.shape, qx.values());
            auto qw = quant::quantize_weights(k, 4);
            auto got = quant::quantized_conv(qx, qw, b, conv, std::nullopt);
            auto ref = conv2d(xd, k, b, conv);
            // Bound: sum over taps of |x| * scale_c / 2, using the all-tap sum of |x|.
            double sum_abs = 0;
            for (auto v : xd.data)
                sum_abs += std::fabs(v);
            REQUIRE(got.size() == ref.size());
            for (std::size_t i = 0; i < ref.data.size(); i++)
            {
                auto c = i / (ref.shape.h * ref.shape.w);
                CHECK(std::fabs(got.data[i] - ref.data[i]) <= sum_abs * qw.scales[c] / 2 + 1e-4);
            }

            auto oq = quant::make_quant_params(-20, 20);
            auto as_i8 = quant::quantized_conv(qx, qw, b, conv, oq);
            CHECK(as_i8.type == dtype::i8);
            auto back = as_i8.values();
            for (std::size_t i = 0; i < ref.data.size(); i++)
            {
                auto c = i / (ref.shape.h * ref.shape.w);
                CHECK(std::fabs(back[i] - ref.data[i]) <= sum_abs * qw.scales[c] / 2 + oq.scale / 2 + 1e-4);
            }
        }
    }

    TEST_CASE("accumulator overflow is detected")
    {
        const int channels = 140000; // 140000 * 127 * 127 exceeds 2^31
        auto qp = quant::make_quant_params(-1, 1);
        auto x = quant::quantize_tensor(tensor_buffer::from({ 1, channels, 1, 1 }, std::vector<float>(channels, 1.0f)), qp);
        auto w = quant::quantize_weights(std::vector<float>(channels, 1.0f), 1);
        try
        {
            quant::quantized_conv(x, w, {}, convolution { 1, 1, 1, 0, false, {} }, std::nullopt);
            FAIL("overflow not detected");
        }
        catch (const error &e)
        {
            CHECK(e.code() == errc::accumulator_overflow);
        }
    }

    TEST_CASE("histograms bin by magnitude for signed tensors")
    {
        auto h = quant::activation_histogram::for_range("t", -4.0, 2.0, 4);
        CHECK(h.abs_valued);
        CHECK(h.edge_hi == 4.0);
        std::vector<float> v { -3.5f, 0.5f, 1.5f, 4.0f, 0.0f };
        h.add(v);
        CHECK(h.counts == std::vector<std::uint64_t> { 2, 1, 0, 2 });
        auto u = quant::activation_histogram::for_range("u", 0.0, 2.0, 2);
        CHECK(!u.abs_valued);
        CHECK_THROWS_AS(h.merge(u), error);
    }

    TEST_CASE("cut divergence matches the oracle")
    {
        std::mt19937_64 rng(21);
        for (int trial = 0; trial < 40; trial++)
        {
            int bins = 32 + trial, levels = 4 + trial % 8;
            std::vector<std::uint64_t> counts(bins);
            std::poisson_distribution<int> pois(3.0 + trial);
            for (auto &c : counts)
                c = static_cast<std::uint64_t>(std::max(0, pois(rng) - 3));
            for (int cut = levels; cut <= bins; cut++)
            {
                auto got = quant::cut_divergence(counts, cut, levels);
                auto want = oracle_divergence(counts, cut, levels);
                if (std::isinf(want))
                    CHECK(std::isinf(got));
                else
                    CHECK(got == doctest::Approx(want).epsilon(1e-12));
            }
        }
    }

    TEST_CASE("entropy calibration picks the oracle cut")
    {
        std::mt19937_64 rng(4);
        for (int trial = 0; trial < 30; trial++)
        {
            int bins = 64 + 8 * trial, levels = 16;
            std::vector<std::uint64_t> counts(bins, 0);
            std::exponential_distribution<double> e(1.0 / (2 + trial % 5));
            for (int s = 0; s < 5000; s++)
                counts[std::min<std::size_t>(bins - 1, static_cast<std::size_t>(e(rng)))]++;
            for (bool abs_valued : { false, true })
            {
                auto h = histogram_of(counts, abs_valued);
                auto r = quant::entropy_calibrate(h, levels);
                auto cut = oracle_best_cut(counts, levels);
                CHECK(r.cut_bins == cut);
                CHECK(r.hi == doctest::Approx(cut * h.bin_width()));
                if (abs_valued)
                    CHECK(r.lo == doctest::Approx(-r.hi * 128.0 / 127.0));
                else
                    CHECK(r.lo == 0.0);
                CHECK(!r.degenerate);
            }
        }
    }

    TEST_CASE("a cut that keeps one populated bin is never chosen")
    {
        // One stray count below the bulk: cut 18 folds everything onto bin 16
        // and would score a zero divergence.
        std::vector<std::uint64_t> counts(64, 0);
        counts[16] = 1;
        for (int i = 24; i < 64; i++)
            counts[i] = 50 + i;
        auto h = histogram_of(counts, false);
        CHECK(quant::cut_divergence(counts, 17, 16) == 0.0);
        auto r = quant::entropy_calibrate(h, 16);
        CHECK(r.cut_bins > 24);
        CHECK(r.cut_bins == oracle_best_cut(counts, 16));
    }

    TEST_CASE("a single populated bin falls back to that bin widened by one")
    {
        std::vector<std::uint64_t> counts(64, 0);
        counts[10] = 500;
        auto h = histogram_of(counts, false);
        auto r = quant::entropy_calibrate(h, 16);
        CHECK(r.degenerate);
        CHECK(r.hi == doctest::Approx(12 * h.bin_width()));
        CHECK(r.lo == doctest::Approx(9 * h.bin_width()));
        CHECK(r.lo < r.hi);
    }

    TEST_CASE("sample indices")
    {
        auto all = quant::sample_indices(5, 10, 1);
        CHECK(all == std::vector<std::size_t> { 0, 1, 2, 3, 4 });
        auto a = quant::sample_indices(1000, 50, 9), b = quant::sample_indices(1000, 50, 9);
        CHECK(a == b);
        CHECK(a.size() == 50);
        CHECK(std::is_sorted(a.begin(), a.end()));
        CHECK(std::set<std::size_t>(a.begin(), a.end()).size() == 50);
        CHECK(quant::sample_indices(1000, 50, 10) != a);
    }

    TEST_CASE("histogram collection is deterministic and grows with the sample")
    {
        auto g = fixtures::fill_random_weights(darknet::parse_cfg(fixtures::read_cfg("tiny6.cfg")), 5);
        auto images = random_images(g.input_shape, 12, 100);
        quant::calibration_config config { 6, 3, 128, 16 };
        auto a = quant::collect_histograms(g, images, config);
        auto b = quant::collect_histograms(g, images, config);
        REQUIRE(a.size() == g.nodes.size() + 1);
        CHECK(a.at("input").samples == 6 * g.input_shape.size());
        for (auto &[id, h] : a)
        {
            CHECK(h.counts == b.at(id).counts);
            CHECK(h.samples % 6 == 0);
        }

        // Same edges, more images: no bin count goes down.
        auto small = quant::activation_histogram::for_range("x", -1, 3, 64);
        auto big = small;
        std::mt19937_64 rng(1);
        for (int i = 0; i < 5; i++)
        {
            auto t = fixtures::random_tensor({ 1, 1, 8, 8 }, rng, -1, 3);
            if (i < 2)
                small.add(t.data);
            big.add(t.data);
        }
        for (std::size_t i = 0; i < small.counts.size(); i++)
            CHECK(big.counts[i] >= small.counts[i]);
        CHECK(big.samples == 5 * 64);
    }

    TEST_CASE("calibration errors")
    {
        auto g = fixtures::fill_random_weights(darknet::parse_cfg(fixtures::read_cfg("tiny6.cfg")), 5);
        quant::calibration_config config;
        try
        {
            quant::calibrate(g, { 0, nullptr }, config);
            FAIL("empty set accepted");
        }
        catch (const error &e)
        {
            CHECK(e.code() == errc::empty_calibration_set);
        }
        quant::image_source bad { 1, [&](std::size_t) {
                                     auto t = tensor_buffer::zeros(g.input_shape);
                                     t.data[0] = std::numeric_limits<float>::infinity();
                                     return t;
                                 } };
        try
        {
            quant::calibrate(g, bad, config);
            FAIL("non-finite accepted");
        }
        catch (const error &e)
        {
            CHECK(e.code() == errc::non_finite_activation);
        }
    }

    TEST_CASE("calibrated ranges drive the i8 executor")
    {
        auto g = fixtures::fill_random_weights(darknet::parse_cfg(fixtures::read_cfg("tiny6.cfg")), 6);
        auto images = random_images(g.input_shape, 20, 7);
        auto ranges = quant::calibrate(g, images, { 20, 1, 512, 64 });
        CHECK(ranges.ranges.size() == g.nodes.size() + 1);
        for (auto &[id, q] : ranges.ranges)
        {
            CHECK(q.lo < q.hi);
            CHECK(quant::quantize(static_cast<float>(q.lo), q) == -128);
        }

        auto text = quant::ranges_to_json(ranges);
        auto back = quant::ranges_from_json(text);
        CHECK(back.ranges == ranges.ranges);
        CHECK(back.seed == 1);
        CHECK(back.count == 20);
        CHECK(back.bin_count == 512);

        g.qparams = ranges.ranges;
        auto x = images.load(3);
        auto q8 = execute(g, x, exec_mode::i8).at("yolo_5").values();
        auto f32 = execute(g, x, exec_mode::f32).at("yolo_5").data;
        double err = 0, mag = 0;
        for (std::size_t i = 0; i < f32.size(); i++)
        {
            err += std::fabs(q8[i] - f32[i]);
            mag += std::fabs(f32[i]);
        }
        CHECK(err / mag < 0.25);
    }
}
