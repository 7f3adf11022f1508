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
#include <jetforge/optimizer.hpp>

#include <cmath>
#include <random>
#include <set>

using namespace jetforge;

namespace
{
graph conv_bn_act(activation act)
{
    graph g;
    g.input_shape = { 1, 1, 32, 32 };
    g.nodes.push_back({ "conv", convolution { 1, 1, 1, 0, false, {} }, { "input" }, "conv" });
    g.nodes.push_back({ "bn", batch_norm { 0.0 }, { "conv" }, "bn" });
    g.nodes.push_back({ "act", activation_layer { act }, { "bn" }, "act" });
    g.nodes.push_back({ "head", convolution { 6, 1, 1, 0, true, {} }, { "act" }, "head" });
    g.nodes.push_back({ "yolo", yolo_head { { 0 }, 1 }, { "head" }, "yolo" });
    g.metadata.anchors = { { 8, 8 } };
    g.weights.set("conv", weight_role::kernel, { 3.0f });
    g.weights.set("bn", weight_role::bn_gamma, { 2.0f });
    g.weights.set("bn", weight_role::bn_beta, { 0.25f });
    g.weights.set("bn", weight_role::bn_mean, { 0.5f });
    g.weights.set("bn", weight_role::bn_var, { 1.0f });
    g.weights.set("head", weight_role::kernel, std::vector<float>(6, 1.0f));
    g.weights.set("head", weight_role::bias, std::vector<float>(6, 0.0f));
    return g;
}

double worst_relative(const tensor_buffer &a, const tensor_buffer &b)
{
    REQUIRE(a.size() == b.size());
    double worst = 0;
    for (std::size_t i = 0; i < a.data.size(); i++)
        worst = std::max(worst, std::fabs(double(a.data[i]) - b.data[i]) / (1.0 + std::fabs(double(b.data[i]))));
    return worst;
}

std::size_t brute_force_conversions(const graph &g, const opt::precision_plan &plan)
{
    std::set<std::pair<std::string, opt::precision>> pairs;
    for (auto &consumer : g.nodes)
        for (auto &in : consumer.inputs)
        {
            auto producer = g.producer_of(in);
            if (!producer)
                continue;
            auto from = plan.node_precision.at(g.nodes[*producer].id);
            auto to = plan.node_precision.at(consumer.id);
            if (from != to)
                pairs.insert({ in, to });
        }
    return pairs.size();
}
}

TEST_SUITE("optimizer")
{
    TEST_CASE("batch norm folds into the convolution")
    {
        // w' = 3 * 2 / sqrt(1) = 6, b' = 0.25 - 0.5 * 2 = -0.75
        auto r = opt::fuse_conv_bn(conv_bn_act(activation::relu()));
        CHECK(r.g.weights.get("conv", weight_role::kernel) == std::vector<float> { 6.0f });
        CHECK(r.g.weights.get("conv", weight_role::bias) == std::vector<float> { -0.75f });
        auto &conv = r.g.find_node("conv")->as<convolution>();
        CHECK(conv.has_bias);
        CHECK(conv.fused_activation == activation::relu());
        CHECK(r.g.nodes.size() == 3);
        CHECK(r.g.find_node("head")->inputs == std::vector<std::string> { "conv" });
        CHECK(r.report.removed == std::vector<std::string> { "bn", "act" });
        CHECK(r.report.nodes_before == 5);
        CHECK(r.report.nodes_after == 3);
        CHECK(r.report.mac_delta == 0);
        CHECK(!r.g.weights.contains("bn", weight_role::bn_gamma));
    }

    TEST_CASE("leaky stays a separate node after fusion")
    {
        auto r = opt::fuse_conv_bn(conv_bn_act(activation::leaky(0.1)));
        CHECK(r.g.nodes.size() == 4);
        CHECK(r.g.find_node("act")->inputs == std::vector<std::string> { "conv" });
        CHECK(r.g.find_node("conv")->as<convolution>().fused_activation == activation::linear());
    }

    TEST_CASE("a batch norm behind a shared tensor is left alone")
    {
        auto g = conv_bn_act(activation::relu());
        g.nodes.push_back({ "tap", activation_layer { activation::relu() }, { "conv" }, "tap" });
        auto r = opt::fuse_conv_bn(g);
        CHECK(r.g.find_node("bn") != nullptr);
    }

    TEST_CASE("decomposed leaky equals leaky")
    {
        // alpha = 0.1: s = -1 for x = -10 and relu(s) = 0.
        CHECK(opt::decomposed_leaky(-10.0, 0.1) == doctest::Approx(-1.0).epsilon(1e-15));
        // s = 0.5, relu(s) * 9 = 4.5, sum 5.
        CHECK(opt::decomposed_leaky(5.0, 0.1) == doctest::Approx(5.0).epsilon(1e-15));
        CHECK(opt::decomposed_leaky(0.0, 0.1) == 0.0);
        std::mt19937_64 rng(1);
        std::uniform_real_distribution<double> xs(-100, 100), alphas(0.01, 0.99);
        for (int i = 0; i < 100000; i++)
        {
            auto x = xs(rng), a = alphas(rng);
            auto want = x >= 0 ? x : a * x;
            CHECK(std::fabs(opt::decomposed_leaky(x, a) - want) <= 1e-6);
        }
    }

    TEST_CASE("decompose rewrites the leaky node")
    {
        auto g = opt::fuse_conv_bn(conv_bn_act(activation::leaky(0.1))).g;
        auto r = opt::decompose_leaky(g);
        CHECK(r.report.removed == std::vector<std::string> { "act" });
        CHECK(r.report.created == std::vector<std::string> { "act_scale", "act_relu", "act_rscale", "act" });
        auto add_node = r.g.find_node("act");
        REQUIRE(add_node);
        CHECK(add_node->is<add>());
        CHECK(add_node->inputs == std::vector<std::string> { "act_scale", "act_rscale" });
        CHECK(r.g.weights.get("act_scale", weight_role::scale_factors) == std::vector<float> { 0.1f });
        CHECK(r.g.weights.get("act_rscale", weight_role::scale_factors)
            == std::vector<float> { static_cast<float>(0.9 / 0.1) });
        CHECK(r.g.find_node("head")->inputs == std::vector<std::string> { "act" });

        auto bad = g;
        bad.find_node("act")->as<activation_layer>().act.alpha = 1.0;
        CHECK_THROWS_WITH_AS(opt::decompose_leaky(bad), doctest::Contains("alpha"), error);
    }

    TEST_CASE("scale folds into a linear convolution")
    {
        auto g = opt::decompose_leaky(opt::fuse_conv_bn(conv_bn_act(activation::leaky(0.1))).g).g;
        auto r = opt::fold_scale_into_conv(g);
        CHECK(r.report.removed == std::vector<std::string> { "act_scale" });
        // 6 * 0.1 and -0.75 * 0.1, rounded to f32 from double.
        CHECK(r.g.weights.get("conv", weight_role::kernel) == std::vector<float> { static_cast<float>(6.0 * 0.1f) });
        CHECK(r.g.weights.get("conv", weight_role::bias) == std::vector<float> { static_cast<float>(-0.75 * 0.1f) });
        CHECK(r.g.find_node("act_relu")->inputs == std::vector<std::string> { "conv" });
        CHECK(r.g.find_node("act")->inputs == std::vector<std::string> { "conv", "act_rscale" });
        // The relu scale has a non-convolution producer and stays.
        CHECK(r.g.find_node("act_rscale") != nullptr);
        CHECK(validate(r.g).empty());
    }

    TEST_CASE("rewrites preserve the network function")
    {
        std::mt19937_64 rng(77);
        for (int trial = 0; trial < 20; trial++)
        {
            auto g = fixtures::random_conv_bn_network(rng, 1 + trial % 6);
            REQUIRE(validate(g).empty());
            auto x = fixtures::random_tensor(g.input_shape, rng, 0, 1);
            auto base = execute(g, x, exec_mode::f32).at("yolo");
            auto fused = opt::fuse_conv_bn(g).g;
            CHECK(worst_relative(execute(fused, x, exec_mode::f32).at("yolo"), base) < 1e-5);
            auto decomposed = opt::run_passes(g, { "fuse-conv-bn", "decompose-leaky", "fold-scale" }, nullptr).g;
            CHECK(validate(decomposed).empty());
            CHECK(worst_relative(execute(decomposed, x, exec_mode::f32).at("yolo"), base) < 1e-5);
        }
    }

    TEST_CASE("fusion is idempotent")
    {
        std::mt19937_64 rng(5);
        for (int trial = 0; trial < 10; trial++)
        {
            auto once = opt::fuse_conv_bn(fixtures::random_conv_bn_network(rng, 4)).g;
            auto twice = opt::fuse_conv_bn(once);
            CHECK(twice.g == once);
            CHECK(twice.report.removed.empty());
        }
    }

    TEST_CASE("yolov3 pass arithmetic")
    {
        auto g = fixtures::fill_random_weights(darknet::parse_cfg(fixtures::read_cfg("yolov3.cfg")), 2);
        REQUIRE(g.nodes.size() == 249);
        std::vector<opt::pass_report> reports;
        auto r = opt::run_passes(g, { "fuse-conv-bn", "decompose-leaky", "fold-scale" }, &reports);
        REQUIRE(reports.size() == 3);
        CHECK(reports[0].removed.size() == 72);
        CHECK(reports[0].nodes_after == 177);
        CHECK(reports[1].removed.size() == 72);
        CHECK(reports[1].created.size() == 288);
        CHECK(reports[2].removed.size() == 72);
        // Each leaky becomes scale-free relu, rscale and add: two extra nodes.
        CHECK(r.g.nodes.size() == 177 + 2 * 72);
        CHECK(validate(r.g).empty());
        CHECK(darknet::compute_stats(r.g).leaky_activations == 0);

        auto fused = opt::fuse_conv_bn(g).g;
        auto plan = opt::plan_precision(fused, exec_mode::i8, opt::plugin_policy::leaky_as_plugin);
        CHECK(plan.conversions.size() == 144);
        CHECK(opt::plan_precision(fused, exec_mode::i8, opt::plugin_policy::leaky_native).conversions.empty());
        CHECK(opt::plan_precision(r.g, exec_mode::i8, opt::plugin_policy::leaky_as_plugin).conversions.empty());
    }

    TEST_CASE("relu swap warns and removes every leaky")
    {
        auto g = fixtures::fill_random_weights(darknet::parse_cfg(fixtures::read_cfg("tiny6.cfg")), 1);
        auto r = opt::replace_leaky_with_relu(g);
        CHECK(darknet::compute_stats(r.g).leaky_activations == 0);
        REQUIRE(r.report.warnings.size() == 1);
        CHECK(r.report.warnings[0].rfind("WARNING", 0) == 0);
        CHECK(opt::replace_leaky_with_relu(r.g).report.warnings.empty());
    }

    TEST_CASE("leaky plugins are kept in f32")
    {
        auto g = fixtures::fill_random_weights(darknet::parse_cfg(fixtures::read_cfg("tiny6.cfg")), 1);
        auto marked = opt::mark_leaky_plugins(g).g;
        auto plan = opt::plan_precision(marked, exec_mode::i8, opt::plugin_policy::leaky_native);
        for (auto &node : marked.nodes)
        {
            auto want = node.is_activation(activation::kind_t::leaky) ? opt::precision::f32 : opt::precision::i8;
            CHECK(plan.node_precision.at(node.id) == want);
        }
    }

    TEST_CASE("conversion count equals distinct tensor and precision pairs")
    {
        std::mt19937_64 rng(31);
        for (int trial = 0; trial < 30; trial++)
        {
            auto g = fixtures::random_conv_bn_network(rng, 1 + trial % 8);
            for (auto mode : { exec_mode::i8, exec_mode::f16 })
            {
                auto plan = opt::plan_precision(g, mode, opt::plugin_policy::leaky_as_plugin);
                CHECK(plan.conversions.size() == brute_force_conversions(g, plan));
                for (auto &c : plan.conversions)
                    CHECK(c.from != c.to);
            }
        }
    }

    TEST_CASE("a single convolution in f16 needs no conversion")
    {
        graph g;
        g.input_shape = { 1, 3, 32, 32 };
        g.nodes.push_back({ "c", convolution { 4, 3, 1, 1, false, {} }, { "input" }, "c" });
        auto plan = opt::plan_precision(g, exec_mode::f16, opt::plugin_policy::leaky_as_plugin);
        CHECK(plan.conversions.empty());
        CHECK(plan.node_precision.at("c") == opt::precision::f16);
    }

    TEST_CASE("pass registry")
    {
        CHECK(opt::pass_names().size() == 5);
        auto g = conv_bn_act(activation::relu());
        CHECK_THROWS_AS(opt::run_pass("nope", g), error);
        std::vector<opt::pass_report> reports;
        opt::run_passes(g, { "fuse-conv-bn" }, &reports);
        auto json = opt::reports_to_json(reports);
        CHECK(json.find("\"fuse-conv-bn\"") != std::string::npos);
        CHECK(json.find("\"mac_delta\"") != std::string::npos);
    }
}
