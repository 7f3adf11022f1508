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
#include "fixtures.hpp"

#include <jetforge/darknet.hpp>
#include <jetforge/error.hpp>
#include <jetforge/io.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unistd.h>

namespace fs = std::filesystem;
using namespace jetforge;

namespace fixtures
{
fs::path data_dir()
{
    return JETFORGE_DATA_DIR;
}

fs::path cfg_path(const std::string &name)
{
    return data_dir() / "cfg" / name;
}

std::string read_cfg(const std::string &name)
{
    return read_file_text(cfg_path(name));
}

fs::path temp_dir(const std::string &tag)
{
    static std::atomic<int> counter { 0 };
    auto dir = fs::temp_directory_path()
        / ("jetforge_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

tensor_buffer random_tensor(const tensor_shape &shape, std::mt19937_64 &rng, float lo, float hi)
{
    std::uniform_real_distribution<float> dist(lo, hi);
    auto t = tensor_buffer::zeros(shape);
    for (auto &v : t.data)
        v = dist(rng);
    return t;
}

namespace
{
std::vector<float> uniform(std::mt19937_64 &rng, std::size_t n, float lo, float hi)
{
    std::uniform_real_distribution<float> dist(lo, hi);
    std::vector<float> v(n);
    for (auto &x : v)
        x = dist(rng);
    return v;
}

std::vector<float> kernel_init(std::mt19937_64 &rng, std::size_t n, int fan_in)
{
    std::normal_distribution<float> dist(0.0f, 1.0f / std::sqrt(static_cast<float>(fan_in)));
    std::vector<float> v(n);
    for (auto &x : v)
        x = dist(rng);
    return v;
}

void fill_bn(weight_store &w, const std::string &id, int c, std::mt19937_64 &rng)
{
    auto n = static_cast<std::size_t>(c);
    w.set(id, weight_role::bn_gamma, uniform(rng, n, 0.5f, 1.5f));
    w.set(id, weight_role::bn_beta, uniform(rng, n, -0.2f, 0.2f));
    w.set(id, weight_role::bn_mean, uniform(rng, n, -0.2f, 0.2f));
    w.set(id, weight_role::bn_var, uniform(rng, n, 0.2f, 1.5f));
}
}

graph fill_random_weights(graph g, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    auto shapes = infer_shapes(g);
    for (auto &node : g.nodes)
    {
        if (node.is<convolution>())
        {
            auto &conv = node.as<convolution>();
            auto in_c = conv_input_channels(g, node, shapes);
            auto fan_in = in_c * conv.kernel * conv.kernel;
            g.weights.set(node.id, weight_role::kernel,
                kernel_init(rng, static_cast<std::size_t>(conv.out_channels) * fan_in, fan_in));
            if (conv.has_bias)
                g.weights.set(node.id, weight_role::bias, uniform(rng, conv.out_channels, -0.1f, 0.1f));
        }
        else if (node.is<batch_norm>())
            fill_bn(g.weights, node.id, shapes.at(node.output).c, rng);
    }
    return g;
}

std::vector<std::uint8_t> random_weights_file(const graph &skeleton, std::uint64_t seed)
{
    return darknet::write_weights(fill_random_weights(skeleton, seed));
}

graph random_conv_bn_network(std::mt19937_64 &rng, int layers)
{
    graph g;
    g.input_shape = { 1, 3, 32, 32 };
    g.metadata.anchors = { { 8.0, 8.0 } };
    g.metadata.class_names = { "thing" };
    auto pick = [&](int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); };

    std::string current = g.input_id;
    int channels = 3, size = 32;
    std::vector<std::pair<std::string, std::pair<int, int>>> history; // tensor, (channels, size)
    for (int i = 0; i < layers; i++)
    {
        auto id = std::to_string(i);
        convolution conv;
        conv.out_channels = 2 + pick(7);
        conv.kernel = pick(2) ? 3 : 1;
        conv.stride = (size > 8 && pick(4) == 0) ? 2 : 1;
        conv.pad = conv.kernel / 2;
        conv.has_bias = pick(4) == 0;
        auto in_c = channels;
        g.nodes.push_back({ "conv_" + id, conv, { current }, "conv_" + id });
        auto fan_in = in_c * conv.kernel * conv.kernel;
        g.weights.set("conv_" + id, weight_role::kernel,
            kernel_init(rng, static_cast<std::size_t>(conv.out_channels) * fan_in, fan_in));
        if (conv.has_bias)
            g.weights.set("conv_" + id, weight_role::bias, uniform(rng, conv.out_channels, -0.2f, 0.2f));
        g.nodes.push_back({ "bn_" + id, batch_norm { 1e-6 }, { "conv_" + id }, "bn_" + id });
        fill_bn(g.weights, "bn_" + id, conv.out_channels, rng);
        current = "bn_" + id;
        channels = conv.out_channels;
        size = (size + 2 * conv.pad - conv.kernel) / conv.stride + 1;

        switch (pick(3))
        {
        case 0:
            g.nodes.push_back({ "act_" + id, activation_layer { activation::leaky(0.1) }, { current }, "act_" + id });
            current = "act_" + id;
            break;
        case 1:
            g.nodes.push_back({ "act_" + id, activation_layer { activation::relu() }, { current }, "act_" + id });
            current = "act_" + id;
            break;
        default: break;
        }

        for (auto it = history.rbegin(); it != history.rend(); ++it)
        {
            if (it->second == std::make_pair(channels, size) && pick(3) == 0)
            {
                g.nodes.push_back({ "add_" + id, add {}, { current, it->first }, "add_" + id });
                current = "add_" + id;
                break;
            }
        }
        history.push_back({ current, { channels, size } });
    }

    convolution head;
    head.out_channels = 6;
    head.has_bias = true;
    g.nodes.push_back({ "conv_head", head, { current }, "conv_head" });
    g.weights.set("conv_head", weight_role::kernel, kernel_init(rng, static_cast<std::size_t>(6) * channels, channels));
    g.weights.set("conv_head", weight_role::bias, uniform(rng, 6, -0.2f, 0.2f));
    g.nodes.push_back({ "yolo", yolo_head { { 0 }, 1 }, { "conv_head" }, "yolo" });
    return g;
}

std::string synthetic_detector_cfg()
{
    std::string cfg = "[net]\nwidth=64\nheight=64\nchannels=3\n\n";
    for (int i = 0; i < 4; i++)
        cfg += "[convolutional]\nfilters=3\nsize=2\nstride=2\npad=0\nactivation=linear\n\n";
    cfg += "[convolutional]\nfilters=8\nsize=1\nstride=1\npad=1\nactivation=linear\n\n";
    cfg += "[yolo]\nmask=0\nanchors=16,16\nclasses=3\nnum=1\n";
    return cfg;
}

graph synthetic_detector()
{
    auto g = darknet::parse_cfg(synthetic_detector_cfg());
    for (auto &node : g.nodes)
    {
        if (!node.is<convolution>())
            continue;
        auto &conv = node.as<convolution>();
        if (conv.kernel == 2)
        {
            // Per-channel 2x2 average.
            std::vector<float> k(3 * 3 * 4, 0.0f);
            for (int c = 0; c < 3; c++)
                std::fill_n(k.begin() + (c * 3 + c) * 4, 4, 0.25f);
            g.weights.set(node.id, weight_role::kernel, k);
            g.weights.set(node.id, weight_role::bias, std::vector<float>(3, 0.0f));
            continue;
        }
        // Head channels: tx, ty, tw, th, objectness, then one logit per class.
        std::vector<float> k(8 * 3, 0.0f), b(8, 0.0f);
        for (int c = 0; c < 3; c++)
            k[4 * 3 + c] = 12.0f;
        b[4] = -12.0f * 0.45f - 2.0f;
        for (int cls = 0; cls < 3; cls++)
        {
            for (int c = 0; c < 3; c++)
                k[(5 + cls) * 3 + c] = c == cls ? 20.0f : -10.0f;
        }
        g.weights.set(node.id, weight_role::kernel, k);
        g.weights.set(node.id, weight_role::bias, b);
    }
    return g;
}

std::vector<std::uint8_t> synthetic_detector_weights()
{
    return darknet::write_weights(synthetic_detector());
}

scene render_scene(std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> noise(0.0f, 0.3f);
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

    scene s;
    s.img = { 64, 64, 3, std::vector<float>(3 * 64 * 64) };
    for (auto &v : s.img.data)
        v = noise(rng);

    std::vector<int> cells(16);
    for (int i = 0; i < 16; i++)
        cells[i] = i;
    std::shuffle(cells.begin(), cells.end(), rng);
    auto objects = pick(0, 3);
    for (int o = 0; o < objects; o++)
    {
        auto gx = cells[o] % 4, gy = cells[o] / 4;
        auto side = pick(14, 18);
        auto cx = gx * 16 + 8 + pick(-2, 2);
        auto cy = gy * 16 + 8 + pick(-2, 2);
        auto cls = pick(0, 2);
        auto intensity = std::uniform_real_distribution<float>(0.3f, 1.0f)(rng);
        auto x0 = std::max(0, cx - side / 2), y0 = std::max(0, cy - side / 2);
        auto x1 = std::min(64, x0 + side), y1 = std::min(64, y0 + side);
        for (int y = y0; y < y1; y++)
        {
            for (int x = x0; x < x1; x++)
                s.img.at(cls, y, x) = std::min(1.0f, s.img.at(cls, y, x) + intensity);
        }
        s.boxes.push_back({ { static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1 - x0),
                              static_cast<double>(y1 - y0) },
            cls });
    }
    return s;
}

data::dataset_manifest write_synthetic_dataset(const fs::path &dir, int count, std::uint64_t seed)
{
    fs::create_directories(dir);
    std::vector<data::annotation_record> records;
    for (int i = 0; i < count; i++)
    {
        auto s = render_scene(seed * 1000003 + static_cast<std::uint64_t>(i));
        char name[32];
        std::snprintf(name, sizeof name, "scene_%04d.ppm", i);
        write_pnm(s.img, dir / name);
        records.push_back({ name, 64, 64, s.boxes, "synthetic" });
    }
    auto m = data::merge({ records });
    write_file_text(dir / "manifest.jsonl", data::manifest_to_jsonl(m, { { "generator", "synthetic" } }));
    return m;
}
}
