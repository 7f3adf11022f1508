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
#include <jetforge/container.hpp>
#include <jetforge/error.hpp>
#include <jetforge/io.hpp>

#include <json.hpp>

#include <cstring>

using nlohmann::json;

namespace jetforge
{
namespace
{
json shape_to_json(const tensor_shape &s)
{
    return json::array({ s.n, s.c, s.h, s.w });
}

tensor_shape shape_from_json(const json &j)
{
    if (!j.is_array() || j.size() != 4)
        fail(errc::malformed_json, "shape must be an array of 4 integers");
    return { j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>() };
}

json activation_to_json(const activation &act)
{
    json j = { { "type", std::string(to_string(act.kind)) } };
    if (act.kind == activation::kind_t::leaky)
        j["alpha"] = act.alpha;
    return j;
}

activation activation_from_json(const json &j)
{
    auto type = j.at("type").get<std::string>();
    if (type == "linear")
        return activation::linear();
    if (type == "relu")
        return activation::relu();
    if (type == "leaky")
        return activation::leaky(j.at("alpha").get<double>());
    fail(errc::malformed_json, "unknown activation '" + type + "'");
}

json node_to_json(const layer_node &node)
{
    json attrs = json::object();
    std::visit(
        [&](const auto &k) {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, convolution>)
            {
                attrs = { { "out_channels", k.out_channels }, { "kernel", k.kernel }, { "stride", k.stride },
                    { "pad", k.pad }, { "has_bias", k.has_bias },
                    { "activation", activation_to_json(k.fused_activation) } };
            }
            else if constexpr (std::is_same_v<T, batch_norm>)
                attrs = { { "eps", k.eps } };
            else if constexpr (std::is_same_v<T, activation_layer>)
                attrs = { { "activation", activation_to_json(k.act) } };
            else if constexpr (std::is_same_v<T, upsample>)
                attrs = { { "factor", k.factor } };
            else if constexpr (std::is_same_v<T, max_pool>)
                attrs = { { "kernel", k.kernel }, { "stride", k.stride }, { "pad", k.pad } };
            else if constexpr (std::is_same_v<T, yolo_head>)
                attrs = { { "anchor_indices", k.anchor_indices }, { "num_classes", k.num_classes } };
        },
        node.kind);

    return { { "id", node.id }, { "kind", std::string(kind_name(node.kind)) }, { "inputs", node.inputs },
        { "output", node.output },
        { "precision", node.precision == precision_class::plugin_only ? "plugin_only" : "quantizable" },
        { "attrs", attrs } };
}

layer_node node_from_json(const json &j)
{
    layer_node node;
    node.id = j.at("id").get<std::string>();
    node.inputs = j.at("inputs").get<std::vector<std::string>>();
    node.output = j.at("output").get<std::string>();
    auto precision = j.at("precision").get<std::string>();
    if (precision == "plugin_only")
        node.precision = precision_class::plugin_only;
    else if (precision != "quantizable")
        fail(errc::malformed_json, "node '" + node.id + "' has unknown precision '" + precision + "'");

    auto &a = j.at("attrs");
    auto kind = j.at("kind").get<std::string>();
    if (kind == "Convolution")
        node.kind = convolution { a.at("out_channels").get<int>(), a.at("kernel").get<int>(), a.at("stride").get<int>(),
            a.at("pad").get<int>(), a.at("has_bias").get<bool>(), activation_from_json(a.at("activation")) };
    else if (kind == "BatchNorm")
        node.kind = batch_norm { a.at("eps").get<double>() };
    else if (kind == "Activation")
        node.kind = activation_layer { activation_from_json(a.at("activation")) };
    else if (kind == "Scale")
        node.kind = scale {};
    else if (kind == "Upsample")
        node.kind = upsample { a.at("factor").get<int>() };
    else if (kind == "Add")
        node.kind = add {};
    else if (kind == "Concat")
        node.kind = concat {};
    else if (kind == "MaxPool")
        node.kind = max_pool { a.at("kernel").get<int>(), a.at("stride").get<int>(), a.at("pad").get<int>() };
    else if (kind == "YoloHead")
        node.kind = yolo_head { a.at("anchor_indices").get<std::vector<int>>(), a.at("num_classes").get<int>() };
    else
        fail(errc::malformed_json, "node '" + node.id + "' has unknown kind '" + kind + "'");
    return node;
}

json manifest_to_json(const graph &g)
{
    json nodes = json::array();
    for (auto &node : g.nodes)
        nodes.push_back(node_to_json(node));

    json shapes = json::object();
    for (auto &[id, shape] : infer_shapes(g))
        shapes[id] = shape_to_json(shape);

    json anchors = json::array();
    for (auto &[w, h] : g.metadata.anchors)
        anchors.push_back({ w, h });

    json qparams = json::object();
    for (auto &[id, q] : g.qparams)
        qparams[id] = { { "lo", q.lo }, { "hi", q.hi }, { "scale", q.scale }, { "zero_point", q.zero_point } };

    json weights = json::array();
    for (auto &[key, values] : g.weights.entries())
        weights.push_back({ { "layer", key.first }, { "role", std::string(to_string(key.second)) },
            { "count", values.size() } });

    return { { "input", { { "id", g.input_id }, { "shape", shape_to_json(g.input_shape) } } }, { "nodes", nodes },
        { "shapes", shapes },
        { "metadata",
            { { "class_names", g.metadata.class_names }, { "anchors", anchors },
                { "producer", g.metadata.producer } } },
        { "qparams", qparams }, { "weights", weights } };
}
}

std::vector<std::uint8_t> serialize_container(const graph &g)
{
    if (auto diags = validate(g); !diags.empty())
        fail(errc::invalid_graph, "refusing to save invalid graph: " + diags.front().node + ": " + diags.front().message);

    auto manifest = manifest_to_json(g).dump();
    std::vector<std::uint8_t> out;
    out.reserve(16 + manifest.size() + g.weights.parameter_count() * sizeof(float));
    out.insert(out.end(), std::begin(container_magic), std::end(container_magic));
    append_le<std::uint32_t>(out, container_version);
    append_le<std::uint64_t>(out, manifest.size());
    out.insert(out.end(), manifest.begin(), manifest.end());
    for (auto &[key, values] : g.weights.entries())
    {
        auto offset = out.size();
        out.resize(offset + values.size() * sizeof(float));
        std::memcpy(out.data() + offset, values.data(), values.size() * sizeof(float));
    }
    return out;
}

graph deserialize_container(std::span<const std::uint8_t> bytes)
{
    byte_reader reader(bytes);
    if (!reader.can_read(4))
        fail(errc::truncated_file, "file shorter than the magic");
    if (std::memcmp(reader.take(4).data(), container_magic, 4) != 0)
        fail(errc::bad_magic, "not a UIR1 container");
    if (!reader.can_read(12))
        fail(errc::truncated_file, "incomplete container header");
    auto version = reader.read<std::uint32_t>();
    if (version != container_version)
        fail(errc::version_unsupported, "container version " + std::to_string(version));
    auto manifest_len = reader.read<std::uint64_t>();
    if (manifest_len > reader.remaining())
        fail(errc::truncated_file, "manifest declares " + std::to_string(manifest_len) + " bytes, "
                + std::to_string(reader.remaining()) + " available");
    auto text = reader.take(static_cast<std::size_t>(manifest_len));

    json manifest;
    try
    {
        manifest = json::parse(text.begin(), text.end());
    }
    catch (const json::exception &e)
    {
        fail(errc::malformed_json, std::string("manifest: ") + e.what());
    }

    graph g;
    try
    {
        g.input_id = manifest.at("input").at("id").get<std::string>();
        g.input_shape = shape_from_json(manifest.at("input").at("shape"));
        for (auto &n : manifest.at("nodes"))
            g.nodes.push_back(node_from_json(n));

        auto &meta = manifest.at("metadata");
        g.metadata.class_names = meta.at("class_names").get<std::vector<std::string>>();
        for (auto &a : meta.at("anchors"))
            g.metadata.anchors.emplace_back(a.at(0).get<double>(), a.at(1).get<double>());
        g.metadata.producer = meta.at("producer").get<std::map<std::string, std::string>>();

        for (auto &[id, q] : manifest.at("qparams").items())
            g.qparams[id] = { q.at("lo").get<double>(), q.at("hi").get<double>(), q.at("scale").get<double>(),
                q.at("zero_point").get<std::int32_t>() };

        std::size_t declared = 0;
        for (auto &w : manifest.at("weights"))
            declared += w.at("count").get<std::size_t>();
        if (declared * sizeof(float) != reader.remaining())
            fail(errc::manifest_weight_mismatch, "manifest declares " + std::to_string(declared) + " floats, blob holds "
                    + std::to_string(reader.remaining() / sizeof(float)));

        for (auto &w : manifest.at("weights"))
        {
            auto role = parse_weight_role(w.at("role").get<std::string>());
            if (!role)
                fail(errc::malformed_json, "unknown weight role '" + w.at("role").get<std::string>() + "'");
            std::vector<float> values(w.at("count").get<std::size_t>());
            reader.read_floats(values.data(), values.size());
            g.weights.set(w.at("layer").get<std::string>(), *role, std::move(values));
        }
    }
    catch (const json::exception &e)
    {
        fail(errc::malformed_json, std::string("manifest: ") + e.what());
    }

    if (auto diags = validate(g); !diags.empty())
    {
        auto code = diags.front().message.find("weight") != std::string::npos ? errc::manifest_weight_mismatch
                                                                               : errc::invalid_graph;
        fail(code, diags.front().node + ": " + diags.front().message);
    }
    return g;
}

void save_container(const graph &g, const std::filesystem::path &path)
{
    write_file_bytes(path, serialize_container(g));
}

graph load_container(const std::filesystem::path &path)
{
    return deserialize_container(read_file_bytes(path));
}
}
