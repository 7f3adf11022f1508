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
#include <jetforge/darknet.hpp>
#include <jetforge/io.hpp>

#include <algorithm>
#include <charconv>
#include <cstring>
#include <set>

namespace jetforge::darknet
{
namespace
{
std::string_view trim(std::string_view s)
{
    auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string_view::npos)
        return {};
    auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep)
{
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true)
    {
        auto pos = s.find(sep, start);
        parts.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos)
            break;
        start = pos + 1;
    }
    return parts;
}

int to_int(std::string_view s, const cfg_section &sec, std::string_view key)
{
    int value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw cfg_error(errc::syntax_error, sec.line,
            "[" + sec.name + "] " + std::string(key) + "='" + std::string(s) + "' is not an integer");
    return value;
}

double to_double(std::string_view s, const cfg_section &sec, std::string_view key)
{
    std::string buf(s);
    char *end = nullptr;
    double value = std::strtod(buf.c_str(), &end);
    if (buf.empty() || end != buf.c_str() + buf.size())
        throw cfg_error(errc::syntax_error, sec.line,
            "[" + sec.name + "] " + std::string(key) + "='" + buf + "' is not a number");
    return value;
}

// Typed access to one section that remembers which keys were read so the
// rest can be reported as ignored.
class section_reader
{
public:
    explicit section_reader(const cfg_section &sec) : sec_(sec) {}

    const cfg_section &section() const noexcept { return sec_; }

    bool has(std::string_view key) const { return sec_.find(key) != nullptr; }

    int get_int(std::string_view key, int fallback)
    {
        used_.insert(std::string(key));
        auto v = sec_.find(key);
        return v ? to_int(*v, sec_, key) : fallback;
    }

    int require_int(std::string_view key)
    {
        if (!has(key))
            throw cfg_error(errc::syntax_error, sec_.line, "[" + sec_.name + "] requires '" + std::string(key) + "'");
        return get_int(key, 0);
    }

    std::string get_string(std::string_view key, std::string_view fallback)
    {
        used_.insert(std::string(key));
        auto v = sec_.find(key);
        return v ? *v : std::string(fallback);
    }

    std::vector<int> get_int_list(std::string_view key)
    {
        used_.insert(std::string(key));
        std::vector<int> values;
        auto v = sec_.find(key);
        if (!v)
            return values;
        for (auto part : split(*v, ','))
        {
            if (!part.empty())
                values.push_back(to_int(part, sec_, key));
        }
        return values;
    }

    std::vector<double> get_double_list(std::string_view key)
    {
        used_.insert(std::string(key));
        std::vector<double> values;
        auto v = sec_.find(key);
        if (!v)
            return values;
        for (auto part : split(*v, ','))
        {
            if (!part.empty())
                values.push_back(to_double(part, sec_, key));
        }
        return values;
    }

    void ignore(std::string_view key) { used_.insert(std::string(key)); }

    void report_unused(std::vector<std::string> *warnings) const
    {
        if (!warnings)
            return;
        for (auto &[key, value] : sec_.options)
        {
            if (!used_.count(key))
                warnings->push_back("line " + std::to_string(sec_.line) + ": [" + sec_.name + "] ignoring key '" + key
                    + "'");
        }
    }

private:
    const cfg_section &sec_;
    std::set<std::string> used_;
};

activation parse_activation(section_reader &r)
{
    auto name = r.get_string("activation", "linear");
    if (name == "linear")
        return activation::linear();
    if (name == "relu")
        return activation::relu();
    if (name == "leaky")
        return activation::leaky(0.1);
    throw cfg_error(errc::unsupported_option, r.section().line,
        "[" + r.section().name + "] activation '" + name + "' is not supported");
}

void reject_if_set(section_reader &r, std::string_view key, int allowed)
{
    if (r.has(key) && r.get_int(key, allowed) != allowed)
        throw cfg_error(errc::unsupported_option, r.section().line,
            "[" + r.section().name + "] " + std::string(key) + " other than " + std::to_string(allowed)
                + " is not supported");
    r.ignore(key);
}

std::vector<std::string> default_class_names(int classes)
{
    static const char *unified[] = { "person", "car", "bicycle", "motorbike", "bus", "truck" };
    std::vector<std::string> names;
    for (int i = 0; i < classes; i++)
        names.push_back(classes == 6 ? unified[i] : "class" + std::to_string(i));
    return names;
}
}

const std::string *cfg_section::find(std::string_view key) const
{
    for (auto &[k, v] : options)
    {
        if (k == key)
            return &v;
    }
    return nullptr;
}

std::vector<cfg_section> parse_sections(std::string_view text)
{
    std::vector<cfg_section> sections;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size())
    {
        auto eol = text.find('\n', pos);
        auto raw = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        line_no++;

        auto comment = raw.find_first_of("#;");
        auto line = trim(comment == std::string_view::npos ? raw : raw.substr(0, comment));
        if (line.empty())
            continue;

        if (line.front() == '[')
        {
            if (line.back() != ']')
                throw cfg_error(errc::syntax_error, line_no, "unterminated section header");
            auto name = trim(line.substr(1, line.size() - 2));
            if (name.empty())
                throw cfg_error(errc::syntax_error, line_no, "empty section name");
            sections.push_back({ std::string(name), {}, line_no });
            continue;
        }

        auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw cfg_error(errc::syntax_error, line_no, "expected key=value, got '" + std::string(line) + "'");
        if (sections.empty())
            throw cfg_error(errc::syntax_error, line_no, "option outside of any section");
        auto key = trim(line.substr(0, eq));
        auto value = trim(line.substr(eq + 1));
        if (key.empty())
            throw cfg_error(errc::syntax_error, line_no, "empty key");
        auto &sec = sections.back();
        if (sec.find(key))
            throw cfg_error(errc::syntax_error, line_no, "duplicate key '" + std::string(key) + "' in [" + sec.name + "]");
        sec.options.emplace_back(std::string(key), std::string(value));
    }
    return sections;
}

graph parse_cfg(std::string_view text, std::vector<std::string> *warnings, const parse_options &options)
{
    auto sections = parse_sections(text);
    if (sections.empty() || (sections.front().name != "net" && sections.front().name != "network"))
        throw cfg_error(errc::syntax_error, sections.empty() ? 0 : sections.front().line,
            "cfg must start with a [net] section");

    graph g;
    {
        section_reader net(sections.front());
        auto width = net.require_int("width");
        auto height = net.require_int("height");
        auto channels = net.get_int("channels", 3);
        if (width < 1 || height < 1 || channels < 1)
            throw cfg_error(errc::syntax_error, net.section().line, "[net] dimensions must be positive");
        g.input_shape = { 1, channels, height, width };
        net.report_unused(warnings);
    }

    // darknet layer index -> tensor produced by that layer
    std::vector<std::string> layer_outputs;
    std::vector<int> layer_channels;
    int channels = g.input_shape.c;
    std::vector<double> anchors_seen;
    int classes_seen = -1;

    auto current = [&]() -> std::string { return layer_outputs.empty() ? g.input_id : layer_outputs.back(); };
    auto resolve = [&](int ref, const cfg_section &sec) -> std::size_t {
        auto index = static_cast<long>(layer_outputs.size());
        auto target = ref < 0 ? index + ref : static_cast<long>(ref);
        if (target < 0 || target >= index)
            throw cfg_error(errc::bad_reference, sec.line,
                "[" + sec.name + "] layer reference " + std::to_string(ref) + " out of range at layer "
                    + std::to_string(index));
        return static_cast<std::size_t>(target);
    };

    for (std::size_t s = 1; s < sections.size(); s++)
    {
        auto &sec = sections[s];
        section_reader r(sec);
        auto idx = std::to_string(layer_outputs.size());

        if (sec.name == "convolutional" || sec.name == "conv")
        {
            convolution conv;
            conv.out_channels = r.require_int("filters");
            conv.kernel = r.get_int("size", 1);
            conv.stride = r.get_int("stride", 1);
            auto pad_flag = r.get_int("pad", 0);
            conv.pad = r.has("padding") ? r.get_int("padding", 0) : (pad_flag ? conv.kernel / 2 : 0);
            r.ignore("pad");
            auto bn = r.get_int("batch_normalize", 0);
            if (bn != 0 && bn != 1)
                throw cfg_error(errc::unsupported_option, sec.line, "batch_normalize must be 0 or 1");
            reject_if_set(r, "groups", 1);
            reject_if_set(r, "dilation", 1);
            reject_if_set(r, "binary", 0);
            reject_if_set(r, "xnor", 0);
            if (conv.out_channels < 1 || conv.kernel < 1 || conv.stride < 1)
                throw cfg_error(errc::syntax_error, sec.line, "[convolutional] filters, size and stride must be positive");
            auto act = parse_activation(r);
            conv.has_bias = bn == 0;

            layer_node conv_node { "conv_" + idx, conv, { current() }, "conv_" + idx };
            g.nodes.push_back(conv_node);
            auto out = conv_node.output;
            if (bn)
            {
                g.nodes.push_back({ "bn_" + idx, batch_norm { options.bn_eps }, { out }, "bn_" + idx });
                out = "bn_" + idx;
            }
            if (act.kind != activation::kind_t::linear)
            {
                g.nodes.push_back({ "act_" + idx, activation_layer { act }, { out }, "act_" + idx });
                out = "act_" + idx;
            }
            layer_outputs.push_back(out);
            channels = conv.out_channels;
        }
        else if (sec.name == "shortcut")
        {
            if (!r.has("from"))
                throw cfg_error(errc::syntax_error, sec.line, "[shortcut] requires 'from'");
            auto from = r.get_int_list("from");
            if (from.size() != 1)
                throw cfg_error(errc::unsupported_option, sec.line, "[shortcut] supports a single 'from' layer");
            auto other = resolve(from.front(), sec);
            if (layer_outputs.empty())
                throw cfg_error(errc::bad_reference, sec.line, "[shortcut] has no previous layer");
            auto weights_type = r.get_string("weights_type", "none");
            if (weights_type != "none")
                throw cfg_error(errc::unsupported_option, sec.line, "[shortcut] weights_type is not supported");
            auto act = parse_activation(r);
            g.nodes.push_back({ "add_" + idx, add {}, { layer_outputs.back(), layer_outputs[other] }, "add_" + idx });
            auto out = "add_" + idx;
            if (act.kind != activation::kind_t::linear)
            {
                g.nodes.push_back({ "act_" + idx, activation_layer { act }, { out }, "act_" + idx });
                out = "act_" + idx;
            }
            layer_outputs.push_back(out);
        }
        else if (sec.name == "route")
        {
            auto refs = r.get_int_list("layers");
            if (refs.empty())
                throw cfg_error(errc::syntax_error, sec.line, "[route] requires 'layers'");
            reject_if_set(r, "groups", 1);
            std::vector<std::string> inputs;
            int total = 0;
            for (auto ref : refs)
            {
                auto target = resolve(ref, sec);
                inputs.push_back(layer_outputs[target]);
                total += layer_channels[target];
            }
            if (inputs.size() == 1)
            {
                layer_outputs.push_back(inputs.front());
            }
            else
            {
                g.nodes.push_back({ "route_" + idx, concat {}, inputs, "route_" + idx });
                layer_outputs.push_back("route_" + idx);
            }
            channels = total;
        }
        else if (sec.name == "upsample")
        {
            auto factor = r.get_int("stride", 2);
            if (factor < 2)
                throw cfg_error(errc::unsupported_option, sec.line, "[upsample] stride must be an integer >= 2");
            reject_if_set(r, "reverse", 0);
            r.ignore("scale");
            g.nodes.push_back({ "up_" + idx, upsample { factor }, { current() }, "up_" + idx });
            layer_outputs.push_back("up_" + idx);
        }
        else if (sec.name == "maxpool")
        {
            max_pool pool;
            pool.kernel = r.get_int("size", 2);
            pool.stride = r.get_int("stride", pool.kernel);
            pool.pad = r.get_int("padding", pool.kernel - 1);
            g.nodes.push_back({ "pool_" + idx, pool, { current() }, "pool_" + idx });
            layer_outputs.push_back("pool_" + idx);
        }
        else if (sec.name == "yolo")
        {
            yolo_head head;
            head.num_classes = r.get_int("classes", 20);
            auto mask = r.get_int_list("mask");
            auto anchors = r.get_double_list("anchors");
            auto num = r.get_int("num", static_cast<int>(anchors.size() / 2));
            if (anchors.size() % 2 != 0 || static_cast<int>(anchors.size() / 2) != num)
                throw cfg_error(errc::syntax_error, sec.line, "[yolo] anchors must hold 'num' (w,h) pairs");
            if (mask.empty())
                for (int i = 0; i < num; i++)
                    mask.push_back(i);
            for (auto m : mask)
            {
                if (m < 0 || m >= num)
                    throw cfg_error(errc::bad_reference, sec.line, "[yolo] mask index " + std::to_string(m) + " out of range");
            }
            if (!anchors_seen.empty() && anchors_seen != anchors)
                throw cfg_error(errc::unsupported_option, sec.line, "[yolo] heads disagree on the anchor list");
            if (classes_seen >= 0 && classes_seen != head.num_classes)
                throw cfg_error(errc::unsupported_option, sec.line, "[yolo] heads disagree on the class count");
            anchors_seen = anchors;
            classes_seen = head.num_classes;
            head.anchor_indices = mask;
            g.nodes.push_back({ "yolo_" + idx, head, { current() }, "yolo_" + idx });
            layer_outputs.push_back("yolo_" + idx);
        }
        else
        {
            throw cfg_error(errc::unknown_section, sec.line, "unknown section [" + sec.name + "]");
        }

        r.report_unused(warnings);
        layer_channels.push_back(channels);

        try
        {
            infer_shapes(g);
        }
        catch (const error &e)
        {
            throw cfg_error(e.code(), sec.line, e.what());
        }
    }

    for (std::size_t i = 0; i + 1 < anchors_seen.size(); i += 2)
        g.metadata.anchors.emplace_back(anchors_seen[i], anchors_seen[i + 1]);
    if (classes_seen >= 0)
        g.metadata.class_names = default_class_names(classes_seen);

    return g;
}

std::size_t expected_weight_floats(const graph &skeleton)
{
    auto shapes = infer_shapes(skeleton);
    std::size_t total = 0;
    for (auto &node : skeleton.nodes)
    {
        if (auto conv = std::get_if<convolution>(&node.kind))
        {
            auto in_c = static_cast<std::size_t>(shapes.at(node.inputs.front()).c);
            total += static_cast<std::size_t>(conv->out_channels) * in_c * conv->kernel * conv->kernel;
            total += conv->has_bias ? conv->out_channels : 4 * conv->out_channels;
        }
    }
    return total;
}

namespace
{
// The batch norm that belongs to a bias-free convolution, as parse_cfg lays
// it out.
const layer_node *paired_batch_norm(const graph &g, const layer_node &conv_node)
{
    auto users = g.consumers_of(conv_node.output);
    if (users.size() != 1 || !g.nodes[users.front()].is<batch_norm>())
        return nullptr;
    return &g.nodes[users.front()];
}
}

graph load_weights(std::span<const std::uint8_t> bytes, graph skeleton, weights_header *header_out)
{
    byte_reader reader(bytes);
    if (!reader.can_read(12))
        fail(errc::truncated, "weights file shorter than its header");
    weights_header header;
    header.major = reader.read<std::int32_t>();
    header.minor = reader.read<std::int32_t>();
    header.revision = reader.read<std::int32_t>();
    if (header.major < 0 || header.minor < 0 || header.revision < 0 || header.major > 1000 || header.minor > 1000)
        fail(errc::header_invalid, "version " + std::to_string(header.major) + "." + std::to_string(header.minor) + "."
                + std::to_string(header.revision));
    auto seen_bytes = header.wide_seen() ? 8u : 4u;
    if (!reader.can_read(seen_bytes))
        fail(errc::truncated, "weights file shorter than its header");
    header.seen = header.wide_seen() ? reader.read<std::uint64_t>() : reader.read<std::uint32_t>();

    auto needed = expected_weight_floats(skeleton) * sizeof(float);
    if (reader.remaining() < needed)
        fail(errc::truncated, "weights need " + std::to_string(needed) + " bytes after the header, file has "
                + std::to_string(reader.remaining()));
    if (reader.remaining() > needed)
        fail(errc::trailing_bytes, std::to_string(reader.remaining() - needed) + " bytes left after the last layer");

    auto shapes = infer_shapes(skeleton);
    auto read_vec = [&](std::size_t count) {
        std::vector<float> v(count);
        reader.read_floats(v.data(), count);
        return v;
    };

    for (auto &node : skeleton.nodes)
    {
        auto conv = std::get_if<convolution>(&node.kind);
        if (!conv)
            continue;
        auto out = static_cast<std::size_t>(conv->out_channels);
        auto kernel_len = out * shapes.at(node.inputs.front()).c * conv->kernel * conv->kernel;
        if (conv->has_bias)
        {
            skeleton.weights.set(node.id, weight_role::bias, read_vec(out));
        }
        else
        {
            auto bn = paired_batch_norm(skeleton, node);
            if (!bn)
                fail(errc::invalid_graph, "convolution '" + node.id + "' has neither bias nor batch norm");
            skeleton.weights.set(bn->id, weight_role::bn_beta, read_vec(out));
            skeleton.weights.set(bn->id, weight_role::bn_gamma, read_vec(out));
            skeleton.weights.set(bn->id, weight_role::bn_mean, read_vec(out));
            skeleton.weights.set(bn->id, weight_role::bn_var, read_vec(out));
        }
        skeleton.weights.set(node.id, weight_role::kernel, read_vec(kernel_len));
    }

    if (auto diags = validate(skeleton); !diags.empty())
        fail(errc::invalid_graph, diags.front().node + ": " + diags.front().message);
    if (header_out)
        *header_out = header;
    return skeleton;
}

std::vector<std::uint8_t> write_weights(const graph &g, const weights_header &header)
{
    std::vector<std::uint8_t> out;
    append_le<std::int32_t>(out, header.major);
    append_le<std::int32_t>(out, header.minor);
    append_le<std::int32_t>(out, header.revision);
    if (header.wide_seen())
        append_le<std::uint64_t>(out, header.seen);
    else
        append_le<std::uint32_t>(out, static_cast<std::uint32_t>(header.seen));

    auto append = [&](const std::vector<float> &v) {
        auto offset = out.size();
        out.resize(offset + v.size() * sizeof(float));
        std::memcpy(out.data() + offset, v.data(), v.size() * sizeof(float));
    };
    for (auto &node : g.nodes)
    {
        auto conv = std::get_if<convolution>(&node.kind);
        if (!conv)
            continue;
        if (conv->has_bias)
        {
            append(g.weights.get(node.id, weight_role::bias));
        }
        else
        {
            auto bn = paired_batch_norm(g, node);
            if (!bn)
                fail(errc::invalid_graph, "convolution '" + node.id + "' has neither bias nor batch norm");
            for (auto role : { weight_role::bn_beta, weight_role::bn_gamma, weight_role::bn_mean, weight_role::bn_var })
                append(g.weights.get(bn->id, role));
        }
        append(g.weights.get(node.id, weight_role::kernel));
    }
    return out;
}

model_stats compute_stats(const graph &g)
{
    auto shapes = infer_shapes(g);
    model_stats stats;
    stats.node_total = g.nodes.size();
    stats.parameter_count = g.weights.parameter_count();
    for (auto &node : g.nodes)
    {
        std::string key(kind_name(node.kind));
        if (auto act = std::get_if<activation_layer>(&node.kind))
        {
            key += ":" + std::string(to_string(act->act.kind));
            if (act->act.kind == activation::kind_t::leaky)
                stats.leaky_activations++;
        }
        stats.node_counts[key]++;

        std::uint64_t macs = 0;
        if (auto conv = std::get_if<convolution>(&node.kind))
        {
            if (conv->fused_activation.kind == activation::kind_t::leaky)
                stats.leaky_activations++;
            auto &out = shapes.at(node.output);
            auto &in = shapes.at(node.inputs.front());
            macs = static_cast<std::uint64_t>(out.h) * out.w * out.c * in.c * conv->kernel * conv->kernel;
        }
        stats.per_layer.push_back({ node.id, macs });
        stats.total_macs += macs;
    }
    return stats;
}
}
