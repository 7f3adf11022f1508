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

#include <jetforge/error.hpp>
#include <jetforge/graph.hpp>

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace jetforge::darknet
{
/// Parse failure that remembers the offending cfg line (1-based, 0 if none).
class cfg_error : public error
{
public:
    cfg_error(errc code, int line, const std::string &message)
        : error(code, (line > 0 ? "line " + std::to_string(line) + ": " : std::string()) + message), line_(line)
    {
    }

    int line() const noexcept { return line_; }

private:
    int line_;
};

struct cfg_section
{
    std::string name;
    std::vector<std::pair<std::string, std::string>> options;
    int line = 0;

    const std::string *find(std::string_view key) const;
};

/// Splits cfg text into sections. Comments start with '#' or ';'.
std::vector<cfg_section> parse_sections(std::string_view text);

/// BatchNorm epsilon used for darknet-trained weights.
inline constexpr double default_bn_eps = 1e-6;

struct parse_options
{
    double bn_eps = default_bn_eps;
};

/// Builds a weightless graph from cfg text. Non-fatal findings (ignored
/// training keys and the like) are appended to `warnings` when given.
graph parse_cfg(std::string_view text, std::vector<std::string> *warnings = nullptr, const parse_options &options = {});

struct weights_header
{
    std::int32_t major = 0;
    std::int32_t minor = 2;
    std::int32_t revision = 0;
    std::uint64_t seen = 0;

    bool wide_seen() const noexcept { return major * 10 + minor >= 2; }
    std::size_t byte_size() const noexcept { return 12 + (wide_seen() ? 8 : 4); }
};

/// Number of floats the weights file must carry after the header.
std::size_t expected_weight_floats(const graph &skeleton);

/// Reads a darknet .weights image into the convolution and batch-norm
/// weights of a graph produced by parse_cfg. The whole buffer must be
/// consumed exactly.
graph load_weights(std::span<const std::uint8_t> bytes, graph skeleton, weights_header *header_out = nullptr);

/// Serializes weights in darknet order; used to build fixtures.
std::vector<std::uint8_t> write_weights(const graph &g, const weights_header &header = {});

struct layer_macs
{
    std::string node;
    std::uint64_t macs = 0;
};

struct model_stats
{
    std::map<std::string, int> node_counts; // keyed by kind, activations as "Activation:<type>"
    std::size_t node_total = 0;
    std::size_t parameter_count = 0;
    int leaky_activations = 0; // standalone leaky nodes plus convolutions with a fused leaky
    std::vector<layer_macs> per_layer;
    std::uint64_t total_macs = 0;
};

model_stats compute_stats(const graph &g);
}
