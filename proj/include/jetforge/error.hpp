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

#include <stdexcept>
#include <string>
#include <string_view>

namespace jetforge
{
enum class errc
{
    // graph_ir
    shape_mismatch,
    underflow_shape,
    invalid_graph,
    bad_magic,
    version_unsupported,
    truncated_file,
    manifest_weight_mismatch,
    // darknet_frontend
    syntax_error,
    unknown_section,
    bad_reference,
    unsupported_option,
    truncated,
    trailing_bytes,
    header_invalid,
    // executor
    missing_qparams,
    non_finite_detected,
    // optimizer
    alpha_out_of_range,
    // quantizer
    empty_calibration_set,
    non_finite_activation,
    length_mismatch,
    degenerate_histogram,
    accumulator_overflow,
    // detect
    empty_image,
    channel_mismatch,
    // datasets
    malformed_json,
    unknown_category_id,
    malformed_line,
    unknown_category,
    duplicate_image_path,
    too_few_boxes,
    // eval
    unknown_image,
    unknown_class_id,
    // generic
    io_error,
    invalid_argument,
};

std::string_view to_string(errc code) noexcept;

/// True for failures caused by the environment (missing files, unreadable
/// paths) rather than by the content being processed. The CLI maps these to
/// exit code 2 and everything else to exit code 1.
bool is_io_error(errc code) noexcept;

class error : public std::runtime_error
{
public:
    error(errc code, const std::string &message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code)
    {
    }

    errc code() const noexcept { return code_; }

private:
    errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string &message)
{
    throw error(code, message);
}
}
