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

namespace jetforge
{
std::string_view to_string(errc code) noexcept
{
    switch (code)
    {
    case errc::shape_mismatch: return "ShapeMismatch";
    case errc::underflow_shape: return "UnderflowShape";
    case errc::invalid_graph: return "InvalidGraph";
    case errc::bad_magic: return "BadMagic";
    case errc::version_unsupported: return "VersionUnsupported";
    case errc::truncated_file: return "TruncatedFile";
    case errc::manifest_weight_mismatch: return "ManifestWeightMismatch";
    case errc::syntax_error: return "SyntaxError";
    case errc::unknown_section: return "UnknownSection";
    case errc::bad_reference: return "BadReference";
    case errc::unsupported_option: return "UnsupportedOption";
    case errc::truncated: return "Truncated";
    case errc::trailing_bytes: return "TrailingBytes";
    case errc::header_invalid: return "HeaderInvalid";
    case errc::missing_qparams: return "MissingQParams";
    case errc::non_finite_detected: return "NonFiniteDetected";
    case errc::alpha_out_of_range: return "AlphaOutOfRange";
    case errc::empty_calibration_set: return "EmptyCalibrationSet";
    case errc::non_finite_activation: return "NonFiniteActivation";
    case errc::length_mismatch: return "LengthMismatch";
    case errc::degenerate_histogram: return "DegenerateHistogram";
    case errc::accumulator_overflow: return "AccumulatorOverflow";
    case errc::empty_image: return "EmptyImage";
    case errc::channel_mismatch: return "ChannelMismatch";
    case errc::malformed_json: return "MalformedJson";
    case errc::unknown_category_id: return "UnknownCategoryId";
    case errc::malformed_line: return "MalformedLine";
    case errc::unknown_category: return "UnknownCategory";
    case errc::duplicate_image_path: return "DuplicateImagePath";
    case errc::too_few_boxes: return "TooFewBoxes";
    case errc::unknown_image: return "UnknownImage";
    case errc::unknown_class_id: return "UnknownClassId";
    case errc::io_error: return "IoError";
    case errc::invalid_argument: return "InvalidArgument";
    }
    return "Unknown";
}

bool is_io_error(errc code) noexcept
{
    return code == errc::io_error;
}
}
