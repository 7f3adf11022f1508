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

#include <bit>
#include <cstdint>
#include <span>

namespace jetforge
{
/// IEEE binary16 bits of `value`, rounded to nearest, ties to even.
/// Overflow yields infinity; NaN stays NaN.
inline std::uint16_t float_to_half_bits(float value) noexcept
{
    constexpr std::uint32_t f32_infinity = 255u << 23;
    constexpr std::uint32_t f16_overflow = (127u + 16u) << 23;
    constexpr std::uint32_t denorm_magic_bits = ((127u - 15u) + (23u - 10u) + 1u) << 23;

    auto bits = std::bit_cast<std::uint32_t>(value);
    auto sign = static_cast<std::uint16_t>((bits >> 16) & 0x8000u);
    bits &= 0x7fffffffu;

    std::uint16_t result;
    if (bits >= f16_overflow)
    {
        result = bits > f32_infinity ? 0x7e00 : 0x7c00;
    }
    else if (bits < (113u << 23))
    {
        // subnormal or zero: let the FPU do the rounding at the right exponent
        auto shifted = std::bit_cast<float>(bits) + std::bit_cast<float>(denorm_magic_bits);
        result = static_cast<std::uint16_t>(std::bit_cast<std::uint32_t>(shifted) - denorm_magic_bits);
    }
    else
    {
        auto mantissa_odd = (bits >> 13) & 1u;
        bits += ((15u - 127u) << 23) + 0xfffu;
        bits += mantissa_odd;
        result = static_cast<std::uint16_t>(bits >> 13);
    }
    return result | sign;
}

inline float half_bits_to_float(std::uint16_t half) noexcept
{
    std::uint32_t sign = static_cast<std::uint32_t>(half & 0x8000u) << 16;
    std::uint32_t exponent = (half >> 10) & 0x1fu;
    std::uint32_t mantissa = half & 0x3ffu;

    std::uint32_t bits;
    if (exponent == 0x1f)
    {
        bits = sign | 0x7f800000u | (mantissa << 13);
    }
    else if (exponent == 0)
    {
        if (mantissa == 0)
            return std::bit_cast<float>(sign);
        // subnormal: value = mantissa * 2^-24, exact in binary32
        auto magnitude = static_cast<float>(mantissa) * 0x1p-24f;
        return sign ? -magnitude : magnitude;
    }
    else
    {
        bits = sign | ((exponent + 112u) << 23) | (mantissa << 13);
    }
    return std::bit_cast<float>(bits);
}

/// Nearest binary16 value, returned as a float.
inline float round_to_half(float value) noexcept
{
    return half_bits_to_float(float_to_half_bits(value));
}

inline void round_to_half(std::span<float> values) noexcept
{
    for (auto &v : values)
        v = round_to_half(v);
}
}
