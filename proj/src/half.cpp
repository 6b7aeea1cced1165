// Copyright (c) 2026, the langarith authors
// SPDX-License-Identifier: Apache-2.0
//

#include "langarith/half.hpp"

#include <bit>
#include <cmath>

#include <fmt/core.h>

#include "langarith/error.hpp"

namespace langarith::half {

float to_float(std::uint16_t bits) noexcept {
    const std::uint32_t sign = static_cast<std::uint32_t>(bits & 0x8000u) << 16;
    const std::uint32_t exp = (bits >> 10) & 0x1Fu;
    std::uint32_t mant = bits & 0x3FFu;

    if (exp == 0x1F)
        return std::bit_cast<float>(sign | 0x7F800000u | (mant << 13));
    if (exp != 0)
        return std::bit_cast<float>(sign | ((exp + 112u) << 23) | (mant << 13));
    if (mant == 0)
        return std::bit_cast<float>(sign);

    // subnormal: renormalize into an FP32 normal
    int e = -14;
    while ((mant & 0x400u) == 0) {
        mant <<= 1;
        --e;
    }
    mant &= 0x3FFu;
    return std::bit_cast<float>(sign | (static_cast<std::uint32_t>(e + 127) << 23) | (mant << 13));
}

std::uint16_t from_float(float value) noexcept {
    const std::uint32_t x = std::bit_cast<std::uint32_t>(value);
    const auto sign = static_cast<std::uint16_t>((x >> 16) & 0x8000u);
    const std::uint32_t exp = (x >> 23) & 0xFFu;
    std::uint32_t mant = x & 0x7FFFFFu;

    if (exp == 0xFF) {
        if (mant == 0)
            return sign | 0x7C00u;
        auto payload = static_cast<std::uint16_t>(mant >> 13);
        if (payload == 0)
            payload = 0x200u;
        return sign | 0x7C00u | payload;
    }

    const int e = static_cast<int>(exp) - 112;
    if (e >= 0x1F)
        return sign | 0x7C00u;

    if (e <= 0) {
        if (e < -10)
            return sign;
        mant |= 0x800000u;
        const int shift = 14 - e;
        const std::uint32_t halfway = 1u << (shift - 1);
        const std::uint32_t rem = mant & ((1u << shift) - 1u);
        std::uint32_t m = mant >> shift;
        if (rem > halfway || (rem == halfway && (m & 1u)))
            ++m;
        return static_cast<std::uint16_t>(sign | m);
    }

    std::uint32_t h = static_cast<std::uint32_t>(e) << 10 | (mant >> 13);
    const std::uint32_t rem = mant & 0x1FFFu;
    if (rem > 0x1000u || (rem == 0x1000u && (h & 1u)))
        ++h; // carry may roll into the exponent, up to infinity
    return static_cast<std::uint16_t>(sign | h);
}

std::uint16_t from_float_checked(float value, const char* what) {
    if (std::isfinite(value) && std::fabs(value) > kMax)
        throw OverflowError(fmt::format("value {} in tensor '{}' exceeds the FP16 range (max {})", value, what, kMax));
    return from_float(value);
}

void to_float(std::span<const std::uint16_t> in, std::span<float> out) noexcept {
    for (std::size_t i = 0; i < in.size(); ++i)
        out[i] = to_float(in[i]);
}

void from_float_checked(std::span<const float> in, std::span<std::uint16_t> out, const char* what) {
    for (std::size_t i = 0; i < in.size(); ++i)
        out[i] = from_float_checked(in[i], what);
}

} // namespace langarith::half
