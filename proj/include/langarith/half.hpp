// Copyright (c) 2026, the langarith authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <span>

namespace langarith::half {

/// Largest finite FP16 value.
inline constexpr float kMax = 65504.0f;

/// Widen FP16 bits to FP32. Exact for every input, NaN payloads included.
float to_float(std::uint16_t bits) noexcept;

/// Narrow FP32 to FP16 bits with round-to-nearest-even. Out-of-range finite
/// values become infinity; NaN payloads keep their top 10 mantissa bits.
std::uint16_t from_float(float value) noexcept;

/// Like from_float, but throws OverflowError for finite |value| > kMax.
/// `what` names the tensor in the diagnostic.
std::uint16_t from_float_checked(float value, const char* what);

void to_float(std::span<const std::uint16_t> in, std::span<float> out) noexcept;
void from_float_checked(std::span<const float> in, std::span<std::uint16_t> out, const char* what);

} // namespace langarith::half
