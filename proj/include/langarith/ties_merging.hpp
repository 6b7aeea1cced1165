// Copyright (c) 2026, the langarith authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "langarith/vector_core.hpp"

namespace langarith {

/// What a coordinate outputs when its elected sign mass is exactly zero.
enum class SignTieRule { zero };

struct TiesConfig {
    /// Fraction of entries KEPT by the trim step (0.2 keeps the top 20%).
    double top_k_fraction = 0.2;
    double lambda = 1.0;
    SignTieRule sign_tie_rule = SignTieRule::zero;

    void validate() const;
};

struct SignTensor {
    Shape shape;
    std::vector<std::int8_t> signs;

    friend bool operator==(const SignTensor&, const SignTensor&) = default;
};

/// Per-tensor elected signs in {-1, 0, +1}.
using SignVector = std::map<std::string, SignTensor>;

/// Number of entries trim keeps out of n: round-half-away(keep·n), at least 1.
std::uint64_t trim_count(std::uint64_t n, double keep_fraction);

/**
 * Keeps the trim_count largest-magnitude entries of the flattened delta
 * (canonical order) and zeroes the rest. Equal magnitudes at the cut are
 * resolved in favour of the earlier flat index.
 */
DeltaVector trim(const DeltaVector& d, double keep_fraction);

/// Sign of the per-coordinate sum across deltas (FP64 sum); exact zero -> 0.
SignVector elect_sign(std::span<const DeltaVector> ds);

/// Mean of the entries agreeing with the elected sign; 0 where none agree.
DeltaVector disjoint_merge(std::span<const DeltaVector> ds, const SignVector& signs);

/// apply(pre, scale(disjoint_merge(T, elect_sign(T)), λ)) with T the trimmed deltas.
TensorMap ties_merge(const TensorMap& pre, std::span<const DeltaVector> ds, const TiesConfig& cfg, bool force = false);

} // namespace langarith
