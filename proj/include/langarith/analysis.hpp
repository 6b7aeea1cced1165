// Copyright (c) 2026, the langarith authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "langarith/vector_core.hpp"

namespace langarith {

/// Cosine of the flattened deltas (canonical order, FP64 reductions).
double cosine_similarity(const DeltaVector& a, const DeltaVector& b);

struct SimilarityMatrix {
    std::vector<std::string> labels;
    /// Row-major, labels.size() squared. Diagonal is exactly 1.
    std::vector<std::vector<double>> values;
};

SimilarityMatrix similarity_matrix(std::span<const DeltaVector> ds);

struct HistogramBin {
    double lower = 0.0;
    double upper = 0.0;
    std::uint64_t count = 0;
};

struct SparsityReport {
    std::string label;
    std::uint64_t total_elements = 0;
    /// (threshold, fraction of |x| < threshold), thresholds ascending.
    std::vector<std::pair<double, double>> fraction_below;
    /// Equal-width bins over [min, max]; the last bin is closed.
    std::vector<HistogramBin> histogram;
};

SparsityReport sparsity_stats(const DeltaVector& d, std::span<const double> thresholds, int bins);

} // namespace langarith
