// Copyright (c) 2026, the langarith authors
// SPDX-License-Identifier: Apache-2.0
//

#include "langarith/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/core.h>

#include "langarith/error.hpp"

namespace langarith {

namespace {

struct Reductions {
    double dot = 0.0;
    double norm_a = 0.0;
    double norm_b = 0.0;
};

Reductions reduce(const DeltaVector& a, const DeltaVector& b) {
    require_compat(a.tensors, b.tensors, fmt::format("cosine '{}' vs '{}'", a.label, b.label));
    Reductions r;
    for (const auto& [name, ea] : a.tensors) {
        const auto x = ea.values();
        const auto y = b.tensors.at(name).values();
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double xi = x[i];
            const double yi = y[i];
            r.dot += xi * yi;
            r.norm_a += xi * xi;
            r.norm_b += yi * yi;
        }
    }
    return r;
}

} // namespace

double cosine_similarity(const DeltaVector& a, const DeltaVector& b) {
    const auto r = reduce(a, b);
    if (r.norm_a == 0.0)
        throw InvalidArgument(fmt::format("delta '{}' has zero norm", a.label));
    if (r.norm_b == 0.0)
        throw InvalidArgument(fmt::format("delta '{}' has zero norm", b.label));
    return std::clamp(r.dot / (std::sqrt(r.norm_a) * std::sqrt(r.norm_b)), -1.0, 1.0);
}

SimilarityMatrix similarity_matrix(std::span<const DeltaVector> ds) {
    if (ds.size() < 2)
        throw InvalidArgument("similarity matrix needs at least two deltas");
    SimilarityMatrix m;
    const std::size_t n = ds.size();
    m.values.assign(n, std::vector<double>(n, 1.0));
    for (const auto& d : ds)
        m.labels.push_back(d.label);
    for (std::size_t i = 0; i < n; ++i) {
        // still rejects zero-norm inputs on the diagonal
        (void)cosine_similarity(ds[i], ds[i]);
        for (std::size_t j = i + 1; j < n; ++j)
            m.values[i][j] = m.values[j][i] = cosine_similarity(ds[i], ds[j]);
    }
    return m;
}

SparsityReport sparsity_stats(const DeltaVector& d, std::span<const double> thresholds, int bins) {
    if (bins < 1)
        throw InvalidArgument(fmt::format("histogram needs at least one bin, got {}", bins));
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        if (!(thresholds[i] >= 0.0) || !std::isfinite(thresholds[i]))
            throw InvalidArgument(fmt::format("threshold {} must be finite and nonnegative", thresholds[i]));
        if (i > 0 && thresholds[i] < thresholds[i - 1])
            throw InvalidArgument("thresholds must be ascending");
    }

    SparsityReport report;
    report.label = d.label;
    report.total_elements = d.tensors.element_count();

    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    std::vector<std::uint64_t> below(thresholds.size(), 0);
    for (const auto& [_, e] : d.tensors) {
        for (float x : e.values()) {
            const double v = x;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            const double mag = std::fabs(v);
            for (std::size_t t = 0; t < thresholds.size(); ++t)
                below[t] += mag < thresholds[t];
        }
    }

    const double n = static_cast<double>(report.total_elements);
    for (std::size_t t = 0; t < thresholds.size(); ++t)
        report.fraction_below.emplace_back(thresholds[t], n > 0 ? below[t] / n : 0.0);

    if (report.total_elements == 0)
        lo = hi = 0.0;
    const double width = (hi - lo) / bins;
    for (int b = 0; b < bins; ++b)
        report.histogram.push_back({lo + width * b, b + 1 == bins ? hi : lo + width * (b + 1), 0});
    for (const auto& [_, e] : d.tensors) {
        for (float x : e.values()) {
            std::size_t b = 0;
            if (hi > lo && !std::isnan(x))
                b = std::min<std::size_t>(bins - 1, static_cast<std::size_t>((x - lo) / (hi - lo) * bins));
            ++report.histogram[b].count;
        }
    }
    return report;
}

} // namespace langarith
