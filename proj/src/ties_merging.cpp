// Copyright (c) 2026, the langarith authors
// SPDX-License-Identifier: Apache-2.0
//

#include "langarith/ties_merging.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/core.h>

#include "langarith/error.hpp"

namespace langarith {

namespace {

void check_keep(double keep_fraction) {
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
        throw InvalidArgument(fmt::format("keep fraction {} outside (0, 1]", keep_fraction));
}

void check_group(std::span<const DeltaVector> ds, const char* op) {
    if (ds.empty())
        throw InvalidArgument(fmt::format("{} needs at least one delta", op));
    for (std::size_t k = 1; k < ds.size(); ++k) {
        require_compat(ds.front().tensors, ds[k].tensors, fmt::format("{} '{}'", op, ds[k].label));
        if (ds[k].base_fingerprint != ds.front().base_fingerprint)
            throw CompatError(fmt::format("deltas '{}' and '{}' were computed against different bases",
                                          ds.front().label, ds[k].label));
    }
}

std::int8_t sign_of(double x) {
    return static_cast<std::int8_t>((x > 0.0) - (x < 0.0));
}

std::vector<std::span<const float>> columns(std::span<const DeltaVector> ds, const std::string& name) {
    std::vector<std::span<const float>> cols;
    for (const auto& d : ds)
        cols.push_back(d.tensors.at(name).values());
    return cols;
}

float magnitude(float x) {
    return std::isnan(x) ? -1.0f : std::fabs(x);
}

} // namespace

void TiesConfig::validate() const {
    check_keep(top_k_fraction);
    if (!std::isfinite(lambda))
        throw InvalidArgument(fmt::format("ties lambda {} is not finite", lambda));
}

std::uint64_t trim_count(std::uint64_t n, double keep_fraction) {
    check_keep(keep_fraction);
    const auto k = static_cast<std::uint64_t>(std::round(keep_fraction * static_cast<double>(n)));
    return std::min(n, std::max<std::uint64_t>(1, k));
}

DeltaVector trim(const DeltaVector& d, double keep_fraction) {
    const std::uint64_t n = d.tensors.element_count();
    const std::uint64_t k = trim_count(n, keep_fraction);

    std::vector<float> flat;
    flat.reserve(n);
    for (const auto& [_, e] : d.tensors)
        flat.insert(flat.end(), e.values().begin(), e.values().end());

    std::vector<bool> keep(n, k >= n);
    if (k < n) {
        std::vector<std::uint64_t> order(n);
        std::iota(order.begin(), order.end(), std::uint64_t{0});
        auto before = [&](std::uint64_t a, std::uint64_t b) {
            const float ma = magnitude(flat[a]);
            const float mb = magnitude(flat[b]);
            return ma != mb ? ma > mb : a < b;
        };
        std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), before);
        for (std::uint64_t i = 0; i < k; ++i)
            keep[order[i]] = true;
    }

    DeltaVector out{TensorMap{}, d.base_fingerprint, d.label};
    std::uint64_t pos = 0;
    for (const auto& [_, e] : d.tensors) {
        std::vector<float> values(e.size());
        for (std::size_t i = 0; i < values.size(); ++i, ++pos)
            values[i] = keep[pos] ? flat[pos] : 0.0f;
        out.tensors.insert(e.with_values(std::move(values)));
    }
    return out;
}

SignVector elect_sign(std::span<const DeltaVector> ds) {
    check_group(ds, "elect_sign");
    SignVector out;
    for (const auto& [name, first] : ds.front().tensors) {
        SignTensor st{first.shape(), std::vector<std::int8_t>(first.size())};
        const auto cols = columns(ds, name);
        for (std::size_t i = 0; i < first.size(); ++i) {
            double sum = 0.0;
            for (const auto& c : cols)
                sum += c[i];
            st.signs[i] = sign_of(sum);
        }
        out.emplace(name, std::move(st));
    }
    return out;
}

DeltaVector disjoint_merge(std::span<const DeltaVector> ds, const SignVector& signs) {
    check_group(ds, "disjoint_merge");
    const auto& ref = ds.front().tensors;
    bool shapes_match = signs.size() == ref.size();
    for (const auto& [name, e] : ref) {
        auto it = signs.find(name);
        shapes_match = shapes_match && it != signs.end() && it->second.shape == e.shape() &&
                       it->second.signs.size() == e.size();
    }
    if (!shapes_match)
        throw CompatError("disjoint_merge: sign vector does not match the deltas' names and shapes");

    DeltaVector out{TensorMap{}, ds.front().base_fingerprint, ds.front().label};
    for (std::size_t k = 1; k < ds.size(); ++k)
        out.label += "+" + ds[k].label;

    for (const auto& [name, first] : ref) {
        const auto& elected = signs.at(name).signs;
        const auto cols = columns(ds, name);
        std::vector<float> values(first.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (elected[i] == 0)
                continue;
            double sum = 0.0;
            int count = 0;
            for (const auto& c : cols) {
                const float x = c[i];
                if (sign_of(x) == elected[i]) {
                    sum += x;
                    ++count;
                }
            }
            if (count > 0)
                values[i] = static_cast<float>(sum / count);
        }
        out.tensors.insert(first.with_values(std::move(values)));
    }
    return out;
}

TensorMap ties_merge(const TensorMap& pre, std::span<const DeltaVector> ds, const TiesConfig& cfg, bool force) {
    cfg.validate();
    check_group(ds, "ties_merge");
    std::vector<DeltaVector> trimmed;
    trimmed.reserve(ds.size());
    for (const auto& d : ds)
        trimmed.push_back(trim(d, cfg.top_k_fraction));
    const auto merged = disjoint_merge(trimmed, elect_sign(trimmed));
    return apply(pre, scale(merged, cfg.lambda), force);
}

} // namespace langarith
