// Copyright (c) 2026, the langarith authors
// SPDX-License-Identifier: Apache-2.0
//

#include "langarith/vector_core.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include <fmt/core.h>

#include "langarith/error.hpp"
#include "langarith/fingerprint.hpp"

namespace langarith {

namespace {

constexpr std::size_t kStreamChunk = 1u << 20;

float coefficient(double c) {
    if (!std::isfinite(c))
        throw InvalidArgument(fmt::format("scale factor {} is not finite", c));
    return static_cast<float>(c);
}

void require_same_base(const DeltaVector& a, const DeltaVector& b) {
    if (a.base_fingerprint != b.base_fingerprint)
        throw CompatError(fmt::format("deltas '{}' and '{}' were computed against different bases", a.label, b.label));
}

void require_base(const TensorMap& pre, const DeltaVector& d, bool force) {
    if (force)
        return;
    if (d.base_fingerprint.empty())
        throw CompatError(fmt::format("delta '{}' carries no base fingerprint; pass force to apply it anyway", d.label));
    if (content_fingerprint(pre) != d.base_fingerprint)
        throw CompatError(fmt::format("delta '{}' was computed against a different base checkpoint", d.label));
}

// pre + Σ c_k·d_k with the sum formed first, in term order: the same
// rounding sequence as apply(pre, add({scale(d_k, c_k)...})).
TensorMap weighted_apply(const TensorMap& pre, std::span<const DeltaVector* const> ds, std::span<const float> coeffs) {
    TensorMap out;
    std::vector<float> acc;
    for (const auto& [name, base] : pre) {
        const std::size_t n = base.size();
        acc.assign(n, 0.0f);
        for (std::size_t k = 0; k < ds.size(); ++k) {
            const auto x = ds[k]->tensors.at(name).values();
            const float c = coeffs[k];
            if (k == 0) {
                for (std::size_t i = 0; i < n; ++i)
                    acc[i] = x[i] * c;
            } else {
                for (std::size_t i = 0; i < n; ++i)
                    acc[i] = acc[i] + x[i] * c;
            }
        }
        const auto p = base.values();
        std::vector<float> values(n);
        for (std::size_t i = 0; i < n; ++i)
            values[i] = p[i] + acc[i];
        out.insert(base.with_values(std::move(values)));
    }
    out.set_metadata(pre.metadata());
    return out;
}

TensorMap merge_checked(const TensorMap& pre, std::span<const DeltaVector* const> ds, std::span<const float> coeffs,
                        bool force) {
    if (ds.empty())
        throw InvalidArgument("merge needs at least one delta");
    for (const auto* d : ds) {
        require_compat(pre, d->tensors, fmt::format("delta '{}'", d->label));
        require_same_base(*ds.front(), *d);
    }
    require_base(pre, *ds.front(), force);
    return weighted_apply(pre, ds, coeffs);
}

} // namespace

TensorMap to_checkpoint(const DeltaVector& delta) {
    TensorMap map = delta.tensors;
    map.set_metadata(kLabelKey, delta.label);
    map.set_metadata(kBaseFingerprintKey, delta.base_fingerprint);
    return map;
}

DeltaVector delta_from_checkpoint(TensorMap map) {
    DeltaVector d;
    const auto& meta = map.metadata();
    if (auto it = meta.find(kLabelKey); it != meta.end())
        d.label = it->second;
    if (auto it = meta.find(kBaseFingerprintKey); it != meta.end())
        d.base_fingerprint = it->second;
    d.tensors = std::move(map);
    return d;
}

DeltaVector diff(const TensorMap& ft, const TensorMap& pre, std::string label) {
    require_compat(ft, pre, "diff");
    DeltaVector d;
    d.label = std::move(label);
    d.base_fingerprint = content_fingerprint(pre);
    for (const auto& [name, f] : ft) {
        const auto a = f.values();
        const auto b = pre.at(name).values();
        std::vector<float> values(a.size());
        for (std::size_t i = 0; i < a.size(); ++i)
            values[i] = a[i] - b[i];
        d.tensors.insert(TensorEntry(name, DType::F32, f.shape(), std::move(values)));
    }
    return d;
}

DeltaVector scale(const DeltaVector& d, double c) {
    const float cf = coefficient(c);
    DeltaVector out{TensorMap{}, d.base_fingerprint, d.label};
    for (const auto& [name, e] : d.tensors) {
        const auto x = e.values();
        std::vector<float> values(x.size());
        for (std::size_t i = 0; i < x.size(); ++i)
            values[i] = x[i] * cf;
        out.tensors.insert(e.with_values(std::move(values)));
    }
    return out;
}

DeltaVector add(std::span<const DeltaVector> ds) {
    if (ds.empty())
        throw InvalidArgument("add needs at least one delta");
    DeltaVector out{TensorMap{}, ds.front().base_fingerprint, ds.front().label};
    for (std::size_t k = 1; k < ds.size(); ++k) {
        require_compat(ds.front().tensors, ds[k].tensors, fmt::format("add '{}'", ds[k].label));
        require_same_base(ds.front(), ds[k]);
        out.label += "+" + ds[k].label;
    }
    for (const auto& [name, first] : ds.front().tensors) {
        std::vector<float> acc(first.values().begin(), first.values().end());
        for (std::size_t k = 1; k < ds.size(); ++k) {
            const auto x = ds[k].tensors.at(name).values();
            for (std::size_t i = 0; i < acc.size(); ++i)
                acc[i] = acc[i] + x[i];
        }
        out.tensors.insert(first.with_values(std::move(acc)));
    }
    return out;
}

TensorMap apply(const TensorMap& pre, const DeltaVector& d, bool force) {
    require_compat(pre, d.tensors, fmt::format("apply '{}'", d.label));
    require_base(pre, d, force);
    TensorMap out;
    for (const auto& [name, base] : pre) {
        const auto p = base.values();
        const auto x = d.tensors.at(name).values();
        std::vector<float> values(p.size());
        for (std::size_t i = 0; i < p.size(); ++i)
            values[i] = p[i] + x[i];
        out.insert(base.with_values(std::move(values)));
    }
    out.set_metadata(pre.metadata());
    return out;
}

TensorMap la_merge(const TensorMap& pre, const DeltaVector& t1, const DeltaVector& t2, double lambda, bool force) {
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw InvalidArgument(fmt::format("lambda {} outside [0, 1]", lambda));
    const DeltaVector* ds[] = {&t1, &t2};
    const float coeffs[] = {coefficient(lambda), coefficient(1.0 - lambda)};
    return merge_checked(pre, ds, coeffs, force);
}

void MergeRecipe::validate() const {
    if (terms.empty())
        throw InvalidArgument("merge recipe has no terms");
    double sum = 0.0;
    for (const auto& t : terms) {
        if (!std::isfinite(t.weight))
            throw InvalidArgument(fmt::format("weight {} for '{}' is not finite", t.weight, t.label));
        sum += t.weight;
    }
    if (normalize && sum == 0.0)
        throw InvalidArgument("recipe weights sum to zero and cannot be normalized");
}

std::vector<double> MergeRecipe::effective_weights() const {
    validate();
    std::vector<double> w;
    double sum = 0.0;
    for (const auto& t : terms) {
        w.push_back(t.weight);
        sum += t.weight;
    }
    if (normalize && sum != 1.0) {
        for (auto& x : w)
            x /= sum;
    }
    return w;
}

TensorMap multi_merge(const TensorMap& pre, const MergeRecipe& recipe, const std::map<std::string, DeltaVector>& deltas,
                      bool force) {
    const auto weights = recipe.effective_weights();
    std::vector<const DeltaVector*> ds;
    std::vector<float> coeffs;
    for (std::size_t k = 0; k < recipe.terms.size(); ++k) {
        auto it = deltas.find(recipe.terms[k].label);
        if (it == deltas.end())
            throw InvalidArgument(fmt::format("recipe label '{}' does not name a known delta", recipe.terms[k].label));
        ds.push_back(&it->second);
        coeffs.push_back(coefficient(weights[k]));
    }
    return merge_checked(pre, ds, coeffs, force);
}

void stream_merge(const std::filesystem::path& base, std::span<const WeightedDeltaFile> deltas,
                  const std::filesystem::path& out, DtypePolicy policy, bool force) {
    if (deltas.empty())
        throw InvalidArgument("merge needs at least one delta");

    CheckpointReader base_reader(base);
    std::vector<std::unique_ptr<CheckpointReader>> readers;
    std::vector<float> coeffs;
    for (const auto& d : deltas) {
        auto& r = *readers.emplace_back(std::make_unique<CheckpointReader>(d.path));
        coeffs.push_back(coefficient(d.weight));

        const auto& a = base_reader.tensors();
        const auto& b = r.tensors();
        bool same = a.size() == b.size();
        for (std::size_t i = 0; same && i < a.size(); ++i)
            same = a[i].name == b[i].name && a[i].shape == b[i].shape;
        if (!same)
            throw CompatError(fmt::format("delta '{}' does not match the tensors of base '{}'", d.path.string(),
                                          base.string()));
    }

    auto fingerprint_of = [](const CheckpointReader& r) {
        auto it = r.metadata().find(kBaseFingerprintKey);
        return it == r.metadata().end() ? std::string{} : it->second;
    };
    const std::string fp = fingerprint_of(*readers.front());
    for (const auto& r : readers) {
        if (fingerprint_of(*r) != fp)
            throw CompatError(fmt::format("deltas '{}' and '{}' were computed against different bases",
                                          readers.front()->path().string(), r->path().string()));
    }
    if (!force) {
        if (fp.empty())
            throw CompatError(fmt::format("delta '{}' carries no base fingerprint; pass force to apply it anyway",
                                          readers.front()->path().string()));
        if (file_fingerprint(base) != fp)
            throw CompatError(fmt::format("deltas were computed against a different base than '{}'", base.string()));
    }

    std::vector<TensorSpec> specs;
    for (const auto& info : base_reader.tensors())
        specs.push_back({info.name, resolve_dtype(info.dtype, policy), info.shape});
    CheckpointWriter writer(out, std::move(specs), base_reader.metadata());

    std::vector<float> acc;
    std::vector<float> chunk;
    for (std::size_t t = 0; t < base_reader.tensors().size(); ++t) {
        const auto& info = base_reader.tensors()[t];
        const std::size_t n = static_cast<std::size_t>(info.size());
        acc.resize(n);
        for (std::size_t k = 0; k < readers.size(); ++k) {
            const auto& dinfo = readers[k]->tensors()[t];
            const float c = coeffs[k];
            for (std::size_t first = 0; first < n; first += kStreamChunk) {
                const std::size_t m = std::min(kStreamChunk, n - first);
                chunk.resize(m);
                readers[k]->read_range(dinfo, first, chunk);
                float* a = acc.data() + first;
                if (k == 0) {
                    for (std::size_t i = 0; i < m; ++i)
                        a[i] = chunk[i] * c;
                } else {
                    for (std::size_t i = 0; i < m; ++i)
                        a[i] = a[i] + chunk[i] * c;
                }
            }
        }
        for (std::size_t first = 0; first < n; first += kStreamChunk) {
            const std::size_t m = std::min(kStreamChunk, n - first);
            chunk.resize(m);
            base_reader.read_range(info, first, chunk);
            const float* a = acc.data() + first;
            for (std::size_t i = 0; i < m; ++i)
                chunk[i] = chunk[i] + a[i];
            writer.append(chunk);
        }
    }
    writer.finish();
}

} // namespace langarith
