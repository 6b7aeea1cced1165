// Copyright (c) 2026, the langarith authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "langarith/tensor_store.hpp"

namespace langarith {

/// Metadata keys that carry a delta's identity through a checkpoint file.
inline constexpr const char* kLabelKey = "label";
inline constexpr const char* kBaseFingerprintKey = "base_fingerprint";

/**
 * A parameter difference ft - pre. `base_fingerprint` identifies the base it
 * was computed against; arithmetic is only defined between deltas that share it.
 */
struct DeltaVector {
    TensorMap tensors;
    std::string base_fingerprint;
    std::string label;

    friend bool operator==(const DeltaVector&, const DeltaVector&) = default;
};

/// The delta as a checkpoint: tensors plus label/fingerprint metadata.
TensorMap to_checkpoint(const DeltaVector& delta);
/// Inverse of to_checkpoint. Missing metadata yields empty label/fingerprint.
DeltaVector delta_from_checkpoint(TensorMap map);

DeltaVector diff(const TensorMap& ft, const TensorMap& pre, std::string label);

/// Multiplies every element by `c` rounded to FP32.
DeltaVector scale(const DeltaVector& d, double c);

/// Element-wise FP32 sum in list order. Labels are joined with '+'.
DeltaVector add(std::span<const DeltaVector> ds);

/// pre + d in FP32. Output entries keep pre's storage dtypes and metadata.
/// Unless `force`, d.base_fingerprint must equal content_fingerprint(pre).
TensorMap apply(const TensorMap& pre, const DeltaVector& d, bool force = false);

/// pre + λ·t1 + (1-λ)·t2 for λ in [0, 1].
TensorMap la_merge(const TensorMap& pre, const DeltaVector& t1, const DeltaVector& t2, double lambda,
                   bool force = false);

struct MergeTerm {
    std::string label;
    double weight = 0.0;

    friend bool operator==(const MergeTerm&, const MergeTerm&) = default;
};

/// Weighted sum of labelled deltas. With two normalized terms it is the
/// two-language merge; `target_language` is descriptive metadata only.
struct MergeRecipe {
    std::vector<MergeTerm> terms;
    bool normalize = false;
    std::string target_language;

    /// Throws InvalidArgument on an empty recipe, non-finite weights, or a
    /// zero weight sum under normalize.
    void validate() const;
    /// Weights as used by the merge (rescaled to sum to one under normalize).
    std::vector<double> effective_weights() const;

    friend bool operator==(const MergeRecipe&, const MergeRecipe&) = default;
};

TensorMap multi_merge(const TensorMap& pre, const MergeRecipe& recipe, const std::map<std::string, DeltaVector>& deltas,
                      bool force = false);

struct WeightedDeltaFile {
    std::filesystem::path path;
    double weight = 0.0;
};

/**
 * File-to-file weighted merge, one tensor at a time. Produces the same bytes
 * as loading everything, calling the in-memory merge with the same weights and
 * saving with `policy`. Extra memory is one FP32 accumulator for the largest
 * tensor plus fixed-size IO chunks.
 */
void stream_merge(const std::filesystem::path& base, std::span<const WeightedDeltaFile> deltas,
                  const std::filesystem::path& out, DtypePolicy policy = DtypePolicy::preserve, bool force = false);

} // namespace langarith
