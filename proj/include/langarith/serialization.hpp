// Copyright (c) 2026, the langarith authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

// JSON forms of the public value types (nlohmann ADL hooks).

#include "json.hpp"
#include "langarith/analysis.hpp"
#include "langarith/sweep.hpp"
#include "langarith/tensor_store.hpp"
#include "langarith/ties_merging.hpp"
#include "langarith/vector_core.hpp"

namespace langarith {

void to_json(nlohmann::json& j, const CompatReport& r);

// {"terms": [{"label": "en", "weight": 0.65}, ...], "normalize": true, "target_language": "es"}
void to_json(nlohmann::json& j, const MergeRecipe& r);
void from_json(const nlohmann::json& j, MergeRecipe& r);

// {"top_k_fraction": 0.2, "lambda": 1.0}
void to_json(nlohmann::json& j, const TiesConfig& c);
void from_json(const nlohmann::json& j, TiesConfig& c);

void to_json(nlohmann::json& j, const SimilarityMatrix& m);
void to_json(nlohmann::json& j, const SparsityReport& r);

/// Failed entries carry "score": null (JSON has no infinities).
void to_json(nlohmann::json& j, const SweepEntry& e);
void to_json(nlohmann::json& j, const SweepConfig& c);
void to_json(nlohmann::json& j, const SweepReport& r);

/// Reads a JSON document; throws InvalidArgument / IoError with the path.
nlohmann::json read_json_file(const std::filesystem::path& path);

} // namespace langarith
