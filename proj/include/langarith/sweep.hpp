// Copyright (c) 2026, the langarith authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "langarith/tensor_store.hpp"
#include "langarith/vector_core.hpp"

namespace langarith {

enum class SweepMode { la, ties };

std::string_view sweep_mode_name(SweepMode mode) noexcept;
std::optional<SweepMode> parse_sweep_mode(std::string_view name) noexcept;

/**
 * λ sweep settings. The grid is start, start+step, ... with both endpoints
 * included. `evaluator` is a shell command in which `{checkpoint}` is replaced
 * by the (quoted) path of the merged checkpoint for each grid point.
 */
struct SweepConfig {
    double grid_start = 0.0;
    double grid_stop = 1.0;
    double step = 0.05;
    std::string evaluator;
    int max_concurrency = 1;
    std::filesystem::path workdir = "langarith_work";
    SweepMode mode = SweepMode::la;
    std::string target_language;
    /// Trim keep fraction used when mode == ties.
    double ties_top_k = 0.2;
    DtypePolicy dtype_policy = DtypePolicy::preserve;
    /// Remove each merged checkpoint once it has been scored.
    bool clean = false;
    /// Skip the base fingerprint check.
    bool force = false;

    /// Defaults for a mode: [0, 1] step 0.05 for la, [0.8, 1.8] step 0.1 for ties.
    static SweepConfig defaults_for(SweepMode mode);
    void validate() const;
};

/// Grid points rounded to 9 decimals; stop is included when within 1e-9 of a point.
std::vector<double> lambda_grid(const SweepConfig& cfg);

struct SweepEntry {
    double lambda = 0.0;
    /// -infinity when the evaluation failed.
    double score = 0.0;
    std::filesystem::path checkpoint;
    int evaluator_exit = 0;
    std::string error;
};

struct SweepReport {
    std::vector<SweepEntry> entries;
    double best_lambda = 0.0;
    double best_score = 0.0;
    SweepConfig config;
};

/// Highest finite score; ties go to the λ closest to 0.5, then the smaller λ.
/// Throws EvaluatorError when no entry has a finite score.
std::pair<double, double> select_best(std::span<const SweepEntry> entries);
inline std::pair<double, double> select_best(const SweepReport& report) { return select_best(report.entries); }

/// Merges, persists and scores every grid point. Individual evaluator
/// failures are recorded in the entries; the report is also written to
/// cfg.workdir as sweep_entries.jsonl and sweep_summary.json.
SweepReport run_sweep(const TensorMap& pre, const DeltaVector& t1, const DeltaVector& t2, const SweepConfig& cfg);

/// File name of the merged checkpoint for a grid point, e.g. merged_lambda_0.30.safetensors.
std::string merged_checkpoint_name(double lambda);

/// Outcome of a single evaluator invocation.
struct EvalOutcome {
    int exit_code = 0;
    std::optional<double> score;
    std::string error;
};

/// Runs the evaluator protocol once: substitutes the checkpoint path, writes
/// `request` to stdin and parses {"score": float} from stdout.
EvalOutcome run_evaluator(const std::string& command_template, const std::filesystem::path& checkpoint,
                          const std::string& request, const std::filesystem::path& stderr_log);

// Related-language lookup

const std::map<std::string, std::string>& related_table();
/// Throws InvalidArgument for codes outside the table.
const std::string& related_language(std::string_view code);

} // namespace langarith
