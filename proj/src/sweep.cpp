// Copyright (c) 2026, the langarith authors
// SPDX-License-Identifier: Apache-2.0
//

#include "langarith/sweep.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <thread>

#include <fmt/core.h>

#include "json.hpp"
#include "langarith/error.hpp"
#include "langarith/fingerprint.hpp"
#include "langarith/serialization.hpp"
#include "langarith/ties_merging.hpp"
#include "subprocess.hpp"

namespace langarith {

namespace {

constexpr double kGridTolerance = 1e-9;
constexpr std::size_t kMaxGridPoints = 100000;

double round9(double x) {
    const double r = std::round(x * 1e9) / 1e9;
    return r == 0.0 ? 0.0 : r; // no -0 in the grid
}

void check_workdir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw IoError(fmt::format("cannot create workdir '{}': {}", dir.string(), ec.message()));
    const auto probe = dir / ".langarith_write_probe";
    {
        std::ofstream f(probe);
        if (!f)
            throw IoError(fmt::format("workdir '{}' is not writable", dir.string()));
    }
    std::filesystem::remove(probe, ec);
}

void write_report_files(const SweepReport& report, bool has_best) {
    const auto& dir = report.config.workdir;
    {
        std::ofstream f(dir / "sweep_entries.jsonl", std::ios::trunc);
        for (const auto& e : report.entries)
            f << nlohmann::json(e).dump() << '\n';
        if (!f)
            throw IoError(fmt::format("cannot write sweep entries to '{}'", dir.string()));
    }
    nlohmann::json summary = report;
    if (!has_best) {
        summary["best_lambda"] = nullptr;
        summary["best_score"] = nullptr;
    }
    std::ofstream f(dir / "sweep_summary.json", std::ios::trunc);
    f << summary.dump(2) << '\n';
    if (!f)
        throw IoError(fmt::format("cannot write sweep summary to '{}'", dir.string()));
}

} // namespace

std::string_view sweep_mode_name(SweepMode mode) noexcept {
    return mode == SweepMode::la ? "la" : "ties";
}

std::optional<SweepMode> parse_sweep_mode(std::string_view name) noexcept {
    if (name == "la")
        return SweepMode::la;
    if (name == "ties")
        return SweepMode::ties;
    return std::nullopt;
}

SweepConfig SweepConfig::defaults_for(SweepMode mode) {
    SweepConfig cfg;
    cfg.mode = mode;
    if (mode == SweepMode::ties) {
        cfg.grid_start = 0.8;
        cfg.grid_stop = 1.8;
        cfg.step = 0.1;
    }
    return cfg;
}

void SweepConfig::validate() const {
    if (!std::isfinite(grid_start) || !std::isfinite(grid_stop) || !std::isfinite(step))
        throw InvalidArgument("grid start, stop and step must be finite");
    if (!(step > 0.0))
        throw InvalidArgument(fmt::format("grid step {} must be positive", step));
    if (grid_start > grid_stop)
        throw InvalidArgument(fmt::format("grid start {} exceeds stop {}", grid_start, grid_stop));
    if ((grid_stop - grid_start) / step >= static_cast<double>(kMaxGridPoints))
        throw InvalidArgument(fmt::format("grid has more than {} points", kMaxGridPoints));
    if (mode == SweepMode::la && (grid_start < 0.0 || grid_stop > 1.0 + kGridTolerance))
        throw InvalidArgument("la sweeps need a grid inside [0, 1]");
    if (max_concurrency < 1)
        throw InvalidArgument(fmt::format("max concurrency {} must be at least 1", max_concurrency));
    if (evaluator.empty())
        throw InvalidArgument("no evaluator command given");
    if (mode == SweepMode::ties && !(ties_top_k > 0.0 && ties_top_k <= 1.0))
        throw InvalidArgument(fmt::format("ties keep fraction {} outside (0, 1]", ties_top_k));
}

std::vector<double> lambda_grid(const SweepConfig& cfg) {
    if (!(cfg.step > 0.0) || !(cfg.grid_start <= cfg.grid_stop) || !std::isfinite(cfg.grid_stop))
        throw InvalidArgument(
            fmt::format("invalid grid: start {} stop {} step {}", cfg.grid_start, cfg.grid_stop, cfg.step));
    const double span = (cfg.grid_stop - cfg.grid_start + kGridTolerance) / cfg.step;
    if (span >= static_cast<double>(kMaxGridPoints))
        throw InvalidArgument(fmt::format("grid has more than {} points", kMaxGridPoints));
    const auto count = static_cast<std::size_t>(std::floor(span)) + 1;
    std::vector<double> grid;
    grid.reserve(count);
    for (std::size_t i = 0; i < count; ++i)
        grid.push_back(round9(cfg.grid_start + static_cast<double>(i) * cfg.step));
    if (cfg.mode == SweepMode::la)
        grid.back() = std::min(grid.back(), 1.0);
    return grid;
}

std::pair<double, double> select_best(std::span<const SweepEntry> entries) {
    const SweepEntry* best = nullptr;
    auto distance = [](double lambda) { return std::llround(std::fabs(lambda - 0.5) * 1e9); };
    for (const auto& e : entries) {
        if (!std::isfinite(e.score))
            continue;
        if (best == nullptr || e.score > best->score) {
            best = &e;
            continue;
        }
        if (e.score < best->score)
            continue;
        const auto de = distance(e.lambda);
        const auto db = distance(best->lambda);
        if (de < db || (de == db && e.lambda < best->lambda))
            best = &e;
    }
    if (best == nullptr)
        throw EvaluatorError("no grid point produced a finite score");
    return {best->lambda, best->score};
}

namespace {

// At least two decimals, at most nine: 0.3 -> "0.30", 0.125 -> "0.125".
std::string lambda_tag(double lambda) {
    std::string v = fmt::format("{:.9f}", round9(lambda));
    const auto dot = v.find('.');
    while (v.size() > dot + 3 && v.back() == '0')
        v.pop_back();
    return v;
}

} // namespace

std::string merged_checkpoint_name(double lambda) { return "merged_lambda_" + lambda_tag(lambda) + ".safetensors"; }

EvalOutcome run_evaluator(const std::string& command_template, const std::filesystem::path& checkpoint,
                          const std::string& request, const std::filesystem::path& stderr_log) {
    static constexpr std::string_view kPlaceholder = "{checkpoint}";
    std::string command = command_template;
    const std::string quoted = detail::shell_quote(checkpoint.string());
    for (auto pos = command.find(kPlaceholder); pos != std::string::npos;
         pos = command.find(kPlaceholder, pos + quoted.size()))
        command.replace(pos, kPlaceholder.size(), quoted);

    EvalOutcome outcome;
    detail::ProcessResult proc;
    try {
        proc = detail::run_shell(command, request, stderr_log);
    } catch (const EvaluatorError& e) {
        outcome.exit_code = -1;
        outcome.error = e.what();
        return outcome;
    }
    outcome.exit_code = proc.exit_code;
    if (proc.exit_code != 0) {
        outcome.error = fmt::format("evaluator exited with status {}", proc.exit_code);
        return outcome;
    }
    try {
        const auto reply = nlohmann::json::parse(proc.stdout_text);
        if (!reply.is_object() || !reply.contains("score") || !reply["score"].is_number())
            throw EvaluatorError("missing numeric \"score\"");
        const double score = reply["score"].get<double>();
        if (!std::isfinite(score))
            throw EvaluatorError("score is not finite");
        outcome.score = score;
    } catch (const std::exception& e) {
        outcome.error = fmt::format("evaluator output is not a {{\"score\": float}} object: {}", e.what());
    }
    return outcome;
}

SweepReport run_sweep(const TensorMap& pre, const DeltaVector& t1, const DeltaVector& t2, const SweepConfig& cfg) {
    cfg.validate();
    const auto grid = lambda_grid(cfg);

    require_compat(pre, t1.tensors, fmt::format("sweep delta '{}'", t1.label));
    require_compat(pre, t2.tensors, fmt::format("sweep delta '{}'", t2.label));
    if (t1.base_fingerprint != t2.base_fingerprint)
        throw CompatError(fmt::format("deltas '{}' and '{}' were computed against different bases", t1.label, t2.label));
    if (!cfg.force && content_fingerprint(pre) != t1.base_fingerprint)
        throw CompatError("sweep deltas were computed against a different base checkpoint");
    check_workdir(cfg.workdir);

    // Trim, election and disjoint mean do not depend on λ.
    std::optional<DeltaVector> ties_merged;
    if (cfg.mode == SweepMode::ties) {
        const DeltaVector trimmed[] = {trim(t1, cfg.ties_top_k), trim(t2, cfg.ties_top_k)};
        ties_merged = disjoint_merge(trimmed, elect_sign(trimmed));
    }

    SweepReport report;
    report.config = cfg;
    report.entries.resize(grid.size());
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t i = next++; i < grid.size(); i = next++) {
            auto& entry = report.entries[i];
            entry.lambda = grid[i];
            entry.score = -std::numeric_limits<double>::infinity();
            entry.checkpoint = cfg.workdir / merged_checkpoint_name(grid[i]);
            try {
                const TensorMap merged = cfg.mode == SweepMode::la
                                             ? la_merge(pre, t1, t2, grid[i], true)
                                             : apply(pre, scale(*ties_merged, grid[i]), true);
                save_checkpoint(merged, entry.checkpoint, cfg.dtype_policy);

                const nlohmann::json request = {
                    {"lambda", grid[i]},
                    {"target_language", cfg.target_language},
                    {"mode", sweep_mode_name(cfg.mode)},
                };
                const auto log = cfg.workdir / ("eval_lambda_" + lambda_tag(grid[i]) + ".log");
                const auto outcome = run_evaluator(cfg.evaluator, entry.checkpoint, request.dump(), log);
                entry.evaluator_exit = outcome.exit_code;
                entry.error = outcome.error;
                if (outcome.score)
                    entry.score = *outcome.score;
            } catch (const std::exception& e) {
                entry.evaluator_exit = -1;
                entry.error = e.what();
            }
            if (cfg.clean) {
                std::error_code ec;
                std::filesystem::remove(entry.checkpoint, ec);
            }
        }
    };

    const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(cfg.max_concurrency), grid.size());
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 1; t < n_threads; ++t)
            pool.emplace_back(worker);
        worker();
    }

    try {
        std::tie(report.best_lambda, report.best_score) = select_best(report);
    } catch (const EvaluatorError&) {
        write_report_files(report, false);
        throw EvaluatorError(fmt::format("all {} grid points failed; see {}", grid.size(),
                                         (cfg.workdir / "sweep_entries.jsonl").string()));
    }
    write_report_files(report, true);
    return report;
}

const std::map<std::string, std::string>& related_table() {
    static const std::map<std::string, std::string> table = {
        {"ar", "sw"}, {"bg", "ru"}, {"de", "fr"}, {"el", "es"}, {"es", "fr"}, {"fr", "es"}, {"hi", "ur"},
        {"ru", "bg"}, {"sw", "ar"}, {"tr", "bg"}, {"ur", "hi"}, {"vi", "ru"}, {"zh", "ar"},
    };
    return table;
}

const std::string& related_language(std::string_view code) {
    const auto& table = related_table();
    auto it = table.find(std::string(code));
    if (it == table.end())
        throw InvalidArgument(fmt::format("unknown language code '{}'", code));
    return it->second;
}

} // namespace langarith
