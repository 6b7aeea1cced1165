// Copyright (c) 2026, the langarith authors
// SPDX-License-Identifier: Apache-2.0
//

#include "langarith/serialization.hpp"

#include <cmath>
#include <fstream>

#include <fmt/core.h>

#include "langarith/error.hpp"

namespace langarith {

namespace {

template <class T>
T field(const nlohmann::json& j, const char* key, const char* what) {
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(fmt::format("{}: bad or missing field '{}': {}", what, key, e.what()));
    }
}

std::string policy_name(DtypePolicy p) {
    switch (p) {
    case DtypePolicy::force_fp32:
        return "force_fp32";
    case DtypePolicy::force_fp16:
        return "force_fp16";
    case DtypePolicy::preserve:
        break;
    }
    return "preserve";
}

} // namespace

void to_json(nlohmann::json& j, const CompatReport& r) {
    j = nlohmann::json::object();
    j["compatible"] = r.compatible();
    j["missing_in_a"] = r.missing_in_a;
    j["missing_in_b"] = r.missing_in_b;
    auto shapes = nlohmann::json::array();
    for (const auto& [name, a, b] : r.shape_mismatches)
        shapes.push_back({{"name", name}, {"shape_a", a}, {"shape_b", b}});
    j["shape_mismatches"] = std::move(shapes);
    auto dtypes = nlohmann::json::array();
    for (const auto& [name, a, b] : r.dtype_mismatches)
        dtypes.push_back({{"name", name}, {"dtype_a", dtype_name(a)}, {"dtype_b", dtype_name(b)}});
    j["dtype_mismatches"] = std::move(dtypes);
}

void to_json(nlohmann::json& j, const MergeRecipe& r) {
    auto terms = nlohmann::json::array();
    for (const auto& t : r.terms)
        terms.push_back({{"label", t.label}, {"weight", t.weight}});
    j = {{"terms", std::move(terms)}, {"normalize", r.normalize}, {"target_language", r.target_language}};
}

void from_json(const nlohmann::json& j, MergeRecipe& r) {
    if (!j.is_object() || !j.contains("terms") || !j["terms"].is_array())
        throw InvalidArgument("merge recipe needs a \"terms\" array");
    r = MergeRecipe{};
    for (const auto& t : j["terms"])
        r.terms.push_back({field<std::string>(t, "label", "recipe term"), field<double>(t, "weight", "recipe term")});
    r.normalize = j.value("normalize", false);
    r.target_language = j.value("target_language", std::string{});
}

void to_json(nlohmann::json& j, const TiesConfig& c) {
    j = {{"top_k_fraction", c.top_k_fraction}, {"lambda", c.lambda}};
}

void from_json(const nlohmann::json& j, TiesConfig& c) {
    if (!j.is_object())
        throw InvalidArgument("ties config must be a JSON object");
    c = TiesConfig{};
    if (j.contains("top_k_fraction"))
        c.top_k_fraction = field<double>(j, "top_k_fraction", "ties config");
    if (j.contains("lambda"))
        c.lambda = field<double>(j, "lambda", "ties config");
    if (j.contains("sign_tie_rule") && field<std::string>(j, "sign_tie_rule", "ties config") != "zero")
        throw InvalidArgument("ties config: only the \"zero\" sign tie rule is supported");
}

void to_json(nlohmann::json& j, const SimilarityMatrix& m) {
    j = {{"labels", m.labels}, {"values", m.values}};
}

void to_json(nlohmann::json& j, const SparsityReport& r) {
    auto fractions = nlohmann::json::array();
    for (const auto& [t, f] : r.fraction_below)
        fractions.push_back({{"threshold", t}, {"fraction", f}});
    auto hist = nlohmann::json::array();
    for (const auto& b : r.histogram)
        hist.push_back({{"lower", b.lower}, {"upper", b.upper}, {"count", b.count}});
    j = {{"label", r.label},
         {"total_elements", r.total_elements},
         {"fraction_below", std::move(fractions)},
         {"histogram", std::move(hist)}};
}

void to_json(nlohmann::json& j, const SweepEntry& e) {
    j = {{"lambda", e.lambda},
         {"score", std::isfinite(e.score) ? nlohmann::json(e.score) : nlohmann::json(nullptr)},
         {"checkpoint", e.checkpoint.string()},
         {"evaluator_exit", e.evaluator_exit}};
    if (!e.error.empty())
        j["error"] = e.error;
}

void to_json(nlohmann::json& j, const SweepConfig& c) {
    j = {{"grid_start", c.grid_start},
         {"grid_stop", c.grid_stop},
         {"step", c.step},
         {"evaluator", c.evaluator},
         {"max_concurrency", c.max_concurrency},
         {"workdir", c.workdir.string()},
         {"mode", sweep_mode_name(c.mode)},
         {"target_language", c.target_language},
         {"dtype_policy", policy_name(c.dtype_policy)},
         {"tie_break", "max score, then |lambda - 0.5| smallest, then smaller lambda"},
         {"clean", c.clean}};
    if (c.mode == SweepMode::ties)
        j["ties_top_k"] = c.ties_top_k;
}

void to_json(nlohmann::json& j, const SweepReport& r) {
    j = {{"entries", r.entries}, {"best_lambda", r.best_lambda}, {"best_score", r.best_score}, {"config", r.config}};
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f)
        throw IoError(fmt::format("cannot open '{}'", path.string()));
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(fmt::format("'{}' is not valid JSON: {}", path.string(), e.what()));
    }
}

} // namespace langarith
