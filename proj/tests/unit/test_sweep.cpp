// Copyright (c) 2026, the langarith authors
// SPDX-License-Identifier: Apache-2.0
//

#include <cmath>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "json.hpp"
#include "langarith/error.hpp"
#include "langarith/serialization.hpp"
#include "langarith/sweep.hpp"
#include "test_support.hpp"

using namespace langarith;
using testing::single_tensor;
using testing::TempDir;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Toy {
    TensorMap pre = single_tensor("w", {0.0f, 0.0f});
    DeltaVector t1;
    DeltaVector t2;
    std::filesystem::path target;
};

Toy make_toy(const TempDir& dir) {
    Toy toy;
    toy.t1 = diff(single_tensor("w", {1.0f, 0.0f}), toy.pre, "en");
    toy.t2 = diff(single_tensor("w", {0.0f, 1.0f}), toy.pre, "sw");
    toy.target = dir / "target.safetensors";
    save_checkpoint(single_tensor("w", {0.3f, 0.7f}), toy.target);
    return toy;
}

std::string toy_command(const Toy& toy, const std::string& extra = "") {
    return std::string(LANGARITH_TOY_EVALUATOR) + " {checkpoint} --target " + toy.target.string() + extra;
}

std::vector<SweepEntry> entries(std::initializer_list<std::pair<double, double>> xs) {
    std::vector<SweepEntry> out;
    for (const auto& [l, s] : xs)
        out.push_back({l, s, {}, 0, {}});
    return out;
}

} // namespace

TEST_CASE("grid includes both endpoints and is rounded") {
    SweepConfig cfg;
    const auto g = lambda_grid(cfg);
    REQUIRE(g.size() == 21);
    CHECK(g.front() == 0.0);
    CHECK(g[6] == 0.3);
    CHECK(g[7] == 0.35);
    CHECK(g.back() == 1.0);
    cfg.step = 0.1;
    CHECK(lambda_grid(cfg).size() == 11);
    CHECK(lambda_grid(cfg)[3] == 0.3);
    cfg.step = 0.3;
    CHECK(lambda_grid(cfg) == std::vector<double>{0.0, 0.3, 0.6, 0.9});
    const auto ties = lambda_grid(SweepConfig::defaults_for(SweepMode::ties));
    CHECK(ties.size() == 11);
    CHECK(ties.back() == 1.8);
}

TEST_CASE("config validation") {
    SweepConfig cfg;
    cfg.evaluator = "true";
    CHECK_NOTHROW(cfg.validate());
    auto bad = cfg;
    bad.step = 0.0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = cfg;
    bad.grid_stop = 1.5;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad.mode = SweepMode::ties;
    CHECK_NOTHROW(bad.validate());
    bad = cfg;
    bad.max_concurrency = 0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = cfg;
    bad.evaluator.clear();
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = cfg;
    bad.step = 1e-7;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("best selection and tie-breaks") {
    CHECK(select_best(entries({{0.1, 1.0}, {0.2, 3.0}, {0.3, 2.0}})) == std::pair{0.2, 3.0});
    // Equal scores go to the point nearest 0.5, then the smaller lambda.
    CHECK(select_best(entries({{0.1, 1.0}, {0.45, 1.0}, {0.9, 1.0}})).first == 0.45);
    CHECK(select_best(entries({{0.4, 1.0}, {0.6, 1.0}})).first == 0.4);
    CHECK(select_best(entries({{0.6, 1.0}, {0.4, 1.0}})).first == 0.4);
    CHECK(select_best(entries({{0.2, kNegInf}, {0.9, -5.0}})).first == 0.9);
    CHECK_THROWS_AS(select_best(entries({{0.2, kNegInf}})), EvaluatorError);
}

TEST_CASE("checkpoint names carry two to nine decimals") {
    CHECK(merged_checkpoint_name(0.3) == "merged_lambda_0.30.safetensors");
    CHECK(merged_checkpoint_name(1.0) == "merged_lambda_1.00.safetensors");
    CHECK(merged_checkpoint_name(0.125) == "merged_lambda_0.125.safetensors");
}

TEST_CASE("evaluator protocol") {
    TempDir dir;
    const auto toy = make_toy(dir);
    save_checkpoint(single_tensor("w", {0.4f, 0.7f}), dir / "m.safetensors");
    const std::string request = R"({"lambda":0.4,"target_language":"sw","mode":"la"})";
    const auto log = dir / "log.txt";

    const auto ok = run_evaluator(toy_command(toy), dir / "m.safetensors", request, log);
    REQUIRE(ok.score);
    CHECK(*ok.score == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(ok.exit_code == 0);

    auto outcome = [&](const std::string& behavior) {
        return run_evaluator(toy_command(toy, " --behavior " + behavior), dir / "m.safetensors", request, log);
    };
    const auto fail = outcome("fail");
    CHECK_FALSE(fail.score);
    CHECK(fail.exit_code == 7);
    CHECK_FALSE(outcome("garbage").score);
    CHECK_FALSE(outcome("nonfinite").score);
    CHECK_FALSE(outcome("two-objects").score);
    const auto noisy = outcome("stderr");
    CHECK(noisy.score);
    std::ifstream logged(log);
    const std::string text((std::istreambuf_iterator<char>(logged)), std::istreambuf_iterator<char>());
    CHECK(text.find("diagnostic line") != std::string::npos);

    const auto missing = run_evaluator("/nonexistent/evaluator {checkpoint}", dir / "m.safetensors", request, log);
    CHECK_FALSE(missing.score);
    CHECK(missing.exit_code == 127);
}

TEST_CASE("checkpoint paths are shell quoted") {
    TempDir dir;
    const auto toy = make_toy(dir);
    const auto odd = dir / "it's a $file.safetensors";
    save_checkpoint(single_tensor("w", {0.3f, 0.7f}), odd);
    const auto r = run_evaluator(toy_command(toy), odd, R"({"lambda":0,"target_language":"","mode":"la"})",
                                 dir / "log.txt");
    REQUIRE(r.score);
    CHECK(*r.score == doctest::Approx(0.0));
}

TEST_CASE("sweep writes entries, summary and checkpoints") {
    TempDir dir;
    const auto toy = make_toy(dir);
    SweepConfig cfg;
    cfg.step = 0.1;
    cfg.evaluator = toy_command(toy, " --expect-language sw");
    cfg.target_language = "sw";
    cfg.workdir = dir / "work";
    cfg.max_concurrency = 3;
    const auto report = run_sweep(toy.pre, toy.t1, toy.t2, cfg);
    CHECK(report.best_lambda == 0.3);
    REQUIRE(report.entries.size() == 11);
    for (std::size_t i = 0; i < report.entries.size(); ++i) {
        CHECK(report.entries[i].lambda == lambda_grid(cfg)[i]);
        CHECK(std::isfinite(report.entries[i].score));
        CHECK(std::filesystem::exists(report.entries[i].checkpoint));
    }
    CHECK(std::filesystem::exists(cfg.workdir / "merged_lambda_0.30.safetensors"));

    std::ifstream jsonl(cfg.workdir / "sweep_entries.jsonl");
    int lines = 0;
    for (std::string line; std::getline(jsonl, line); ++lines)
        CHECK(nlohmann::json::parse(line).contains("score"));
    CHECK(lines == 11);
    const auto summary = read_json_file(cfg.workdir / "sweep_summary.json");
    CHECK(summary["best_lambda"] == 0.3);
    CHECK(summary["config"]["mode"] == "la");
}

TEST_CASE("failed points are recorded and the rest still rank") {
    TempDir dir;
    const auto toy = make_toy(dir);
    SweepConfig cfg;
    cfg.step = 0.5;
    // Fails only for the lambda = 0.5 request.
    cfg.evaluator = "if grep -q '\"lambda\":0.5' ; then exit 9; fi; echo '{\"score\": 1.0}'";
    cfg.workdir = dir / "work";
    cfg.clean = true;
    const auto report = run_sweep(toy.pre, toy.t1, toy.t2, cfg);
    REQUIRE(report.entries.size() == 3);
    CHECK(report.entries[1].score == kNegInf);
    CHECK(report.entries[1].evaluator_exit == 9);
    CHECK(report.best_lambda == 0.0);
    CHECK_FALSE(std::filesystem::exists(report.entries[0].checkpoint));
    const auto line = nlohmann::json(report.entries[1]);
    CHECK(line["score"].is_null());
}

TEST_CASE("a sweep where every point fails raises an evaluator error") {
    TempDir dir;
    const auto toy = make_toy(dir);
    SweepConfig cfg;
    cfg.step = 0.5;
    cfg.evaluator = toy_command(toy, " --behavior fail");
    cfg.workdir = dir / "work";
    CHECK_THROWS_AS(run_sweep(toy.pre, toy.t1, toy.t2, cfg), EvaluatorError);
    CHECK(std::filesystem::exists(cfg.workdir / "sweep_entries.jsonl"));
    CHECK(read_json_file(cfg.workdir / "sweep_summary.json")["best_lambda"].is_null());
}

TEST_CASE("sweep refuses deltas from another base and an unusable workdir") {
    TempDir dir;
    const auto toy = make_toy(dir);
    SweepConfig cfg;
    cfg.evaluator = "true";
    cfg.workdir = dir / "work";
    const auto other = single_tensor("w", {1.0f, 1.0f});
    CHECK_THROWS_AS(run_sweep(other, toy.t1, toy.t2, cfg), CompatError);
    std::ofstream(dir / "file") << "x";
    cfg.workdir = dir / "file";
    CHECK_THROWS_AS(run_sweep(toy.pre, toy.t1, toy.t2, cfg), IoError);
}

TEST_CASE("ties mode scales the disjoint merge by each grid value") {
    TempDir dir;
    const auto toy = make_toy(dir);
    SweepConfig cfg = SweepConfig::defaults_for(SweepMode::ties);
    cfg.ties_top_k = 1.0;
    cfg.evaluator = toy_command(toy);
    cfg.workdir = dir / "work";
    const auto report = run_sweep(toy.pre, toy.t1, toy.t2, cfg);
    // Merged delta is [1, 1], so each point is [l, l]; best near l = 0.5 is
    // outside the grid, so the smallest grid value 0.8 wins.
    CHECK(report.best_lambda == 0.8);
    const auto m = load_checkpoint(cfg.workdir / "merged_lambda_1.20.safetensors");
    CHECK(m.at("w").values()[0] == 1.2f);
    CHECK(m.at("w").values()[1] == 1.2f);
}

TEST_CASE("related languages") {
    CHECK(related_table().size() == 13);
    CHECK(related_language("es") == "fr");
    CHECK_THROWS_AS(related_language("en"), InvalidArgument);
}
