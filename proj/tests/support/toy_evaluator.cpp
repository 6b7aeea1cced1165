// Copyright (c) 2026, the langarith authors
// SPDX-License-Identifier: Apache-2.0
//

// Stand-in evaluator speaking the sweep protocol. Scores a merged checkpoint
// as -sum((theta - target)^2) in FP64. Other behaviours exercise the failure
// paths of the sweep.

#include <cmath>
#include <iostream>
#include <iterator>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "langarith/tensor_store.hpp"

int main(int argc, char** argv) {
    CLI::App app{"toy evaluator"};
    std::string checkpoint, target, behavior = "quadratic", expect_language;
    double constant = 1.0;
    app.add_option("checkpoint", checkpoint)->required();
    app.add_option("--target", target);
    app.add_option("--behavior", behavior)
        ->check(CLI::IsMember({"quadratic", "constant", "fail", "garbage", "nonfinite", "two-objects", "stderr"}));
    app.add_option("--constant", constant);
    app.add_option("--expect-language", expect_language);
    CLI11_PARSE(app, argc, argv);

    const std::string input((std::istreambuf_iterator<char>(std::cin)), std::istreambuf_iterator<char>());
    nlohmann::json request;
    try {
        request = nlohmann::json::parse(input);
        (void)request.at("lambda").get<double>();
        (void)request.at("mode").get<std::string>();
        (void)request.at("target_language").get<std::string>();
    } catch (const std::exception& e) {
        std::cerr << "bad request: " << e.what() << '\n';
        return 5;
    }
    if (!expect_language.empty() && request["target_language"] != expect_language) {
        std::cerr << "unexpected target language\n";
        return 6;
    }

    if (behavior == "fail") {
        std::cerr << "failing on purpose at lambda " << request["lambda"] << '\n';
        return 7;
    }
    if (behavior == "garbage") {
        std::cout << "not json\n";
        return 0;
    }
    if (behavior == "nonfinite") {
        std::cout << "{\"score\": \"nan\"}\n";
        return 0;
    }
    if (behavior == "two-objects") {
        std::cout << "{\"score\": 1}\n{\"score\": 2}\n";
        return 0;
    }
    if (behavior == "stderr") {
        std::cerr << "diagnostic line\n";
        std::cout << nlohmann::json{{"score", constant}}.dump() << '\n';
        return 0;
    }
    if (behavior == "constant") {
        std::cout << nlohmann::json{{"score", constant}}.dump() << '\n';
        return 0;
    }

    try {
        const auto merged = langarith::load_checkpoint(checkpoint);
        const auto goal = langarith::load_checkpoint(target);
        langarith::require_compat(merged, goal, "toy evaluator");
        double score = 0.0;
        for (const auto& [name, e] : merged) {
            const auto a = e.values();
            const auto b = goal.at(name).values();
            for (std::size_t i = 0; i < a.size(); ++i) {
                const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
                score -= d * d;
            }
        }
        std::cout << nlohmann::json{{"score", score}}.dump() << '\n';
    } catch (const std::exception& e) {
        std::cerr << e.what() << '\n';
        return 2;
    }
    return 0;
}
