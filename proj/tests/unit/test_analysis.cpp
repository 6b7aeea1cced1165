// Copyright (c) 2026, the langarith authors
// SPDX-License-Identifier: Apache-2.0
//

#include <cmath>

#include "doctest.h"
#include "langarith/analysis.hpp"
#include "langarith/error.hpp"
#include "test_support.hpp"

using namespace langarith;
using testing::single_tensor;

namespace {

DeltaVector delta(std::vector<float> values, const std::string& label = "d") {
    return {single_tensor("w", std::move(values)), "fp", label};
}

} // namespace

TEST_CASE("cosine on hand examples") {
    CHECK(cosine_similarity(delta({1, 0}), delta({0, 1})) == 0.0);
    CHECK(cosine_similarity(delta({1, 1}), delta({-2, -2})) == doctest::Approx(-1.0));
    CHECK(cosine_similarity(delta({3, 4}), delta({4, 3})) == doctest::Approx(24.0 / 25.0));
    CHECK_THROWS_AS(cosine_similarity(delta({0, 0}), delta({1, 0})), InvalidArgument);
}

TEST_CASE("cosine spans all tensors of the flattened vector") {
    TensorMap a, b;
    a.insert(TensorEntry("x", DType::F32, {1}, {1.0f}));
    a.insert(TensorEntry("y", DType::F32, {1}, {0.0f}));
    b.insert(TensorEntry("x", DType::F32, {1}, {1.0f}));
    b.insert(TensorEntry("y", DType::F32, {1}, {1.0f}));
    CHECK(cosine_similarity({a, "", "a"}, {b, "", "b"}) == doctest::Approx(std::sqrt(0.5)));
    TensorMap c;
    c.insert(TensorEntry("x", DType::F32, {1}, {1.0f}));
    CHECK_THROWS_AS(cosine_similarity({a, "", "a"}, {c, "", "c"}), CompatError);
}

TEST_CASE("similarity matrix") {
    const DeltaVector ds[] = {delta({1, 0}, "en"), delta({1, 1}, "fr"), delta({0, 2}, "es")};
    const auto m = similarity_matrix(ds);
    CHECK(m.labels == std::vector<std::string>{"en", "fr", "es"});
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(m.values[i][i] == 1.0);
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(m.values[i][j] == m.values[j][i]);
    }
    CHECK(m.values[0][2] == 0.0);
    CHECK_THROWS_AS(similarity_matrix(std::span<const DeltaVector>(ds, 1)), InvalidArgument);
}

TEST_CASE("sparsity fractions and histogram") {
    const auto d = delta({0.0f, 1e-5f, -1e-3f, 0.5f, -1.0f, 1.0f}, "en");
    const double thresholds[] = {1e-6, 1e-4, 1e-2, 2.0};
    const auto r = sparsity_stats(d, thresholds, 4);
    CHECK(r.label == "en");
    CHECK(r.total_elements == 6);
    CHECK(r.fraction_below[0].second == doctest::Approx(1.0 / 6));
    CHECK(r.fraction_below[1].second == doctest::Approx(2.0 / 6));
    CHECK(r.fraction_below[2].second == doctest::Approx(3.0 / 6));
    CHECK(r.fraction_below[3].second == 1.0);
    REQUIRE(r.histogram.size() == 4);
    CHECK(r.histogram.front().lower == -1.0);
    CHECK(r.histogram.back().upper == 1.0);
    // Bins of width 0.5: [-1,-0.5) [-0.5,0) [0,0.5) [0.5,1]
    CHECK(r.histogram[0].count == 1);
    CHECK(r.histogram[1].count == 1);
    CHECK(r.histogram[2].count == 2);
    CHECK(r.histogram[3].count == 2);
}

TEST_CASE("constant deltas land in one bin") {
    const auto r = sparsity_stats(delta({2.0f, 2.0f, 2.0f}), std::span<const double>{}, 3);
    CHECK(r.histogram[0].count == 3);
    CHECK(r.histogram[1].count + r.histogram[2].count == 0);
}

TEST_CASE("sparsity argument checks") {
    const auto d = delta({1.0f});
    const double descending[] = {1e-2, 1e-4};
    const double negative[] = {-1.0};
    CHECK_THROWS_AS(sparsity_stats(d, descending, 4), InvalidArgument);
    CHECK_THROWS_AS(sparsity_stats(d, negative, 4), InvalidArgument);
    CHECK_THROWS_AS(sparsity_stats(d, std::span<const double>{}, 0), InvalidArgument);
}
