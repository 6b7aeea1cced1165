// Copyright (c) 2026, the langarith authors
// SPDX-License-Identifier: Apache-2.0
//

#include "test_support.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include <unistd.h>

#include "langarith/half.hpp"

namespace testing {

using langarith::TensorEntry;

TempDir::TempDir(const std::string& prefix, const std::filesystem::path& parent) {
    std::random_device rd;
    const auto base = std::filesystem::absolute(parent);
    for (;;) {
        path_ = base / (prefix + "_" + std::to_string(::getpid()) + "_" + std::to_string(rd()));
        if (std::filesystem::create_directory(path_))
            break;
    }
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

std::vector<Shape> random_layout(std::mt19937_64& rng, int max_tensors, std::uint64_t max_elements) {
    std::uniform_int_distribution<int> count(1, max_tensors);
    std::uniform_int_distribution<int> rank(0, 3);
    std::vector<Shape> out(static_cast<std::size_t>(count(rng)));
    for (auto& shape : out) {
        const int r = rank(rng);
        std::uint64_t budget = max_elements;
        for (int d = 0; d < r; ++d) {
            const auto cap = std::max<std::uint64_t>(1, budget);
            const auto dim = std::uniform_int_distribution<std::uint64_t>(1, std::min<std::uint64_t>(cap, 12))(rng);
            shape.push_back(dim);
            budget = std::max<std::uint64_t>(1, budget / dim);
        }
    }
    return out;
}

float random_value(std::mt19937_64& rng) {
    if (std::uniform_int_distribution<int>(0, 15)(rng) == 0)
        return 0.0f;
    const double mag = std::pow(10.0, std::uniform_real_distribution<double>(-6.0, 2.0)(rng));
    const bool neg = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
    return static_cast<float>(neg ? -mag : mag);
}

TensorMap random_map(std::mt19937_64& rng, const std::vector<Shape>& layout, DType dtype) {
    TensorMap map;
    for (std::size_t i = 0; i < layout.size(); ++i) {
        std::vector<float> values(static_cast<std::size_t>(langarith::element_count(layout[i])));
        for (auto& v : values)
            v = random_value(rng);
        std::ostringstream name;
        name << "layer" << i << ".adapter.w";
        map.insert(TensorEntry(name.str(), dtype, layout[i], std::move(values)));
    }
    return dtype == DType::F16 ? round_to_half(map) : map;
}

TensorMap perturb(std::mt19937_64& rng, const TensorMap& pre) {
    std::uniform_real_distribution<float> u(-0.49f, 0.49f);
    TensorMap out;
    for (const auto& [name, e] : pre) {
        std::vector<float> values(e.values().begin(), e.values().end());
        for (auto& v : values)
            v = v == 0.0f ? random_value(rng) : v * (1.0f + u(rng));
        out.insert(e.with_values(std::move(values)));
    }
    return out;
}

TensorMap round_to_half(const TensorMap& map) {
    TensorMap out;
    for (const auto& [name, e] : map) {
        std::vector<float> values(e.values().begin(), e.values().end());
        for (auto& v : values)
            v = langarith::half::to_float(langarith::half::from_float(v));
        out.insert(e.with_values(std::move(values)));
    }
    out.set_metadata(map.metadata());
    return out;
}

bool same_bits(const TensorMap& a, const TensorMap& b, std::string* why) {
    auto fail = [&](const std::string& msg) {
        if (why != nullptr)
            *why = msg;
        return false;
    };
    if (a.size() != b.size())
        return fail("tensor count differs");
    for (const auto& [name, ea] : a) {
        const auto* eb = b.find(name);
        if (eb == nullptr)
            return fail("missing " + name);
        if (ea.shape() != eb->shape())
            return fail("shape differs for " + name);
        const auto x = ea.values();
        const auto y = eb->values();
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (std::bit_cast<std::uint32_t>(x[i]) != std::bit_cast<std::uint32_t>(y[i])) {
                std::ostringstream msg;
                msg.precision(9);
                msg << name << "[" << i << "]: " << x[i] << " vs " << y[i];
                return fail(msg.str());
            }
        }
    }
    return true;
}

std::uint64_t ulp_distance(float a, float b) {
    // Map the sign-magnitude encoding onto a monotone integer line.
    auto key = [](float f) {
        const auto bits = std::bit_cast<std::uint32_t>(f);
        return (bits & 0x80000000u) ? static_cast<std::int64_t>(0x80000000u) - static_cast<std::int64_t>(bits)
                                    : static_cast<std::int64_t>(bits);
    };
    const auto d = key(a) - key(b);
    return static_cast<std::uint64_t>(d < 0 ? -d : d);
}

namespace {

double half_value(std::uint16_t h) {
    const int sign = h >> 15;
    const int exp = (h >> 10) & 0x1f;
    const int frac = h & 0x3ff;
    double v;
    if (exp == 0)
        v = std::ldexp(frac, -24);
    else if (exp == 31)
        v = frac ? NAN : INFINITY;
    else
        v = std::ldexp(1024 + frac, exp - 25);
    return sign ? -v : v;
}

} // namespace

std::uint16_t half_oracle_nearest(double x) {
    if (std::isnan(x))
        return 0x7e00;
    const std::uint16_t sign = std::signbit(x) ? 0x8000 : 0;
    const double ax = std::fabs(x);
    // Beyond the midpoint between 65504 and 65536 the nearest is infinity.
    if (ax >= 65520.0)
        return sign | 0x7c00;
    std::uint16_t best = 0;
    double best_err = INFINITY;
    for (std::uint32_t h = 0; h < 0x7c00; ++h) {
        const double err = std::fabs(half_value(static_cast<std::uint16_t>(h)) - ax);
        if (err < best_err || (err == best_err && (h & 1) == 0)) {
            best = static_cast<std::uint16_t>(h);
            best_err = err;
        }
    }
    return sign | best;
}

TensorMap ties_reference(const TensorMap& pre, const std::vector<DeltaVector>& deltas, double keep_fraction,
                         double lambda) {
    // Flatten in name order.
    std::vector<std::string> names;
    std::vector<std::size_t> offsets{0};
    for (const auto& [name, e] : pre) {
        names.push_back(name);
        offsets.push_back(offsets.back() + e.size());
    }
    const std::size_t n = offsets.back();

    std::vector<std::vector<double>> trimmed;
    for (const auto& d : deltas) {
        std::vector<double> flat;
        for (const auto& name : names)
            for (float v : d.tensors.at(name).values())
                flat.push_back(v);
        std::size_t k = n == 0 ? 0 : static_cast<std::size_t>(std::floor(keep_fraction * static_cast<double>(n) + 0.5));
        k = std::clamp<std::size_t>(k, n == 0 ? 0 : 1, n);
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return std::fabs(flat[a]) > std::fabs(flat[b]); });
        std::vector<double> kept(n, 0.0);
        for (std::size_t i = 0; i < k; ++i)
            kept[order[i]] = flat[order[i]];
        trimmed.push_back(std::move(kept));
    }

    std::vector<float> merged(n, 0.0f);
    for (std::size_t i = 0; i < n; ++i) {
        double total = 0.0;
        for (const auto& t : trimmed)
            total += t[i];
        const int sign = total > 0.0 ? 1 : total < 0.0 ? -1 : 0;
        if (sign == 0)
            continue;
        double sum = 0.0;
        int count = 0;
        for (const auto& t : trimmed) {
            if ((sign > 0 && t[i] > 0.0) || (sign < 0 && t[i] < 0.0)) {
                sum += t[i];
                ++count;
            }
        }
        merged[i] = static_cast<float>(sum / count);
    }

    const float lf = static_cast<float>(lambda);
    TensorMap out;
    for (std::size_t t = 0; t < names.size(); ++t) {
        const auto& e = pre.at(names[t]);
        std::vector<float> values(e.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            const float scaled = merged[offsets[t] + i] * lf;
            values[i] = e.values()[i] + scaled;
        }
        out.insert(e.with_values(std::move(values)));
    }
    return out;
}

TensorMap single_tensor(const std::string& name, std::vector<float> values) {
    TensorMap m;
    const Shape shape{values.size()};
    m.insert(TensorEntry(name, DType::F32, shape, std::move(values)));
    return m;
}

} // namespace testing
