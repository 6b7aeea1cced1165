// Copyright (c) 2026, the langarith authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>

#include "langarith/tensor_store.hpp"

namespace langarith {

/**
 * Incremental SHA-256 over tensor names, shapes and FP32 values in canonical
 * order. The stored dtype does not participate, so an FP16 checkpoint and its
 * FP32 widening share a fingerprint.
 */
class Fingerprinter {
public:
    Fingerprinter();
    ~Fingerprinter();
    Fingerprinter(Fingerprinter&&) noexcept;
    Fingerprinter& operator=(Fingerprinter&&) noexcept;

    void begin_tensor(std::string_view name, const Shape& shape);
    void update(std::span<const float> values);
    /// Lowercase hex digest; the object cannot be reused afterwards.
    std::string finish();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::string content_fingerprint(const TensorMap& map);

/// Same digest as content_fingerprint(load_checkpoint(path)) without holding
/// more than one chunk in memory.
std::string file_fingerprint(const std::filesystem::path& path);

} // namespace langarith
