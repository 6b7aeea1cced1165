// Copyright (c) 2026, the langarith authors
// SPDX-License-Identifier: Apache-2.0
//

#include "langarith/fingerprint.hpp"

#include <algorithm>
#include <cstdint>
#include <vector>

#include <openssl/evp.h>

#include "langarith/error.hpp"

namespace langarith {

struct Fingerprinter::Impl {
    EVP_MD_CTX* ctx = nullptr;
    ~Impl() { EVP_MD_CTX_free(ctx); }
};

Fingerprinter::Fingerprinter() : impl_(std::make_unique<Impl>()) {
    impl_->ctx = EVP_MD_CTX_new();
    if (impl_->ctx == nullptr || EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 initialisation failed");
}

Fingerprinter::~Fingerprinter() = default;
Fingerprinter::Fingerprinter(Fingerprinter&&) noexcept = default;
Fingerprinter& Fingerprinter::operator=(Fingerprinter&&) noexcept = default;

void Fingerprinter::begin_tensor(std::string_view name, const Shape& shape) {
    const std::uint64_t name_len = name.size();
    const std::uint64_t rank = shape.size();
    EVP_DigestUpdate(impl_->ctx, &name_len, sizeof(name_len));
    EVP_DigestUpdate(impl_->ctx, name.data(), name.size());
    EVP_DigestUpdate(impl_->ctx, &rank, sizeof(rank));
    EVP_DigestUpdate(impl_->ctx, shape.data(), shape.size() * sizeof(std::uint64_t));
}

void Fingerprinter::update(std::span<const float> values) {
    EVP_DigestUpdate(impl_->ctx, values.data(), values.size_bytes());
}

std::string Fingerprinter::finish() {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(impl_->ctx, digest, &len);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xF]);
    }
    return out;
}

std::string content_fingerprint(const TensorMap& map) {
    Fingerprinter fp;
    for (const auto& [name, entry] : map) {
        fp.begin_tensor(name, entry.shape());
        fp.update(entry.values());
    }
    return fp.finish();
}

std::string file_fingerprint(const std::filesystem::path& path) {
    constexpr std::size_t kChunk = 1u << 20;
    CheckpointReader reader(path);
    Fingerprinter fp;
    std::vector<float> buf;
    for (const auto& info : reader.tensors()) {
        fp.begin_tensor(info.name, info.shape);
        for (std::uint64_t first = 0; first < info.size(); first += kChunk) {
            buf.resize(static_cast<std::size_t>(std::min<std::uint64_t>(kChunk, info.size() - first)));
            reader.read_range(info, first, buf);
            fp.update(buf);
        }
    }
    return fp.finish();
}

} // namespace langarith
