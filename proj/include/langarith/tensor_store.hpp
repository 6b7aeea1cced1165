// Copyright (c) 2026, the langarith authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace langarith {

/// Storage dtype of a tensor on disk. In memory every tensor is FP32.
enum class DType { F32, F16 };

std::size_t dtype_width(DType dtype) noexcept;
std::string_view dtype_name(DType dtype) noexcept;
std::optional<DType> parse_dtype(std::string_view name) noexcept;

enum class DtypePolicy { preserve, force_fp32, force_fp16 };

std::optional<DtypePolicy> parse_dtype_policy(std::string_view name) noexcept;

using Shape = std::vector<std::uint64_t>;

/// Product of the dimensions; 1 for a scalar (empty shape).
std::uint64_t element_count(const Shape& shape) noexcept;
std::string format_shape(const Shape& shape);

/**
 * One named tensor. Values are held in FP32; `dtype` records the storage
 * format it was read from (or should be written as under DtypePolicy::preserve).
 */
class TensorEntry {
public:
    TensorEntry(std::string name, DType dtype, Shape shape, std::vector<float> values);

    const std::string& name() const noexcept { return name_; }
    DType dtype() const noexcept { return dtype_; }
    const Shape& shape() const noexcept { return shape_; }
    std::span<const float> values() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }
    std::uint64_t stored_bytes() const noexcept { return values_.size() * dtype_width(dtype_); }

    /// Same name, shape and dtype with new values.
    TensorEntry with_values(std::vector<float> values) const;
    TensorEntry with_dtype(DType dtype) const;

    /// Bitwise comparison of values (NaN payloads and signed zeros included).
    friend bool operator==(const TensorEntry& a, const TensorEntry& b) noexcept;

private:
    std::string name_;
    DType dtype_;
    Shape shape_;
    std::vector<float> values_;
};

using Metadata = std::map<std::string, std::string>;

/// Name-keyed tensors, iterated in ascending lexicographic (canonical) order.
class TensorMap {
public:
    using Entries = std::map<std::string, TensorEntry, std::less<>>;
    using const_iterator = Entries::const_iterator;

    TensorMap() = default;

    /// Adds an entry; throws FormatError on a duplicate name.
    void insert(TensorEntry entry);

    const TensorEntry& at(std::string_view name) const;
    const TensorEntry* find(std::string_view name) const;
    bool contains(std::string_view name) const { return find(name) != nullptr; }

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    const_iterator begin() const noexcept { return entries_.begin(); }
    const_iterator end() const noexcept { return entries_.end(); }

    /// Total element count across entries.
    std::uint64_t element_count() const noexcept;

    const Metadata& metadata() const noexcept { return metadata_; }
    void set_metadata(std::string key, std::string value) { metadata_[std::move(key)] = std::move(value); }
    void set_metadata(Metadata metadata) { metadata_ = std::move(metadata); }

    friend bool operator==(const TensorMap& a, const TensorMap& b) = default;

private:
    Entries entries_;
    Metadata metadata_;
};

struct CompatReport {
    std::vector<std::string> missing_in_a;
    std::vector<std::string> missing_in_b;
    std::vector<std::tuple<std::string, Shape, Shape>> shape_mismatches;
    std::vector<std::tuple<std::string, DType, DType>> dtype_mismatches;

    /// True when nothing at all differs.
    bool empty() const noexcept;
    /// Same names and shapes. Stored dtypes may differ since compute is FP32.
    bool compatible() const noexcept;
    std::string describe() const;
};

CompatReport validate_compat(const TensorMap& a, const TensorMap& b);

/// Throws CompatError carrying describe() unless the maps are compatible.
void require_compat(const TensorMap& a, const TensorMap& b, std::string_view context);

// ---------------------------------------------------------------------------
// Container IO
//
// Layout: u64 little-endian header length N, N bytes of JSON header, then the
// raw little-endian tensor bytes addressed by each entry's data_offsets.

/// Header record of one tensor. Offsets are relative to the data section.
struct TensorInfo {
    std::string name;
    DType dtype;
    Shape shape;
    std::uint64_t begin = 0;
    std::uint64_t end = 0;

    std::uint64_t size() const noexcept { return element_count(shape); }
};

/// Streams tensors out of a container file one at a time.
class CheckpointReader {
public:
    explicit CheckpointReader(const std::filesystem::path& path);

    const std::filesystem::path& path() const noexcept { return path_; }
    /// Header records in canonical order.
    const std::vector<TensorInfo>& tensors() const noexcept { return infos_; }
    const TensorInfo& info(std::string_view name) const;
    const Metadata& metadata() const noexcept { return metadata_; }

    TensorEntry read(const TensorInfo& info);
    TensorEntry read(std::string_view name) { return read(info(name)); }

    /// Reads out.size() elements starting at element `first`, widened to FP32.
    void read_range(const TensorInfo& info, std::uint64_t first, std::span<float> out);

private:
    std::filesystem::path path_;
    std::ifstream file_;
    std::uint64_t data_start_ = 0;
    std::vector<TensorInfo> infos_;
    Metadata metadata_;
    std::vector<std::uint16_t> scratch_;
};

struct TensorSpec {
    std::string name;
    DType dtype;
    Shape shape;
};

/**
 * Writes a container incrementally. Tensor data must be appended in canonical
 * order; the file is written under a temporary name and moved into place by
 * finish(). Destroying an unfinished writer removes the temporary.
 */
class CheckpointWriter {
public:
    CheckpointWriter(const std::filesystem::path& path, std::vector<TensorSpec> specs, const Metadata& metadata);
    ~CheckpointWriter();

    CheckpointWriter(const CheckpointWriter&) = delete;
    CheckpointWriter& operator=(const CheckpointWriter&) = delete;

    /// Canonically ordered specs; append() fills them front to back.
    const std::vector<TensorSpec>& specs() const noexcept { return specs_; }

    /// Appends values to the current tensor, narrowing to its storage dtype.
    void append(std::span<const float> values);
    void finish();

private:
    std::filesystem::path path_;
    std::filesystem::path tmp_path_;
    std::ofstream file_;
    std::vector<TensorSpec> specs_;
    std::size_t current_ = 0;
    std::uint64_t written_ = 0;
    bool finished_ = false;
    std::vector<std::uint16_t> half_buf_;
};

/// Serialized header (length prefix excluded) with the specs laid out in name
/// order, padded with spaces to a multiple of 8 bytes.
std::string build_header(const std::vector<TensorSpec>& specs, const Metadata& metadata);

DType resolve_dtype(DType stored, DtypePolicy policy) noexcept;

TensorMap load_checkpoint(const std::filesystem::path& path);
void save_checkpoint(const TensorMap& map, const std::filesystem::path& path,
                     DtypePolicy policy = DtypePolicy::preserve);

/// Exact bytes save_checkpoint would write.
std::vector<std::uint8_t> serialize(const TensorMap& map, DtypePolicy policy = DtypePolicy::preserve);

} // namespace langarith
