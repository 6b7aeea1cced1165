// Copyright (c) 2026, the langarith authors
// SPDX-License-Identifier: Apache-2.0
//

#include "langarith/tensor_store.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <limits>
#include <set>

#include <fmt/core.h>

#include "json.hpp"
#include "langarith/error.hpp"
#include "langarith/half.hpp"

static_assert(std::endian::native == std::endian::little, "container IO assumes a little-endian host");

namespace langarith {

namespace {

constexpr std::uint64_t kMaxHeaderBytes = 100ull << 20;
constexpr std::size_t kChunkElements = 1u << 18;
constexpr std::string_view kMetadataKey = "__metadata__";

void encode_into(std::vector<std::uint8_t>& out, std::span<const float> values, DType dtype, const std::string& name) {
    const std::size_t start = out.size();
    if (dtype == DType::F32) {
        out.resize(start + values.size_bytes());
        std::memcpy(out.data() + start, values.data(), values.size_bytes());
        return;
    }
    out.resize(start + values.size() * sizeof(std::uint16_t));
    for (std::size_t i = 0; i < values.size(); ++i) {
        const std::uint16_t h = half::from_float_checked(values[i], name.c_str());
        std::memcpy(out.data() + start + i * sizeof(h), &h, sizeof(h));
    }
}

std::vector<TensorSpec> canonical_specs(std::vector<TensorSpec> specs) {
    std::sort(specs.begin(), specs.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (specs[i].name.empty())
            throw FormatError("tensor names must be nonempty");
        if (specs[i].name == kMetadataKey)
            throw FormatError("tensor name '__metadata__' is reserved");
        if (i > 0 && specs[i].name == specs[i - 1].name)
            throw FormatError(fmt::format("duplicate tensor name '{}'", specs[i].name));
    }
    return specs;
}

std::vector<TensorSpec> specs_of(const TensorMap& map, DtypePolicy policy) {
    std::vector<TensorSpec> specs;
    specs.reserve(map.size());
    for (const auto& [name, entry] : map)
        specs.push_back({name, resolve_dtype(entry.dtype(), policy), entry.shape()});
    return specs;
}

std::uint64_t as_offset(const nlohmann::json& v, const std::string& name, const char* field) {
    if (!v.is_number_unsigned())
        throw FormatError(fmt::format("tensor '{}': {} must hold nonnegative integers", name, field));
    return v.get<std::uint64_t>();
}

} // namespace

std::size_t dtype_width(DType dtype) noexcept {
    return dtype == DType::F32 ? 4 : 2;
}

std::string_view dtype_name(DType dtype) noexcept {
    return dtype == DType::F32 ? "F32" : "F16";
}

std::optional<DType> parse_dtype(std::string_view name) noexcept {
    if (name == "F32")
        return DType::F32;
    if (name == "F16")
        return DType::F16;
    return std::nullopt;
}

std::optional<DtypePolicy> parse_dtype_policy(std::string_view name) noexcept {
    if (name == "preserve")
        return DtypePolicy::preserve;
    if (name == "fp32" || name == "force_fp32")
        return DtypePolicy::force_fp32;
    if (name == "fp16" || name == "force_fp16")
        return DtypePolicy::force_fp16;
    return std::nullopt;
}

DType resolve_dtype(DType stored, DtypePolicy policy) noexcept {
    switch (policy) {
    case DtypePolicy::force_fp32:
        return DType::F32;
    case DtypePolicy::force_fp16:
        return DType::F16;
    case DtypePolicy::preserve:
        break;
    }
    return stored;
}

std::uint64_t element_count(const Shape& shape) noexcept {
    std::uint64_t n = 1;
    for (auto d : shape)
        n *= d;
    return n;
}

std::string format_shape(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i)
        s += fmt::format("{}{}", i ? ", " : "", shape[i]);
    return s + "]";
}

// -- TensorEntry -------------------------------------------------------------

TensorEntry::TensorEntry(std::string name, DType dtype, Shape shape, std::vector<float> values)
    : name_(std::move(name)), dtype_(dtype), shape_(std::move(shape)), values_(std::move(values)) {
    if (name_.empty())
        throw FormatError("tensor names must be nonempty");
    if (values_.size() != element_count(shape_))
        throw FormatError(fmt::format("tensor '{}': {} values for shape {}", name_, values_.size(), format_shape(shape_)));
}

TensorEntry TensorEntry::with_values(std::vector<float> values) const {
    return TensorEntry(name_, dtype_, shape_, std::move(values));
}

TensorEntry TensorEntry::with_dtype(DType dtype) const {
    return TensorEntry(name_, dtype, shape_, values_);
}

bool operator==(const TensorEntry& a, const TensorEntry& b) noexcept {
    return a.name_ == b.name_ && a.dtype_ == b.dtype_ && a.shape_ == b.shape_ && a.values_.size() == b.values_.size() &&
           std::memcmp(a.values_.data(), b.values_.data(), a.values_.size() * sizeof(float)) == 0;
}

// -- TensorMap ---------------------------------------------------------------

void TensorMap::insert(TensorEntry entry) {
    if (entry.name() == kMetadataKey)
        throw FormatError("tensor name '__metadata__' is reserved");
    std::string name = entry.name();
    auto [it, inserted] = entries_.try_emplace(std::move(name), std::move(entry));
    if (!inserted)
        throw FormatError(fmt::format("duplicate tensor name '{}'", it->first));
}

const TensorEntry& TensorMap::at(std::string_view name) const {
    if (const auto* e = find(name))
        return *e;
    throw CompatError(fmt::format("no tensor named '{}'", name));
}

const TensorEntry* TensorMap::find(std::string_view name) const {
    auto it = entries_.find(name);
    return it == entries_.end() ? nullptr : &it->second;
}

std::uint64_t TensorMap::element_count() const noexcept {
    std::uint64_t n = 0;
    for (const auto& [_, e] : entries_)
        n += e.size();
    return n;
}

// -- Compatibility -----------------------------------------------------------

bool CompatReport::empty() const noexcept {
    return compatible() && dtype_mismatches.empty();
}

bool CompatReport::compatible() const noexcept {
    return missing_in_a.empty() && missing_in_b.empty() && shape_mismatches.empty();
}

std::string CompatReport::describe() const {
    std::string s;
    auto sep = [&] { return s.empty() ? "" : "; "; };
    for (const auto& n : missing_in_a)
        s += fmt::format("{}'{}' missing in first", sep(), n);
    for (const auto& n : missing_in_b)
        s += fmt::format("{}'{}' missing in second", sep(), n);
    for (const auto& [n, a, b] : shape_mismatches)
        s += fmt::format("{}'{}' shape {} vs {}", sep(), n, format_shape(a), format_shape(b));
    for (const auto& [n, a, b] : dtype_mismatches)
        s += fmt::format("{}'{}' dtype {} vs {}", sep(), n, dtype_name(a), dtype_name(b));
    return s.empty() ? "compatible" : s;
}

CompatReport validate_compat(const TensorMap& a, const TensorMap& b) {
    CompatReport report;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() || ib != b.end()) {
        if (ib == b.end() || (ia != a.end() && ia->first < ib->first)) {
            report.missing_in_b.push_back(ia->first);
            ++ia;
        } else if (ia == a.end() || ib->first < ia->first) {
            report.missing_in_a.push_back(ib->first);
            ++ib;
        } else {
            const auto& ea = ia->second;
            const auto& eb = ib->second;
            if (ea.shape() != eb.shape())
                report.shape_mismatches.emplace_back(ia->first, ea.shape(), eb.shape());
            if (ea.dtype() != eb.dtype())
                report.dtype_mismatches.emplace_back(ia->first, ea.dtype(), eb.dtype());
            ++ia;
            ++ib;
        }
    }
    return report;
}

void require_compat(const TensorMap& a, const TensorMap& b, std::string_view context) {
    auto report = validate_compat(a, b);
    if (!report.compatible())
        throw CompatError(fmt::format("{}: incompatible tensors: {}", context, report.describe()));
}

// -- Header ------------------------------------------------------------------

std::string build_header(const std::vector<TensorSpec>& specs, const Metadata& metadata) {
    nlohmann::json header = nlohmann::json::object();
    std::uint64_t offset = 0;
    for (const auto& spec : canonical_specs(specs)) {
        const std::uint64_t bytes = element_count(spec.shape) * dtype_width(spec.dtype);
        header[spec.name] = {
            {"dtype", dtype_name(spec.dtype)},
            {"shape", spec.shape},
            {"data_offsets", {offset, offset + bytes}},
        };
        offset += bytes;
    }
    if (!metadata.empty())
        header[std::string(kMetadataKey)] = metadata;
    std::string text = header.dump();
    text.append((8 - text.size() % 8) % 8, ' ');
    return text;
}

// -- Reader ------------------------------------------------------------------

CheckpointReader::CheckpointReader(const std::filesystem::path& path) : path_(path) {
    std::error_code ec;
    const auto file_size = std::filesystem::file_size(path, ec);
    if (ec)
        throw IoError(fmt::format("cannot open checkpoint '{}': {}", path.string(), ec.message()));
    file_.open(path, std::ios::binary);
    if (!file_)
        throw IoError(fmt::format("cannot open checkpoint '{}'", path.string()));

    if (file_size < 8)
        throw FormatError(fmt::format("'{}': truncated file, no header length at offset 0", path.string()));
    std::uint64_t header_len = 0;
    file_.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    if (header_len > kMaxHeaderBytes)
        throw FormatError(fmt::format("'{}': malformed header length {} at offset 0", path.string(), header_len));
    if (header_len > file_size - 8)
        throw FormatError(fmt::format("'{}': truncated header, {} bytes declared but {} available at offset 8",
                                      path.string(), header_len, file_size - 8));

    std::string text(header_len, '\0');
    file_.read(text.data(), static_cast<std::streamsize>(header_len));
    if (!file_)
        throw IoError(fmt::format("'{}': failed reading header", path.string()));
    data_start_ = 8 + header_len;
    const std::uint64_t data_size = file_size - data_start_;

    // nlohmann keeps the last of duplicate keys; catch them while parsing.
    std::set<std::string> seen;
    std::string duplicate;
    nlohmann::json::parser_callback_t on_event = [&](int depth, nlohmann::json::parse_event_t event,
                                                     nlohmann::json& parsed) {
        if (event == nlohmann::json::parse_event_t::key && depth == 1) {
            auto key = parsed.get<std::string>();
            if (!seen.insert(key).second && duplicate.empty())
                duplicate = key;
        }
        return true;
    };
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text, on_event);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(fmt::format("'{}': malformed header JSON: {}", path.string(), e.what()));
    }
    if (!duplicate.empty())
        throw FormatError(fmt::format("'{}': duplicate tensor name '{}'", path.string(), duplicate));
    if (!header.is_object())
        throw FormatError(fmt::format("'{}': header is not a JSON object", path.string()));

    for (const auto& [key, value] : header.items()) {
        if (key == kMetadataKey) {
            if (!value.is_object())
                throw FormatError(fmt::format("'{}': __metadata__ must be a string map", path.string()));
            for (const auto& [mk, mv] : value.items()) {
                if (!mv.is_string())
                    throw FormatError(fmt::format("'{}': __metadata__ value for '{}' is not a string", path.string(), mk));
                metadata_[mk] = mv.get<std::string>();
            }
            continue;
        }
        if (key.empty())
            throw FormatError(fmt::format("'{}': empty tensor name", path.string()));
        if (!value.is_object() || !value.contains("dtype") || !value.contains("shape") || !value.contains("data_offsets"))
            throw FormatError(fmt::format("tensor '{}': header entry needs dtype, shape and data_offsets", key));

        TensorInfo info;
        info.name = key;
        const auto& dt = value["dtype"];
        auto dtype = dt.is_string() ? parse_dtype(dt.get<std::string>()) : std::nullopt;
        if (!dtype)
            throw FormatError(fmt::format("tensor '{}': unsupported dtype {}", key, dt.dump()));
        info.dtype = *dtype;
        if (!value["shape"].is_array())
            throw FormatError(fmt::format("tensor '{}': shape must be an array", key));
        for (const auto& d : value["shape"])
            info.shape.push_back(as_offset(d, key, "shape"));
        const auto& offsets = value["data_offsets"];
        if (!offsets.is_array() || offsets.size() != 2)
            throw FormatError(fmt::format("tensor '{}': data_offsets must be [begin, end]", key));
        info.begin = as_offset(offsets[0], key, "data_offsets");
        info.end = as_offset(offsets[1], key, "data_offsets");
        if (info.begin > info.end)
            throw FormatError(fmt::format("tensor '{}': data_offsets [{}, {}] are reversed", key, info.begin, info.end));
        if (info.end - info.begin != info.size() * dtype_width(info.dtype))
            throw FormatError(fmt::format("tensor '{}': {} bytes at offset {} do not match shape {} of {}", key,
                                          info.end - info.begin, info.begin, format_shape(info.shape),
                                          dtype_name(info.dtype)));
        if (info.end > data_size)
            throw FormatError(fmt::format("tensor '{}': truncated data, needs bytes up to offset {} but only {} present",
                                          key, info.end, data_size));
        infos_.push_back(std::move(info));
    }

    // header.items() iterates in sorted key order, so infos_ is canonical already.
    std::vector<const TensorInfo*> by_offset;
    for (const auto& i : infos_)
        by_offset.push_back(&i);
    std::sort(by_offset.begin(), by_offset.end(), [](auto* a, auto* b) { return a->begin < b->begin; });
    for (std::size_t i = 1; i < by_offset.size(); ++i) {
        if (by_offset[i]->begin < by_offset[i - 1]->end && by_offset[i]->begin != by_offset[i]->end)
            throw FormatError(fmt::format("tensor '{}': data at offset {} overlaps tensor '{}'", by_offset[i]->name,
                                          by_offset[i]->begin, by_offset[i - 1]->name));
    }
}

const TensorInfo& CheckpointReader::info(std::string_view name) const {
    auto it = std::lower_bound(infos_.begin(), infos_.end(), name,
                               [](const TensorInfo& i, std::string_view n) { return i.name < n; });
    if (it == infos_.end() || it->name != name)
        throw CompatError(fmt::format("'{}': no tensor named '{}'", path_.string(), name));
    return *it;
}

void CheckpointReader::read_range(const TensorInfo& info, std::uint64_t first, std::span<float> out) {
    if (first + out.size() > info.size())
        throw InvalidArgument(fmt::format("tensor '{}': read of {} elements at {} exceeds {}", info.name, out.size(),
                                          first, info.size()));
    const std::size_t width = dtype_width(info.dtype);
    file_.seekg(static_cast<std::streamoff>(data_start_ + info.begin + first * width));
    if (info.dtype == DType::F32) {
        file_.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size_bytes()));
    } else {
        scratch_.resize(std::min<std::size_t>(out.size(), kChunkElements));
        for (std::size_t done = 0; done < out.size() && file_;) {
            const std::size_t n = std::min(scratch_.size(), out.size() - done);
            file_.read(reinterpret_cast<char*>(scratch_.data()), static_cast<std::streamsize>(n * 2));
            half::to_float(std::span(scratch_).first(n), out.subspan(done, n));
            done += n;
        }
    }
    if (!file_)
        throw FormatError(fmt::format("tensor '{}': read failed at offset {}", info.name, info.begin + first * width));
}

TensorEntry CheckpointReader::read(const TensorInfo& info) {
    std::vector<float> values(info.size());
    read_range(info, 0, values);
    return TensorEntry(info.name, info.dtype, info.shape, std::move(values));
}

// -- Writer ------------------------------------------------------------------

CheckpointWriter::CheckpointWriter(const std::filesystem::path& path, std::vector<TensorSpec> specs,
                                   const Metadata& metadata)
    : path_(path), specs_(canonical_specs(std::move(specs))) {
    tmp_path_ = path_;
    tmp_path_ += ".partial";
    file_.open(tmp_path_, std::ios::binary | std::ios::trunc);
    if (!file_)
        throw IoError(fmt::format("cannot write checkpoint '{}'", path_.string()));
    const std::string header = build_header(specs_, metadata);
    const std::uint64_t len = header.size();
    file_.write(reinterpret_cast<const char*>(&len), sizeof(len));
    file_.write(header.data(), static_cast<std::streamsize>(header.size()));
    while (current_ < specs_.size() && element_count(specs_[current_].shape) == 0)
        ++current_;
}

CheckpointWriter::~CheckpointWriter() {
    if (!finished_) {
        file_.close();
        std::error_code ec;
        std::filesystem::remove(tmp_path_, ec);
    }
}

void CheckpointWriter::append(std::span<const float> values) {
    std::vector<std::uint8_t> bytes;
    while (!values.empty()) {
        if (current_ >= specs_.size())
            throw InvalidArgument(fmt::format("'{}': more data appended than the header declares", path_.string()));
        const auto& spec = specs_[current_];
        const std::uint64_t remaining = element_count(spec.shape) - written_;
        const std::size_t n = static_cast<std::size_t>(
            std::min<std::uint64_t>({remaining, values.size(), kChunkElements}));
        bytes.clear();
        encode_into(bytes, values.first(n), spec.dtype, spec.name);
        file_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        values = values.subspan(n);
        written_ += n;
        if (written_ == element_count(spec.shape)) {
            written_ = 0;
            ++current_;
            while (current_ < specs_.size() && element_count(specs_[current_].shape) == 0)
                ++current_;
        }
    }
    if (!file_)
        throw IoError(fmt::format("write to '{}' failed", path_.string()));
}

void CheckpointWriter::finish() {
    if (current_ != specs_.size())
        throw InvalidArgument(fmt::format("'{}': tensor '{}' was not fully written", path_.string(), specs_[current_].name));
    file_.close();
    if (!file_)
        throw IoError(fmt::format("write to '{}' failed", path_.string()));
    std::error_code ec;
    std::filesystem::rename(tmp_path_, path_, ec);
    if (ec)
        throw IoError(fmt::format("cannot move checkpoint into '{}': {}", path_.string(), ec.message()));
    finished_ = true;
}

// -- Whole-map helpers -------------------------------------------------------

TensorMap load_checkpoint(const std::filesystem::path& path) {
    CheckpointReader reader(path);
    TensorMap map;
    for (const auto& info : reader.tensors())
        map.insert(reader.read(info));
    map.set_metadata(reader.metadata());
    return map;
}

void save_checkpoint(const TensorMap& map, const std::filesystem::path& path, DtypePolicy policy) {
    CheckpointWriter writer(path, specs_of(map, policy), map.metadata());
    for (const auto& [_, entry] : map)
        writer.append(entry.values());
    writer.finish();
}

std::vector<std::uint8_t> serialize(const TensorMap& map, DtypePolicy policy) {
    const auto specs = specs_of(map, policy);
    const std::string header = build_header(specs, map.metadata());
    std::vector<std::uint8_t> out(8 + header.size());
    const std::uint64_t len = header.size();
    std::memcpy(out.data(), &len, sizeof(len));
    std::memcpy(out.data() + 8, header.data(), header.size());
    std::size_t i = 0;
    for (const auto& [name, entry] : map)
        encode_into(out, entry.values(), specs[i++].dtype, name);
    return out;
}

} // namespace langarith
