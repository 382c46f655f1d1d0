#pragma once

// KVTRACE: single-file little-endian container for caches, activations,
// scores, labels and model parameters.
//
//   "KVTR" | u32 version | u64 meta_len | meta (UTF-8 JSON)
//   u32 tensor_count | tensor_count x directory entry | payload
//
// Directory entry: u32 name_len | name | u8 dtype (0=f32, 1=f64) |
// u32 ndim | u64 dims[ndim] | u64 offset (from payload start).
// Payload tensors are row-major, little-endian, in directory order.
// docs/kvtrace.md has an annotated dump.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "kvr/minitx.hpp"

namespace kvr::traceio {

inline constexpr std::uint32_t kFormatVersion = 1;

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

struct Tensor {
    std::string name;
    std::vector<std::uint64_t> shape;
    std::variant<std::vector<float>, std::vector<double>> data;
    // Set by read_trace / layout(); ignored on write.
    std::uint64_t offset = 0;

    DType dtype() const { return data.index() == 0 ? DType::f32 : DType::f64; }
    std::size_t element_size() const { return dtype() == DType::f32 ? 4 : 8; }
    std::size_t data_elements() const;
    std::uint64_t shape_elements() const;

    static Tensor f32(std::string name, std::vector<std::uint64_t> shape, std::vector<float> values);
    static Tensor f64(std::string name, std::vector<std::uint64_t> shape, std::vector<double> values);
};

struct TraceFile {
    std::uint32_t version = kFormatVersion;
    nlohmann::json meta = nlohmann::json::object();
    std::vector<Tensor> tensors;

    const Tensor* find(std::string_view name) const;
    const Tensor& at(std::string_view name) const;  // Error(validation) if absent
    std::span<const float> f32(std::string_view name) const;
    std::span<const double> f64(std::string_view name) const;

    // Assigns contiguous payload offsets in directory order.
    void layout();
};

struct Violation {
    std::string check;   // "finite", "shape", "offsets", "dims", "name"
    std::string tensor;  // empty for file-level checks
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
    std::string summary() const;
};

ValidationReport validate_trace(const TraceFile& trace);

std::vector<std::uint8_t> encode_trace(const TraceFile& trace);
// Distinct ErrorKinds: bad_magic, unsupported_version, truncated (names the
// tensor), overlapping_offsets, malformed, validation.
TraceFile decode_trace(std::span<const std::uint8_t> bytes);

// Validates before touching the filesystem; writes via a temp file + rename.
void write_trace(const std::filesystem::path& path, const TraceFile& trace);
TraceFile read_trace(const std::filesystem::path& path);

// Conventional layout for model-derived traces: tensors "K.<l>", "V.<l>"
// [t, H_kv, d_head]; optional "hidden" [L+1, t, d_model], "logits" [t, V],
// "token_logprobs" [t-1] (f64). meta.model carries the dims and meta.tokens
// the token ids.
TraceFile make_model_trace(const minitx::ModelConfig& config, std::span<const minitx::TokenId> tokens,
                           const minitx::KVCache& cache, const minitx::ForwardRecord* record,
                           bool include_hidden = true);
minitx::KVCache cache_from_trace(const TraceFile& trace);
// Requires logits and token_logprobs; hidden is optional.
minitx::ForwardRecord record_from_trace(const TraceFile& trace);
std::vector<minitx::TokenId> tokens_from_trace(const TraceFile& trace);

}  // namespace kvr::traceio
