#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "kvr/error.hpp"
#include "kvr/minitx.hpp"

namespace kvr::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
    kExitOk = 0,
    kExitOther = 1,
    kExitUsage = 2,
    kExitValidation = 3,
    kExitIo = 4,
    kExitConfiguration = 5,
};

int exit_code_for(ErrorKind kind);

// Process-wide invocation details for manifests.
struct Invocation {
    std::vector<std::string> argv;
    std::chrono::steady_clock::time_point start;
};
Invocation& invocation();

// Output directory: explicit flag, else $KVR_OUT_DIR, else "./kvr-out".
fs::path resolve_out_dir(const std::string& flag);
fs::path ensure_dir(const fs::path& dir);

// Files and directories; directories contribute their *.kvtr files in
// name order. Throws Error(usage) when nothing matches.
std::vector<fs::path> expand_traces(const std::vector<std::string>& inputs);
std::string trace_id(const fs::path& p);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

// Writes text atomically (temp file + rename).
void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

// Writes <dir>/manifest.json.
void write_manifest(const fs::path& dir, const std::string& command, const nlohmann::json& config,
                    const nlohmann::json& seeds, const std::vector<fs::path>& outputs);

// Unset flags keep the base config's values.
struct ModelFlags {
    std::optional<int> layers;
    std::optional<int> heads;
    std::optional<int> kv_heads;
    std::optional<int> d_model;
    std::optional<int> max_seq_len;
    std::optional<std::uint64_t> seed;

    void add_to(CLI::App& app);
    minitx::ModelConfig config(minitx::ModelConfig base = {}) const;
};

nlohmann::json model_json(const minitx::ModelConfig& m);

void register_gen_toy(CLI::App& app);
void register_coe(CLI::App& app);
void register_eval(CLI::App& app);
void register_difficulty(CLI::App& app);
void register_switch(CLI::App& app);
void register_sweep(CLI::App& app);
void register_mem_estimate(CLI::App& app);
void register_trace(CLI::App& app);

}  // namespace kvr::cli
