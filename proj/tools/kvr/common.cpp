#include "common.hpp"

#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace kvr::cli {

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::usage: return kExitUsage;
        case ErrorKind::io: return kExitIo;
        case ErrorKind::configuration: return kExitConfiguration;
        case ErrorKind::validation:
        case ErrorKind::bad_magic:
        case ErrorKind::unsupported_version:
        case ErrorKind::truncated:
        case ErrorKind::overlapping_offsets:
        case ErrorKind::malformed: return kExitValidation;
        default: return kExitOther;
    }
}

Invocation& invocation() {
    static Invocation inv;
    return inv;
}

fs::path resolve_out_dir(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("KVR_OUT_DIR"); env && *env) return env;
    return "kvr-out";
}

fs::path ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) fail(ErrorKind::io, "cannot create directory " + dir.string());
    return dir;
}

std::vector<fs::path> expand_traces(const std::vector<std::string>& inputs) {
    std::vector<fs::path> out;
    for (const auto& in : inputs) {
        const fs::path p(in);
        if (fs::is_directory(p)) {
            std::vector<fs::path> found;
            for (const auto& e : fs::directory_iterator(p))
                if (e.is_regular_file() && e.path().extension() == ".kvtr") found.push_back(e.path());
            std::sort(found.begin(), found.end());
            out.insert(out.end(), found.begin(), found.end());
        } else if (fs::exists(p)) {
            out.push_back(p);
        } else {
            fail(ErrorKind::io, "no such trace file or directory: " + in);
        }
    }
    require(!out.empty(), ErrorKind::usage, "no trace files given");
    return out;
}

std::string trace_id(const fs::path& p) { return p.stem().string(); }

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::io, "cannot open " + tmp.string() + " for writing");
        out << text;
        if (!out) fail(ErrorKind::io, "write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) fail(ErrorKind::io, "cannot rename into " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_manifest(const fs::path& dir, const std::string& command, const nlohmann::json& config,
                    const nlohmann::json& seeds, const std::vector<fs::path>& outputs) {
    const auto& inv = invocation();
    nlohmann::json m;
    std::string line;
    for (std::size_t i = 0; i < inv.argv.size(); ++i) line += (i ? " " : "") + inv.argv[i];
    m["command"] = command;
    m["command_line"] = line;
    m["argv"] = inv.argv;
    m["seeds"] = seeds;
    m["config"] = config;
    m["config_hash"] = hex64(fnv1a64(config.dump()));
    std::vector<std::string> outs;
    for (const auto& p : outputs) outs.push_back(p.string());
    m["outputs"] = outs;
    const auto elapsed = std::chrono::steady_clock::now() - inv.start;
    m["wall_clock_seconds"] = std::chrono::duration<double>(elapsed).count();
    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    m["finished_at"] = stamp;
    write_text(dir / "manifest.json", m.dump(2) + "\n");
}

void ModelFlags::add_to(CLI::App& app) {
    app.add_option("--layers", layers, "Transformer layers");
    app.add_option("--heads", heads, "Query heads");
    app.add_option("--kv-heads", kv_heads, "Key/value heads");
    app.add_option("--d-model", d_model, "Model width");
    app.add_option("--max-seq-len", max_seq_len, "Cache capacity");
    app.add_option("--model-seed", seed, "Weight seed");
}

minitx::ModelConfig ModelFlags::config(minitx::ModelConfig m) const {
    if (layers) m.num_layers = *layers;
    if (heads) m.num_heads = *heads;
    if (kv_heads) m.num_kv_heads = *kv_heads;
    if (d_model) m.d_model = *d_model;
    if (max_seq_len) m.max_seq_len = *max_seq_len;
    if (seed) m.seed = *seed;
    m.validate();
    return m;
}

nlohmann::json model_json(const minitx::ModelConfig& m) {
    return {{"num_layers", m.num_layers}, {"num_heads", m.num_heads},     {"num_kv_heads", m.num_kv_heads},
            {"d_model", m.d_model},       {"vocab_size", m.vocab_size},   {"max_seq_len", m.max_seq_len},
            {"seed", m.seed}};
}

}  // namespace kvr::cli
