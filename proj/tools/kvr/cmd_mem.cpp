#include <iostream>

#include "common.hpp"

namespace kvr::cli {

namespace {

struct MemArgs {
    ModelFlags model;
    std::uint64_t ctx = 1024;
    std::string dtype = "f32";
    bool json = false;
};

void run(const MemArgs& a) {
    const auto cfg = a.model.config();
    const std::uint64_t bytes = a.dtype == "f32" ? 4 : a.dtype == "f64" ? 8 : 2;
    const auto r = minitx::estimate_memory(cfg, a.ctx, bytes);
    if (a.json) {
        const nlohmann::json j = {{"kv_bytes", r.kv_bytes}, {"hidden_bytes", r.hidden_bytes},
                                  {"context_len", r.context_len}, {"dtype_bytes", r.dtype_bytes},
                                  {"model", model_json(cfg)}};
        std::cout << j.dump(2) << "\n";
        return;
    }
    std::cout << "layers\t" << cfg.num_layers << "\nkv_heads\t" << cfg.num_kv_heads << "\nd_head\t"
              << cfg.d_head() << "\nd_model\t" << cfg.d_model << "\ncontext\t" << r.context_len
              << "\ndtype_bytes\t" << r.dtype_bytes << "\nkv_bytes\t" << r.kv_bytes << "\nhidden_bytes\t"
              << r.hidden_bytes << "\n";
}

}  // namespace

void register_mem_estimate(CLI::App& app) {
    auto args = std::make_shared<MemArgs>();
    auto* cmd = app.add_subcommand("mem-estimate", "Closed-form KV cache and hidden-state sizes");
    args->model.add_to(*cmd);
    cmd->add_option("--ctx", args->ctx, "Context length in tokens")->capture_default_str();
    cmd->add_option("--dtype", args->dtype, "f16 | f32 | f64")
        ->check(CLI::IsMember({"f16", "f32", "f64"}))
        ->capture_default_str();
    cmd->add_flag("--json", args->json, "Print JSON");
    cmd->callback([args] { run(*args); });
}

}  // namespace kvr::cli
