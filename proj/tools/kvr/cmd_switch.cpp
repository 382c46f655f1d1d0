#include <iomanip>
#include <iostream>
#include <sstream>

#include "common.hpp"
#include "kvr/traceio.hpp"
#include "switch_eval.hpp"

namespace kvr::cli {

namespace {

struct SwitchArgs {
    std::vector<std::string> traces;
    std::string params;
    bool oracle = false;
    double tau = 50, tau_fast = 20, tau_slow = 70;
    std::optional<int> checkpoint_every;
    std::string mode = "generative";
    std::string pooling;
    std::optional<int> max_new_tokens;
    int max_up = 1, max_down = 1;
    std::optional<std::uint64_t> model_seed;
    std::string out_dir;
};

void run(const SwitchArgs& a) {
    require(a.oracle != !a.params.empty(), ErrorKind::usage, "give exactly one of --params or --oracle");
    const auto files = expand_traces(a.traces);

    std::vector<toydata::WorkloadItem> items;
    std::vector<std::string> ids;
    nlohmann::json workload;
    minitx::ModelConfig mc;
    for (std::size_t i = 0; i < files.size(); ++i) {
        const auto t = traceio::read_trace(files[i]);
        items.push_back(toydata::workload_item_from_trace(t));
        ids.push_back(trace_id(files[i]));
        if (i == 0) {
            mc = toydata::model_config_from_trace(t);
            workload = t.meta.value("workload", nlohmann::json::object());
        } else {
            require(toydata::model_config_from_trace(t).seed == mc.seed, ErrorKind::validation,
                    "traces come from different models");
        }
    }
    if (a.model_seed) mc.seed = *a.model_seed;
    const auto model = minitx::init_model(mc);

    switcher::SwitchConfig cfg;
    cfg.tau = a.tau;
    cfg.tau_fast = a.tau_fast;
    cfg.tau_slow = a.tau_slow;
    cfg.mode = switcher::parse_control_mode(a.mode);
    cfg.max_up_switches = a.max_up;
    cfg.max_down_switches = a.max_down;
    cfg.answer_tokens = workload.value("answer_tokens", cfg.answer_tokens);
    cfg.think_budget = workload.value("think_budget", cfg.think_budget);
    cfg.checkpoint_every = a.checkpoint_every.value_or(workload.value("reasoning_need", cfg.checkpoint_every));
    cfg.max_new_tokens = a.max_new_tokens.value_or(cfg.think_budget + cfg.answer_tokens + 8);

    ScorerFactory factory;
    std::string pooling = a.pooling;
    if (a.oracle) {
        factory = oracle_for;
    } else {
        const auto ptrace = traceio::read_trace(a.params);
        auto params = difficulty::params_from_trace(ptrace);
        if (pooling.empty()) pooling = ptrace.meta.value("pooling", std::string());
        factory = [params](const toydata::WorkloadItem&) { return std::make_unique<switcher::MlpScorer>(params); };
    }
    if (!pooling.empty()) cfg.pooling = kvpool::PoolingSpec::parse(pooling);
    cfg.validate();

    const auto controlled = run_policy(model, items, Policy::controlled, cfg, factory);
    const auto slow = run_policy(model, items, Policy::always_slow, cfg);

    const fs::path dir = ensure_dir(resolve_out_dir(a.out_dir));
    std::string jsonl;
    for (std::size_t i = 0; i < items.size(); ++i)
        jsonl += transcript_jsonl(ids[i], controlled.transcripts[i],
                                  switcher::grade_answer(controlled.transcripts[i].generated(), items[i].gold));
    const fs::path tpath = dir / "transcripts.jsonl";
    write_text(tpath, jsonl);

    const auto& s = controlled.stats;
    const double reduction = 1.0 - s.mean_tokens() / slow.stats.mean_tokens();
    std::ostringstream summary;
    summary << std::fixed << std::setprecision(4);
    summary << "accuracy\tmean_tokens\treduction_vs_slow\teasy_accuracy\thard_accuracy\tslow_accuracy\tslow_mean_tokens\n";
    summary << s.accuracy() << "\t" << s.mean_tokens() << "\t" << reduction << "\t"
            << (s.easy_n ? static_cast<double>(s.easy_correct) / s.easy_n : 0.0) << "\t"
            << (s.hard_n ? static_cast<double>(s.hard_correct) / s.hard_n : 0.0) << "\t" << slow.stats.accuracy()
            << "\t" << slow.stats.mean_tokens() << "\n";
    const fs::path spath = dir / "summary.tsv";
    write_text(spath, summary.str());

    const nlohmann::json config = {{"tau", cfg.tau},
                                   {"tau_fast", cfg.tau_fast},
                                   {"tau_slow", cfg.tau_slow},
                                   {"checkpoint_every", cfg.checkpoint_every},
                                   {"mode", a.mode},
                                   {"scorer", a.oracle ? "oracle" : a.params},
                                   {"pooling", cfg.pooling.to_string()},
                                   {"max_new_tokens", cfg.max_new_tokens},
                                   {"answer_tokens", cfg.answer_tokens},
                                   {"think_budget", cfg.think_budget},
                                   {"max_up_switches", cfg.max_up_switches},
                                   {"max_down_switches", cfg.max_down_switches},
                                   {"model", model_json(mc)},
                                   {"n_items", items.size()}};
    write_manifest(dir, "switch run", config, {{"model_seed", mc.seed}}, {tpath, spath});
    std::cout << std::fixed << std::setprecision(4) << "accuracy mean_tokens reduction_vs_slow\n"
              << s.accuracy() << " " << s.mean_tokens() << " " << reduction << "\n";
}

}  // namespace

void register_switch(CLI::App& app) {
    auto* cmd = app.add_subcommand("switch", "Fast/slow thinking controller");
    cmd->require_subcommand(1);
    auto a = std::make_shared<SwitchArgs>();
    auto* r = cmd->add_subcommand("run", "Run controlled generation over switch-item traces");
    r->add_option("traces", a->traces, "Switch-item trace files or directories")->required();
    r->add_option("--params", a->params, "MLP params trace");
    r->add_flag("--oracle", a->oracle, "Use the label-aware oracle scorer");
    r->add_option("--tau", a->tau, "Initial threshold")->capture_default_str();
    r->add_option("--tau-fast", a->tau_fast, "Down-switch threshold")->capture_default_str();
    r->add_option("--tau-slow", a->tau_slow, "Up-switch threshold")->capture_default_str();
    r->add_option("--checkpoint-every", a->checkpoint_every, "Generated tokens between re-scores");
    r->add_option("--mode", a->mode, "classification | generative")
        ->check(CLI::IsMember({"classification", "generative"}))
        ->capture_default_str();
    r->add_option("--pooling", a->pooling, "Override the pooling spec");
    r->add_option("--max-new-tokens", a->max_new_tokens, "Hard cap on generated tokens");
    r->add_option("--max-up-switches", a->max_up, "")->capture_default_str();
    r->add_option("--max-down-switches", a->max_down, "")->capture_default_str();
    r->add_option("--model-seed", a->model_seed, "Override the model seed recorded in the traces");
    r->add_option("-o,--out-dir", a->out_dir, "Output directory (default $KVR_OUT_DIR)");
    r->callback([a] { run(*a); });
}

}  // namespace kvr::cli
