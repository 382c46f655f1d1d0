#include <cmath>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "common.hpp"
#include "kvr/toydata.hpp"

namespace kvr::cli {

namespace {

struct GenToyArgs {
    std::string kind = "coe";
    int n = 1000;
    std::uint64_t seed = 1;
    std::string out_dir;
    double correct_fraction = 0.5;
    double easy_fraction = 0.5;
    int gen_tokens = 48;
    double smooth_temperature = 0.1;
    double smooth_flip_prob = 0.1;
    double erratic_temperature = 1.5;
    int answer_tokens = 16;
    int think_budget = 64;
    int reasoning_need = 16;
    ModelFlags model;
};

std::string file_name(int i) {
    std::ostringstream os;
    os << "trace_" << std::setw(5) << std::setfill('0') << i << ".kvtr";
    return os.str();
}

void run(const GenToyArgs& a) {
    require(a.n >= 1, ErrorKind::usage, "--n must be >= 1");
    const fs::path dir = ensure_dir(resolve_out_dir(a.out_dir));
    std::vector<fs::path> outputs;
    std::ostringstream labels;
    nlohmann::json config;
    std::map<std::string, int> histogram;

    if (a.kind == "coe") {
        require(a.correct_fraction >= 0 && a.correct_fraction <= 1, ErrorKind::usage,
                "--correct-fraction must be in [0, 1]");
        toydata::CoECorpusConfig c;
        c.n_correct = static_cast<int>(std::lround(a.n * a.correct_fraction));
        c.n_incorrect = a.n - c.n_correct;
        c.seed = a.seed;
        c.model = a.model.config();
        c.gen_tokens = a.gen_tokens;
        c.smooth_temperature = a.smooth_temperature;
        c.smooth_flip_prob = a.smooth_flip_prob;
        c.erratic_temperature = a.erratic_temperature;
        const auto corpus = toydata::make_coe_corpus(c);
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            const fs::path p = dir / file_name(static_cast<int>(i));
            traceio::write_trace(p, toydata::coe_trace_file(c, corpus[i], static_cast<int>(i)));
            outputs.push_back(p);
            const char* label = corpus[i].correct ? "correct" : "incorrect";
            labels << trace_id(p) << "\t" << label << "\n";
            ++histogram[label];
        }
        config = {{"kind", "coe"}, {"n", a.n}, {"n_correct", c.n_correct}, {"n_incorrect", c.n_incorrect},
                  {"gen_tokens", c.gen_tokens}, {"smooth_temperature", c.smooth_temperature},
                  {"smooth_flip_prob", c.smooth_flip_prob}, {"erratic_temperature", c.erratic_temperature},
                  {"model", model_json(c.model)}};
    } else if (a.kind == "switch") {
        toydata::SwitchWorkloadConfig c;
        c.n_items = a.n;
        c.easy_fraction = a.easy_fraction;
        c.seed = a.seed;
        c.model = a.model.config(toydata::SwitchWorkloadConfig::default_switch_model());
        c.answer_tokens = a.answer_tokens;
        c.think_budget = a.think_budget;
        c.reasoning_need = a.reasoning_need;
        const auto model = minitx::init_model(c.model);
        const auto items = toydata::make_switch_workload(model, c);
        for (std::size_t i = 0; i < items.size(); ++i) {
            const fs::path p = dir / file_name(static_cast<int>(i));
            traceio::write_trace(p, toydata::workload_trace_file(c, model, items[i], static_cast<int>(i)));
            outputs.push_back(p);
            labels << trace_id(p) << "\t" << (items[i].easy ? "easy" : "hard") << "\t" << items[i].label.d << "\n";
            ++histogram[items[i].easy ? "easy" : "hard"];
        }
        config = {{"kind", "switch"}, {"n", a.n}, {"easy_fraction", a.easy_fraction},
                  {"answer_tokens", c.answer_tokens}, {"think_budget", c.think_budget},
                  {"reasoning_need", c.reasoning_need}, {"model", model_json(c.model)}};
    } else {
        fail(ErrorKind::usage, "--kind must be coe or switch");
    }

    const fs::path label_path = dir / "labels.tsv";
    write_text(label_path, labels.str());
    outputs.push_back(label_path);
    write_manifest(dir, "gen-toy", config, {{"seed", a.seed}}, outputs);

    std::cout << "wrote " << a.n << " traces to " << dir.string() << "\n";
    for (const auto& [k, v] : histogram) std::cout << k << "\t" << v << "\n";
}

}  // namespace

void register_gen_toy(CLI::App& app) {
    auto args = std::make_shared<GenToyArgs>();
    auto* cmd = app.add_subcommand("gen-toy", "Generate a synthetic labeled trace corpus");
    cmd->add_option("--kind", args->kind, "coe (smooth vs erratic) or switch (easy vs hard)")
        ->check(CLI::IsMember({"coe", "switch"}))
        ->capture_default_str();
    cmd->add_option("-n,--n", args->n, "Number of traces")->capture_default_str();
    cmd->add_option("--seed", args->seed, "Corpus seed")->capture_default_str();
    cmd->add_option("-o,--out-dir", args->out_dir, "Output directory (default $KVR_OUT_DIR)");
    cmd->add_option("--correct-fraction", args->correct_fraction, "coe: share of smooth traces")->capture_default_str();
    cmd->add_option("--easy-fraction", args->easy_fraction, "switch: share of easy items")->capture_default_str();
    cmd->add_option("--gen-tokens", args->gen_tokens, "coe: generated tokens per trace")->capture_default_str();
    cmd->add_option("--smooth-temperature", args->smooth_temperature)->capture_default_str();
    cmd->add_option("--smooth-flip-prob", args->smooth_flip_prob)->capture_default_str();
    cmd->add_option("--erratic-temperature", args->erratic_temperature)->capture_default_str();
    cmd->add_option("--answer-tokens", args->answer_tokens, "switch: answer length")->capture_default_str();
    cmd->add_option("--think-budget", args->think_budget, "switch: slow thinking length")->capture_default_str();
    cmd->add_option("--reasoning-need", args->reasoning_need, "switch: thinking a hard item needs")
        ->capture_default_str();
    args->model.add_to(*cmd);
    cmd->callback([args] { run(*args); });
}

}  // namespace kvr::cli
