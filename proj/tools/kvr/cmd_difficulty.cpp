#include <iomanip>
#include <iostream>
#include <sstream>

#include "common.hpp"
#include "kvr/difficulty.hpp"
#include "kvr/kvpool.hpp"
#include "kvr/switcher.hpp"
#include "kvr/toydata.hpp"

namespace kvr::cli {

namespace {

struct TrainArgs {
    std::vector<std::string> traces;
    std::string data;
    std::string pooling = switcher::default_switch_pooling().to_string();
    std::string out;
    std::string out_dir;
    std::string dataset_out;
    difficulty::TrainConfig train;
    bool no_standardize = false;
};

struct PredictArgs {
    std::vector<std::string> traces;
    std::string params;
    std::string pooling;
    std::string out;
};

// Pooled features + labels from switch-item traces.
std::vector<difficulty::Sample> dataset_from_traces(const std::vector<fs::path>& files,
                                                    const kvpool::PoolingSpec& spec) {
    std::vector<difficulty::Sample> out;
    for (const auto& f : files) {
        const auto trace = traceio::read_trace(f);
        const auto item = toydata::workload_item_from_trace(trace);
        out.push_back({kvpool::pool_vector(traceio::cache_from_trace(trace), spec),
                       static_cast<double>(item.label.d)});
    }
    return out;
}

void train(TrainArgs a) {
    std::vector<difficulty::Sample> data;
    std::string source;
    const auto spec = kvpool::PoolingSpec::parse(a.pooling);
    spec.validate();
    if (!a.data.empty()) {
        require(a.traces.empty(), ErrorKind::usage, "give either --data or trace files, not both");
        const auto t = traceio::read_trace(a.data);
        data = difficulty::dataset_from_trace(t);
        source = a.data;
    } else {
        require(!a.traces.empty(), ErrorKind::usage, "difficulty train needs --data or trace files");
        data = dataset_from_traces(expand_traces(a.traces), spec);
        source = "traces";
    }
    a.train.standardize = !a.no_standardize;
    const auto result = difficulty::mlp_train_with_history(data, a.train);

    const fs::path dir = ensure_dir(a.out.empty() ? resolve_out_dir(a.out_dir)
                                                  : (fs::path(a.out).has_parent_path() ? fs::path(a.out).parent_path()
                                                                                       : fs::path(".")));
    const fs::path path = a.out.empty() ? dir / "params.kvtr" : fs::path(a.out);
    auto trace = difficulty::params_to_trace(result.params);
    trace.meta["pooling"] = spec.to_string();
    trace.meta["train"] = {{"initial_loss", result.initial_loss}, {"final_loss", result.final_loss},
                           {"n", data.size()}};
    traceio::write_trace(path, trace);
    std::vector<fs::path> outputs{path};
    if (!a.dataset_out.empty()) {
        traceio::write_trace(a.dataset_out, difficulty::dataset_to_trace(data, {{"pooling", spec.to_string()}}));
        outputs.push_back(a.dataset_out);
    }
    const nlohmann::json config = {{"source", source},
                                   {"pooling", spec.to_string()},
                                   {"learning_rate", a.train.learning_rate},
                                   {"momentum", a.train.momentum},
                                   {"batch_size", a.train.batch_size},
                                   {"epochs", a.train.epochs},
                                   {"standardize", a.train.standardize},
                                   {"n", data.size()}};
    write_manifest(dir, "difficulty train", config, {{"seed", a.train.seed}}, outputs);
    std::cout << std::setprecision(6) << "trained on " << data.size() << " samples, loss " << result.initial_loss
              << " -> " << result.final_loss << "\nparams -> " << path.string() << "\n";
}

void predict(const PredictArgs& a) {
    const auto ptrace = traceio::read_trace(a.params);
    const auto params = difficulty::params_from_trace(ptrace);
    const std::string pooling = !a.pooling.empty() ? a.pooling : ptrace.meta.value("pooling", std::string());
    require(!pooling.empty(), ErrorKind::usage, "params carry no pooling spec; pass --pooling");
    const auto spec = kvpool::PoolingSpec::parse(pooling);

    std::ostringstream out;
    out << "trace_id\td_hat\n";
    for (const auto& f : expand_traces(a.traces)) {
        const auto trace = traceio::read_trace(f);
        const auto x = kvpool::pool_vector(traceio::cache_from_trace(trace), spec);
        out << trace_id(f) << "\t" << std::setprecision(17) << difficulty::mlp_forward(params, x) << "\n";
    }
    if (a.out.empty()) {
        std::cout << out.str();
        return;
    }
    const fs::path path(a.out);
    if (path.has_parent_path()) ensure_dir(path.parent_path());
    write_text(path, out.str());
    write_manifest(path.has_parent_path() ? path.parent_path() : fs::path("."), "difficulty predict",
                   {{"params", a.params}, {"pooling", spec.to_string()}}, nlohmann::json::object(), {path});
}

}  // namespace

void register_difficulty(CLI::App& app) {
    auto* cmd = app.add_subcommand("difficulty", "Train or apply the MLP difficulty estimator");
    cmd->require_subcommand(1);

    auto t = std::make_shared<TrainArgs>();
    auto* tr = cmd->add_subcommand("train", "Train on a dataset trace or on switch-item traces");
    tr->add_option("traces", t->traces, "Switch-item trace files or directories");
    tr->add_option("--data", t->data, "difficulty-dataset trace (features + labels)");
    tr->add_option("--pooling", t->pooling, "Feature pooling for trace inputs")->capture_default_str();
    tr->add_option("--out", t->out, "Params file (default <out-dir>/params.kvtr)");
    tr->add_option("-o,--out-dir", t->out_dir, "Output directory (default $KVR_OUT_DIR)");
    tr->add_option("--dataset-out", t->dataset_out, "Also save the pooled dataset");
    tr->add_option("--lr", t->train.learning_rate, "Learning rate")->capture_default_str();
    tr->add_option("--momentum", t->train.momentum, "Momentum")->capture_default_str();
    tr->add_option("--batch-size", t->train.batch_size, "Mini-batch size")->capture_default_str();
    tr->add_option("--epochs", t->train.epochs, "Epochs")->capture_default_str();
    tr->add_option("--seed", t->train.seed, "Init and shuffle seed")->capture_default_str();
    tr->add_flag("--no-standardize", t->no_standardize, "Skip feature standardization");
    tr->callback([t] { train(*t); });

    auto p = std::make_shared<PredictArgs>();
    auto* pr = cmd->add_subcommand("predict", "Score traces with trained params");
    pr->add_option("traces", p->traces, "Trace files or directories")->required();
    pr->add_option("--params", p->params, "Params trace")->required();
    pr->add_option("--pooling", p->pooling, "Override the pooling stored with the params");
    pr->add_option("--out", p->out, "Predictions file (default stdout)");
    pr->callback([p] { predict(*p); });
}

}  // namespace kvr::cli
