#include <iomanip>
#include <iostream>
#include <sstream>

#include "common.hpp"
#include "kvr/kvpool.hpp"
#include "switch_eval.hpp"

namespace kvr::cli {

namespace {

struct SweepArgs {
    int budget = 256;
    std::string grid = "8x32,4x64,2x128";
    int n = 200;
    std::uint64_t seed = 1;
    double easy_fraction = 0.5;
    int prompt_min = 32;
    int prompt_max = 128;
    double train_fraction = 0.5;
    double tau = 50, tau_fast = 20, tau_slow = 70;
    int epochs = 50;
    ModelFlags model;
    std::string out_dir;
};

std::vector<kvpool::BudgetEntry> parse_grid(const std::string& text) {
    std::vector<kvpool::BudgetEntry> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto x = item.find('x');
        require(x != std::string::npos, ErrorKind::usage, "grid entry '" + item + "' is not LxT");
        try {
            std::size_t a = 0, b = 0;
            const int l = std::stoi(item.substr(0, x), &a);
            const int t = std::stoi(item.substr(x + 1), &b);
            require(a == x && b == item.size() - x - 1, ErrorKind::usage, "grid entry '" + item + "' is not LxT");
            out.push_back({l, t});
        } catch (const std::logic_error&) {
            fail(ErrorKind::usage, "grid entry '" + item + "' is not LxT");
        }
    }
    require(!out.empty(), ErrorKind::usage, "empty grid");
    return out;
}

std::string cell(const PolicyStats& s) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << 100.0 * s.accuracy() << " / " << s.mean_tokens();
    return os.str();
}

void run(const SweepArgs& a) {
    const auto grid = parse_grid(a.grid);
    kvpool::check_budget_grid(grid, a.budget);
    require(a.train_fraction > 0 && a.train_fraction < 1, ErrorKind::usage, "--train-fraction must be in (0, 1)");

    toydata::SwitchWorkloadConfig wc;
    wc.n_items = a.n;
    wc.seed = a.seed;
    wc.easy_fraction = a.easy_fraction;
    wc.prompt_min = a.prompt_min;
    wc.prompt_max = a.prompt_max;
    wc.model = a.model.config(toydata::SwitchWorkloadConfig::default_switch_model());
    for (const auto& e : grid)
        require(e.layers <= wc.model.num_layers, ErrorKind::configuration,
                "grid entry asks for " + std::to_string(e.layers) + " layers of " +
                    std::to_string(wc.model.num_layers));
    const auto model = minitx::init_model(wc.model);
    const auto items = toydata::make_switch_workload(model, wc);
    const std::size_t n_train = static_cast<std::size_t>(a.train_fraction * items.size());
    require(n_train >= 1 && n_train < items.size(), ErrorKind::usage, "train/test split leaves an empty side");
    const std::vector<toydata::WorkloadItem> train(items.begin(), items.begin() + n_train);
    const std::vector<toydata::WorkloadItem> test(items.begin() + n_train, items.end());

    auto base = wc.switch_config();
    base.tau = a.tau;
    base.tau_fast = a.tau_fast;
    base.tau_slow = a.tau_slow;

    const std::vector<std::string> methods{"always-fast", "always-slow", "kv-classification", "kv-generative",
                                           "kv-generative-oracle"};
    std::vector<std::vector<std::string>> cells(methods.size());
    const auto fast = run_policy(model, test, Policy::always_fast, base).stats;
    const auto slow = run_policy(model, test, Policy::always_slow, base).stats;
    const auto oracle = run_policy(model, test, Policy::controlled, base, oracle_for).stats;

    for (const auto& e : grid) {
        auto cfg = base;
        cfg.pooling = kvpool::PoolingSpec::classifier(kvpool::evenly_spaced_layers(wc.model.num_layers, e.layers),
                                                      e.tokens);
        std::vector<difficulty::Sample> data;
        for (const auto& item : train) {
            const auto pre = minitx::prefill(model, item.prompt);
            data.push_back({kvpool::pool_vector(pre.cache, cfg.pooling), static_cast<double>(item.label.d)});
        }
        difficulty::TrainConfig tc;
        tc.seed = a.seed;
        tc.epochs = a.epochs;
        const auto params = difficulty::mlp_train(data, tc);
        ScorerFactory mlp = [&params](const toydata::WorkloadItem&) {
            return std::make_unique<switcher::MlpScorer>(params);
        };
        auto cls_cfg = cfg;
        cls_cfg.mode = switcher::ControlMode::classification;
        cells[0].push_back(cell(fast));
        cells[1].push_back(cell(slow));
        cells[2].push_back(cell(run_policy(model, test, Policy::controlled, cls_cfg, mlp).stats));
        cells[3].push_back(cell(run_policy(model, test, Policy::controlled, cfg, mlp).stats));
        cells[4].push_back(cell(oracle));
    }

    std::ostringstream table;
    table << "Model\tDataset\tMethod";
    for (const auto& e : grid) table << "\t" << e.layers << "L,Len=" << e.tokens;
    table << "\n";
    std::ostringstream model_name;
    model_name << "toy-L" << wc.model.num_layers << "-d" << wc.model.d_model;
    for (std::size_t m = 0; m < methods.size(); ++m) {
        table << model_name.str() << "\ttoy-switch-" << test.size() << "\t" << methods[m];
        for (const auto& c : cells[m]) table << "\t" << c;
        table << "\n";
    }

    const fs::path dir = ensure_dir(resolve_out_dir(a.out_dir));
    const fs::path path = dir / "sweep.tsv";
    write_text(path, table.str());
    const nlohmann::json config = {{"budget", a.budget},         {"grid", a.grid},
                                   {"n", a.n},                   {"easy_fraction", a.easy_fraction},
                                   {"prompt_min", a.prompt_min}, {"prompt_max", a.prompt_max},
                                   {"train_fraction", a.train_fraction},
                                   {"tau", a.tau},               {"tau_fast", a.tau_fast},
                                   {"tau_slow", a.tau_slow},     {"epochs", a.epochs},
                                   {"model", model_json(wc.model)}};
    write_manifest(dir, "sweep", config, {{"seed", a.seed}, {"model_seed", wc.model.seed}}, {path});
    std::cout << table.str();
}

}  // namespace

void register_sweep(CLI::App& app) {
    auto a = std::make_shared<SweepArgs>();
    auto* cmd = app.add_subcommand("sweep", "Layer x token budget sweep on the synthetic switching workload");
    cmd->add_option("--budget", a->budget, "layers x tokens units per config")->capture_default_str();
    cmd->add_option("--grid", a->grid, "Comma-separated LxT entries")->capture_default_str();
    cmd->add_option("-n,--n", a->n, "Workload items")->capture_default_str();
    cmd->add_option("--seed", a->seed, "Workload and training seed")->capture_default_str();
    cmd->add_option("--easy-fraction", a->easy_fraction)->capture_default_str();
    cmd->add_option("--prompt-min", a->prompt_min)->capture_default_str();
    cmd->add_option("--prompt-max", a->prompt_max)->capture_default_str();
    cmd->add_option("--train-fraction", a->train_fraction)->capture_default_str();
    cmd->add_option("--tau", a->tau)->capture_default_str();
    cmd->add_option("--tau-fast", a->tau_fast)->capture_default_str();
    cmd->add_option("--tau-slow", a->tau_slow)->capture_default_str();
    cmd->add_option("--epochs", a->epochs, "MLP training epochs")->capture_default_str();
    a->model.add_to(*cmd);
    cmd->add_option("-o,--out-dir", a->out_dir, "Output directory (default $KVR_OUT_DIR)");
    cmd->callback([a] { run(*a); });
}

}  // namespace kvr::cli
