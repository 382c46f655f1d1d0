#include <fstream>
#include <iostream>
#include <sstream>

#include "common.hpp"
#include "kvr/metrics.hpp"

namespace kvr::cli {

namespace {

struct EvalArgs {
    std::vector<std::string> scores;
    std::string labels;
    std::string orientation = "as-tagged";
    double validation_fraction = 0.2;
    std::string out;
};

void run(const EvalArgs& a) {
    std::vector<coescore::ScoreLine> lines;
    for (const auto& f : a.scores) {
        std::ifstream in(f);
        if (!in) fail(ErrorKind::io, "cannot open " + f);
        auto part = coescore::read_score_lines(in);
        lines.insert(lines.end(), part.begin(), part.end());
    }
    std::ifstream lin(a.labels);
    if (!lin) fail(ErrorKind::io, "cannot open " + a.labels);
    const auto labels = metrics::read_labels(lin);
    const auto policy = a.orientation == "auto" ? metrics::OrientationPolicy::auto_select
                                                : metrics::OrientationPolicy::as_tagged;
    const auto rows = metrics::evaluate(lines, labels, policy, a.validation_fraction);

    std::ostringstream table;
    metrics::write_eval_table(table, rows);
    std::cout << table.str();
    if (!a.out.empty()) {
        const fs::path path(a.out);
        if (path.has_parent_path()) ensure_dir(path.parent_path());
        write_text(path, table.str());
        const nlohmann::json config = {{"scores", a.scores}, {"labels", a.labels},
                                       {"orientation", a.orientation},
                                       {"validation_fraction", a.validation_fraction}};
        write_manifest(path.has_parent_path() ? path.parent_path() : fs::path("."), "eval", config,
                       nlohmann::json::object(), {path});
    }
}

}  // namespace

void register_eval(CLI::App& app) {
    auto args = std::make_shared<EvalArgs>();
    auto* cmd = app.add_subcommand("eval", "AUROC / FPR95 / AUPR of score files against labels");
    cmd->add_option("scores", args->scores, "Score files")->required();
    cmd->add_option("--labels", args->labels, "Labels file: trace_id label")->required();
    cmd->add_option("--orientation", args->orientation, "as-tagged | auto")
        ->check(CLI::IsMember({"as-tagged", "auto"}))
        ->capture_default_str();
    cmd->add_option("--validation-fraction", args->validation_fraction,
                    "auto: leading share of each group used to pick the direction")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    cmd->add_option("--out", args->out, "Also write the table here");
    cmd->callback([args] { run(*args); });
}

}  // namespace kvr::cli
