#include <iostream>
#include <sstream>

#include "common.hpp"
#include "kvr/coescore.hpp"
#include "kvr/traceio.hpp"

namespace kvr::cli {

namespace {

struct CoeArgs {
    std::vector<std::string> traces;
    std::string pooling = kvpool::PoolingSpec::token_trajectory().to_string();
    std::string method = "coe_r";
    std::string axis = "token";
    std::string orientation;
    double alpha = 1.0;
    double beta = 1.0;
    std::string out;
    std::string out_dir;
};

coescore::ConfidenceScore score_trace(const traceio::TraceFile& trace, const CoeArgs& a,
                                      const kvpool::PoolingSpec& spec) {
    const auto method = coescore::parse_method(a.method);
    if (method == coescore::Method::coe_r || method == coescore::Method::coe_c) {
        const coescore::CoEMethod m{method, {a.alpha, a.beta}};
        if (spec.source == kvpool::Source::hidden_states) {
            require(a.axis == "layer", ErrorKind::usage, "hidden-state CoE runs along the layer axis");
            return coescore::hidden_coe(traceio::record_from_trace(trace), spec, m);
        }
        return coescore::kv_coe(traceio::cache_from_trace(trace), spec, m, coescore::parse_axis(a.axis));
    }
    return coescore::score_baseline(method, traceio::record_from_trace(trace));
}

void run(const CoeArgs& a) {
    const auto files = expand_traces(a.traces);
    const auto spec = kvpool::PoolingSpec::parse(a.pooling);
    spec.validate();
    coescore::parse_method(a.method);
    coescore::parse_axis(a.axis);

    std::ostringstream out;
    for (const auto& f : files) {
        auto score = score_trace(traceio::read_trace(f), a, spec);
        if (!a.orientation.empty()) score.orientation = coescore::parse_orientation(a.orientation);
        out << coescore::format_score_line({trace_id(f), score}) << "\n";
    }

    fs::path path = a.out.empty() ? resolve_out_dir(a.out_dir) / "scores.txt" : fs::path(a.out);
    if (path.has_parent_path()) ensure_dir(path.parent_path());
    write_text(path, out.str());
    const nlohmann::json config = {{"pooling", spec.to_string()}, {"method", a.method}, {"axis", a.axis},
                                   {"orientation", a.orientation}, {"alpha", a.alpha}, {"beta", a.beta},
                                   {"n_traces", files.size()}};
    write_manifest(path.has_parent_path() ? path.parent_path() : fs::path("."), "coe", config,
                   nlohmann::json::object(), {path});
    std::cout << "scored " << files.size() << " traces -> " << path.string() << "\n";
}

}  // namespace

void register_coe(CLI::App& app) {
    auto args = std::make_shared<CoeArgs>();
    auto* cmd = app.add_subcommand("coe", "Score traces with KV-CoE or an output-probability baseline");
    cmd->add_option("traces", args->traces, "Trace files or directories")->required();
    cmd->add_option("--pooling", args->pooling, "Pooling spec string")->capture_default_str();
    cmd->add_option("--method", args->method, "coe_r | coe_c | maxprob | ppl | entropy")->capture_default_str();
    cmd->add_option("--axis", args->axis, "token | layer")->capture_default_str();
    cmd->add_option("--orientation", args->orientation,
                    "Override the tag: higher-is-correct | lower-is-correct");
    cmd->add_option("--alpha", args->alpha, "CoE-R weight on step length")->capture_default_str();
    cmd->add_option("--beta", args->beta, "CoE-R weight on turning angle")->capture_default_str();
    cmd->add_option("--out", args->out, "Scores file (default <out-dir>/scores.txt)");
    cmd->add_option("-o,--out-dir", args->out_dir, "Output directory (default $KVR_OUT_DIR)");
    cmd->callback([args] { run(*args); });
}

}  // namespace kvr::cli
