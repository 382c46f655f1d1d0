#include <iostream>

#include "common.hpp"
#include "kvr/traceio.hpp"

namespace kvr::cli {

namespace {

// Exit code of the worst failure; validation beats io.
int run_validate(const std::vector<std::string>& inputs, bool quiet) {
    int worst = kExitOk;
    for (const auto& f : expand_traces(inputs)) {
        try {
            const auto trace = traceio::read_trace(f);
            if (!quiet)
                std::cout << "OK\t" << f.string() << "\t" << trace.tensors.size() << " tensors\t"
                          << trace.meta.value("kind", std::string("-")) << "\n";
        } catch (const Error& e) {
            std::cout << "INVALID\t" << f.string() << "\t" << to_string(e.kind()) << "\t" << e.what() << "\n";
            const int code = exit_code_for(e.kind());
            if (worst == kExitOk || code == kExitValidation) worst = code;
        }
    }
    return worst;
}

}  // namespace

void register_trace(CLI::App& app) {
    auto* trace = app.add_subcommand("trace", "KVTRACE utilities");
    trace->require_subcommand(1);
    auto inputs = std::make_shared<std::vector<std::string>>();
    auto quiet = std::make_shared<bool>(false);
    auto* validate = trace->add_subcommand("validate", "Read and validate trace files");
    validate->add_option("traces", *inputs, "Trace files or directories")->required();
    validate->add_flag("-q,--quiet", *quiet, "Only print failures");
    validate->callback([inputs, quiet] {
        const int code = run_validate(*inputs, *quiet);
        if (code != kExitOk) throw CLI::RuntimeError(code);
    });
}

}  // namespace kvr::cli
