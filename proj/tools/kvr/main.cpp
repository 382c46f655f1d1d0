#include <iostream>

#include "common.hpp"

int main(int argc, char** argv) {
    using namespace kvr::cli;
    invocation().start = std::chrono::steady_clock::now();
    invocation().argv.assign(argv, argv + argc);

    CLI::App app{"kvr: KV-cache confidence scoring and fast/slow switching toolkit"};
    app.require_subcommand(1);
    register_gen_toy(app);
    register_coe(app);
    register_eval(app);
    register_difficulty(app);
    register_switch(app);
    register_sweep(app);
    register_mem_estimate(app);
    register_trace(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::RuntimeError& e) {
        return e.get_exit_code();
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    } catch (const kvr::Error& e) {
        std::cerr << "kvr: " << kvr::to_string(e.kind()) << ": " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "kvr: " << e.what() << "\n";
        return kExitOther;
    }
    return kExitOk;
}
