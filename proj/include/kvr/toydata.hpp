#pragma once

// Synthetic desk-scale corpora.
//
// CoE corpus: "correct" traces are decoded at low temperature with sparse
// uniform token flips (smooth trajectories); "incorrect" traces are decoded
// at high temperature (erratic trajectories).
//
// Switch workload: easy prompts are digit strings whose gold answer is the
// fast-mode output; hard prompts are letter strings whose gold answer is
// the full slow-mode output. Slow mode emits think_budget + 1 +
// answer_tokens tokens against answer_tokens for fast.

#include <cstdint>
#include <vector>

#include "kvr/minitx.hpp"
#include "kvr/switcher.hpp"
#include "kvr/traceio.hpp"

namespace kvr::toydata {

using minitx::TokenId;

struct CoECorpusConfig {
    int n_correct = 500;
    int n_incorrect = 500;
    std::uint64_t seed = 1;
    minitx::ModelConfig model{};
    int prompt_min = 2;
    int prompt_max = 6;
    int gen_tokens = 48;
    double smooth_temperature = 0.1;
    double smooth_flip_prob = 0.1;
    double erratic_temperature = 1.5;

    void validate() const;  // Error(usage / configuration)
};

struct CoETrace {
    std::vector<TokenId> tokens;
    minitx::KVCache cache;
    minitx::ForwardRecord record;
    bool correct = false;
};

// Items are shuffled with the corpus seed; item i depends only on (seed, i).
std::vector<CoETrace> make_coe_corpus(const CoECorpusConfig& cfg);

struct SwitchWorkloadConfig {
    int n_items = 100;
    double easy_fraction = 0.5;
    std::uint64_t seed = 1;
    minitx::ModelConfig model = default_switch_model();
    int prompt_min = 8;
    int prompt_max = 24;
    int answer_tokens = 16;
    int think_budget = 64;
    int reasoning_need = 16;

    static minitx::ModelConfig default_switch_model();
    void validate() const;
    // Switch config carrying this workload's budgets.
    switcher::SwitchConfig switch_config() const;
};

struct WorkloadItem {
    std::vector<TokenId> prompt;
    bool easy = false;
    std::vector<TokenId> gold;
    int reasoning_need = 0;
    difficulty::DifficultyLabel label;
    int fast_tokens = 0;
    int slow_tokens = 0;
};

// Exactly round(n_items * easy_fraction) easy items, positions seeded.
std::vector<WorkloadItem> make_switch_workload(const minitx::Model& model, const SwitchWorkloadConfig& cfg);

// KVTRACE records for gen-toy output.
traceio::TraceFile coe_trace_file(const CoECorpusConfig& cfg, const CoETrace& t, int index);
traceio::TraceFile workload_trace_file(const SwitchWorkloadConfig& cfg, const minitx::Model& model,
                                       const WorkloadItem& item, int index);
WorkloadItem workload_item_from_trace(const traceio::TraceFile& trace);
minitx::ModelConfig model_config_from_trace(const traceio::TraceFile& trace);

}  // namespace kvr::toydata
