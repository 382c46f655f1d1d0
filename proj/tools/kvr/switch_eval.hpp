#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "kvr/switcher.hpp"
#include "kvr/toydata.hpp"

namespace kvr::cli {

enum class Policy { always_fast, always_slow, controlled };

struct PolicyStats {
    int n = 0;
    int correct = 0;
    long long tokens = 0;
    int easy_n = 0, easy_correct = 0;
    int hard_n = 0, hard_correct = 0;

    double accuracy() const { return n ? static_cast<double>(correct) / n : 0.0; }
    double mean_tokens() const { return n ? static_cast<double>(tokens) / n : 0.0; }
    void add(const toydata::WorkloadItem& item, const switcher::SwitchTranscript& tr);
};

// Scorer factory per item; used for the controlled policy.
using ScorerFactory = std::function<std::unique_ptr<switcher::DifficultyScorer>(const toydata::WorkloadItem&)>;

struct PolicyRun {
    PolicyStats stats;
    std::vector<switcher::SwitchTranscript> transcripts;
};

PolicyRun run_policy(const minitx::Model& model, const std::vector<toydata::WorkloadItem>& items, Policy policy,
                     const switcher::SwitchConfig& cfg, const ScorerFactory& scorer = {});

std::unique_ptr<switcher::DifficultyScorer> oracle_for(const toydata::WorkloadItem& item);

// One transcript event per line (JSON), prefixed by the item id.
std::string transcript_jsonl(const std::string& item_id, const switcher::SwitchTranscript& tr, bool correct);

}  // namespace kvr::cli
