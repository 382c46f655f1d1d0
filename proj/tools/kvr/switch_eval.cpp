#include "switch_eval.hpp"

#include "json.hpp"

namespace kvr::cli {

void PolicyStats::add(const toydata::WorkloadItem& item, const switcher::SwitchTranscript& tr) {
    const bool ok = switcher::grade_answer(tr.generated(), item.gold);
    ++n;
    correct += ok;
    tokens += tr.tokens_generated;
    if (item.easy) {
        ++easy_n;
        easy_correct += ok;
    } else {
        ++hard_n;
        hard_correct += ok;
    }
}

PolicyRun run_policy(const minitx::Model& model, const std::vector<toydata::WorkloadItem>& items, Policy policy,
                     const switcher::SwitchConfig& cfg, const ScorerFactory& scorer) {
    PolicyRun run;
    for (const auto& item : items) {
        switcher::SwitchTranscript tr;
        if (policy == Policy::controlled) {
            auto s = scorer(item);
            tr = switcher::run_controlled_generation(model, *s, item.prompt, cfg);
        } else {
            tr = switcher::plain_generation(
                model, item.prompt, policy == Policy::always_fast ? switcher::Mode::fast : switcher::Mode::slow, cfg);
        }
        run.stats.add(item, tr);
        run.transcripts.push_back(std::move(tr));
    }
    return run;
}

std::unique_ptr<switcher::DifficultyScorer> oracle_for(const toydata::WorkloadItem& item) {
    return std::make_unique<switcher::OracleScorer>(item.label.d, item.reasoning_need);
}

std::string transcript_jsonl(const std::string& item_id, const switcher::SwitchTranscript& tr, bool correct) {
    std::string out;
    for (const auto& e : tr.events) {
        nlohmann::json j = {{"item", item_id},
                            {"token_index", e.token_index},
                            {"d", e.d},
                            {"action", std::string(switcher::to_string(e.action))},
                            {"phase", std::string(switcher::to_string(e.phase))}};
        out += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
    }
    nlohmann::json end = {{"item", item_id},
                          {"tokens_generated", tr.tokens_generated},
                          {"correct", correct},
                          {"truncated", tr.truncated},
                          {"output", minitx::decode_tokens(tr.generated())}};
    if (tr.truncated) end["truncation_reason"] = tr.truncation_reason;
    out += end.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
    return out;
}

}  // namespace kvr::cli
