#pragma once

// Fast/slow thinking controller. The prompt cache is pooled and scored to
// pick a template suffix; in generative mode the live cache is re-scored
// every checkpoint_every generated tokens and <think> / </think> may be
// injected as forced tokens.
//
// Phases: fast answer | slow thinking | slow answer. A thinking phase ends
// when </think> is injected or when think_budget thinking tokens have been
// emitted (forced close). An answer phase ends after answer_tokens tokens
// or on a stop token. The sampler never emits control tokens itself.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kvr/difficulty.hpp"
#include "kvr/kvpool.hpp"
#include "kvr/minitx.hpp"

namespace kvr::switcher {

using minitx::TokenId;

enum class Mode { fast, slow };
enum class ControlMode { classification, generative };
enum class Phase { fast_answer, slow_thinking, slow_answer };
enum class Action { start_fast, start_slow, inject_think, inject_end_think, none };

std::string_view to_string(Mode m);
std::string_view to_string(ControlMode m);
std::string_view to_string(Phase p);
std::string_view to_string(Action a);
ControlMode parse_control_mode(std::string_view s);  // Error(usage)

Mode mode_of(Phase p);

struct PromptTemplate {
    std::vector<TokenId> fast_suffix{minitx::kThinkOpen, '\n', minitx::kThinkClose};
    std::vector<TokenId> slow_suffix{minitx::kThinkOpen, '\n'};

    const std::vector<TokenId>& suffix(Mode m) const { return m == Mode::fast ? fast_suffix : slow_suffix; }
};

// K+V, sum of the last 32 positions, mean over all layers.
inline kvpool::PoolingSpec default_switch_pooling() {
    auto s = kvpool::PoolingSpec::classifier({}, 32);
    s.layers.reset();
    return s;
}

struct SwitchConfig {
    double tau = 50.0;
    double tau_fast = 20.0;
    double tau_slow = 70.0;
    int checkpoint_every = 64;
    ControlMode mode = ControlMode::generative;
    int max_down_switches = 1;
    int max_up_switches = 1;
    kvpool::PoolingSpec pooling = default_switch_pooling();
    int max_new_tokens = 512;
    int answer_tokens = 16;
    int think_budget = 64;
    std::vector<TokenId> stop_tokens;
    minitx::SamplerConfig sampler = minitx::SamplerConfig::greedy();
    PromptTemplate templ;

    // Throws Error(configuration).
    void validate() const;
};

struct SwitchEvent {
    int token_index = 0;  // tokens generated when the event fired
    double d = 0.0;
    Action action = Action::none;
    Phase phase = Phase::fast_answer;  // phase the event was decided in
};

struct PhaseChange {
    int token_index = 0;
    Phase phase = Phase::fast_answer;
};

struct SwitchTranscript {
    std::vector<SwitchEvent> events;
    std::vector<TokenId> final_tokens;  // prompt + suffix + generated
    int prompt_len = 0;                 // prompt + suffix
    int tokens_generated = 0;           // includes injected and forced tokens
    std::vector<PhaseChange> mode_history;
    bool truncated = false;  // stopped by cache capacity or max_new_tokens
    std::string truncation_reason;

    std::span<const TokenId> generated() const {
        return std::span<const TokenId>(final_tokens).subspan(prompt_len);
    }
    int count(Action a) const;
};

Mode initial_decision(double d, const SwitchConfig& cfg);

// Generative mode only; Error(usage) otherwise.
Action checkpoint_decision(Phase phase, double d, const SwitchConfig& cfg, const SwitchTranscript& transcript);

struct ScoringContext {
    std::span<const double> features;  // cfg.pooling over the live cache
    const minitx::KVCache& cache;
    std::span<const TokenId> prompt;     // user prompt, no suffix
    std::span<const TokenId> generated;  // everything after the suffix
    std::optional<Phase> phase;          // empty for the initial decision
    int thinking_tokens = 0;
};

class DifficultyScorer {
public:
    virtual ~DifficultyScorer() = default;
    virtual double score(const ScoringContext& ctx) = 0;
};

class MlpScorer final : public DifficultyScorer {
public:
    explicit MlpScorer(difficulty::MLPParams params);
    double score(const ScoringContext& ctx) override;

private:
    difficulty::MLPParams params_;
};

// Knows the item's label and how much thinking it needs: scores `label`
// until `reasoning_need` thinking tokens have been produced, then 0.
class OracleScorer final : public DifficultyScorer {
public:
    OracleScorer(double label, int reasoning_need) : label_(label), need_(reasoning_need) {}
    double score(const ScoringContext& ctx) override;

private:
    double label_;
    int need_;
};

SwitchTranscript run_controlled_generation(const minitx::Model& model, DifficultyScorer& scorer,
                                           std::span<const TokenId> prompt, const SwitchConfig& cfg);

// Reference path without scoring: fixed mode, same budgets and sampler.
SwitchTranscript plain_generation(const minitx::Model& model, std::span<const TokenId> prompt, Mode mode,
                                  const SwitchConfig& cfg);

// Span after the last </think> (whole output if none), trimmed of ASCII
// whitespace, compared exactly with the trimmed gold.
bool grade_answer(std::span<const TokenId> generated, std::span<const TokenId> gold);
std::vector<TokenId> extract_answer(std::span<const TokenId> generated);

}  // namespace kvr::switcher
