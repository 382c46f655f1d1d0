#include "kvr/switcher.hpp"

#include <algorithm>
#include <cmath>

#include "kvr/error.hpp"

namespace kvr::switcher {

namespace {

constexpr TokenId kBanned[] = {minitx::kThinkOpen, minitx::kThinkClose};

bool is_space(TokenId t) { return t == ' ' || t == '\t' || t == '\n' || t == '\r'; }

std::span<const TokenId> trim(std::span<const TokenId> s) {
    while (!s.empty() && is_space(s.front())) s = s.subspan(1);
    while (!s.empty() && is_space(s.back())) s = s.first(s.size() - 1);
    return s;
}

bool is_stop(const SwitchConfig& cfg, TokenId t) {
    return std::find(cfg.stop_tokens.begin(), cfg.stop_tokens.end(), t) != cfg.stop_tokens.end();
}

// Shared decode state for both the controller and the reference path.
class Stream {
public:
    Stream(const minitx::Model& model, std::span<const TokenId> prompt, const SwitchConfig& cfg)
        : cfg_(cfg), session_(model, prompt), sampler_(cfg.sampler) {
        tr_.final_tokens.assign(prompt.begin(), prompt.end());
    }

    minitx::Session& session() { return session_; }
    SwitchTranscript& transcript() { return tr_; }
    Phase phase() const { return phase_; }
    int thinking() const { return thinking_; }

    // Appends the template suffix; returns false on capacity.
    bool start(Mode m) {
        for (TokenId t : cfg_.templ.suffix(m)) {
            if (!feed_prompt(t)) return false;
        }
        session_.mark_prompt_end();
        tr_.prompt_len = static_cast<int>(tr_.final_tokens.size());
        phase_ = m == Mode::fast ? Phase::fast_answer : Phase::slow_thinking;
        tr_.mode_history.push_back({0, phase_});
        return true;
    }

    bool done() const { return finished_; }

    // True when the stream must stop before producing another token.
    bool exhausted() {
        if (finished_) return true;
        if (phase_ != Phase::slow_thinking && answer_ >= cfg_.answer_tokens) return finish();
        if (tr_.tokens_generated >= cfg_.max_new_tokens) return truncate("max_new_tokens reached");
        if (session_.full()) return truncate("cache capacity reached");
        return false;
    }

    void force(TokenId t, Phase next) {
        feed(t);
        set_phase(next);
    }

    // One ordinary step: forced close at the think budget, else sample.
    void advance() {
        if (phase_ == Phase::slow_thinking && thinking_ >= cfg_.think_budget) {
            force(minitx::kThinkClose, Phase::slow_answer);
            return;
        }
        const TokenId t = sampler_.sample(session_.last_logits(), kBanned);
        feed(t);
        if (phase_ == Phase::slow_thinking)
            ++thinking_;
        else
            ++answer_;
        if (is_stop(cfg_, t)) finish();
    }

private:
    bool feed_prompt(TokenId t) {
        if (session_.full()) {
            truncate("cache capacity reached in prompt suffix");
            return false;
        }
        session_.feed(t);
        tr_.final_tokens.push_back(t);
        return true;
    }
    void feed(TokenId t) {
        session_.feed(t);
        tr_.final_tokens.push_back(t);
        ++tr_.tokens_generated;
    }
    void set_phase(Phase p) {
        phase_ = p;
        tr_.mode_history.push_back({tr_.tokens_generated, p});
    }
    bool finish() {
        finished_ = true;
        return true;
    }
    bool truncate(std::string why) {
        tr_.truncated = true;
        tr_.truncation_reason = std::move(why);
        return finish();
    }

    const SwitchConfig& cfg_;
    minitx::Session session_;
    minitx::TokenSampler sampler_;
    SwitchTranscript tr_;
    Phase phase_ = Phase::fast_answer;
    int thinking_ = 0;
    int answer_ = 0;
    bool finished_ = false;
};

}  // namespace

std::string_view to_string(Mode m) { return m == Mode::fast ? "fast" : "slow"; }

std::string_view to_string(ControlMode m) {
    return m == ControlMode::classification ? "classification" : "generative";
}

std::string_view to_string(Phase p) {
    switch (p) {
        case Phase::fast_answer: return "fast-answer";
        case Phase::slow_thinking: return "slow-thinking";
        case Phase::slow_answer: return "slow-answer";
    }
    return "?";
}

std::string_view to_string(Action a) {
    switch (a) {
        case Action::start_fast: return "start-fast";
        case Action::start_slow: return "start-slow";
        case Action::inject_think: return "inject-think";
        case Action::inject_end_think: return "inject-end-think";
        case Action::none: return "none";
    }
    return "?";
}

ControlMode parse_control_mode(std::string_view s) {
    if (s == "classification") return ControlMode::classification;
    if (s == "generative") return ControlMode::generative;
    fail(ErrorKind::usage, "mode must be classification or generative, got '" + std::string(s) + "'");
}

Mode mode_of(Phase p) { return p == Phase::fast_answer ? Mode::fast : Mode::slow; }

void SwitchConfig::validate() const {
    require(std::isfinite(tau) && std::isfinite(tau_fast) && std::isfinite(tau_slow), ErrorKind::configuration,
            "thresholds must be finite");
    require(tau_fast <= tau && tau <= tau_slow, ErrorKind::configuration, "thresholds must satisfy tau_fast <= tau <= tau_slow");
    require(checkpoint_every >= 1, ErrorKind::configuration, "checkpoint_every must be >= 1");
    require(max_up_switches >= 0 && max_down_switches >= 0, ErrorKind::configuration,
            "switch budgets must be >= 0");
    require(max_new_tokens >= 0 && answer_tokens >= 0 && think_budget >= 0, ErrorKind::configuration,
            "token budgets must be >= 0");
    require(!templ.fast_suffix.empty() && !templ.slow_suffix.empty(), ErrorKind::configuration,
            "template suffixes must be nonempty");
    pooling.validate();
}

int SwitchTranscript::count(Action a) const {
    return static_cast<int>(std::count_if(events.begin(), events.end(), [a](const SwitchEvent& e) { return e.action == a; }));
}

Mode initial_decision(double d, const SwitchConfig& cfg) { return d > cfg.tau ? Mode::slow : Mode::fast; }

Action checkpoint_decision(Phase phase, double d, const SwitchConfig& cfg, const SwitchTranscript& transcript) {
    require(cfg.mode == ControlMode::generative, ErrorKind::usage, "checkpoint decisions need generative mode");
    switch (phase) {
        case Phase::slow_thinking:
            if (d < cfg.tau_fast && transcript.count(Action::inject_end_think) < cfg.max_down_switches)
                return Action::inject_end_think;
            return Action::none;
        case Phase::fast_answer:
            if (d > cfg.tau_slow && transcript.count(Action::inject_think) < cfg.max_up_switches)
                return Action::inject_think;
            return Action::none;
        case Phase::slow_answer:
            return Action::none;
    }
    return Action::none;
}

MlpScorer::MlpScorer(difficulty::MLPParams params) : params_(std::move(params)) { params_.check(); }

double MlpScorer::score(const ScoringContext& ctx) { return difficulty::mlp_forward(params_, ctx.features); }

double OracleScorer::score(const ScoringContext& ctx) {
    if (ctx.phase == Phase::slow_thinking && ctx.thinking_tokens >= need_) return 0.0;
    return label_;
}

SwitchTranscript run_controlled_generation(const minitx::Model& model, DifficultyScorer& scorer,
                                           std::span<const TokenId> prompt, const SwitchConfig& cfg) {
    cfg.validate();
    require(!prompt.empty(), ErrorKind::domain, "prompt must be nonempty");
    cfg.pooling.validate(model.config().num_layers);
    Stream s(model, prompt, cfg);

    auto score_now = [&](std::optional<Phase> phase) {
        const auto& cache = s.session().cache();
        const auto features = kvpool::pool_vector(cache, cfg.pooling);
        const auto& toks = s.transcript().final_tokens;
        const std::size_t gen_from = phase ? static_cast<std::size_t>(s.transcript().prompt_len) : toks.size();
        ScoringContext ctx{features, cache, prompt, std::span<const TokenId>(toks).subspan(gen_from), phase,
                           s.thinking()};
        const double d = scorer.score(ctx);
        require(std::isfinite(d), ErrorKind::domain, "difficulty scorer returned a non-finite score");
        return d;
    };

    const double d0 = score_now(std::nullopt);
    const Mode m = initial_decision(d0, cfg);
    s.transcript().events.push_back(
        {0, d0, m == Mode::fast ? Action::start_fast : Action::start_slow, m == Mode::fast ? Phase::fast_answer : Phase::slow_thinking});
    if (!s.start(m)) return std::move(s.transcript());

    int last_checkpoint = 0;
    while (!s.exhausted()) {
        auto& tr = s.transcript();
        if (cfg.mode == ControlMode::generative && tr.tokens_generated > 0 &&
            tr.tokens_generated % cfg.checkpoint_every == 0 && tr.tokens_generated != last_checkpoint) {
            last_checkpoint = tr.tokens_generated;
            const Phase phase = s.phase();
            const double d = score_now(phase);
            const Action a = checkpoint_decision(phase, d, cfg, tr);
            tr.events.push_back({tr.tokens_generated, d, a, phase});
            if (a == Action::inject_think) {
                s.force(minitx::kThinkOpen, Phase::slow_thinking);
                continue;
            }
            if (a == Action::inject_end_think) {
                s.force(minitx::kThinkClose, Phase::slow_answer);
                continue;
            }
        }
        s.advance();
    }
    return std::move(s.transcript());
}

SwitchTranscript plain_generation(const minitx::Model& model, std::span<const TokenId> prompt, Mode mode,
                                  const SwitchConfig& cfg) {
    cfg.validate();
    require(!prompt.empty(), ErrorKind::domain, "prompt must be nonempty");
    Stream s(model, prompt, cfg);
    s.transcript().events.push_back(
        {0, 0.0, mode == Mode::fast ? Action::start_fast : Action::start_slow, mode == Mode::fast ? Phase::fast_answer : Phase::slow_thinking});
    if (!s.start(mode)) return std::move(s.transcript());
    while (!s.exhausted()) s.advance();
    return std::move(s.transcript());
}

std::vector<TokenId> extract_answer(std::span<const TokenId> generated) {
    auto it = std::find(generated.rbegin(), generated.rend(), minitx::kThinkClose);
    std::span<const TokenId> tail = it == generated.rend() ? generated : generated.subspan(generated.rend() - it);
    tail = trim(tail);
    return {tail.begin(), tail.end()};
}

bool grade_answer(std::span<const TokenId> generated, std::span<const TokenId> gold) {
    const auto answer = extract_answer(generated);
    const auto g = trim(gold);
    return std::equal(answer.begin(), answer.end(), g.begin(), g.end());
}

}  // namespace kvr::switcher
