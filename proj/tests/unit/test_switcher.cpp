#include <algorithm>

#include "doctest.h"
#include "kvr/rng.hpp"
#include "kvr/switcher.hpp"
#include "support/expect_error.hpp"
#include "support/switch_reference.hpp"

using namespace kvr;
using namespace kvr::switcher;
using kvr::minitx::kThinkClose;
using kvr::minitx::kThinkOpen;
using kvr::testing::constant_scorer;
using kvr::testing::kind_of;
using kvr::testing::reference_run;

namespace {

minitx::Model toy_model(std::uint64_t seed = 9) {
    minitx::ModelConfig cfg;
    cfg.seed = seed;
    return minitx::init_model(cfg);
}

int feature_dim(const minitx::Model& m, const SwitchConfig& cfg) {
    return static_cast<int>(kvpool::pooled_dim(cfg.pooling, m.config().num_kv_heads, m.config().d_head()));
}

class RandomScorer final : public DifficultyScorer {
public:
    explicit RandomScorer(std::uint64_t seed) : rng_(seed) {}
    double score(const ScoringContext&) override { return rng_.uniform(0, 100); }

private:
    SplitMix64 rng_;
};

}  // namespace

TEST_CASE("initial decision uses a strict threshold") {
    SwitchConfig cfg;
    cfg.tau = 50;
    CHECK(initial_decision(80, cfg) == Mode::slow);
    CHECK(initial_decision(50, cfg) == Mode::fast);
    CHECK(initial_decision(10, cfg) == Mode::fast);

    SplitMix64 rng(1);
    for (int i = 0; i < 1000; ++i) {
        const double d = rng.uniform(0, 100);
        SwitchConfig lo, hi;
        lo.tau = rng.uniform(20, 70);
        hi.tau = rng.uniform(lo.tau, 70);
        if (initial_decision(d, lo) == Mode::fast) CHECK(initial_decision(d, hi) == Mode::fast);
    }
}

TEST_CASE("checkpoint decisions") {
    SwitchConfig cfg;
    cfg.tau_fast = 20;
    cfg.tau_slow = 70;
    SwitchTranscript tr;
    CHECK(checkpoint_decision(Phase::slow_thinking, 5, cfg, tr) == Action::inject_end_think);
    CHECK(checkpoint_decision(Phase::fast_answer, 90, cfg, tr) == Action::inject_think);
    CHECK(checkpoint_decision(Phase::fast_answer, 70, cfg, tr) == Action::none);
    CHECK(checkpoint_decision(Phase::slow_thinking, 20, cfg, tr) == Action::none);
    CHECK(checkpoint_decision(Phase::slow_answer, 5, cfg, tr) == Action::none);

    cfg.max_down_switches = 0;
    CHECK(checkpoint_decision(Phase::slow_thinking, 5, cfg, tr) == Action::none);
    cfg.max_down_switches = 1;
    tr.events.push_back({16, 5, Action::inject_end_think, Phase::slow_thinking});
    CHECK(checkpoint_decision(Phase::slow_thinking, 5, cfg, tr) == Action::none);

    cfg.mode = ControlMode::classification;
    CHECK(kind_of([&] { checkpoint_decision(Phase::fast_answer, 90, cfg, tr); }) == ErrorKind::usage);
}

TEST_CASE("config validation") {
    SwitchConfig cfg;
    cfg.validate();
    cfg.tau_fast = 60;
    CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::configuration);
    cfg = {};
    cfg.checkpoint_every = 0;
    CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::configuration);
    CHECK(kind_of([] { parse_control_mode("both"); }) == ErrorKind::usage);
}

TEST_CASE("prompt template uses control tokens") {
    PromptTemplate t;
    CHECK(std::count(t.fast_suffix.begin(), t.fast_suffix.end(), kThinkOpen) == 1);
    CHECK(std::count(t.fast_suffix.begin(), t.fast_suffix.end(), kThinkClose) == 1);
    CHECK(std::count(t.slow_suffix.begin(), t.slow_suffix.end(), kThinkOpen) == 1);
    CHECK(std::count(t.slow_suffix.begin(), t.slow_suffix.end(), kThinkClose) == 0);
}

TEST_CASE("grade_answer") {
    auto enc = minitx::encode_text;
    CHECK(grade_answer(enc("<think>abc</think> 42"), enc("42")));
    CHECK_FALSE(grade_answer(enc("<think>abc</think> 41"), enc("42")));
    CHECK(grade_answer(enc("42"), enc("42")));
    CHECK(grade_answer(enc("</think>x</think>\n42\t"), enc(" 42")));
    CHECK_FALSE(grade_answer(enc("</think>42</think>"), enc("42")));
}

TEST_CASE("constant classifiers reproduce plain generation") {
    const auto model = toy_model();
    SwitchConfig cfg;
    cfg.checkpoint_every = 8;
    cfg.answer_tokens = 12;
    cfg.think_budget = 40;
    const int D = feature_dim(model, cfg);
    SplitMix64 rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<TokenId> prompt;
        const int len = 1 + static_cast<int>(rng.below(16));
        for (int i = 0; i < len; ++i) prompt.push_back(static_cast<TokenId>(rng.below(256)));

        auto zero = constant_scorer(D, -20.0);
        const auto fast = run_controlled_generation(model, zero, prompt, cfg);
        CHECK(fast.final_tokens == reference_run(model, prompt, Mode::fast, cfg));
        CHECK(fast.final_tokens == plain_generation(model, prompt, Mode::fast, cfg).final_tokens);
        CHECK(fast.events.front().action == Action::start_fast);
        CHECK(fast.count(Action::inject_think) == 0);

        auto hundred = constant_scorer(D, 20.0);
        const auto slow = run_controlled_generation(model, hundred, prompt, cfg);
        CHECK(slow.final_tokens == reference_run(model, prompt, Mode::slow, cfg));
        CHECK(slow.events.front().action == Action::start_slow);
        for (std::size_t i = 1; i < slow.events.size(); ++i) CHECK(slow.events[i].action == Action::none);
        CHECK(slow.tokens_generated == cfg.think_budget + 1 + cfg.answer_tokens);
    }
}

TEST_CASE("classification mode equals plain generation with the chosen suffix") {
    const auto model = toy_model(3);
    SwitchConfig cfg;
    cfg.mode = ControlMode::classification;
    cfg.checkpoint_every = 4;
    const int D = feature_dim(model, cfg);
    SplitMix64 rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        auto p = difficulty::MLPParams::zeros(D);
        for (auto& w : p.w1) w = rng.uniform(-0.3, 0.3);
        for (auto& w : p.w2) w = rng.uniform(-0.3, 0.3);
        p.b2 = rng.uniform(-1, 1);
        MlpScorer scorer(p);
        const auto prompt = minitx::encode_text("q" + std::to_string(trial));
        const auto tr = run_controlled_generation(model, scorer, prompt, cfg);
        REQUIRE(tr.events.size() == 1);
        const Mode m = tr.events[0].action == Action::start_fast ? Mode::fast : Mode::slow;
        CHECK(tr.final_tokens == reference_run(model, prompt, m, cfg));
    }
}

TEST_CASE("randomized scores keep transcripts legal") {
    const auto model = toy_model(5);
    SplitMix64 rng(6);
    for (int trial = 0; trial < 40; ++trial) {
        SwitchConfig cfg;
        cfg.checkpoint_every = 1 + static_cast<int>(rng.below(12));
        cfg.max_up_switches = static_cast<int>(rng.below(3));
        cfg.max_down_switches = static_cast<int>(rng.below(3));
        cfg.think_budget = 10 + static_cast<int>(rng.below(30));
        cfg.answer_tokens = 5 + static_cast<int>(rng.below(10));
        RandomScorer scorer(rng.next());
        const auto prompt = minitx::encode_text("legal");
        const auto tr = run_controlled_generation(model, scorer, prompt, cfg);

        REQUIRE(!tr.events.empty());
        CHECK((tr.events[0].action == Action::start_fast || tr.events[0].action == Action::start_slow));
        CHECK(tr.count(Action::inject_think) <= cfg.max_up_switches);
        CHECK(tr.count(Action::inject_end_think) <= cfg.max_down_switches);
        for (std::size_t i = 1; i < tr.events.size(); ++i) {
            const auto& e = tr.events[i];
            if (e.action == Action::inject_end_think) CHECK(mode_of(e.phase) == Mode::slow);
            if (e.action == Action::inject_think) CHECK(mode_of(e.phase) == Mode::fast);
            CHECK(e.token_index % cfg.checkpoint_every == 0);
            if (i >= 2) CHECK(e.token_index - tr.events[i - 1].token_index == cfg.checkpoint_every);
        }
        CHECK(static_cast<int>(tr.generated().size()) == tr.tokens_generated);
        // replaying control tokens reproduces the phase sequence
        Phase ph = tr.events[0].action == Action::start_fast ? Phase::fast_answer : Phase::slow_thinking;
        for (TokenId t : tr.generated()) {
            if (t == kThinkOpen) {
                CHECK(ph == Phase::fast_answer);
                ph = Phase::slow_thinking;
            } else if (t == kThinkClose) {
                CHECK(ph == Phase::slow_thinking);
                ph = Phase::slow_answer;
            }
        }
    }
}

TEST_CASE("oracle scorer ends thinking once the need is met") {
    const auto model = toy_model(7);
    SwitchConfig cfg;
    cfg.checkpoint_every = 16;
    cfg.answer_tokens = 16;
    cfg.think_budget = 64;
    const auto prompt = minitx::encode_text("hard item");

    OracleScorer hard(75, 16);
    const auto tr = run_controlled_generation(model, hard, prompt, cfg);
    REQUIRE(tr.events.size() >= 2);
    CHECK(tr.events[0].action == Action::start_slow);
    CHECK(tr.events[1].token_index == 16);
    CHECK(tr.events[1].action == Action::inject_end_think);
    CHECK(tr.tokens_generated == 16 + 1 + 16);

    OracleScorer easy(0, 16);
    const auto te = run_controlled_generation(model, easy, prompt, cfg);
    CHECK(te.events[0].action == Action::start_fast);
    CHECK(te.tokens_generated == 16);
}

TEST_CASE("cache capacity truncates and is recorded") {
    minitx::ModelConfig mc;
    mc.max_seq_len = 20;
    const auto model = minitx::init_model(mc);
    SwitchConfig cfg;
    auto scorer = constant_scorer(feature_dim(model, cfg), 20.0);
    const auto tr = run_controlled_generation(model, scorer, minitx::encode_text("abcdef"), cfg);
    CHECK(tr.truncated);
    CHECK(tr.final_tokens.size() == 20);
    CHECK(kind_of([&] { run_controlled_generation(model, scorer, std::vector<TokenId>{}, cfg); }) ==
          ErrorKind::domain);
}
