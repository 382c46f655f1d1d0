#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "kvr/error.hpp"
#include "kvr/minitx.hpp"
#include "kvr/rng.hpp"

using namespace kvr;
using namespace kvr::minitx;

namespace {

ModelConfig toy_config(std::uint64_t seed = 7) {
    ModelConfig c;
    c.num_layers = 2;
    c.num_heads = 4;
    c.num_kv_heads = 2;
    c.d_model = 32;
    c.vocab_size = 64;
    c.max_seq_len = 32;
    c.seed = seed;
    return c;
}

float max_abs_diff(std::span<const float> a, std::span<const float> b) {
    REQUIRE(a.size() == b.size());
    float m = 0.0f;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected kvr::Error");
    return ErrorKind::malformed;
}

}  // namespace

TEST_CASE("init_model is deterministic per seed") {
    const Model a = init_model(toy_config(7));
    const Model b = init_model(toy_config(7));
    const Model c = init_model(toy_config(8));
    const auto ea = a.embedding_row(0);
    const auto eb = b.embedding_row(0);
    CHECK(std::equal(ea.begin(), ea.end(), eb.begin()));
    CHECK(a.serialize_weights() == b.serialize_weights());
    const auto wa = a.serialize_weights();
    const auto wc = c.serialize_weights();
    CHECK(std::mismatch(wa.begin(), wa.end(), wc.begin()).first != wa.end());

    // Norm gains are 1; everything else is uniform in +-1/sqrt(d_model).
    const float bound = 1.0f / std::sqrt(32.0f);
    for (float w : wa) CHECK((std::fabs(w) <= bound || w == 1.0f));
}

TEST_CASE("invalid configurations are rejected") {
    auto cfg = toy_config();
    cfg.num_kv_heads = 3;
    CHECK(kind_of([&] { init_model(cfg); }) == ErrorKind::configuration);
    cfg = toy_config();
    cfg.num_heads = 5;
    CHECK(kind_of([&] { init_model(cfg); }) == ErrorKind::configuration);
    cfg = toy_config();
    cfg.num_layers = 0;
    CHECK(kind_of([&] { init_model(cfg); }) == ErrorKind::configuration);
}

TEST_CASE("full_forward shapes, causality and domain errors") {
    const Model m = init_model(toy_config());
    const std::vector<TokenId> one{5};
    const auto r1 = m.full_forward(one);
    CHECK(r1.logits.size() == 64);
    CHECK(r1.hidden.size() == 3);
    CHECK(r1.hidden[0].size() == 32);
    CHECK(r1.token_logprobs.empty());

    const std::vector<TokenId> three{5, 9, 2};
    const auto r3 = m.full_forward(three);
    CHECK(max_abs_diff(r3.logits_row(0), r1.logits_row(0)) <= 1e-6f);
    CHECK(r3.token_logprobs.size() == 2);
    for (double lp : r3.token_logprobs) CHECK(lp <= 0.0);

    CHECK(kind_of([&] { m.full_forward(std::vector<TokenId>{}); }) == ErrorKind::domain);
    CHECK(kind_of([&] { m.full_forward(std::vector<TokenId>{64}); }) == ErrorKind::domain);
}

TEST_CASE("causality: later tokens never change earlier logits") {
    const Model m = init_model(toy_config());
    SplitMix64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<TokenId> a(12), b;
        for (auto& t : a) t = static_cast<TokenId>(rng.below(64));
        b = a;
        const int cut = 1 + static_cast<int>(rng.below(10));
        for (int i = cut + 1; i < 12; ++i) b[i] = static_cast<TokenId>(rng.below(64));
        const auto ra = m.full_forward(a);
        const auto rb = m.full_forward(b);
        for (int i = 0; i <= cut; ++i) CHECK(max_abs_diff(ra.logits_row(i), rb.logits_row(i)) == 0.0f);
    }
}

TEST_CASE("prefill matches the no-cache oracle") {
    const Model m = init_model(toy_config());
    const std::vector<TokenId> toks{5, 9, 2};
    auto [cache, rec] = prefill(m, toks);
    CHECK(cache.length() == 3);
    CHECK(cache.keys(0).size() == 3u * 2 * 8);
    const auto oracle = m.full_forward(toks);
    CHECK(max_abs_diff(rec.logits, oracle.logits) <= 1e-5f);
    for (int l = 0; l <= 2; ++l) CHECK(max_abs_diff(rec.hidden[l], oracle.hidden[l]) <= 1e-5f);
    REQUIRE(rec.token_logprobs.size() == oracle.token_logprobs.size());
    for (std::size_t i = 0; i < rec.token_logprobs.size(); ++i)
        CHECK(rec.token_logprobs[i] == doctest::Approx(oracle.token_logprobs[i]).epsilon(1e-5));

    std::vector<TokenId> too_long(33, 1);
    CHECK(kind_of([&] { prefill(m, too_long); }) == ErrorKind::capacity);
}

TEST_CASE("decode_step extends the cache and matches full_forward") {
    const Model m = init_model(toy_config());
    auto [cache, rec] = prefill(m, std::vector<TokenId>{5, 9});
    const auto k0_before = std::vector<float>(cache.keys(0).begin(), cache.keys(0).end());
    const auto out = decode_step(m, cache, 2);
    CHECK(cache.length() == 3);
    const auto oracle = m.full_forward(std::vector<TokenId>{5, 9, 2});
    CHECK(max_abs_diff(out.logits, oracle.logits_row(2)) <= 1e-5f);
    for (int l = 0; l <= 2; ++l) CHECK(max_abs_diff(std::span<const float>(out.hidden).subspan(l * 32, 32), oracle.hidden_row(l, 2)) <= 1e-5f);
    // append-only: committed bytes untouched
    CHECK(std::memcmp(k0_before.data(), cache.keys(0).data(), k0_before.size() * sizeof(float)) == 0);

    const int before = cache.length();
    for (int i = 0; i < 10; ++i) decode_step(m, cache, static_cast<TokenId>(i));
    CHECK(cache.length() == before + 10);
}

TEST_CASE("decode_step on a full cache is a capacity error") {
    auto cfg = toy_config();
    cfg.max_seq_len = 4;
    const Model m = init_model(cfg);
    auto [cache, rec] = prefill(m, std::vector<TokenId>{1, 2, 3, 4});
    CHECK(cache.full());
    CHECK(kind_of([&] { decode_step(m, cache, 5); }) == ErrorKind::capacity);
}

TEST_CASE("property: prefill + sequential decode equals full_forward") {
    const Model m = init_model(toy_config(11));
    SplitMix64 rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const int len = 1 + static_cast<int>(rng.below(16));
        std::vector<TokenId> toks(len);
        for (auto& t : toks) t = static_cast<TokenId>(rng.below(64));
        const int split = 1 + static_cast<int>(rng.below(len));
        auto [cache, rec] = prefill(m, std::span<const TokenId>(toks).first(split));
        const auto oracle = m.full_forward(toks);
        CHECK(max_abs_diff(rec.logits, std::span<const float>(oracle.logits).first(rec.logits.size())) <= 1e-5f);
        for (int i = split; i < len; ++i) {
            const auto out = decode_step(m, cache, toks[i]);
            CHECK(max_abs_diff(out.logits, oracle.logits_row(i)) <= 1e-5f);
        }
    }
}

TEST_CASE("generate: greedy and seeded temperature are deterministic") {
    const Model m = init_model(toy_config());
    const std::vector<TokenId> prompt{1, 2, 3};
    const auto g1 = generate(m, prompt, SamplerConfig::greedy(), {10, {}});
    const auto g2 = generate(m, prompt, SamplerConfig::greedy(), {10, {}});
    CHECK(g1.tokens == g2.tokens);
    CHECK(g1.tokens.size() == 13);
    CHECK(g1.cache.length() == 13);
    CHECK(g1.record.length == 13);
    CHECK(g1.record.generated_logprobs().size() == 10);

    const auto t1 = generate(m, prompt, SamplerConfig::with_temperature(1.5, 99), {10, {}});
    const auto t2 = generate(m, prompt, SamplerConfig::with_temperature(1.5, 99), {10, {}});
    CHECK(t1.tokens == t2.tokens);

    const auto none = generate(m, prompt, SamplerConfig::greedy(), {0, {}});
    CHECK(none.tokens == prompt);
    CHECK(none.cache.length() == 3);

    // generated record agrees with the oracle over the whole span
    const auto oracle = m.full_forward(g1.tokens);
    CHECK(max_abs_diff(g1.record.logits, oracle.logits) <= 1e-5f);
}

TEST_CASE("generate honours stop tokens") {
    const Model m = init_model(toy_config());
    const std::vector<TokenId> prompt{1, 2, 3};
    const auto free_run = generate(m, prompt, SamplerConfig::greedy(), {8, {}});
    const TokenId first = free_run.tokens[3];
    const auto stopped = generate(m, prompt, SamplerConfig::greedy(), {8, {first}});
    CHECK(stopped.tokens.size() == 4);
}

TEST_CASE("greedy ties resolve to the lowest id; banned ids are skipped") {
    TokenSampler s(SamplerConfig::greedy());
    const std::vector<float> logits{0.5f, 2.0f, 2.0f, 1.0f};
    CHECK(s.sample(logits) == 1);
    const std::vector<TokenId> banned{1};
    CHECK(s.sample(logits, banned) == 2);
}

TEST_CASE("estimate_memory closed form") {
    ModelConfig c = toy_config();
    c.num_kv_heads = 2;
    c.num_heads = 4;
    c.d_model = 32;  // d_head = 8
    const auto r = estimate_memory(c, 100, 4);
    CHECK(r.kv_bytes == 25600);
    CHECK(r.hidden_bytes == 38400);
    const auto z = estimate_memory(c, 0, 4);
    CHECK(z.kv_bytes == 0);
    CHECK(z.hidden_bytes == 0);
    const auto d = estimate_memory(c, 200, 4);
    CHECK(d.kv_bytes == 2 * r.kv_bytes);
    CHECK(d.hidden_bytes == 2 * r.hidden_bytes);
}

TEST_CASE("byte tokenizer round trip with specials") {
    const std::string text = "12+7=<think>\n</think>19<eos>";
    const auto toks = encode_text(text);
    CHECK(std::count(toks.begin(), toks.end(), kThinkOpen) == 1);
    CHECK(std::count(toks.begin(), toks.end(), kThinkClose) == 1);
    CHECK(decode_tokens(toks) == text);
}
