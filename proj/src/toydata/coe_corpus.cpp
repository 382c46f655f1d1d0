#include <cmath>
#include <numeric>

#include "kvr/error.hpp"
#include "kvr/rng.hpp"
#include "kvr/toydata.hpp"

namespace kvr::toydata {

void CoECorpusConfig::validate() const {
    require(n_correct >= 0 && n_incorrect >= 0 && n_correct + n_incorrect >= 1, ErrorKind::usage,
            "corpus needs at least one trace");
    model.validate();
    require(prompt_min >= 1 && prompt_max >= prompt_min, ErrorKind::configuration, "bad prompt length range");
    require(gen_tokens >= 1, ErrorKind::configuration, "gen_tokens must be >= 1");
    require(prompt_max + gen_tokens <= model.max_seq_len, ErrorKind::configuration,
            "prompt_max + gen_tokens exceeds max_seq_len");
    require(smooth_temperature > 0 && erratic_temperature > 0, ErrorKind::configuration,
            "temperatures must be > 0");
    require(smooth_flip_prob >= 0 && smooth_flip_prob <= 1, ErrorKind::configuration,
            "smooth_flip_prob must be in [0, 1]");
}

namespace {

CoETrace make_trace(const minitx::Model& model, const CoECorpusConfig& cfg, bool correct, std::uint64_t seed) {
    SplitMix64 rng(seed);
    const int len = cfg.prompt_min + static_cast<int>(rng.below(cfg.prompt_max - cfg.prompt_min + 1));
    std::vector<TokenId> prompt;
    for (int i = 0; i < len; ++i) prompt.push_back(static_cast<TokenId>('a' + rng.below(26)));

    minitx::Session s(model, prompt);
    s.mark_prompt_end();
    const double temp = correct ? cfg.smooth_temperature : cfg.erratic_temperature;
    minitx::TokenSampler sampler(minitx::SamplerConfig::with_temperature(temp, rng.next()));
    const TokenId banned[] = {minitx::kThinkOpen, minitx::kThinkClose, minitx::kEos};
    for (int i = 0; i < cfg.gen_tokens; ++i) {
        TokenId t = sampler.sample(s.last_logits(), banned);
        if (correct && rng.uniform() < cfg.smooth_flip_prob) t = static_cast<TokenId>(rng.below(256));
        s.feed(t);
    }
    CoETrace out{s.tokens(), minitx::KVCache(1, 1, 1, 1), {}, correct};
    out.record = s.record();
    out.cache = std::move(s).release_cache();
    return out;
}

}  // namespace

std::vector<CoETrace> make_coe_corpus(const CoECorpusConfig& cfg) {
    cfg.validate();
    const auto model = minitx::init_model(cfg.model);
    const int n = cfg.n_correct + cfg.n_incorrect;
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    SplitMix64 shuffle(derive_seed(cfg.seed, 0x636f65));
    for (int i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    std::vector<CoETrace> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        const int k = order[i];
        out.push_back(make_trace(model, cfg, k < cfg.n_correct, derive_seed(cfg.seed, 1000 + k)));
    }
    return out;
}

traceio::TraceFile coe_trace_file(const CoECorpusConfig& cfg, const CoETrace& t, int index) {
    auto trace = traceio::make_model_trace(cfg.model, t.tokens, t.cache, &t.record);
    trace.meta["kind"] = "coe-trace";
    trace.meta["index"] = index;
    trace.meta["label"] = t.correct ? "correct" : "incorrect";
    trace.meta["corpus"] = {{"seed", cfg.seed},
                            {"smooth_temperature", cfg.smooth_temperature},
                            {"smooth_flip_prob", cfg.smooth_flip_prob},
                            {"erratic_temperature", cfg.erratic_temperature},
                            {"gen_tokens", cfg.gen_tokens}};
    return trace;
}

}  // namespace kvr::toydata
