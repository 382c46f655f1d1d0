#include <algorithm>
#include <cmath>
#include <limits>

#include "kvr/error.hpp"
#include "kvr/minitx.hpp"
#include "kvr/rng.hpp"

namespace kvr::minitx {

namespace {

double log_prob_of(std::span<const float> row, TokenId token) {
    const float mx = *std::max_element(row.begin(), row.end());
    double denom = 0.0;
    for (float z : row) denom += std::exp(static_cast<double>(z) - mx);
    return static_cast<double>(row[token]) - mx - std::log(denom);
}

}  // namespace

Session::Session(const Model& model, std::span<const TokenId> prompt)
    : model_(&model), cache_(model.make_cache()) {
    const auto& cfg = model.config();
    require(!prompt.empty(), ErrorKind::domain, "prompt is empty");
    require(prompt.size() <= static_cast<std::size_t>(cfg.max_seq_len), ErrorKind::capacity,
            "prompt length " + std::to_string(prompt.size()) + " exceeds max_seq_len " +
                std::to_string(cfg.max_seq_len));
    for (TokenId t : prompt)
        require(t >= 0 && t < cfg.vocab_size, ErrorKind::domain,
                "token id " + std::to_string(t) + " outside vocabulary");
    record_.num_layers = cfg.num_layers;
    record_.d_model = cfg.d_model;
    record_.vocab_size = cfg.vocab_size;
    record_.hidden.assign(cfg.num_layers + 1, {});
    for (TokenId t : prompt) feed(t);
    record_.generated_from = 1;
}

std::span<const float> Session::last_logits() const {
    require(record_.length > 0, ErrorKind::domain, "session has no tokens");
    return record_.logits_row(record_.length - 1);
}

void Session::feed(TokenId token) {
    const auto& cfg = model_->config();
    const std::size_t d = cfg.d_model;
    std::vector<float> logits(cfg.vocab_size);
    std::vector<float> hidden((cfg.num_layers + 1) * d);
    model_->step(cache_, token, logits, hidden);

    if (record_.length > 0) record_.token_logprobs.push_back(log_prob_of(last_logits(), token));
    record_.logits.insert(record_.logits.end(), logits.begin(), logits.end());
    for (int l = 0; l <= cfg.num_layers; ++l)
        record_.hidden[l].insert(record_.hidden[l].end(), hidden.begin() + l * d,
                                 hidden.begin() + (l + 1) * d);
    ++record_.length;
    tokens_.push_back(token);
}

void Session::mark_prompt_end() { record_.generated_from = record_.length; }

PrefillResult prefill(const Model& model, std::span<const TokenId> tokens) {
    Session s(model, tokens);
    ForwardRecord rec = s.record();
    return {std::move(s).release_cache(), std::move(rec)};
}

DecodeOutput decode_step(const Model& model, KVCache& cache, TokenId token) {
    const auto& cfg = model.config();
    require(!cache.full(), ErrorKind::capacity,
            "decode_step on a full cache (length " + std::to_string(cache.length()) + ")");
    DecodeOutput out{std::vector<float>(cfg.vocab_size),
                     std::vector<float>(static_cast<std::size_t>(cfg.num_layers + 1) * cfg.d_model)};
    model.step(cache, token, out.logits, out.hidden);
    return out;
}

TokenSampler::TokenSampler(const SamplerConfig& config)
    : config_(config), state_(config.seed) {
    if (config.kind == SamplerConfig::Kind::temperature)
        require(config.temperature > 0.0 && std::isfinite(config.temperature),
                ErrorKind::configuration, "sampling temperature must be positive");
}

TokenId TokenSampler::sample(std::span<const float> logits, std::span<const TokenId> banned) {
    const auto is_banned = [&](std::size_t i) {
        return std::find(banned.begin(), banned.end(), static_cast<TokenId>(i)) != banned.end();
    };
    std::size_t best = logits.size();
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (is_banned(i)) continue;
        if (best == logits.size() || logits[i] > logits[best]) best = i;
    }
    require(best < logits.size(), ErrorKind::domain, "every token is banned");
    if (config_.kind == SamplerConfig::Kind::greedy) return static_cast<TokenId>(best);

    std::vector<double> p(logits.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (is_banned(i)) continue;
        p[i] = std::exp((static_cast<double>(logits[i]) - logits[best]) / config_.temperature);
        total += p[i];
    }
    SplitMix64 rng(state_);
    state_ = rng.next();
    double u = rng.uniform() * total;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        if (u < p[i]) return static_cast<TokenId>(i);
        u -= p[i];
    }
    return static_cast<TokenId>(best);
}

GenerationResult generate(const Model& model, std::span<const TokenId> prompt,
                          const SamplerConfig& sampler_cfg, const StopConfig& stop) {
    require(stop.max_new >= 0, ErrorKind::configuration, "max_new must be >= 0");
    Session s(model, prompt);
    s.mark_prompt_end();
    TokenSampler sampler(sampler_cfg);
    for (int i = 0; i < stop.max_new; ++i) {
        const TokenId next = sampler.sample(s.last_logits());
        s.feed(next);
        if (std::find(stop.stop_tokens.begin(), stop.stop_tokens.end(), next) != stop.stop_tokens.end())
            break;
    }
    auto tokens = s.tokens();
    ForwardRecord rec = s.record();
    return {std::move(tokens), std::move(s).release_cache(), std::move(rec)};
}

std::vector<TokenId> encode_text(std::string_view text) {
    std::vector<TokenId> out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text.substr(i, 7) == "<think>") {
            out.push_back(kThinkOpen);
            i += 7;
        } else if (text.substr(i, 8) == "</think>") {
            out.push_back(kThinkClose);
            i += 8;
        } else if (text.substr(i, 5) == "<eos>") {
            out.push_back(kEos);
            i += 5;
        } else {
            out.push_back(static_cast<unsigned char>(text[i]));
            ++i;
        }
    }
    return out;
}

std::string decode_tokens(std::span<const TokenId> tokens) {
    std::string out;
    for (TokenId t : tokens) {
        if (t == kThinkOpen) out += "<think>";
        else if (t == kThinkClose) out += "</think>";
        else if (t == kEos) out += "<eos>";
        else if (t >= 0 && t < 256) out.push_back(static_cast<char>(t));
        else out += "<" + std::to_string(t) + ">";
    }
    return out;
}

}  // namespace kvr::minitx
