#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "kvr/error.hpp"
#include "kvr/minitx.hpp"
#include "kvr/rng.hpp"
#include "kvr/simd.hpp"

namespace kvr::minitx {

namespace {

constexpr float kNormEps = 1e-5f;

void matvec(std::span<const float> w, std::span<const float> x, std::span<float> y) {
    const std::size_t cols = x.size();
    for (std::size_t r = 0; r < y.size(); ++r) y[r] = simd::dot(w.subspan(r * cols, cols), x);
}

void rms_norm(std::span<const float> x, std::span<const float> gain, std::span<float> out) {
    double ss = 0.0;
    for (float v : x) ss += static_cast<double>(v) * v;
    const float inv = static_cast<float>(1.0 / std::sqrt(ss / x.size() + kNormEps));
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * inv * gain[i];
}

float gelu(float x) {
    return 0.5f * x * (1.0f + std::erf(x * static_cast<float>(M_SQRT1_2)));
}

// Softmax over scores in place. Denominator accumulated in double.
void softmax_inplace(std::span<float> scores) {
    const float mx = *std::max_element(scores.begin(), scores.end());
    double denom = 0.0;
    for (float& s : scores) {
        const double e = std::exp(static_cast<double>(s) - mx);
        s = static_cast<float>(e);
        denom += e;
    }
    for (float& s : scores) s = static_cast<float>(s / denom);
}

void fill_uniform(std::vector<float>& w, std::size_t n, float bound, SplitMix64& rng) {
    w.resize(n);
    for (float& v : w) v = static_cast<float>(rng.uniform(-bound, bound));
}

}  // namespace

void ModelConfig::validate() const {
    require(num_layers >= 1 && num_heads >= 1 && num_kv_heads >= 1 && d_model >= 1 &&
                vocab_size >= 1 && max_seq_len >= 1,
            ErrorKind::configuration, "model dimensions must be >= 1");
    require(d_model % num_heads == 0, ErrorKind::configuration,
            "d_model (" + std::to_string(d_model) + ") not divisible by num_heads (" +
                std::to_string(num_heads) + ")");
    require(num_heads % num_kv_heads == 0, ErrorKind::configuration,
            "num_heads (" + std::to_string(num_heads) + ") not divisible by num_kv_heads (" +
                std::to_string(num_kv_heads) + ")");
}

Model::Model(const ModelConfig& config) : config_(config) {
    config_.validate();
    const std::size_t d = config_.d_model;
    const std::size_t q_dim = static_cast<std::size_t>(config_.num_heads) * config_.d_head();
    const std::size_t kv_dim = static_cast<std::size_t>(config_.num_kv_heads) * config_.d_head();
    const std::size_t ff = config_.ffn_dim();
    const std::size_t vocab = config_.vocab_size;
    const float bound = static_cast<float>(1.0 / std::sqrt(static_cast<double>(d)));

    // Fill order is part of the reproducibility contract: embedding, then
    // per layer wq wk wv wo w1 w2, then lm_head. Norm gains start at 1.
    SplitMix64 rng(config_.seed);
    fill_uniform(embedding_, vocab * d, bound, rng);
    layers_.resize(config_.num_layers);
    for (auto& layer : layers_) {
        layer.attn_norm.assign(d, 1.0f);
        layer.ffn_norm.assign(d, 1.0f);
        fill_uniform(layer.wq, q_dim * d, bound, rng);
        fill_uniform(layer.wk, kv_dim * d, bound, rng);
        fill_uniform(layer.wv, kv_dim * d, bound, rng);
        fill_uniform(layer.wo, d * q_dim, bound, rng);
        fill_uniform(layer.w1, ff * d, bound, rng);
        fill_uniform(layer.w2, d * ff, bound, rng);
    }
    final_norm_.assign(d, 1.0f);
    fill_uniform(lm_head_, vocab * d, bound, rng);

    positions_.resize(static_cast<std::size_t>(config_.max_seq_len) * d);
    for (int pos = 0; pos < config_.max_seq_len; ++pos) {
        for (std::size_t i = 0; i < d; i += 2) {
            const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
            positions_[pos * d + i] = static_cast<float>(std::sin(pos * freq));
            if (i + 1 < d) positions_[pos * d + i + 1] = static_cast<float>(std::cos(pos * freq));
        }
    }
}

Model init_model(const ModelConfig& config) { return Model(config); }

std::vector<float> Model::serialize_weights() const {
    std::vector<float> out(embedding_);
    for (const auto& layer : layers_) {
        for (const auto* w : {&layer.attn_norm, &layer.wq, &layer.wk, &layer.wv, &layer.wo,
                              &layer.ffn_norm, &layer.w1, &layer.w2})
            out.insert(out.end(), w->begin(), w->end());
    }
    out.insert(out.end(), final_norm_.begin(), final_norm_.end());
    out.insert(out.end(), lm_head_.begin(), lm_head_.end());
    return out;
}

std::span<const float> Model::embedding_row(TokenId token) const {
    require(token >= 0 && token < config_.vocab_size, ErrorKind::domain, "token id out of range");
    return {embedding_.data() + static_cast<std::size_t>(token) * config_.d_model,
            static_cast<std::size_t>(config_.d_model)};
}

KVCache Model::make_cache() const {
    return KVCache(config_.num_layers, config_.num_kv_heads, config_.d_head(), config_.max_seq_len);
}

void Model::check_tokens(std::span<const TokenId> tokens) const {
    require(!tokens.empty(), ErrorKind::domain, "token sequence is empty");
    require(tokens.size() <= static_cast<std::size_t>(config_.max_seq_len), ErrorKind::capacity,
            "sequence length " + std::to_string(tokens.size()) + " exceeds max_seq_len " +
                std::to_string(config_.max_seq_len));
    for (TokenId t : tokens) {
        require(t >= 0 && t < config_.vocab_size, ErrorKind::domain,
                "token id " + std::to_string(t) + " outside vocabulary of size " +
                    std::to_string(config_.vocab_size));
    }
}

void Model::embed(TokenId token, int pos, std::span<float> out) const {
    const auto row = embedding_row(token);
    const std::size_t d = config_.d_model;
    for (std::size_t i = 0; i < d; ++i) out[i] = row[i] + positions_[pos * d + i];
}

void Model::step(KVCache& cache, TokenId token, std::span<float> logits_out,
                 std::span<float> hidden_out) const {
    require(!cache.full(), ErrorKind::capacity, "KV cache is full");
    require(token >= 0 && token < config_.vocab_size, ErrorKind::domain,
            "token id " + std::to_string(token) + " outside vocabulary");
    const std::size_t d = config_.d_model;
    const int dh = config_.d_head();
    const int heads = config_.num_heads;
    const int group = config_.num_heads / config_.num_kv_heads;
    const int pos = cache.length();
    const std::size_t kv_width = cache.row_width();
    const float scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(dh)));

    std::vector<float> x(d), h(d), q(static_cast<std::size_t>(heads) * dh), attn(q.size()),
        proj(d), ff(config_.ffn_dim()), scores(pos + 1);
    embed(token, pos, x);
    std::copy(x.begin(), x.end(), hidden_out.begin());

    for (int l = 0; l < config_.num_layers; ++l) {
        const Layer& w = layers_[l];
        rms_norm(x, w.attn_norm, h);
        matvec(w.wq, h, q);
        auto k_slot = cache.pending_key(l);
        auto v_slot = cache.pending_value(l);
        matvec(w.wk, h, k_slot);
        matvec(w.wv, h, v_slot);

        // Attend over committed rows plus the pending one.
        const float* keys = k_slot.data() - kv_width * pos;
        const float* values = v_slot.data() - kv_width * pos;
        std::fill(attn.begin(), attn.end(), 0.0f);
        for (int hq = 0; hq < heads; ++hq) {
            const std::size_t kv_off = static_cast<std::size_t>(hq / group) * dh;
            std::span<const float> qh(q.data() + static_cast<std::size_t>(hq) * dh, dh);
            for (int j = 0; j <= pos; ++j)
                scores[j] = simd::dot(qh, {keys + kv_width * j + kv_off, static_cast<std::size_t>(dh)}) * scale;
            softmax_inplace(scores);
            std::span<float> out(attn.data() + static_cast<std::size_t>(hq) * dh, dh);
            for (int j = 0; j <= pos; ++j)
                simd::axpy(scores[j], {values + kv_width * j + kv_off, static_cast<std::size_t>(dh)}, out);
        }
        matvec(w.wo, attn, proj);
        for (std::size_t i = 0; i < d; ++i) x[i] += proj[i];

        rms_norm(x, w.ffn_norm, h);
        matvec(w.w1, h, ff);
        for (float& v : ff) v = gelu(v);
        matvec(w.w2, ff, proj);
        for (std::size_t i = 0; i < d; ++i) x[i] += proj[i];
        std::copy(x.begin(), x.end(), hidden_out.begin() + (l + 1) * d);
    }
    cache.commit();

    rms_norm(x, final_norm_, h);
    matvec(lm_head_, h, logits_out);
}

// No-cache path: every layer recomputes Q/K/V for the whole sequence and
// applies a causal mask. Shares only the elementwise helpers with step().
ForwardRecord Model::full_forward(std::span<const TokenId> tokens) const {
    check_tokens(tokens);
    const int t = static_cast<int>(tokens.size());
    const std::size_t d = config_.d_model;
    const int dh = config_.d_head();
    const int heads = config_.num_heads;
    const int group = config_.num_heads / config_.num_kv_heads;
    const std::size_t q_dim = static_cast<std::size_t>(heads) * dh;
    const std::size_t kv_dim = static_cast<std::size_t>(config_.num_kv_heads) * dh;
    const std::size_t vocab = config_.vocab_size;
    const float scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(dh)));

    ForwardRecord rec;
    rec.num_layers = config_.num_layers;
    rec.d_model = config_.d_model;
    rec.vocab_size = config_.vocab_size;
    rec.length = t;
    rec.generated_from = 1;
    rec.hidden.assign(config_.num_layers + 1, std::vector<float>(t * d));

    std::vector<float> x(t * d);
    for (int i = 0; i < t; ++i) embed(tokens[i], i, std::span<float>(x).subspan(i * d, d));
    rec.hidden[0] = x;

    std::vector<float> h(t * d), q(t * q_dim), k(t * kv_dim), v(t * kv_dim), attn(t * q_dim),
        proj(d), ff(config_.ffn_dim());
    std::vector<float> scores;
    for (int l = 0; l < config_.num_layers; ++l) {
        const Layer& w = layers_[l];
        for (int i = 0; i < t; ++i) {
            auto hi = std::span<float>(h).subspan(i * d, d);
            rms_norm(std::span<const float>(x).subspan(i * d, d), w.attn_norm, hi);
            matvec(w.wq, hi, std::span<float>(q).subspan(i * q_dim, q_dim));
            matvec(w.wk, hi, std::span<float>(k).subspan(i * kv_dim, kv_dim));
            matvec(w.wv, hi, std::span<float>(v).subspan(i * kv_dim, kv_dim));
        }
        std::fill(attn.begin(), attn.end(), 0.0f);
        for (int hq = 0; hq < heads; ++hq) {
            const std::size_t kv_off = static_cast<std::size_t>(hq / group) * dh;
            for (int i = 0; i < t; ++i) {
                scores.assign(i + 1, 0.0f);
                std::span<const float> qi(q.data() + i * q_dim + hq * dh, dh);
                for (int j = 0; j <= i; ++j)
                    scores[j] = simd::dot(qi, {k.data() + j * kv_dim + kv_off, static_cast<std::size_t>(dh)}) * scale;
                softmax_inplace(scores);
                std::span<float> out(attn.data() + i * q_dim + hq * dh, dh);
                for (int j = 0; j <= i; ++j)
                    simd::axpy(scores[j], {v.data() + j * kv_dim + kv_off, static_cast<std::size_t>(dh)}, out);
            }
        }
        for (int i = 0; i < t; ++i) {
            auto xi = std::span<float>(x).subspan(i * d, d);
            matvec(w.wo, std::span<const float>(attn).subspan(i * q_dim, q_dim), proj);
            for (std::size_t c = 0; c < d; ++c) xi[c] += proj[c];
            auto hi = std::span<float>(h).subspan(i * d, d);
            rms_norm(xi, w.ffn_norm, hi);
            matvec(w.w1, hi, ff);
            for (float& f : ff) f = gelu(f);
            matvec(w.w2, ff, proj);
            for (std::size_t c = 0; c < d; ++c) xi[c] += proj[c];
        }
        rec.hidden[l + 1] = x;
    }

    rec.logits.resize(t * vocab);
    for (int i = 0; i < t; ++i) {
        auto hi = std::span<float>(h).subspan(i * d, d);
        rms_norm(std::span<const float>(x).subspan(i * d, d), final_norm_, hi);
        matvec(lm_head_, hi, std::span<float>(rec.logits).subspan(i * vocab, vocab));
    }
    for (int i = 1; i < t; ++i) {
        auto row = rec.logits_row(i - 1);
        const float mx = *std::max_element(row.begin(), row.end());
        double denom = 0.0;
        for (float z : row) denom += std::exp(static_cast<double>(z) - mx);
        rec.token_logprobs.push_back(static_cast<double>(row[tokens[i]]) - mx - std::log(denom));
    }
    return rec;
}

std::span<const float> ForwardRecord::logits_row(int pos) const {
    return std::span<const float>(logits).subspan(static_cast<std::size_t>(pos) * vocab_size, vocab_size);
}

std::span<const float> ForwardRecord::hidden_row(int layer, int pos) const {
    return std::span<const float>(hidden.at(layer)).subspan(static_cast<std::size_t>(pos) * d_model, d_model);
}

std::span<const double> ForwardRecord::generated_logprobs() const {
    const std::size_t skip = std::min<std::size_t>(std::max(generated_from - 1, 0), token_logprobs.size());
    return std::span<const double>(token_logprobs).subspan(skip);
}

MemoryReport estimate_memory(const ModelConfig& config, std::uint64_t context_len,
                             std::uint64_t dtype_bytes) {
    const std::uint64_t layers = config.num_layers;
    const std::uint64_t kv_heads = config.num_kv_heads;
    const std::uint64_t d_head = config.d_head();
    const std::uint64_t d_model = config.d_model;
    MemoryReport r;
    r.context_len = context_len;
    r.dtype_bytes = dtype_bytes;
    r.kv_bytes = 2 * layers * kv_heads * d_head * context_len * dtype_bytes;
    r.hidden_bytes = (layers + 1) * d_model * context_len * dtype_bytes;
    return r;
}

}  // namespace kvr::minitx
