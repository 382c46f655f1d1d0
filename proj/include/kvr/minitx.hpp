#pragma once

// Miniature decoder-only transformer with an explicit, append-only KV cache.
//
// Block: x += Wo * attn(rmsnorm(x)); x += W2 * gelu(W1 * rmsnorm(x)).
// Positions are sinusoidal and added at the embedding. Grouped-query
// attention: query head h reads KV head h / (H / H_kv).

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kvr::minitx {

using TokenId = std::int32_t;

// Byte-level vocabulary: ids 0..255 are raw bytes, then reserved specials.
inline constexpr TokenId kThinkOpen = 256;
inline constexpr TokenId kThinkClose = 257;
inline constexpr TokenId kEos = 258;
inline constexpr int kDefaultVocabSize = 259;

struct ModelConfig {
    int num_layers = 2;
    int num_heads = 4;
    int num_kv_heads = 2;
    int d_model = 32;
    int vocab_size = kDefaultVocabSize;
    int max_seq_len = 256;
    std::uint64_t seed = 0;

    int d_head() const { return d_model / num_heads; }
    int ffn_dim() const { return 4 * d_model; }
    // Throws Error(configuration).
    void validate() const;
};

class KVCache {
public:
    KVCache(int num_layers, int num_kv_heads, int d_head, int capacity);

    // Builds a cache from per-layer [t, H_kv, d_head] tensors.
    static KVCache from_tensors(std::vector<std::vector<float>> keys,
                                std::vector<std::vector<float>> values,
                                int num_kv_heads, int d_head, int capacity = -1);

    int num_layers() const { return num_layers_; }
    int num_kv_heads() const { return num_kv_heads_; }
    int d_head() const { return d_head_; }
    int capacity() const { return capacity_; }
    int length() const { return length_; }
    bool full() const { return length_ >= capacity_; }
    // Elements in one (layer, position) slice: H_kv * d_head.
    std::size_t row_width() const { return static_cast<std::size_t>(num_kv_heads_) * d_head_; }

    // [length, H_kv, d_head], row-major.
    std::span<const float> keys(int layer) const;
    std::span<const float> values(int layer) const;
    std::span<const float> key_row(int layer, int pos) const;
    std::span<const float> value_row(int layer, int pos) const;

    // Appends one position. Each argument holds L rows of row_width().
    void append(std::span<const float> key_rows, std::span<const float> value_rows);

    // Writer protocol used by the model: fill the pending slot for every
    // layer, then commit. Committed rows are never written again.
    std::span<float> pending_key(int layer);
    std::span<float> pending_value(int layer);
    void commit();

private:
    int num_layers_;
    int num_kv_heads_;
    int d_head_;
    int capacity_;
    int length_ = 0;
    std::vector<std::vector<float>> keys_;
    std::vector<std::vector<float>> values_;
};

struct ForwardRecord {
    int num_layers = 0;
    int d_model = 0;
    int vocab_size = 0;
    int length = 0;
    // Index of the first token counted as generated output; token_logprobs
    // entries before it belong to the prompt. full_forward uses 1.
    int generated_from = 1;
    std::vector<float> logits;                 // [length, V]
    std::vector<std::vector<float>> hidden;    // L+1 entries of [length, d_model]
    std::vector<double> token_logprobs;        // entry j-1 = log p(token_j | prefix)

    std::span<const float> logits_row(int pos) const;
    std::span<const float> hidden_row(int layer, int pos) const;
    // Logprobs of the generated tokens only.
    std::span<const double> generated_logprobs() const;
    // Logits rows that predicted the generated tokens.
    int first_generated_row() const { return generated_from - 1; }
};

class Model {
public:
    explicit Model(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }

    // Flattened weights in init order; used to compare models.
    std::vector<float> serialize_weights() const;
    std::span<const float> embedding_row(TokenId token) const;

    ForwardRecord full_forward(std::span<const TokenId> tokens) const;

    // Runs one position through the cached path. Writes K/V into the
    // cache, writes logits to logits_out [V] and the per-layer residual
    // stream to hidden_out [(L+1) * d_model].
    void step(KVCache& cache, TokenId token, std::span<float> logits_out,
              std::span<float> hidden_out) const;

    KVCache make_cache() const;

private:
    struct Layer {
        std::vector<float> attn_norm;  // [d]
        std::vector<float> wq;         // [H*dh, d]
        std::vector<float> wk;         // [Hkv*dh, d]
        std::vector<float> wv;         // [Hkv*dh, d]
        std::vector<float> wo;         // [d, H*dh]
        std::vector<float> ffn_norm;   // [d]
        std::vector<float> w1;         // [4d, d]
        std::vector<float> w2;         // [d, 4d]
    };

    void check_tokens(std::span<const TokenId> tokens) const;
    void embed(TokenId token, int pos, std::span<float> out) const;

    ModelConfig config_;
    std::vector<float> embedding_;  // [V, d]
    std::vector<Layer> layers_;
    std::vector<float> final_norm_;
    std::vector<float> lm_head_;    // [V, d]
    std::vector<float> positions_;  // [T_max, d] sinusoidal table
};

Model init_model(const ModelConfig& config);

struct PrefillResult {
    KVCache cache;
    ForwardRecord record;
};
PrefillResult prefill(const Model& model, std::span<const TokenId> tokens);

struct DecodeOutput {
    std::vector<float> logits;  // [V]
    std::vector<float> hidden;  // [L+1, d_model]
};
DecodeOutput decode_step(const Model& model, KVCache& cache, TokenId token);

struct SamplerConfig {
    enum class Kind { greedy, temperature };
    Kind kind = Kind::greedy;
    double temperature = 1.0;
    std::uint64_t seed = 0;

    static SamplerConfig greedy() { return {}; }
    static SamplerConfig with_temperature(double t, std::uint64_t seed) {
        return {Kind::temperature, t, seed};
    }
};

class TokenSampler {
public:
    explicit TokenSampler(const SamplerConfig& config);
    // Tokens in `banned` receive zero probability. Greedy ties go to the
    // lowest id.
    TokenId sample(std::span<const float> logits, std::span<const TokenId> banned = {});

private:
    SamplerConfig config_;
    std::uint64_t state_;
};

// Incremental decoding stream over one cache. Keeps the forward record in
// sync with every token that enters the cache.
class Session {
public:
    Session(const Model& model, std::span<const TokenId> prompt);

    const Model& model() const { return *model_; }
    const KVCache& cache() const { return cache_; }
    const ForwardRecord& record() const { return record_; }
    const std::vector<TokenId>& tokens() const { return tokens_; }
    std::span<const float> last_logits() const;
    bool full() const { return cache_.full(); }

    // Appends a token (sampled or forced). Throws Error(capacity) when full.
    void feed(TokenId token);
    // Marks everything fed so far as prompt.
    void mark_prompt_end();

    KVCache release_cache() && { return std::move(cache_); }
    ForwardRecord release_record() && { return std::move(record_); }

private:
    const Model* model_;
    KVCache cache_;
    ForwardRecord record_;
    std::vector<TokenId> tokens_;
};

struct StopConfig {
    int max_new = 32;
    std::vector<TokenId> stop_tokens;
};

struct GenerationResult {
    std::vector<TokenId> tokens;  // prompt followed by generated tokens
    KVCache cache;
    ForwardRecord record;
};

GenerationResult generate(const Model& model, std::span<const TokenId> prompt,
                          const SamplerConfig& sampler, const StopConfig& stop);

struct MemoryReport {
    std::uint64_t kv_bytes = 0;
    std::uint64_t hidden_bytes = 0;
    std::uint64_t context_len = 0;
    std::uint64_t dtype_bytes = 0;
};

MemoryReport estimate_memory(const ModelConfig& config, std::uint64_t context_len,
                             std::uint64_t dtype_bytes);

// Byte-level text helpers; specials render as <think>, </think>, <eos>.
std::vector<TokenId> encode_text(std::string_view text);
std::string decode_tokens(std::span<const TokenId> tokens);

}  // namespace kvr::minitx
