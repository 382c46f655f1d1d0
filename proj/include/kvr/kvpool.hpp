#pragma once

// Pooling recipes that turn a KV cache (or recorded hidden states) into
// embeddings and embedding trajectories.
//
// For one (layer, position) the flattened slice is, under head
// concatenation, all key heads in head order followed by all value heads
// (values-only drops the key half). Layer means are taken after flattening.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kvr/minitx.hpp"

namespace kvr::kvpool {

enum class Source { values_only, keys_and_values, hidden_states };
enum class HeadAgg { concatenate, mean };
enum class PositionAgg { per_token, mean_all, sum_last_k };
enum class LayerAgg { mean_over_selected, per_layer };
enum class Normalize { none, unit_l2 };

struct PoolingSpec {
    Source source = Source::keys_and_values;
    HeadAgg head_agg = HeadAgg::concatenate;
    PositionAgg position_agg = PositionAgg::mean_all;
    int last_k = 1;  // used by sum_last_k
    LayerAgg layer_agg = LayerAgg::mean_over_selected;
    std::optional<std::vector<int>> layers;  // nullopt selects every layer
    Normalize normalize = Normalize::none;

    // Canonical text form, e.g. "kv:concat:sumlast128:layers=17,35:nonorm".
    std::string to_string() const;
    // Throws Error(usage) on malformed text.
    static PoolingSpec parse(std::string_view text);

    // Structural checks; with num_layers > 0 also range-checks indices.
    // Throws Error(configuration).
    void validate(int num_layers = 0) const;
    std::vector<int> resolve_layers(int num_layers) const;

    // Sentence embedding: concat heads, mean over tokens and all layers, unit l2.
    static PoolingSpec sentence();
    // KV-CoE per-token trajectory: values, concat, per token, mean over all layers.
    static PoolingSpec token_trajectory(Source source = Source::values_only);
    // Difficulty features: K+V, concat, sum of last k tokens, mean over layers.
    static PoolingSpec classifier(std::vector<int> layers, int last_k);

    bool operator==(const PoolingSpec&) const = default;
};

struct Trajectory {
    enum class Axis { token, layer };
    Axis axis = Axis::token;
    std::vector<std::vector<double>> points;

    std::size_t dim() const { return points.empty() ? 0 : points.front().size(); }
    std::size_t size() const { return points.size(); }
};

// Width of one pooled slice for a cache with the given head layout.
std::size_t pooled_dim(const PoolingSpec& spec, int num_kv_heads, int d_head);

std::vector<double> pool_sentence(const minitx::KVCache& cache,
                                  const PoolingSpec& spec = PoolingSpec::sentence());
Trajectory pool_token_trajectory(const minitx::KVCache& cache, const PoolingSpec& spec);
Trajectory pool_layer_trajectory(const minitx::KVCache& cache, const PoolingSpec& spec);
// Hidden-state CoE: s_l = mean_t h_l^(t) for each selected layer in 0..L.
Trajectory pool_layer_trajectory(const minitx::ForwardRecord& record, const PoolingSpec& spec);
std::vector<double> pool_classifier_features(const minitx::KVCache& cache, const PoolingSpec& spec);

// Any position-reducing, layer-averaging spec; the named ops above are
// checked front ends over this.
std::vector<double> pool_vector(const minitx::KVCache& cache, const PoolingSpec& spec);

// i.i.d. standard normal entries, reproducible per seed.
std::vector<double> random_embedding(std::size_t dim, std::uint64_t seed);

// `count` layer indices, evenly spaced and ending at the last layer.
std::vector<int> evenly_spaced_layers(int num_layers, int count);

struct BudgetEntry {
    int layers = 0;
    int tokens = 0;
    int units() const { return layers * tokens; }
};
std::vector<BudgetEntry> default_budget_grid();
// Throws Error(configuration) naming the first entry with layers*tokens != budget.
void check_budget_grid(const std::vector<BudgetEntry>& grid, int budget);

}  // namespace kvr::kvpool
