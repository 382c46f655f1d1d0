#include <algorithm>
#include <cmath>

#include "kvr/error.hpp"
#include "kvr/kvpool.hpp"
#include "kvr/rng.hpp"
#include "kvr/simd.hpp"

namespace kvr::kvpool {

namespace {

using minitx::KVCache;

void require_cache_source(const PoolingSpec& spec) {
    require(spec.source != Source::hidden_states, ErrorKind::configuration,
            "hidden-state pooling needs a forward record, not a KV cache");
}

// acc += flatten(layer, pos). Head-mean sums heads here and is rescaled by
// finish_heads().
void accumulate_slice(const KVCache& cache, const PoolingSpec& spec, int layer, int pos,
                      std::span<double> acc) {
    const std::size_t w = cache.row_width();
    const auto add_part = [&](std::span<const float> row, std::span<double> dst) {
        if (spec.head_agg == HeadAgg::concatenate) {
            simd::accumulate(row, dst);
        } else {
            const std::size_t dh = cache.d_head();
            for (int h = 0; h < cache.num_kv_heads(); ++h) simd::accumulate(row.subspan(h * dh, dh), dst);
        }
    };
    const std::size_t half = spec.head_agg == HeadAgg::concatenate ? w : cache.d_head();
    if (spec.source == Source::keys_and_values) {
        add_part(cache.key_row(layer, pos), acc.first(half));
        add_part(cache.value_row(layer, pos), acc.subspan(half, half));
    } else {
        add_part(cache.value_row(layer, pos), acc.first(half));
    }
}

void scale(std::span<double> v, double s) {
    for (double& x : v) x *= s;
}

double head_factor(const KVCache& cache, const PoolingSpec& spec) {
    return spec.head_agg == HeadAgg::mean ? 1.0 / cache.num_kv_heads() : 1.0;
}

void normalize_inplace(std::span<double> v) {
    const double n = std::sqrt(simd::dot(std::span<const double>(v), std::span<const double>(v)));
    require(n > 0.0 && std::isfinite(n), ErrorKind::degenerate_input,
            "cannot l2-normalize a zero-norm pooled vector");
    scale(v, 1.0 / n);
}

// Positions [begin, end) reduced per the spec's position aggregation.
std::pair<int, int> position_window(const KVCache& cache, const PoolingSpec& spec) {
    const int t = cache.length();
    if (spec.position_agg == PositionAgg::sum_last_k) return {t - std::min(spec.last_k, t), t};
    return {0, t};
}

}  // namespace

std::size_t pooled_dim(const PoolingSpec& spec, int num_kv_heads, int d_head) {
    const std::size_t part = spec.head_agg == HeadAgg::concatenate
                                 ? static_cast<std::size_t>(num_kv_heads) * d_head
                                 : static_cast<std::size_t>(d_head);
    return spec.source == Source::keys_and_values ? 2 * part : part;
}

std::vector<double> pool_vector(const KVCache& cache, const PoolingSpec& spec) {
    require_cache_source(spec);
    require(spec.position_agg != PositionAgg::per_token && spec.layer_agg != LayerAgg::per_layer,
            ErrorKind::configuration, "pool_vector needs a position- and layer-reducing spec");
    require(cache.length() >= 1, ErrorKind::domain, "cannot pool an empty cache");
    const auto layers = spec.resolve_layers(cache.num_layers());
    std::vector<double> acc(pooled_dim(spec, cache.num_kv_heads(), cache.d_head()), 0.0);
    const auto [begin, end] = position_window(cache, spec);
    for (int l : layers)
        for (int t = begin; t < end; ++t) accumulate_slice(cache, spec, l, t, acc);

    double factor = head_factor(cache, spec) / static_cast<double>(layers.size());
    if (spec.position_agg == PositionAgg::mean_all) factor /= static_cast<double>(end - begin);
    scale(acc, factor);
    if (spec.normalize == Normalize::unit_l2) normalize_inplace(acc);
    return acc;
}

std::vector<double> pool_sentence(const KVCache& cache, const PoolingSpec& spec) {
    require(spec.position_agg == PositionAgg::mean_all, ErrorKind::configuration,
            "sentence pooling averages over all positions");
    return pool_vector(cache, spec);
}

std::vector<double> pool_classifier_features(const KVCache& cache, const PoolingSpec& spec) {
    require(spec.position_agg == PositionAgg::sum_last_k, ErrorKind::configuration,
            "classifier features sum over the last k positions");
    return pool_vector(cache, spec);
}

Trajectory pool_token_trajectory(const KVCache& cache, const PoolingSpec& spec) {
    require_cache_source(spec);
    require(spec.position_agg == PositionAgg::per_token, ErrorKind::configuration,
            "token trajectory needs per-token positions");
    spec.validate(cache.num_layers());
    require(cache.length() >= 2, ErrorKind::trajectory_too_short,
            "token trajectory needs >= 2 positions, cache has " + std::to_string(cache.length()));
    const auto layers = spec.resolve_layers(cache.num_layers());
    const std::size_t dim = pooled_dim(spec, cache.num_kv_heads(), cache.d_head());
    const double factor = head_factor(cache, spec) / static_cast<double>(layers.size());
    Trajectory traj{Trajectory::Axis::token, {}};
    traj.points.reserve(cache.length());
    for (int t = 0; t < cache.length(); ++t) {
        std::vector<double> e(dim, 0.0);
        for (int l : layers) accumulate_slice(cache, spec, l, t, e);
        scale(e, factor);
        if (spec.normalize == Normalize::unit_l2) normalize_inplace(e);
        traj.points.push_back(std::move(e));
    }
    return traj;
}

Trajectory pool_layer_trajectory(const KVCache& cache, const PoolingSpec& spec) {
    require_cache_source(spec);
    require(spec.layer_agg == LayerAgg::per_layer, ErrorKind::configuration,
            "layer trajectory needs per-layer output");
    const auto layers = spec.resolve_layers(cache.num_layers());
    require(layers.size() >= 2, ErrorKind::trajectory_too_short,
            "layer trajectory needs >= 2 layers");
    require(cache.length() >= 1, ErrorKind::domain, "cannot pool an empty cache");
    const std::size_t dim = pooled_dim(spec, cache.num_kv_heads(), cache.d_head());
    const auto [begin, end] = position_window(cache, spec);
    double factor = head_factor(cache, spec);
    if (spec.position_agg == PositionAgg::mean_all) factor /= static_cast<double>(end - begin);
    Trajectory traj{Trajectory::Axis::layer, {}};
    for (int l : layers) {
        std::vector<double> s(dim, 0.0);
        for (int t = begin; t < end; ++t) accumulate_slice(cache, spec, l, t, s);
        scale(s, factor);
        if (spec.normalize == Normalize::unit_l2) normalize_inplace(s);
        traj.points.push_back(std::move(s));
    }
    return traj;
}

Trajectory pool_layer_trajectory(const minitx::ForwardRecord& record, const PoolingSpec& spec) {
    require(spec.source == Source::hidden_states, ErrorKind::configuration,
            "forward-record pooling needs source=hidden");
    require(spec.layer_agg == LayerAgg::per_layer, ErrorKind::configuration,
            "layer trajectory needs per-layer output");
    require(spec.position_agg != PositionAgg::per_token, ErrorKind::configuration,
            "layer trajectory reduces over positions");
    // Hidden states carry L+1 entries (embedding output first).
    const int entries = static_cast<int>(record.hidden.size());
    const auto layers = spec.resolve_layers(entries);
    require(layers.size() >= 2, ErrorKind::trajectory_too_short,
            "layer trajectory needs >= 2 layers");
    require(record.length >= 1, ErrorKind::domain, "forward record is empty");
    const int t = record.length;
    const int begin = spec.position_agg == PositionAgg::sum_last_k ? t - std::min(spec.last_k, t) : 0;
    const double factor = spec.position_agg == PositionAgg::mean_all ? 1.0 / t : 1.0;
    Trajectory traj{Trajectory::Axis::layer, {}};
    for (int l : layers) {
        std::vector<double> s(record.d_model, 0.0);
        for (int pos = begin; pos < t; ++pos) simd::accumulate(record.hidden_row(l, pos), s);
        scale(s, factor);
        if (spec.normalize == Normalize::unit_l2) normalize_inplace(s);
        traj.points.push_back(std::move(s));
    }
    return traj;
}

std::vector<double> random_embedding(std::size_t dim, std::uint64_t seed) {
    require(dim >= 1, ErrorKind::domain, "embedding dimension must be >= 1");
    SplitMix64 rng(seed);
    std::vector<double> e(dim);
    for (double& x : e) x = rng.normal();
    return e;
}

}  // namespace kvr::kvpool
