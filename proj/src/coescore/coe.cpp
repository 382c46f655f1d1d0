#include <algorithm>
#include <cmath>
#include <numbers>

#include "kvr/coescore.hpp"
#include "kvr/error.hpp"
#include "kvr/simd.hpp"

namespace kvr::coescore {

StepDeltas step_deltas(const kvpool::Trajectory& traj) {
    require(traj.size() >= 2, ErrorKind::trajectory_too_short,
            "step deltas need >= 2 trajectory points, got " + std::to_string(traj.size()));
    const std::size_t dim = traj.dim();
    for (const auto& p : traj.points) {
        require(p.size() == dim, ErrorKind::domain, "trajectory points differ in dimension");
        for (double x : p) require(std::isfinite(x), ErrorKind::domain, "non-finite trajectory point");
    }
    StepDeltas d;
    d.delta_r.reserve(traj.size() - 1);
    d.delta_theta.reserve(traj.size() - 1);
    for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
        std::span<const double> a = traj.points[i], b = traj.points[i + 1];
        d.delta_r.push_back(std::sqrt(simd::squared_distance(b, a)));
        const double na = std::sqrt(simd::dot(a, a));
        const double nb = std::sqrt(simd::dot(b, b));
        if (na == 0.0 || nb == 0.0) {
            d.delta_theta.push_back(0.0);
            ++d.zero_norm_steps;
            continue;
        }
        // Same angle as acos(clamp(cos)), but well conditioned near 0 and pi.
        double diff = 0.0, sum = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
            const double ua = a[k] / na, ub = b[k] / nb;
            diff += (ua - ub) * (ua - ub);
            sum += (ua + ub) * (ua + ub);
        }
        d.delta_theta.push_back(std::clamp(2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum)), 0.0,
                                           std::numbers::pi));
    }
    return d;
}

ConfidenceScore coe_r(const StepDeltas& d, const CoEWeights& w) {
    require(d.n_steps() >= 1 && d.delta_theta.size() == d.n_steps(), ErrorKind::trajectory_too_short,
            "CoE-R needs >= 1 step");
    double s = 0.0;
    for (std::size_t i = 0; i < d.n_steps(); ++i) s += w.alpha * d.delta_r[i] + w.beta * d.delta_theta[i];
    return {s / static_cast<double>(d.n_steps()), Method::coe_r, Axis::none,
            default_orientation(Method::coe_r)};
}

ConfidenceScore coe_c(const StepDeltas& d) {
    require(d.n_steps() >= 1 && d.delta_theta.size() == d.n_steps(), ErrorKind::trajectory_too_short,
            "CoE-C needs >= 1 step");
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < d.n_steps(); ++i) {
        re += d.delta_r[i];
        im += d.delta_theta[i];
    }
    const double n = static_cast<double>(d.n_steps());
    return {std::hypot(re / n, im / n), Method::coe_c, Axis::none, default_orientation(Method::coe_c)};
}

namespace {

ConfidenceScore apply(const kvpool::Trajectory& traj, const CoEMethod& m, Axis axis) {
    require(m.method == Method::coe_r || m.method == Method::coe_c, ErrorKind::configuration,
            "KV-CoE supports coe_r and coe_c only");
    const auto d = step_deltas(traj);
    auto s = m.method == Method::coe_r ? coe_r(d, m.weights) : coe_c(d);
    s.axis = axis;
    return s;
}

}  // namespace

ConfidenceScore kv_coe(const minitx::KVCache& cache, const kvpool::PoolingSpec& spec,
                       const CoEMethod& method, Axis axis) {
    require(axis == Axis::token || axis == Axis::layer, ErrorKind::configuration,
            "KV-CoE axis must be token or layer");
    if (axis == Axis::token) {
        auto s = spec;
        s.position_agg = kvpool::PositionAgg::per_token;
        if (s.layer_agg == kvpool::LayerAgg::per_layer) s.layer_agg = kvpool::LayerAgg::mean_over_selected;
        return apply(kvpool::pool_token_trajectory(cache, s), method, axis);
    }
    auto s = spec;
    s.layer_agg = kvpool::LayerAgg::per_layer;
    if (s.position_agg == kvpool::PositionAgg::per_token) s.position_agg = kvpool::PositionAgg::mean_all;
    return apply(kvpool::pool_layer_trajectory(cache, s), method, axis);
}

ConfidenceScore hidden_coe(const minitx::ForwardRecord& record, const kvpool::PoolingSpec& spec,
                           const CoEMethod& method) {
    auto s = spec;
    s.source = kvpool::Source::hidden_states;
    s.layer_agg = kvpool::LayerAgg::per_layer;
    if (s.position_agg == kvpool::PositionAgg::per_token) s.position_agg = kvpool::PositionAgg::mean_all;
    return apply(kvpool::pool_layer_trajectory(record, s), method, Axis::layer);
}

ConfidenceScore score_baseline(Method kind, const minitx::ForwardRecord& record) {
    const auto logprobs = record.generated_logprobs();
    const int first_row = record.first_generated_row();
    const int rows = static_cast<int>(logprobs.size());
    require(rows >= 1, ErrorKind::domain, "baseline scores need >= 1 generated token");

    ConfidenceScore out{0.0, kind, Axis::none, default_orientation(kind)};
    switch (kind) {
        case Method::ppl: {
            double s = 0.0;
            for (double lp : logprobs) s += lp;
            out.value = std::exp(-s / rows);
            return out;
        }
        case Method::maxprob:
        case Method::entropy: {
            double acc = 0.0;
            for (int r = first_row; r < first_row + rows; ++r) {
                const auto row = record.logits_row(r);
                const double mx = *std::max_element(row.begin(), row.end());
                double denom = 0.0;
                for (float z : row) denom += std::exp(z - mx);
                if (kind == Method::maxprob) {
                    acc += 1.0 / denom;
                } else {
                    double h = 0.0;
                    for (float z : row) {
                        const double p = std::exp(z - mx) / denom;
                        if (p > 0.0) h -= p * std::log(p);
                    }
                    acc += h;
                }
            }
            out.value = acc / rows;
            return out;
        }
        default:
            fail(ErrorKind::configuration, "not a baseline method: " + std::string(to_string(kind)));
    }
}

}  // namespace kvr::coescore
