#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "kvr/difficulty.hpp"
#include "kvr/error.hpp"
#include "kvr/rng.hpp"
#include "kvr/simd.hpp"

namespace kvr::difficulty {

namespace {

constexpr std::size_t H = kHiddenWidth;

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double to_score(double s) {
    const double d = 100.0 * s;
    return std::clamp(d, std::nextafter(0.0, 1.0), std::nextafter(100.0, 0.0));
}

bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Standardized input, pre-activations and activations for one sample.
struct Forward {
    std::vector<double> x;
    std::vector<double> pre;
    std::vector<double> act;
    double z = 0.0;
    double s = 0.0;
};

void forward(const MLPParams& p, std::span<const double> x_raw, Forward& f) {
    require(static_cast<int>(x_raw.size()) == p.d_in, ErrorKind::domain,
            "feature dim " + std::to_string(x_raw.size()) + " != D_in " + std::to_string(p.d_in));
    const std::size_t D = p.d_in;
    f.x.assign(x_raw.begin(), x_raw.end());
    if (p.standardized())
        for (std::size_t i = 0; i < D; ++i) f.x[i] = (f.x[i] - p.feat_mean[i]) / p.feat_std[i];
    f.pre.resize(H);
    f.act.resize(H);
    for (std::size_t j = 0; j < H; ++j) {
        f.pre[j] = p.b1[j] + simd::dot(std::span<const double>(p.w1).subspan(j * D, D), f.x);
        f.act[j] = f.pre[j] > 0 ? f.pre[j] : 0.0;
    }
    f.z = p.b2 + simd::dot(std::span<const double>(p.w2), f.act);
    f.s = sigmoid(f.z);
}

}  // namespace

MLPParams MLPParams::zeros(int d_in) {
    require(d_in >= 1, ErrorKind::domain, "D_in must be >= 1");
    MLPParams p;
    p.d_in = d_in;
    p.w1.assign(H * d_in, 0.0);
    p.b1.assign(H, 0.0);
    p.w2.assign(H, 0.0);
    return p;
}

void MLPParams::check() const {
    require(d_in >= 1, ErrorKind::domain, "D_in must be >= 1");
    require(w1.size() == H * d_in && b1.size() == H && w2.size() == H, ErrorKind::domain,
            "MLP parameter sizes do not match hidden width 512");
    require(all_finite(w1) && all_finite(b1) && all_finite(w2) && std::isfinite(b2), ErrorKind::domain,
            "MLP parameters must be finite");
    if (standardized()) {
        require(feat_mean.size() == static_cast<std::size_t>(d_in) && feat_std.size() == feat_mean.size(),
                ErrorKind::domain, "standardization statistics do not match D_in");
        require(all_finite(feat_mean) && all_finite(feat_std), ErrorKind::domain,
                "standardization statistics must be finite");
        require(std::all_of(feat_std.begin(), feat_std.end(), [](double s) { return s > 0; }),
                ErrorKind::domain, "feature std must be positive");
    } else {
        require(feat_std.empty(), ErrorKind::domain, "feat_std without feat_mean");
    }
}

double mlp_forward(const MLPParams& p, std::span<const double> x) {
    p.check();
    Forward f;
    forward(p, x, f);
    return to_score(f.s);
}

LossAndGrad mlp_loss_and_grad(const MLPParams& p, std::span<const Sample> batch) {
    p.check();
    require(!batch.empty(), ErrorKind::domain, "empty batch");
    LossAndGrad out;
    out.grad = MLPParams::zeros(p.d_in);
    auto& g = out.grad;
    const std::size_t D = p.d_in;
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    Forward f;
    for (const Sample& smp : batch) {
        forward(p, smp.x, f);
        const double err = f.s - smp.d / 100.0;
        out.loss += err * err * inv_n;
        const double dz = 2.0 * err * f.s * (1.0 - f.s) * inv_n;
        g.b2 += dz;
        for (std::size_t j = 0; j < H; ++j) {
            g.w2[j] += dz * f.act[j];
            if (f.pre[j] <= 0) continue;
            const double dpre = dz * p.w2[j];
            g.b1[j] += dpre;
            simd::axpy(dpre, f.x, std::span<double>(g.w1).subspan(j * D, D));
        }
    }
    return out;
}

void TrainConfig::validate() const {
    require(learning_rate > 0 && std::isfinite(learning_rate), ErrorKind::configuration,
            "learning_rate must be > 0");
    require(momentum >= 0 && momentum < 1, ErrorKind::configuration, "momentum must be in [0, 1)");
    require(batch_size >= 1, ErrorKind::configuration, "batch_size must be >= 1");
    require(epochs >= 0, ErrorKind::configuration, "epochs must be >= 0");
}

namespace {

int check_dataset(std::span<const Sample> dataset) {
    require(!dataset.empty(), ErrorKind::domain, "empty dataset");
    const std::size_t D = dataset.front().x.size();
    require(D >= 1, ErrorKind::domain, "features must be nonempty");
    for (const Sample& s : dataset) {
        require(s.x.size() == D, ErrorKind::domain, "features do not share D_in");
        require(std::isfinite(s.d) && s.d >= 0 && s.d <= 100, ErrorKind::domain, "labels must lie in [0, 100]");
        require(all_finite(s.x), ErrorKind::domain, "features must be finite");
    }
    return static_cast<int>(D);
}

}  // namespace

MLPParams mlp_init(std::span<const Sample> dataset, const TrainConfig& cfg) {
    cfg.validate();
    const int D = check_dataset(dataset);
    MLPParams p = MLPParams::zeros(D);
    SplitMix64 rng(derive_seed(cfg.seed, 0x6d6c70));
    const double a1 = 1.0 / std::sqrt(static_cast<double>(D));
    const double a2 = 1.0 / std::sqrt(static_cast<double>(H));
    for (auto& w : p.w1) w = rng.uniform(-a1, a1);
    for (auto& b : p.b1) b = rng.uniform(-a1, a1);
    for (auto& w : p.w2) w = rng.uniform(-a2, a2);
    p.b2 = rng.uniform(-a2, a2);

    if (cfg.standardize) {
        const double n = static_cast<double>(dataset.size());
        p.feat_mean.assign(D, 0.0);
        p.feat_std.assign(D, 0.0);
        for (const Sample& s : dataset)
            for (int i = 0; i < D; ++i) p.feat_mean[i] += s.x[i] / n;
        for (const Sample& s : dataset)
            for (int i = 0; i < D; ++i) {
                const double c = s.x[i] - p.feat_mean[i];
                p.feat_std[i] += c * c / n;
            }
        for (auto& v : p.feat_std) {
            v = std::sqrt(v);
            if (!(v > 1e-12)) v = 1.0;
        }
    }
    return p;
}

double dataset_loss(const MLPParams& p, std::span<const Sample> dataset) {
    return mlp_loss_and_grad(p, dataset).loss;
}

TrainResult mlp_train_with_history(std::span<const Sample> dataset, const TrainConfig& cfg) {
    TrainResult out;
    MLPParams p = mlp_init(dataset, cfg);
    out.initial_loss = dataset_loss(p, dataset);

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    SplitMix64 shuffle(derive_seed(cfg.seed, 0x73687566));
    MLPParams vel = MLPParams::zeros(p.d_in);
    std::vector<Sample> batch;
    auto step = [&](std::vector<double>& w, std::vector<double>& v, const std::vector<double>& g) {
        for (std::size_t i = 0; i < w.size(); ++i) {
            v[i] = cfg.momentum * v[i] - cfg.learning_rate * g[i];
            w[i] += v[i];
        }
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(dataset[order[i]]);
            const auto lg = mlp_loss_and_grad(p, batch);
            step(p.w1, vel.w1, lg.grad.w1);
            step(p.b1, vel.b1, lg.grad.b1);
            step(p.w2, vel.w2, lg.grad.w2);
            vel.b2 = cfg.momentum * vel.b2 - cfg.learning_rate * lg.grad.b2;
            p.b2 += vel.b2;
        }
    }
    out.final_loss = dataset_loss(p, dataset);
    out.params = std::move(p);
    return out;
}

MLPParams mlp_train(std::span<const Sample> dataset, const TrainConfig& cfg) {
    return mlp_train_with_history(dataset, cfg).params;
}

}  // namespace kvr::difficulty
