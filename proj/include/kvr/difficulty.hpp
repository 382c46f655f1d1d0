#pragma once

// Difficulty labels and the two-layer MLP estimator
//   d_hat = 100 * sigmoid(W2 . relu(W1 x + b1) + b2)
// trained by MSE on d / 100.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "kvr/traceio.hpp"

namespace kvr::difficulty {

inline constexpr int kHiddenWidth = 512;
inline constexpr std::uint64_t kShortAnswerTokens = 128;

struct DifficultyLabel {
    int d = 0;  // one of 0, 25, 75, 100
    bool fast_correct = false;
    bool slow_correct = false;
    std::uint64_t fast_len = 0;
};

DifficultyLabel assign_label(bool fast_correct, bool slow_correct, std::uint64_t fast_len);

struct MLPParams {
    int d_in = 0;
    std::vector<double> w1;  // [512, d_in]
    std::vector<double> b1;  // [512]
    std::vector<double> w2;  // [512]
    double b2 = 0.0;
    // Per-dimension standardization applied before W1. Empty means none.
    std::vector<double> feat_mean;
    std::vector<double> feat_std;

    static MLPParams zeros(int d_in);
    bool standardized() const { return !feat_mean.empty(); }
    // Throws Error(domain) on wrong sizes or non-finite entries.
    void check() const;
};

// Throws Error(domain) when x.size() != d_in. Result is strictly in (0, 100).
double mlp_forward(const MLPParams& p, std::span<const double> x);

struct Sample {
    std::vector<double> x;
    double d = 0.0;
};

struct LossAndGrad {
    double loss = 0.0;
    MLPParams grad;  // standardization fields stay empty
};

LossAndGrad mlp_loss_and_grad(const MLPParams& p, std::span<const Sample> batch);

struct TrainConfig {
    double learning_rate = 1e-3;
    double momentum = 0.9;
    int batch_size = 32;
    int epochs = 50;
    std::uint64_t seed = 0;
    bool standardize = true;

    void validate() const;
};

// Seeded uniform init in +-1/sqrt(fan_in). Standardization statistics are
// taken from `dataset` when cfg.standardize is set.
MLPParams mlp_init(std::span<const Sample> dataset, const TrainConfig& cfg);

struct TrainResult {
    MLPParams params;
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

TrainResult mlp_train_with_history(std::span<const Sample> dataset, const TrainConfig& cfg);
MLPParams mlp_train(std::span<const Sample> dataset, const TrainConfig& cfg);

// Mean loss over the whole dataset.
double dataset_loss(const MLPParams& p, std::span<const Sample> dataset);

// KVTRACE with kind "mlp-params".
traceio::TraceFile params_to_trace(const MLPParams& p);
MLPParams params_from_trace(const traceio::TraceFile& trace);

// KVTRACE with kind "difficulty-dataset": features [N, D], labels [N].
traceio::TraceFile dataset_to_trace(std::span<const Sample> dataset, const nlohmann::json& extra_meta = {});
std::vector<Sample> dataset_from_trace(const traceio::TraceFile& trace);

}  // namespace kvr::difficulty
