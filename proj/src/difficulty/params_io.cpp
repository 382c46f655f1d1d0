#include "kvr/difficulty.hpp"
#include "kvr/error.hpp"

namespace kvr::difficulty {

using traceio::Tensor;
using traceio::TraceFile;

namespace {

std::vector<double> vec(const TraceFile& t, const char* name) {
    auto s = t.f64(name);
    return {s.begin(), s.end()};
}

void require_kind(const TraceFile& t, const char* kind) {
    require(t.meta.value("kind", std::string()) == kind, ErrorKind::validation,
            std::string("trace kind is not ") + kind);
}

}  // namespace

TraceFile params_to_trace(const MLPParams& p) {
    p.check();
    const std::uint64_t D = p.d_in, H = kHiddenWidth;
    TraceFile t;
    t.meta = {{"kind", "mlp-params"}, {"d_in", p.d_in}, {"hidden", kHiddenWidth},
              {"standardized", p.standardized()}};
    t.tensors.push_back(Tensor::f64("W1", {H, D}, p.w1));
    t.tensors.push_back(Tensor::f64("b1", {H}, p.b1));
    t.tensors.push_back(Tensor::f64("W2", {1, H}, p.w2));
    t.tensors.push_back(Tensor::f64("b2", {1}, {p.b2}));
    if (p.standardized()) {
        t.tensors.push_back(Tensor::f64("feat_mean", {D}, p.feat_mean));
        t.tensors.push_back(Tensor::f64("feat_std", {D}, p.feat_std));
    }
    t.layout();
    return t;
}

MLPParams params_from_trace(const TraceFile& t) {
    require_kind(t, "mlp-params");
    MLPParams p;
    p.d_in = t.meta.value("d_in", 0);
    require(t.meta.value("hidden", 0) == kHiddenWidth, ErrorKind::validation, "hidden width must be 512");
    p.w1 = vec(t, "W1");
    p.b1 = vec(t, "b1");
    p.w2 = vec(t, "W2");
    auto b2 = t.f64("b2");
    require(b2.size() == 1, ErrorKind::validation, "b2 must be a scalar");
    p.b2 = b2[0];
    if (t.find("feat_mean")) {
        p.feat_mean = vec(t, "feat_mean");
        p.feat_std = vec(t, "feat_std");
    }
    try {
        p.check();
    } catch (const Error& e) {
        fail(ErrorKind::validation, e.what());
    }
    return p;
}

TraceFile dataset_to_trace(std::span<const Sample> dataset, const nlohmann::json& extra_meta) {
    require(!dataset.empty(), ErrorKind::domain, "empty dataset");
    const std::size_t D = dataset.front().x.size();
    std::vector<double> features, labels;
    for (const Sample& s : dataset) {
        require(s.x.size() == D, ErrorKind::domain, "features do not share D_in");
        features.insert(features.end(), s.x.begin(), s.x.end());
        labels.push_back(s.d);
    }
    TraceFile t;
    if (extra_meta.is_object()) t.meta = extra_meta;
    t.meta["kind"] = "difficulty-dataset";
    t.tensors.push_back(Tensor::f64("features", {dataset.size(), D}, std::move(features)));
    t.tensors.push_back(Tensor::f64("labels", {dataset.size()}, std::move(labels)));
    t.layout();
    return t;
}

std::vector<Sample> dataset_from_trace(const TraceFile& t) {
    require_kind(t, "difficulty-dataset");
    const Tensor& f = t.at("features");
    require(f.shape.size() == 2, ErrorKind::validation, "features must be [N, D]");
    auto x = t.f64("features");
    auto y = t.f64("labels");
    const std::size_t N = f.shape[0], D = f.shape[1];
    require(y.size() == N, ErrorKind::validation, "labels length does not match features");
    std::vector<Sample> out(N);
    for (std::size_t i = 0; i < N; ++i) {
        out[i].x.assign(x.begin() + i * D, x.begin() + (i + 1) * D);
        out[i].d = y[i];
    }
    return out;
}

}  // namespace kvr::difficulty
