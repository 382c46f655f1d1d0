#include <cmath>
#include <cstring>
#include <filesystem>

#include "doctest.h"
#include "kvr/difficulty.hpp"
#include "support/expect_error.hpp"
#include "support/mlp_oracles.hpp"

using namespace kvr;
using namespace kvr::difficulty;
using kvr::testing::kind_of;

namespace {

bool same_params(const MLPParams& a, const MLPParams& b) {
    auto eq = [](const std::vector<double>& x, const std::vector<double>& y) {
        return x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
    };
    return a.d_in == b.d_in && eq(a.w1, b.w1) && eq(a.b1, b.b1) && eq(a.w2, b.w2) &&
           std::memcmp(&a.b2, &b.b2, sizeof(double)) == 0 && eq(a.feat_mean, b.feat_mean) &&
           eq(a.feat_std, b.feat_std);
}

double rel_err(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6}); }

}  // namespace

TEST_CASE("label truth table") {
    CHECK(assign_label(true, true, 50).d == 0);
    CHECK(assign_label(false, true, 900).d == 75);
    CHECK(assign_label(false, false, 10).d == 100);

    for (bool fc : {false, true})
        for (bool sc : {false, true})
            for (std::uint64_t len : {0ull, 127ull, 128ull, 10000ull}) {
                const auto l = assign_label(fc, sc, len);
                const int want = fc ? (len < 128 ? 0 : 25) : (sc ? 75 : 100);
                CHECK(l.d == want);
                CHECK(l.fast_correct == fc);
                CHECK(l.slow_correct == sc);
                CHECK(l.fast_len == len);
                // exactly one of the four cases holds
                const int cases = (fc && len < 128) + (fc && len >= 128) + (!fc && sc) + (!fc && !sc);
                CHECK(cases == 1);
            }
}

TEST_CASE("mlp_forward closed forms") {
    const auto p = MLPParams::zeros(3);
    CHECK(mlp_forward(p, std::vector<double>{1, -2, 3}) == 50.0);

    auto q = MLPParams::zeros(3);
    q.b2 = 10;
    CHECK(mlp_forward(q, std::vector<double>{0, 0, 0}) > 99.99);
    CHECK(mlp_forward(q, std::vector<double>{0, 0, 0}) == doctest::Approx(100.0 / (1.0 + std::exp(-10.0))));

    q.b2 = 1e6;
    CHECK(mlp_forward(q, std::vector<double>{0, 0, 0}) < 100.0);
    q.b2 = -1e6;
    CHECK(mlp_forward(q, std::vector<double>{0, 0, 0}) > 0.0);

    CHECK(kind_of([&] { mlp_forward(p, std::vector<double>{1, 2}); }) == ErrorKind::domain);
}

TEST_CASE("mlp_forward matches the oracle and stays in (0, 100)") {
    SplitMix64 rng(5);
    for (int draw = 0; draw < 50; ++draw) {
        const auto p = kvr::testing::random_params(rng, 6, 2.0);
        std::vector<double> x(6);
        for (auto& v : x) v = rng.uniform(-50, 50);
        const double d = mlp_forward(p, x);
        CHECK(d > 0.0);
        CHECK(d < 100.0);
        CHECK(d == doctest::Approx(100.0 * kvr::testing::oracle_sigma(p, x)).epsilon(1e-9));
    }
}

TEST_CASE("standardization is applied inside forward") {
    SplitMix64 rng(6);
    auto p = kvr::testing::random_params(rng, 3);
    auto s = p;
    s.feat_mean = {1, 2, 3};
    s.feat_std = {2, 4, 0.5};
    const std::vector<double> x{5, -1, 7};
    const std::vector<double> z{(5 - 1) / 2.0, (-1 - 2) / 4.0, (7 - 3) / 0.5};
    CHECK(mlp_forward(s, x) == doctest::Approx(mlp_forward(p, z)).epsilon(1e-12));
}

TEST_CASE("gradients match central finite differences") {
    SplitMix64 rng(7);
    constexpr double h = 1e-5;
    int draws = 0;
    while (draws < 20) {
        const int D = 2 + static_cast<int>(rng.below(3));
        auto p = kvr::testing::random_params(rng, D);
        std::vector<Sample> batch(1);
        for (int i = 0; i < D; ++i) batch[0].x.push_back(rng.uniform(-2, 2));
        batch[0].d = static_cast<double>(rng.below(101));
        if (kvr::testing::min_abs_preactivation(p, batch[0].x) < 1e-3) continue;
        ++draws;

        const auto lg = mlp_loss_and_grad(p, batch);
        CHECK(lg.loss == doctest::Approx(kvr::testing::oracle_loss(p, batch)).epsilon(1e-12));

        double worst = 0;
        auto probe = [&](double& w, double analytic) {
            const double keep = w;
            w = keep + h;
            const double up = kvr::testing::oracle_loss(p, batch);
            w = keep - h;
            const double down = kvr::testing::oracle_loss(p, batch);
            w = keep;
            worst = std::max(worst, rel_err(analytic, (up - down) / (2 * h)));
        };
        for (std::size_t i = 0; i < p.w1.size(); ++i) probe(p.w1[i], lg.grad.w1[i]);
        for (std::size_t i = 0; i < p.b1.size(); ++i) probe(p.b1[i], lg.grad.b1[i]);
        for (std::size_t i = 0; i < p.w2.size(); ++i) probe(p.w2[i], lg.grad.w2[i]);
        probe(p.b2, lg.grad.b2);
        CHECK(worst <= 1e-4);
    }
}

TEST_CASE("loss and gradient edge cases") {
    SplitMix64 rng(8);
    const auto p = kvr::testing::random_params(rng, 3);
    std::vector<Sample> batch;
    for (int i = 0; i < 5; ++i) {
        Sample s;
        for (int k = 0; k < 3; ++k) s.x.push_back(rng.uniform(-1, 1));
        s.d = mlp_forward(p, s.x);
        batch.push_back(s);
    }
    SUBCASE("perfect predictions give zero loss and zero grads") {
        const auto lg = mlp_loss_and_grad(p, batch);
        CHECK(lg.loss <= 1e-28);
        for (double g : lg.grad.w1) CHECK(std::abs(g) <= 1e-14);
        CHECK(std::abs(lg.grad.b2) <= 1e-14);
    }
    SUBCASE("duplicating the batch leaves loss and grads unchanged") {
        for (auto& s : batch) s.d = static_cast<double>(rng.below(101));
        auto doubled = batch;
        doubled.insert(doubled.end(), batch.begin(), batch.end());
        const auto a = mlp_loss_and_grad(p, batch);
        const auto b = mlp_loss_and_grad(p, doubled);
        CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-13));
        for (std::size_t i = 0; i < a.grad.w1.size(); ++i)
            CHECK(a.grad.w1[i] == doctest::Approx(b.grad.w1[i]).epsilon(1e-12).scale(1e-15));
        CHECK(a.grad.b2 == doctest::Approx(b.grad.b2).epsilon(1e-12));
    }
    SUBCASE("empty batch") {
        CHECK(kind_of([&] { mlp_loss_and_grad(p, std::vector<Sample>{}); }) == ErrorKind::domain);
    }
}

TEST_CASE("training") {
    const auto data = kvr::testing::two_clusters(21, 200, 8);
    TrainConfig cfg;
    cfg.seed = 3;

    SUBCASE("two clusters are separated") {
        const auto r = mlp_train_with_history(data, cfg);
        CHECK(r.final_loss <= r.initial_loss);
        int right = 0;
        for (const auto& s : kvr::testing::two_clusters(22, 200, 8))
            right += (mlp_forward(r.params, s.x) > 50.0) == (s.d > 50.0);
        CHECK(right / 400.0 >= 0.95);
    }
    SUBCASE("deterministic per seed") {
        cfg.epochs = 3;
        CHECK(same_params(mlp_train(data, cfg), mlp_train(data, cfg)));
        auto other = cfg;
        other.seed = 4;
        CHECK_FALSE(same_params(mlp_train(data, cfg), mlp_train(data, other)));
    }
    SUBCASE("epochs=0 returns the initialization") {
        cfg.epochs = 0;
        CHECK(same_params(mlp_train(data, cfg), mlp_init(data, cfg)));
        const auto p = mlp_init(data, cfg);
        const double bound = 1.0 / std::sqrt(8.0);
        for (double w : p.w1) CHECK(std::abs(w) <= bound);
        for (double w : p.w2) CHECK(std::abs(w) <= 1.0 / std::sqrt(512.0));
    }
    SUBCASE("errors") {
        CHECK(kind_of([&] { mlp_train(std::vector<Sample>{}, cfg); }) == ErrorKind::domain);
        auto bad = data;
        bad[3].x.pop_back();
        CHECK(kind_of([&] { mlp_train(bad, cfg); }) == ErrorKind::domain);
        cfg.batch_size = 0;
        CHECK(kind_of([&] { mlp_train(data, cfg); }) == ErrorKind::configuration);
    }
}

TEST_CASE("params and datasets round-trip through KVTRACE") {
    const auto data = kvr::testing::two_clusters(30, 10, 4);
    TrainConfig cfg;
    cfg.epochs = 2;
    const auto p = mlp_train(data, cfg);
    const auto path = std::filesystem::temp_directory_path() / "kvr_params_test.kvtr";
    traceio::write_trace(path, params_to_trace(p));
    const auto back = params_from_trace(traceio::read_trace(path));
    std::filesystem::remove(path);
    CHECK(same_params(p, back));

    const auto ds = dataset_from_trace(dataset_to_trace(data));
    REQUIRE(ds.size() == data.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(ds[i].x == data[i].x);
        CHECK(ds[i].d == data[i].d);
    }
    CHECK(kind_of([&] { params_from_trace(dataset_to_trace(data)); }) == ErrorKind::validation);
}
