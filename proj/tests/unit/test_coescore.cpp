#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "kvr/coescore.hpp"
#include "kvr/error.hpp"
#include "kvr/rng.hpp"
#include "support/pool_oracles.hpp"

using namespace kvr;
using namespace kvr::coescore;
using kvpool::Trajectory;

namespace {

Trajectory traj(std::vector<std::vector<double>> pts) { return {Trajectory::Axis::token, std::move(pts)}; }

Trajectory random_traj(SplitMix64& rng, int n, int dim, double spread = 1.0) {
    Trajectory t;
    for (int i = 0; i < n; ++i) {
        std::vector<double> p(dim);
        for (double& x : p) x = rng.uniform(-spread, spread);
        t.points.push_back(p);
    }
    return t;
}

// Extended-precision reference for one step.
std::pair<long double, long double> oracle_step(const std::vector<double>& a, const std::vector<double>& b) {
    long double dd = 0, ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const long double x = a[i], y = b[i];
        dd += (y - x) * (y - x);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    long double c = ab / (sqrtl(aa) * sqrtl(bb));
    c = std::min(1.0L, std::max(-1.0L, c));
    return {sqrtl(dd), acosl(c)};
}

StepDeltas deltas(std::vector<double> r, std::vector<double> th) { return {std::move(r), std::move(th), 0}; }

}  // namespace

TEST_CASE("step_deltas hand cases") {
    const auto same = step_deltas(traj({{1, 0}, {1, 0}}));
    CHECK(same.delta_r == std::vector<double>{0.0});
    CHECK(same.delta_theta == std::vector<double>{0.0});

    const auto ortho = step_deltas(traj({{1, 0}, {0, 1}}));
    CHECK(ortho.delta_r[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(ortho.delta_theta[0] == doctest::Approx(std::numbers::pi / 2).epsilon(1e-15));

    const auto anti = step_deltas(traj({{1, 1, 1}, {-2, -2, -2}}));
    CHECK(anti.delta_theta[0] == doctest::Approx(std::numbers::pi));
    const auto collinear = step_deltas(traj({{1e-3, 2e-3}, {3.0, 6.0}}));
    CHECK(collinear.delta_theta[0] >= 0.0);
    CHECK(collinear.delta_theta[0] < 1e-7);

    const auto zero = step_deltas(traj({{0, 0}, {1, 0}, {0, 0}}));
    CHECK(zero.delta_theta == std::vector<double>{0.0, 0.0});
    CHECK(zero.zero_norm_steps == 2);
    CHECK(zero.delta_r == std::vector<double>{1.0, 1.0});

    try {
        step_deltas(traj({{1, 2}}));
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::trajectory_too_short);
    }
}

TEST_CASE("step_deltas agrees with an extended-precision oracle") {
    SplitMix64 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const auto t = random_traj(rng, 5, 1 + static_cast<int>(rng.below(40)));
        const auto d = step_deltas(t);
        REQUIRE(d.n_steps() == 4);
        for (int i = 0; i < 4; ++i) {
            const auto [r, th] = oracle_step(t.points[i], t.points[i + 1]);
            CHECK(std::fabs(d.delta_r[i] - static_cast<double>(r)) <= 1e-9);
            CHECK(std::fabs(d.delta_theta[i] - static_cast<double>(th)) <= 1e-9);
        }
    }
}

TEST_CASE("coe_r and coe_c closed forms") {
    CHECK(coe_r(deltas({0}, {0}), {3.0, 7.0}).value == 0.0);
    CHECK(coe_r(deltas({2}, {1}), {1.0, 0.0}).value == 2.0);
    CHECK(coe_r(deltas({1, 3}, {0.5, 0.5}), {1.0, 1.0}).value == doctest::Approx(2.5));
    CHECK(coe_c(deltas({3}, {4})).value == doctest::Approx(5.0));
    CHECK(coe_c(deltas({0, 0}, {0, 0})).value == 0.0);
    CHECK_THROWS_AS(coe_r(deltas({}, {})), Error);
    CHECK_THROWS_AS(coe_c(deltas({}, {})), Error);
}

TEST_CASE("property: coe_c <= coe_r with unit weights") {
    SplitMix64 rng(8);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(30));
        StepDeltas d;
        for (int i = 0; i < n; ++i) {
            d.delta_r.push_back(rng.uniform(0.0, 10.0));
            d.delta_theta.push_back(rng.uniform(0.0, std::numbers::pi));
        }
        CHECK(coe_c(d).value <= coe_r(d, {1.0, 1.0}).value);
    }
}

TEST_CASE("property: geometric invariances of step deltas") {
    SplitMix64 rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        const int dim = 2 + static_cast<int>(rng.below(10));
        const auto t = random_traj(rng, 6, dim);
        const auto base = step_deltas(t);

        // translation leaves delta_r unchanged
        auto shifted = t;
        std::vector<double> c(dim);
        for (double& x : c) x = rng.uniform(-5, 5);
        for (auto& p : shifted.points)
            for (int i = 0; i < dim; ++i) p[i] += c[i];
        const auto ds = step_deltas(shifted);
        for (std::size_t i = 0; i < base.n_steps(); ++i) CHECK(std::fabs(ds.delta_r[i] - base.delta_r[i]) <= 1e-9);

        // rescaling one point leaves the adjacent angles unchanged
        auto one = t;
        const double k = rng.uniform(0.1, 10.0);
        for (double& x : one.points[2]) x *= k;
        const auto d1 = step_deltas(one);
        CHECK(std::fabs(d1.delta_theta[1] - base.delta_theta[1]) <= 1e-9);
        CHECK(std::fabs(d1.delta_theta[2] - base.delta_theta[2]) <= 1e-9);

        // global scaling scales delta_r and keeps angles
        auto all = t;
        for (auto& p : all.points)
            for (double& x : p) x *= k;
        const auto da = step_deltas(all);
        for (std::size_t i = 0; i < base.n_steps(); ++i) {
            CHECK(std::fabs(da.delta_r[i] - k * base.delta_r[i]) <= 1e-9 * (1 + k));
            CHECK(std::fabs(da.delta_theta[i] - base.delta_theta[i]) <= 1e-9);
        }

        // reversal: reversed deltas, identical scores
        auto rev = t;
        std::reverse(rev.points.begin(), rev.points.end());
        const auto dr = step_deltas(rev);
        for (std::size_t i = 0; i < base.n_steps(); ++i) {
            CHECK(std::fabs(dr.delta_r[i] - base.delta_r[base.n_steps() - 1 - i]) <= 1e-12);
            CHECK(std::fabs(dr.delta_theta[i] - base.delta_theta[base.n_steps() - 1 - i]) <= 1e-12);
        }
        CHECK(std::fabs(coe_r(dr).value - coe_r(base).value) <= 1e-12);
        CHECK(std::fabs(coe_c(dr).value - coe_c(base).value) <= 1e-12);

        for (double th : base.delta_theta) CHECK((th >= 0.0 && th <= std::numbers::pi));
    }
}

TEST_CASE("score_baseline definitions") {
    minitx::ForwardRecord rec;
    rec.vocab_size = 4;
    rec.length = 3;
    rec.generated_from = 1;
    // row 0: effectively one-hot; row 1: uniform
    rec.logits = {1000.f, -1000.f, -1000.f, -1000.f, 0.f, 0.f, 0.f, 0.f, 0.f, 0.f, 0.f, 0.f};
    rec.token_logprobs = {std::log(0.5), std::log(0.5)};

    const auto ppl = score_baseline(Method::ppl, rec);
    CHECK(ppl.value == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(ppl.orientation == Orientation::lower_is_correct);

    const auto maxp = score_baseline(Method::maxprob, rec);
    CHECK(maxp.value == doctest::Approx((1.0 + 0.25) / 2));
    CHECK(maxp.orientation == Orientation::higher_is_correct);

    const auto ent = score_baseline(Method::entropy, rec);
    CHECK(ent.value == doctest::Approx((0.0 + std::log(4.0)) / 2));

    rec.generated_from = 2;  // only row 1 predicted a generated token
    CHECK(score_baseline(Method::entropy, rec).value == doctest::Approx(std::log(4.0)));
    CHECK(score_baseline(Method::maxprob, rec).value == doctest::Approx(0.25));

    minitx::ForwardRecord empty;
    empty.vocab_size = 4;
    empty.length = 1;
    empty.logits = {0, 0, 0, 0};
    CHECK_THROWS_AS(score_baseline(Method::ppl, empty), Error);
    CHECK_THROWS_AS(score_baseline(Method::coe_r, rec), Error);
}

TEST_CASE("kv_coe is the composition of pooling, deltas and scoring") {
    SplitMix64 rng(10);
    const auto sc = kvr::testing::random_cache(rng, 2, 8, 2, 4);
    const auto cache = sc.to_cache();
    const auto spec = kvpool::PoolingSpec::token_trajectory();
    const auto direct = coe_c(step_deltas(kvpool::pool_token_trajectory(cache, spec)));
    const auto composed = kv_coe(cache, spec, {Method::coe_c, {}}, Axis::token);
    CHECK(composed.value == direct.value);
    CHECK(composed.axis == Axis::token);

    const auto layer_spec = kvpool::PoolingSpec::parse("v:concat:mean:perlayer=all:nonorm");
    const auto layer_direct = coe_r(step_deltas(kvpool::pool_layer_trajectory(cache, layer_spec)));
    CHECK(kv_coe(cache, spec, {Method::coe_r, {}}, Axis::layer).value == layer_direct.value);

    // two identical token columns
    auto twin = kvr::testing::random_cache(rng, 2, 2, 2, 4);
    for (int l = 0; l < 2; ++l) {
        twin.keys[l][1] = twin.keys[l][0];
        twin.values[l][1] = twin.values[l][0];
    }
    CHECK(kv_coe(twin.to_cache(), spec, {Method::coe_r, {}}, Axis::token).value == 0.0);
    CHECK(kv_coe(twin.to_cache(), spec, {Method::coe_c, {}}, Axis::token).value == 0.0);
}

TEST_CASE("erratic trajectories score above smooth ones") {
    SplitMix64 rng(11);
    auto walk = [&](double step) {
        kvr::testing::SyntheticCache c = kvr::testing::random_cache(rng, 2, 24, 2, 4);
        for (int l = 0; l < 2; ++l)
            for (int t = 1; t < 24; ++t)
                for (int h = 0; h < 2; ++h)
                    for (int i = 0; i < 4; ++i) {
                        c.values[l][t][h][i] = static_cast<float>(c.values[l][t - 1][h][i] + rng.uniform(-step, step));
                        c.keys[l][t][h][i] = static_cast<float>(c.keys[l][t - 1][h][i] + rng.uniform(-step, step));
                    }
        return c.to_cache();
    };
    const auto spec = kvpool::PoolingSpec::token_trajectory();
    for (int trial = 0; trial < 20; ++trial) {
        const auto smooth = walk(0.02);
        const auto erratic = walk(1.0);
        CHECK(kv_coe(erratic, spec, {Method::coe_r, {}}, Axis::token).value >
              kv_coe(smooth, spec, {Method::coe_r, {}}, Axis::token).value);
    }
}

TEST_CASE("score line format") {
    ScoreLine line{"trace_007", {0.1234567890123, Method::coe_r, Axis::token, Orientation::lower_is_correct}};
    const auto text = format_score_line(line);
    CHECK(text.starts_with("trace_007 coe_r token lower-is-correct 0.1234567890123"));
    const auto back = parse_score_line(text);
    CHECK(back.trace_id == "trace_007");
    CHECK(back.score.value == line.score.value);
    CHECK(back.score.orientation == Orientation::lower_is_correct);
    CHECK(parse_score_line("x ppl n/a lower-is-correct 2").score.axis == Axis::none);

    std::istringstream in("# comment\na coe_c layer higher-is-correct 1.5\n\nb maxprob n/a higher-is-correct 0.5\n");
    const auto all = read_score_lines(in);
    CHECK(all.size() == 2);
    CHECK_THROWS_AS(parse_score_line("a coe_c token"), Error);
    CHECK_THROWS_AS(parse_score_line("a coe_c token higher-is-correct nan"), Error);
}
