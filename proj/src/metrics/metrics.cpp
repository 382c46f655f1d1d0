#include <algorithm>
#include <cstdint>
#include <numeric>

#include "kvr/error.hpp"
#include "kvr/metrics.hpp"

namespace kvr::metrics {

namespace {

// Indices sorted by descending score.
std::vector<std::size_t> descending_order(const ScoredSet& s) {
    std::vector<std::size_t> idx(s.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s.scores[a] > s.scores[b]; });
    return idx;
}

// Cumulative (tp, fp) after each block of tied scores, highest first.
struct ThresholdPoint {
    std::int64_t tp;
    std::int64_t fp;
};

std::vector<ThresholdPoint> threshold_sweep(const ScoredSet& s) {
    const auto idx = descending_order(s);
    std::vector<ThresholdPoint> pts;
    std::int64_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && s.scores[idx[j]] == s.scores[idx[i]]) {
            (s.positive[idx[j]] ? tp : fp) += 1;
            ++j;
        }
        pts.push_back({tp, fp});
        i = j;
    }
    return pts;
}

}  // namespace

std::size_t ScoredSet::num_positive() const {
    return static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
}

void ScoredSet::check() const {
    require(scores.size() == positive.size(), ErrorKind::degenerate_input,
            "scores and labels differ in length");
    const std::size_t p = num_positive();
    require(p >= 1 && p < size(), ErrorKind::degenerate_input,
            "metrics need at least one positive and one negative");
}

double auroc(const ScoredSet& s) {
    s.check();
    const std::size_t n = s.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s.scores[a] < s.scores[b]; });
    // Twice the midrank is an integer, so the statistic is exact.
    std::int64_t rank_sum_x2 = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && s.scores[idx[j]] == s.scores[idx[i]]) ++j;
        const std::int64_t midrank_x2 = static_cast<std::int64_t>(i + 1 + j);  // (i+1) + j
        for (std::size_t k = i; k < j; ++k)
            if (s.positive[idx[k]]) rank_sum_x2 += midrank_x2;
        i = j;
    }
    const std::int64_t n1 = static_cast<std::int64_t>(s.num_positive());
    const std::int64_t n0 = static_cast<std::int64_t>(n) - n1;
    const std::int64_t u_x2 = rank_sum_x2 - n1 * (n1 + 1);
    return static_cast<double>(u_x2) / static_cast<double>(2 * n1 * n0);
}

double fpr_at_95_tpr(const ScoredSet& s) {
    s.check();
    const std::int64_t p = static_cast<std::int64_t>(s.num_positive());
    const std::int64_t neg = static_cast<std::int64_t>(s.size()) - p;
    for (const auto& pt : threshold_sweep(s)) {
        if (20 * pt.tp >= 19 * p) return static_cast<double>(pt.fp) / static_cast<double>(neg);
    }
    return 1.0;
}

double aupr(const ScoredSet& s) {
    s.check();
    const double p = static_cast<double>(s.num_positive());
    double ap = 0.0;
    std::int64_t prev_tp = 0;
    for (const auto& pt : threshold_sweep(s)) {
        if (pt.tp != prev_tp) {
            const double precision = static_cast<double>(pt.tp) / static_cast<double>(pt.tp + pt.fp);
            ap += static_cast<double>(pt.tp - prev_tp) * precision;
            prev_tp = pt.tp;
        }
    }
    return ap / p;
}

}  // namespace kvr::metrics
