#pragma once

// Threshold-free classification metrics. Scores are oriented so that
// larger means "more likely positive".

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "kvr/coescore.hpp"

namespace kvr::metrics {

struct ScoredSet {
    std::vector<double> scores;
    std::vector<bool> positive;

    std::size_t size() const { return scores.size(); }
    std::size_t num_positive() const;
    // Throws Error(degenerate_input) unless sizes match and both classes occur.
    void check() const;
};

// Mann-Whitney statistic with midranks: P(pos > neg) + 0.5 P(pos == neg).
double auroc(const ScoredSet& s);
// FPR at the highest observed-score threshold (predict positive when
// score >= threshold) whose TPR reaches 0.95. No interpolation.
double fpr_at_95_tpr(const ScoredSet& s);
// Average precision: sum over distinct thresholds of (R_k - R_{k-1}) * P_k.
double aupr(const ScoredSet& s);

// Labels file: "trace_id label" per line; label is 1/0, correct/incorrect
// or positive/negative.
std::map<std::string, bool> read_labels(std::istream& in);

enum class OrientationPolicy { as_tagged, auto_select };

struct EvalRow {
    std::string method;
    std::string axis;
    std::string orientation;
    std::size_t n = 0;
    double auroc = 0.0;
    double fpr95 = 0.0;
    double aupr = 0.0;
};

// Groups score lines by (method, axis) and evaluates each group against the
// labels. With auto_select, the first `validation_fraction` of each group
// (input order) picks the orientation and is excluded from the metrics.
std::vector<EvalRow> evaluate(const std::vector<coescore::ScoreLine>& scores,
                              const std::map<std::string, bool>& labels,
                              OrientationPolicy policy = OrientationPolicy::as_tagged,
                              double validation_fraction = 0.2);

void write_eval_table(std::ostream& out, const std::vector<EvalRow>& rows);

}  // namespace kvr::metrics
