#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "kvr/error.hpp"
#include "kvr/metrics.hpp"

namespace kvr::metrics {

std::map<std::string, bool> read_labels(std::istream& in) {
    std::map<std::string, bool> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        std::string id, label;
        require(static_cast<bool>(is >> id >> label), ErrorKind::validation,
                "labels line " + std::to_string(lineno) + " needs 'trace_id label'");
        bool positive;
        if (label == "1" || label == "correct" || label == "positive") positive = true;
        else if (label == "0" || label == "incorrect" || label == "negative") positive = false;
        else fail(ErrorKind::validation, "labels line " + std::to_string(lineno) + ": unknown label '" + label + "'");
        require(out.emplace(id, positive).second, ErrorKind::validation, "duplicate label for " + id);
    }
    return out;
}

std::vector<EvalRow> evaluate(const std::vector<coescore::ScoreLine>& scores,
                              const std::map<std::string, bool>& labels, OrientationPolicy policy,
                              double validation_fraction) {
    // Preserve first-appearance order of (method, axis) groups.
    std::vector<std::pair<std::string, std::vector<const coescore::ScoreLine*>>> groups;
    for (const auto& line : scores) {
        const std::string key = std::string(coescore::to_string(line.score.method)) + "\t" +
                                std::string(coescore::to_string(line.score.axis));
        auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == key; });
        if (it == groups.end()) {
            groups.push_back({key, {}});
            it = groups.end() - 1;
        }
        it->second.push_back(&line);
    }

    std::vector<EvalRow> rows;
    for (const auto& [key, members] : groups) {
        const auto label_of = [&](const coescore::ScoreLine* l) {
            const auto f = labels.find(l->trace_id);
            require(f != labels.end(), ErrorKind::validation, "no label for trace " + l->trace_id);
            return f->second;
        };
        std::size_t first_eval = 0;
        bool flip = false;
        if (policy == OrientationPolicy::auto_select) {
            first_eval = static_cast<std::size_t>(std::floor(validation_fraction * members.size()));
            ScoredSet val;
            for (std::size_t i = 0; i < first_eval; ++i) {
                val.scores.push_back(members[i]->score.value);
                val.positive.push_back(label_of(members[i]));
            }
            val.check();
            flip = auroc(val) < 0.5;
        }
        ScoredSet set;
        for (std::size_t i = first_eval; i < members.size(); ++i) {
            double v = policy == OrientationPolicy::auto_select ? members[i]->score.value
                                                                : members[i]->score.oriented();
            set.scores.push_back(flip ? -v : v);
            set.positive.push_back(label_of(members[i]));
        }
        EvalRow row;
        row.method = coescore::to_string(members.front()->score.method);
        row.axis = coescore::to_string(members.front()->score.axis);
        if (policy == OrientationPolicy::auto_select)
            row.orientation = flip ? "lower-is-correct" : "higher-is-correct";
        else
            row.orientation = coescore::to_string(members.front()->score.orientation);
        row.n = set.size();
        row.auroc = auroc(set);
        row.fpr95 = fpr_at_95_tpr(set);
        row.aupr = aupr(set);
        rows.push_back(row);
    }
    return rows;
}

void write_eval_table(std::ostream& out, const std::vector<EvalRow>& rows) {
    out << "method\taxis\torientation\tn\tauroc\tfpr95\taupr\n";
    char buf[96];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.6f\t%.6f\t%.6f", r.auroc, r.fpr95, r.aupr);
        out << r.method << '\t' << r.axis << '\t' << r.orientation << '\t' << r.n << '\t' << buf << '\n';
    }
}

}  // namespace kvr::metrics
