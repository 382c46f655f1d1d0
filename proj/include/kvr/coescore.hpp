#pragma once

// Chain-of-Embedding trajectory scores and output-probability baselines.

#include <iosfwd>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "kvr/kvpool.hpp"
#include "kvr/minitx.hpp"

namespace kvr::coescore {

struct StepDeltas {
    std::vector<double> delta_r;      // ||p_{i+1} - p_i||
    std::vector<double> delta_theta;  // angle between p_{i+1} and p_i, in [0, pi]
    // Steps whose angle was set to 0 because an endpoint had zero norm.
    int zero_norm_steps = 0;

    std::size_t n_steps() const { return delta_r.size(); }
};

struct CoEWeights {
    double alpha = 1.0;
    double beta = 1.0;
};

enum class Method { coe_r, coe_c, maxprob, ppl, entropy };
enum class Axis { token, layer, none };
enum class Orientation { higher_is_correct, lower_is_correct };

std::string_view to_string(Method m);
std::string_view to_string(Axis a);
std::string_view to_string(Orientation o);
Method parse_method(std::string_view s);
Axis parse_axis(std::string_view s);
Orientation parse_orientation(std::string_view s);
Orientation default_orientation(Method m);

struct ConfidenceScore {
    double value = 0.0;
    Method method = Method::coe_r;
    Axis axis = Axis::none;
    Orientation orientation = Orientation::higher_is_correct;

    // Value arranged so that larger means "more likely correct".
    double oriented() const { return orientation == Orientation::higher_is_correct ? value : -value; }
};

// Throws Error(trajectory_too_short) for fewer than two points.
StepDeltas step_deltas(const kvpool::Trajectory& traj);

ConfidenceScore coe_r(const StepDeltas& d, const CoEWeights& w = {});
ConfidenceScore coe_c(const StepDeltas& d);

// maxprob: mean max-softmax over the rows that predicted generated tokens.
// ppl: exp(-mean generated logprob). entropy: mean -sum p log p over the
// same rows. Throws Error(domain) if nothing was generated.
ConfidenceScore score_baseline(Method kind, const minitx::ForwardRecord& record);

struct CoEMethod {
    Method method = Method::coe_r;  // coe_r or coe_c
    CoEWeights weights{};
};

// pool -> step_deltas -> coe_r / coe_c along the requested axis.
ConfidenceScore kv_coe(const minitx::KVCache& cache, const kvpool::PoolingSpec& spec,
                       const CoEMethod& method, Axis axis);
// Hidden-state (vanilla) CoE over layers 0..L.
ConfidenceScore hidden_coe(const minitx::ForwardRecord& record, const kvpool::PoolingSpec& spec,
                           const CoEMethod& method);

// Line format: "trace_id method axis orientation value".
struct ScoreLine {
    std::string trace_id;
    ConfidenceScore score;
};
std::string format_score_line(const ScoreLine& line);
ScoreLine parse_score_line(std::string_view line);
std::vector<ScoreLine> read_score_lines(std::istream& in);

}  // namespace kvr::coescore
