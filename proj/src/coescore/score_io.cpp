#include <cmath>
#include <cstdlib>
#include <cstdio>
#include <istream>
#include <sstream>

#include "kvr/coescore.hpp"
#include "kvr/error.hpp"

namespace kvr::coescore {

std::string_view to_string(Method m) {
    switch (m) {
        case Method::coe_r: return "coe_r";
        case Method::coe_c: return "coe_c";
        case Method::maxprob: return "maxprob";
        case Method::ppl: return "ppl";
        case Method::entropy: return "entropy";
    }
    return "?";
}

std::string_view to_string(Axis a) {
    switch (a) {
        case Axis::token: return "token";
        case Axis::layer: return "layer";
        case Axis::none: return "n/a";
    }
    return "?";
}

std::string_view to_string(Orientation o) {
    return o == Orientation::higher_is_correct ? "higher-is-correct" : "lower-is-correct";
}

Method parse_method(std::string_view s) {
    for (Method m : {Method::coe_r, Method::coe_c, Method::maxprob, Method::ppl, Method::entropy})
        if (s == to_string(m)) return m;
    fail(ErrorKind::usage, "unknown score method '" + std::string(s) + "'");
}

Axis parse_axis(std::string_view s) {
    for (Axis a : {Axis::token, Axis::layer, Axis::none})
        if (s == to_string(a)) return a;
    fail(ErrorKind::usage, "unknown axis '" + std::string(s) + "'");
}

Orientation parse_orientation(std::string_view s) {
    if (s == "higher-is-correct") return Orientation::higher_is_correct;
    if (s == "lower-is-correct") return Orientation::lower_is_correct;
    fail(ErrorKind::usage, "unknown orientation '" + std::string(s) + "'");
}

Orientation default_orientation(Method m) {
    return (m == Method::ppl || m == Method::entropy) ? Orientation::lower_is_correct
                                                      : Orientation::higher_is_correct;
}

std::string format_score_line(const ScoreLine& line) {
    // %.17g round-trips a double exactly.
    char value[32];
    std::snprintf(value, sizeof value, "%.17g", line.score.value);
    std::string out = line.trace_id;
    out += ' ';
    out += to_string(line.score.method);
    out += ' ';
    out += to_string(line.score.axis);
    out += ' ';
    out += to_string(line.score.orientation);
    out += ' ';
    out += value;
    return out;
}

ScoreLine parse_score_line(std::string_view line) {
    std::istringstream is{std::string(line)};
    std::string id, method, axis, orient, value;
    require(static_cast<bool>(is >> id >> method >> axis >> orient >> value), ErrorKind::validation,
            "score line needs 5 fields: '" + std::string(line) + "'");
    std::string extra;
    require(!(is >> extra), ErrorKind::validation, "score line has trailing fields");
    ScoreLine out;
    out.trace_id = id;
    out.score.method = parse_method(method);
    out.score.axis = parse_axis(axis);
    out.score.orientation = parse_orientation(orient);
    char* end = nullptr;
    out.score.value = std::strtod(value.c_str(), &end);
    require(end && *end == '\0' && std::isfinite(out.score.value), ErrorKind::validation,
            "bad score value '" + value + "'");
    return out;
}

std::vector<ScoreLine> read_score_lines(std::istream& in) {
    std::vector<ScoreLine> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        out.push_back(parse_score_line(line));
    }
    return out;
}

}  // namespace kvr::coescore
