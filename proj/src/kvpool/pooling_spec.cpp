#include <charconv>
#include <sstream>

#include "kvr/error.hpp"
#include "kvr/kvpool.hpp"

namespace kvr::kvpool {

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

int parse_int(std::string_view s, std::string_view what) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc() && ptr == s.data() + s.size() && !s.empty(), ErrorKind::usage,
            "bad integer '" + std::string(s) + "' in pooling spec " + std::string(what));
    return v;
}

}  // namespace

std::string PoolingSpec::to_string() const {
    std::ostringstream os;
    switch (source) {
        case Source::values_only: os << "v"; break;
        case Source::keys_and_values: os << "kv"; break;
        case Source::hidden_states: os << "hidden"; break;
    }
    os << ':' << (head_agg == HeadAgg::concatenate ? "concat" : "headmean") << ':';
    switch (position_agg) {
        case PositionAgg::per_token: os << "pertoken"; break;
        case PositionAgg::mean_all: os << "mean"; break;
        case PositionAgg::sum_last_k: os << "sumlast" << last_k; break;
    }
    os << ':' << (layer_agg == LayerAgg::per_layer ? "perlayer=" : "layers=");
    if (!layers) {
        os << "all";
    } else {
        for (std::size_t i = 0; i < layers->size(); ++i) os << (i ? "," : "") << (*layers)[i];
    }
    os << ':' << (normalize == Normalize::unit_l2 ? "l2" : "nonorm");
    return os.str();
}

PoolingSpec PoolingSpec::parse(std::string_view text) {
    const auto parts = split(text, ':');
    require(parts.size() == 5, ErrorKind::usage,
            "pooling spec needs 5 ':'-separated fields: " + std::string(text));
    PoolingSpec spec;
    if (parts[0] == "v") spec.source = Source::values_only;
    else if (parts[0] == "kv") spec.source = Source::keys_and_values;
    else if (parts[0] == "hidden") spec.source = Source::hidden_states;
    else fail(ErrorKind::usage, "unknown pooling source '" + std::string(parts[0]) + "'");

    if (parts[1] == "concat") spec.head_agg = HeadAgg::concatenate;
    else if (parts[1] == "headmean") spec.head_agg = HeadAgg::mean;
    else fail(ErrorKind::usage, "unknown head aggregation '" + std::string(parts[1]) + "'");

    if (parts[2] == "pertoken") {
        spec.position_agg = PositionAgg::per_token;
    } else if (parts[2] == "mean") {
        spec.position_agg = PositionAgg::mean_all;
    } else if (parts[2].starts_with("sumlast")) {
        spec.position_agg = PositionAgg::sum_last_k;
        spec.last_k = parse_int(parts[2].substr(7), text);
    } else {
        fail(ErrorKind::usage, "unknown position aggregation '" + std::string(parts[2]) + "'");
    }

    std::string_view layer_part = parts[3];
    if (layer_part.starts_with("layers=")) {
        spec.layer_agg = LayerAgg::mean_over_selected;
        layer_part.remove_prefix(7);
    } else if (layer_part.starts_with("perlayer=")) {
        spec.layer_agg = LayerAgg::per_layer;
        layer_part.remove_prefix(9);
    } else {
        fail(ErrorKind::usage, "layer field must start with layers= or perlayer=");
    }
    if (layer_part != "all") {
        std::vector<int> idx;
        if (!layer_part.empty())
            for (auto tok : split(layer_part, ',')) idx.push_back(parse_int(tok, text));
        spec.layers = std::move(idx);
    }

    if (parts[4] == "nonorm") spec.normalize = Normalize::none;
    else if (parts[4] == "l2") spec.normalize = Normalize::unit_l2;
    else fail(ErrorKind::usage, "unknown normalization '" + std::string(parts[4]) + "'");
    return spec;
}

void PoolingSpec::validate(int num_layers) const {
    require(!(position_agg == PositionAgg::per_token && layer_agg == LayerAgg::per_layer),
            ErrorKind::configuration,
            "per-token positions and per-layer output are mutually exclusive");
    require(position_agg != PositionAgg::sum_last_k || last_k >= 1, ErrorKind::configuration,
            "sum_last_k needs k >= 1");
    if (layers) {
        require(!layers->empty(), ErrorKind::configuration, "layer set is empty");
        if (num_layers > 0) {
            for (int l : *layers)
                require(l >= 0 && l < num_layers, ErrorKind::configuration,
                        "layer index " + std::to_string(l) + " outside [0, " +
                            std::to_string(num_layers) + ")");
        }
    }
}

std::vector<int> PoolingSpec::resolve_layers(int num_layers) const {
    validate(num_layers);
    if (layers) return *layers;
    std::vector<int> all(num_layers);
    for (int i = 0; i < num_layers; ++i) all[i] = i;
    return all;
}

PoolingSpec PoolingSpec::sentence() {
    PoolingSpec s;
    s.source = Source::keys_and_values;
    s.position_agg = PositionAgg::mean_all;
    s.normalize = Normalize::unit_l2;
    return s;
}

PoolingSpec PoolingSpec::token_trajectory(Source source) {
    PoolingSpec s;
    s.source = source;
    s.position_agg = PositionAgg::per_token;
    return s;
}

PoolingSpec PoolingSpec::classifier(std::vector<int> layers, int last_k) {
    PoolingSpec s;
    s.source = Source::keys_and_values;
    s.position_agg = PositionAgg::sum_last_k;
    s.last_k = last_k;
    s.layers = std::move(layers);
    return s;
}

std::vector<int> evenly_spaced_layers(int num_layers, int count) {
    require(count >= 1 && count <= num_layers, ErrorKind::configuration,
            "cannot select " + std::to_string(count) + " of " + std::to_string(num_layers) + " layers");
    std::vector<int> out(count);
    for (int i = 0; i < count; ++i)
        out[i] = static_cast<int>((static_cast<long long>(i + 1) * num_layers) / count) - 1;
    return out;
}

std::vector<BudgetEntry> default_budget_grid() { return {{8, 32}, {4, 64}, {2, 128}}; }

void check_budget_grid(const std::vector<BudgetEntry>& grid, int budget) {
    for (const auto& e : grid) {
        require(e.layers >= 1 && e.tokens >= 1 && e.units() == budget, ErrorKind::configuration,
                "budget entry " + std::to_string(e.layers) + "x" + std::to_string(e.tokens) + " = " +
                    std::to_string(e.units()) + " != " + std::to_string(budget));
    }
}

}  // namespace kvr::kvpool
