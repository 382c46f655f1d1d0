#include <cmath>
#include <numeric>

#include "kvr/error.hpp"
#include "kvr/rng.hpp"
#include "kvr/toydata.hpp"

namespace kvr::toydata {

minitx::ModelConfig SwitchWorkloadConfig::default_switch_model() {
    minitx::ModelConfig m;
    m.num_layers = 8;
    m.num_heads = 4;
    m.num_kv_heads = 2;
    m.d_model = 32;
    m.max_seq_len = 256;
    m.seed = 7;
    return m;
}

void SwitchWorkloadConfig::validate() const {
    require(n_items >= 1, ErrorKind::usage, "workload needs at least one item");
    require(easy_fraction >= 0 && easy_fraction <= 1, ErrorKind::usage, "easy fraction must be in [0, 1]");
    model.validate();
    require(prompt_min >= 1 && prompt_max >= prompt_min, ErrorKind::configuration, "bad prompt length range");
    require(answer_tokens >= 1 && think_budget >= 1, ErrorKind::configuration, "budgets must be >= 1");
    require(reasoning_need >= 1 && reasoning_need <= think_budget, ErrorKind::configuration,
            "reasoning_need must be in [1, think_budget]");
    require(prompt_max + 3 + think_budget + answer_tokens <= model.max_seq_len, ErrorKind::configuration,
            "slow generation would exceed max_seq_len");
}

switcher::SwitchConfig SwitchWorkloadConfig::switch_config() const {
    switcher::SwitchConfig c;
    c.checkpoint_every = reasoning_need;
    c.answer_tokens = answer_tokens;
    c.think_budget = think_budget;
    c.max_new_tokens = think_budget + answer_tokens + 8;
    return c;
}

std::vector<WorkloadItem> make_switch_workload(const minitx::Model& model, const SwitchWorkloadConfig& cfg) {
    cfg.validate();
    const auto sc = cfg.switch_config();
    const int n_easy = static_cast<int>(std::lround(cfg.n_items * cfg.easy_fraction));
    std::vector<int> slots(cfg.n_items);
    std::iota(slots.begin(), slots.end(), 0);
    SplitMix64 shuffle(derive_seed(cfg.seed, 0x6d6978));
    for (int i = cfg.n_items; i > 1; --i) std::swap(slots[i - 1], slots[shuffle.below(i)]);
    std::vector<bool> easy(cfg.n_items, false);
    for (int i = 0; i < n_easy; ++i) easy[slots[i]] = true;

    std::vector<WorkloadItem> out;
    out.reserve(cfg.n_items);
    for (int i = 0; i < cfg.n_items; ++i) {
        SplitMix64 rng(derive_seed(cfg.seed, 5000 + i));
        WorkloadItem item;
        item.easy = easy[i];
        item.reasoning_need = cfg.reasoning_need;
        const int len = cfg.prompt_min + static_cast<int>(rng.below(cfg.prompt_max - cfg.prompt_min + 1));
        for (int k = 0; k < len; ++k)
            item.prompt.push_back(item.easy ? static_cast<TokenId>('0' + rng.below(10))
                                            : static_cast<TokenId>('a' + rng.below(26)));
        const auto fast = switcher::plain_generation(model, item.prompt, switcher::Mode::fast, sc);
        const auto slow = switcher::plain_generation(model, item.prompt, switcher::Mode::slow, sc);
        item.fast_tokens = fast.tokens_generated;
        item.slow_tokens = slow.tokens_generated;
        item.gold = switcher::extract_answer(item.easy ? fast.generated() : slow.generated());
        item.label = difficulty::assign_label(switcher::grade_answer(fast.generated(), item.gold),
                                              switcher::grade_answer(slow.generated(), item.gold),
                                              static_cast<std::uint64_t>(fast.tokens_generated));
        out.push_back(std::move(item));
    }
    return out;
}

traceio::TraceFile workload_trace_file(const SwitchWorkloadConfig& cfg, const minitx::Model& model,
                                       const WorkloadItem& item, int index) {
    auto pre = minitx::prefill(model, item.prompt);
    auto trace = traceio::make_model_trace(model.config(), item.prompt, pre.cache, &pre.record);
    trace.meta["kind"] = "switch-item";
    trace.meta["index"] = index;
    trace.meta["difficulty"] = item.easy ? "easy" : "hard";
    trace.meta["gold"] = item.gold;
    trace.meta["reasoning_need"] = item.reasoning_need;
    trace.meta["label"] = {{"d", item.label.d},
                           {"fast_correct", item.label.fast_correct},
                           {"slow_correct", item.label.slow_correct},
                           {"fast_len", item.label.fast_len}};
    trace.meta["fast_tokens"] = item.fast_tokens;
    trace.meta["slow_tokens"] = item.slow_tokens;
    trace.meta["workload"] = {{"seed", cfg.seed},
                              {"answer_tokens", cfg.answer_tokens},
                              {"think_budget", cfg.think_budget},
                              {"reasoning_need", cfg.reasoning_need}};
    return trace;
}

minitx::ModelConfig model_config_from_trace(const traceio::TraceFile& trace) {
    const auto& m = trace.meta.at("model");
    minitx::ModelConfig c;
    try {
        c.num_layers = m.at("num_layers").get<int>();
        c.num_heads = m.at("num_heads").get<int>();
        c.num_kv_heads = m.at("num_kv_heads").get<int>();
        c.d_model = m.at("d_model").get<int>();
        c.vocab_size = m.at("vocab_size").get<int>();
        c.max_seq_len = m.at("max_seq_len").get<int>();
        c.seed = m.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::validation, std::string("trace model metadata incomplete: ") + e.what());
    }
    c.validate();
    return c;
}

WorkloadItem workload_item_from_trace(const traceio::TraceFile& trace) {
    require(trace.meta.value("kind", std::string()) == "switch-item", ErrorKind::validation,
            "trace kind is not switch-item");
    WorkloadItem item;
    try {
        item.prompt = traceio::tokens_from_trace(trace);
        item.easy = trace.meta.at("difficulty").get<std::string>() == "easy";
        item.gold = trace.meta.at("gold").get<std::vector<TokenId>>();
        item.reasoning_need = trace.meta.at("reasoning_need").get<int>();
        const auto& l = trace.meta.at("label");
        item.label = {l.at("d").get<int>(), l.at("fast_correct").get<bool>(), l.at("slow_correct").get<bool>(),
                      l.at("fast_len").get<std::uint64_t>()};
        item.fast_tokens = trace.meta.at("fast_tokens").get<int>();
        item.slow_tokens = trace.meta.at("slow_tokens").get<int>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::validation, std::string("switch-item metadata incomplete: ") + e.what());
    }
    return item;
}

}  // namespace kvr::toydata
