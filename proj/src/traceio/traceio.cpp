#include "kvr/traceio.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "kvr/error.hpp"

namespace kvr::traceio {

namespace {

constexpr char kMagic[4] = {'K', 'V', 'T', 'R'};

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void bytes(const void* p, std::size_t n) {
        auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }
    std::size_t size() const { return out_.size(); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n)
            fail(ErrorKind::truncated, std::string("file ends inside ") + what);
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return bytes_[pos_++];
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
        pos_ += 8;
        return v;
    }
    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::uint64_t checked_product(const std::vector<std::uint64_t>& shape, const std::string& name) {
    std::uint64_t n = 1;
    for (auto d : shape) {
        if (d != 0 && n > UINT64_MAX / d)
            fail(ErrorKind::malformed, "tensor '" + name + "' shape overflows");
        n *= d;
    }
    return n;
}

void add(ValidationReport& r, std::string check, std::string tensor, std::string message) {
    r.violations.push_back({std::move(check), std::move(tensor), std::move(message)});
}

std::string shape_str(const std::vector<std::uint64_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

template <class T>
void check_finite(ValidationReport& r, const Tensor& t, const std::vector<T>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) {
            add(r, "finite", t.name, "non-finite value at flat index " + std::to_string(i));
            return;
        }
    }
}

std::optional<std::uint64_t> meta_uint(const nlohmann::json& obj, const char* key) {
    if (!obj.is_object()) return std::nullopt;
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_number_integer()) return std::nullopt;
    auto v = it->get<std::int64_t>();
    if (v < 0) return std::nullopt;
    return static_cast<std::uint64_t>(v);
}

void expect_shape(ValidationReport& r, const Tensor& t, const std::vector<std::uint64_t>& want) {
    if (t.shape != want)
        add(r, "shape", t.name, "shape " + shape_str(t.shape) + " does not match expected " + shape_str(want));
}

}  // namespace

std::size_t Tensor::data_elements() const {
    return std::visit([](const auto& v) { return v.size(); }, data);
}

std::uint64_t Tensor::shape_elements() const {
    std::uint64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

Tensor Tensor::f32(std::string name, std::vector<std::uint64_t> shape, std::vector<float> values) {
    Tensor t;
    t.name = std::move(name);
    t.shape = std::move(shape);
    t.data = std::move(values);
    return t;
}

Tensor Tensor::f64(std::string name, std::vector<std::uint64_t> shape, std::vector<double> values) {
    Tensor t;
    t.name = std::move(name);
    t.shape = std::move(shape);
    t.data = std::move(values);
    return t;
}

const Tensor* TraceFile::find(std::string_view name) const {
    for (const auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

const Tensor& TraceFile::at(std::string_view name) const {
    const Tensor* t = find(name);
    if (!t) fail(ErrorKind::validation, "trace has no tensor '" + std::string(name) + "'");
    return *t;
}

std::span<const float> TraceFile::f32(std::string_view name) const {
    const Tensor& t = at(name);
    if (t.dtype() != DType::f32) fail(ErrorKind::validation, "tensor '" + t.name + "' is not f32");
    return std::get<0>(t.data);
}

std::span<const double> TraceFile::f64(std::string_view name) const {
    const Tensor& t = at(name);
    if (t.dtype() != DType::f64) fail(ErrorKind::validation, "tensor '" + t.name + "' is not f64");
    return std::get<1>(t.data);
}

void TraceFile::layout() {
    std::uint64_t off = 0;
    for (auto& t : tensors) {
        t.offset = off;
        off += static_cast<std::uint64_t>(t.data_elements()) * t.element_size();
    }
}

std::string ValidationReport::summary() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < violations.size(); ++i) {
        const auto& v = violations[i];
        if (i) os << "; ";
        os << v.check;
        if (!v.tensor.empty()) os << " [" << v.tensor << "]";
        os << ": " << v.message;
    }
    return os.str();
}

namespace {

ValidationReport validate_impl(const TraceFile& trace, bool check_offsets) {
    ValidationReport r;
    if (trace.version == 0 || trace.version > kFormatVersion)
        add(r, "version", "", "unsupported version " + std::to_string(trace.version));
    if (!trace.meta.is_object()) add(r, "meta", "", "metadata must be an object");

    std::set<std::string> names;
    std::uint64_t prev_end = 0;
    for (std::size_t i = 0; i < trace.tensors.size(); ++i) {
        const Tensor& t = trace.tensors[i];
        if (t.name.empty()) add(r, "name", "", "tensor " + std::to_string(i) + " has an empty name");
        if (!names.insert(t.name).second) add(r, "name", t.name, "duplicate tensor name");
        if (t.shape_elements() != t.data_elements())
            add(r, "shape", t.name,
                "shape " + shape_str(t.shape) + " declares " + std::to_string(t.shape_elements()) +
                    " elements but data holds " + std::to_string(t.data_elements()));
        std::visit([&](const auto& v) { check_finite(r, t, v); }, t.data);
        if (check_offsets && i > 0 && t.offset < prev_end)
            add(r, "offsets", t.name, "offset " + std::to_string(t.offset) + " precedes end of previous tensor");
        prev_end = t.offset + static_cast<std::uint64_t>(t.data_elements()) * t.element_size();
    }

    // Shape consistency against declared model dims.
    const auto model = trace.meta.is_object() && trace.meta.contains("model") ? trace.meta["model"]
                                                                              : nlohmann::json();
    auto L = meta_uint(model, "num_layers");
    auto H_kv = meta_uint(model, "num_kv_heads");
    auto d_head = meta_uint(model, "d_head");
    auto d_model = meta_uint(model, "d_model");
    auto V = meta_uint(model, "vocab_size");
    std::optional<std::uint64_t> T;
    if (trace.meta.is_object() && trace.meta.contains("tokens")) {
        if (trace.meta["tokens"].is_array())
            T = trace.meta["tokens"].size();
        else
            add(r, "meta", "", "tokens must be an array");
    }

    for (const Tensor& t : trace.tensors) {
        bool is_k = t.name.rfind("K.", 0) == 0;
        bool is_v = t.name.rfind("V.", 0) == 0;
        if (is_k || is_v) {
            const std::string idx = t.name.substr(2);
            bool numeric = !idx.empty() && idx.find_first_not_of("0123456789") == std::string::npos;
            if (!numeric) {
                add(r, "name", t.name, "layer index is not a number");
                continue;
            }
            if (L && std::stoull(idx) >= *L)
                add(r, "dims", t.name, "layer index out of range for num_layers=" + std::to_string(*L));
            if (t.dtype() != DType::f32) add(r, "dtype", t.name, "cache tensors must be f32");
            if (t.shape.size() != 3) {
                add(r, "shape", t.name, "cache tensor must be rank 3 [t, H_kv, d_head]");
                continue;
            }
            if (T && t.shape[0] != *T)
                add(r, "shape", t.name,
                    "first dim " + std::to_string(t.shape[0]) + " != token count " + std::to_string(*T));
            if (H_kv && t.shape[1] != *H_kv)
                add(r, "shape", t.name, "head dim " + std::to_string(t.shape[1]) + " != num_kv_heads");
            if (d_head && t.shape[2] != *d_head)
                add(r, "shape", t.name, "last dim " + std::to_string(t.shape[2]) + " != d_head");
        } else if (t.name == "hidden" && L && T && d_model) {
            expect_shape(r, t, {*L + 1, *T, *d_model});
        } else if (t.name == "logits" && T && V) {
            expect_shape(r, t, {*T, *V});
        } else if (t.name == "token_logprobs" && T) {
            expect_shape(r, t, {*T > 0 ? *T - 1 : 0});
        }
    }
    if (L) {
        for (std::uint64_t l = 0; l < *L; ++l) {
            bool k = trace.find("K." + std::to_string(l)) != nullptr;
            bool v = trace.find("V." + std::to_string(l)) != nullptr;
            if (k != v)
                add(r, "dims", k ? "K." + std::to_string(l) : "V." + std::to_string(l),
                    "layer " + std::to_string(l) + " has only one of K/V");
        }
    }
    return r;
}

}  // namespace

ValidationReport validate_trace(const TraceFile& trace) { return validate_impl(trace, true); }

std::vector<std::uint8_t> encode_trace(const TraceFile& trace) {
    auto report = validate_impl(trace, false);
    if (!report.ok()) fail(ErrorKind::validation, report.summary());

    Writer w;
    w.bytes(kMagic, 4);
    w.u32(trace.version);
    const std::string meta = trace.meta.dump();
    w.u64(meta.size());
    w.bytes(meta.data(), meta.size());
    w.u32(static_cast<std::uint32_t>(trace.tensors.size()));
    std::uint64_t off = 0;
    for (const Tensor& t : trace.tensors) {
        w.u32(static_cast<std::uint32_t>(t.name.size()));
        w.bytes(t.name.data(), t.name.size());
        w.u8(static_cast<std::uint8_t>(t.dtype()));
        w.u32(static_cast<std::uint32_t>(t.shape.size()));
        for (auto d : t.shape) w.u64(d);
        w.u64(off);
        off += static_cast<std::uint64_t>(t.data_elements()) * t.element_size();
    }
    for (const Tensor& t : trace.tensors) {
        if (t.dtype() == DType::f32) {
            for (float x : std::get<0>(t.data)) w.u32(std::bit_cast<std::uint32_t>(x));
        } else {
            for (double x : std::get<1>(t.data)) w.u64(std::bit_cast<std::uint64_t>(x));
        }
    }
    return w.take();
}

TraceFile decode_trace(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) fail(ErrorKind::truncated, "file shorter than the magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) fail(ErrorKind::bad_magic, "not a KVTRACE file (bad magic)");
    Reader rd(bytes.subspan(4));
    TraceFile trace;
    trace.version = rd.u32("version");
    if (trace.version == 0 || trace.version > kFormatVersion)
        fail(ErrorKind::unsupported_version, "unsupported KVTRACE version " + std::to_string(trace.version));
    const std::uint64_t meta_len = rd.u64("meta_len");
    if (meta_len > rd.remaining()) fail(ErrorKind::truncated, "file ends inside metadata");
    const std::string meta = rd.str(static_cast<std::size_t>(meta_len), "metadata");
    trace.meta = nlohmann::json::parse(meta, nullptr, false);
    if (trace.meta.is_discarded()) fail(ErrorKind::malformed, "metadata is not valid JSON");

    const std::uint32_t count = rd.u32("tensor count");
    struct Entry {
        std::string name;
        std::uint8_t dtype;
        std::vector<std::uint64_t> shape;
        std::uint64_t offset;
        std::uint64_t nbytes;
    };
    std::vector<Entry> dir;
    for (std::uint32_t i = 0; i < count; ++i) {
        Entry e;
        const std::uint32_t name_len = rd.u32("directory");
        e.name = rd.str(name_len, "directory");
        e.dtype = rd.u8("directory");
        if (e.dtype > 1) fail(ErrorKind::malformed, "tensor '" + e.name + "' has unknown dtype " + std::to_string(e.dtype));
        const std::uint32_t ndim = rd.u32("directory");
        if (ndim > rd.remaining() / 8) fail(ErrorKind::truncated, "file ends inside directory");
        for (std::uint32_t k = 0; k < ndim; ++k) e.shape.push_back(rd.u64("directory"));
        e.offset = rd.u64("directory");
        const std::uint64_t n = checked_product(e.shape, e.name);
        const std::uint64_t esize = e.dtype == 0 ? 4 : 8;
        if (n > UINT64_MAX / esize) fail(ErrorKind::malformed, "tensor '" + e.name + "' is too large");
        e.nbytes = n * esize;
        if (!dir.empty()) {
            const Entry& p = dir.back();
            if (e.offset < p.offset + p.nbytes)
                fail(ErrorKind::overlapping_offsets,
                     "tensor '" + e.name + "' at offset " + std::to_string(e.offset) + " overlaps '" + p.name + "'");
        }
        dir.push_back(std::move(e));
    }

    const std::size_t payload_start = 4 + rd.pos();
    const std::uint64_t payload_len = bytes.size() - payload_start;
    for (const Entry& e : dir) {
        if (e.offset > payload_len || e.nbytes > payload_len - e.offset)
            fail(ErrorKind::truncated, "payload truncated in tensor '" + e.name + "'");
    }
    if (!dir.empty() && dir.back().offset + dir.back().nbytes != payload_len)
        fail(ErrorKind::malformed, "trailing bytes after the last tensor");
    if (dir.empty() && payload_len != 0) fail(ErrorKind::malformed, "trailing bytes after the directory");

    for (Entry& e : dir) {
        const std::uint8_t* p = bytes.data() + payload_start + e.offset;
        Tensor t;
        t.name = std::move(e.name);
        t.shape = std::move(e.shape);
        t.offset = e.offset;
        if (e.dtype == 0) {
            std::vector<float> v(e.nbytes / 4);
            for (std::size_t i = 0; i < v.size(); ++i) {
                std::uint32_t u = 0;
                for (int b = 0; b < 4; ++b) u |= std::uint32_t{p[4 * i + b]} << (8 * b);
                v[i] = std::bit_cast<float>(u);
            }
            t.data = std::move(v);
        } else {
            std::vector<double> v(e.nbytes / 8);
            for (std::size_t i = 0; i < v.size(); ++i) {
                std::uint64_t u = 0;
                for (int b = 0; b < 8; ++b) u |= std::uint64_t{p[8 * i + b]} << (8 * b);
                v[i] = std::bit_cast<double>(u);
            }
            t.data = std::move(v);
        }
        trace.tensors.push_back(std::move(t));
    }

    auto report = validate_trace(trace);
    if (!report.ok()) fail(ErrorKind::validation, report.summary());
    return trace;
}

void write_trace(const std::filesystem::path& path, const TraceFile& trace) {
    const auto bytes = encode_trace(trace);
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::io, "cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) fail(ErrorKind::io, "write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        fail(ErrorKind::io, "cannot rename into " + path.string());
    }
}

TraceFile read_trace(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) fail(ErrorKind::io, "read failed for " + path.string());
    try {
        return decode_trace(bytes);
    } catch (const Error& e) {
        fail(e.kind(), path.string() + ": " + e.what());
    }
}

TraceFile make_model_trace(const minitx::ModelConfig& config, std::span<const minitx::TokenId> tokens,
                           const minitx::KVCache& cache, const minitx::ForwardRecord* record,
                           bool include_hidden) {
    require(static_cast<int>(tokens.size()) == cache.length(), ErrorKind::validation,
            "token count does not match cache length");
    TraceFile trace;
    trace.meta["model"] = {{"num_layers", config.num_layers},   {"num_heads", config.num_heads},
                           {"num_kv_heads", config.num_kv_heads}, {"d_head", config.d_head()},
                           {"d_model", config.d_model},         {"vocab_size", config.vocab_size},
                           {"max_seq_len", config.max_seq_len}, {"seed", config.seed}};
    trace.meta["tokens"] = std::vector<minitx::TokenId>(tokens.begin(), tokens.end());
    const std::uint64_t t = tokens.size();
    const std::uint64_t hk = cache.num_kv_heads(), dh = cache.d_head();
    for (int l = 0; l < cache.num_layers(); ++l) {
        auto k = cache.keys(l);
        auto v = cache.values(l);
        trace.tensors.push_back(Tensor::f32("K." + std::to_string(l), {t, hk, dh}, {k.begin(), k.end()}));
        trace.tensors.push_back(Tensor::f32("V." + std::to_string(l), {t, hk, dh}, {v.begin(), v.end()}));
    }
    if (record) {
        require(record->length == cache.length(), ErrorKind::validation, "record length does not match cache");
        trace.meta["generated_from"] = record->generated_from;
        if (include_hidden) {
            std::vector<float> h;
            h.reserve((record->num_layers + 1) * t * record->d_model);
            for (const auto& layer : record->hidden) h.insert(h.end(), layer.begin(), layer.end());
            trace.tensors.push_back(Tensor::f32(
                "hidden", {static_cast<std::uint64_t>(record->num_layers + 1), t,
                           static_cast<std::uint64_t>(record->d_model)},
                std::move(h)));
        }
        trace.tensors.push_back(
            Tensor::f32("logits", {t, static_cast<std::uint64_t>(record->vocab_size)}, record->logits));
        trace.tensors.push_back(
            Tensor::f64("token_logprobs", {static_cast<std::uint64_t>(record->token_logprobs.size())},
                        record->token_logprobs));
    }
    trace.layout();
    return trace;
}

namespace {

int meta_int(const TraceFile& trace, const char* key) {
    auto v = meta_uint(trace.meta.value("model", nlohmann::json()), key);
    if (!v) fail(ErrorKind::validation, std::string("trace metadata lacks model.") + key);
    return static_cast<int>(*v);
}

}  // namespace

minitx::KVCache cache_from_trace(const TraceFile& trace) {
    const int L = meta_int(trace, "num_layers");
    const int hk = meta_int(trace, "num_kv_heads");
    const int dh = meta_int(trace, "d_head");
    std::vector<std::vector<float>> keys, values;
    for (int l = 0; l < L; ++l) {
        auto k = trace.f32("K." + std::to_string(l));
        auto v = trace.f32("V." + std::to_string(l));
        keys.emplace_back(k.begin(), k.end());
        values.emplace_back(v.begin(), v.end());
    }
    return minitx::KVCache::from_tensors(std::move(keys), std::move(values), hk, dh);
}

minitx::ForwardRecord record_from_trace(const TraceFile& trace) {
    minitx::ForwardRecord rec;
    rec.num_layers = meta_int(trace, "num_layers");
    rec.d_model = meta_int(trace, "d_model");
    rec.vocab_size = meta_int(trace, "vocab_size");
    rec.length = static_cast<int>(tokens_from_trace(trace).size());
    rec.generated_from = trace.meta.value("generated_from", 1);
    require(rec.generated_from >= 1 && rec.generated_from <= std::max(rec.length, 1), ErrorKind::validation,
            "generated_from out of range");
    auto logits = trace.f32("logits");
    rec.logits.assign(logits.begin(), logits.end());
    auto lp = trace.f64("token_logprobs");
    rec.token_logprobs.assign(lp.begin(), lp.end());
    if (const Tensor* h = trace.find("hidden")) {
        const auto& flat = std::get<0>(h->data);
        const std::size_t per = static_cast<std::size_t>(rec.length) * rec.d_model;
        require(flat.size() == per * (rec.num_layers + 1), ErrorKind::validation, "hidden has the wrong size");
        for (int l = 0; l <= rec.num_layers; ++l)
            rec.hidden.emplace_back(flat.begin() + l * per, flat.begin() + (l + 1) * per);
    }
    return rec;
}

std::vector<minitx::TokenId> tokens_from_trace(const TraceFile& trace) {
    if (!trace.meta.contains("tokens")) fail(ErrorKind::validation, "trace metadata lacks tokens");
    try {
        return trace.meta["tokens"].get<std::vector<minitx::TokenId>>();
    } catch (const nlohmann::json::exception&) {
        fail(ErrorKind::validation, "trace tokens are not integers");
    }
}

}  // namespace kvr::traceio
