#include <algorithm>
#include <string>

#include "kvr/error.hpp"
#include "kvr/minitx.hpp"

namespace kvr::minitx {

KVCache::KVCache(int num_layers, int num_kv_heads, int d_head, int capacity)
    : num_layers_(num_layers), num_kv_heads_(num_kv_heads), d_head_(d_head), capacity_(capacity) {
    require(num_layers >= 1 && num_kv_heads >= 1 && d_head >= 1 && capacity >= 1,
            ErrorKind::configuration, "KV cache dimensions must be positive");
    keys_.assign(num_layers, {});
    values_.assign(num_layers, {});
    const std::size_t full = row_width() * static_cast<std::size_t>(capacity);
    for (int l = 0; l < num_layers; ++l) {
        keys_[l].reserve(full);
        values_[l].reserve(full);
    }
}

KVCache KVCache::from_tensors(std::vector<std::vector<float>> keys,
                              std::vector<std::vector<float>> values, int num_kv_heads,
                              int d_head, int capacity) {
    require(!keys.empty() && keys.size() == values.size(), ErrorKind::domain,
            "KV cache needs matching, non-empty key and value layer lists");
    const std::size_t width = static_cast<std::size_t>(num_kv_heads) * d_head;
    require(width > 0, ErrorKind::configuration, "KV cache dimensions must be positive");
    const std::size_t n = keys[0].size();
    require(n % width == 0, ErrorKind::domain, "key tensor size is not a multiple of H_kv*d_head");
    for (std::size_t l = 0; l < keys.size(); ++l) {
        require(keys[l].size() == n && values[l].size() == n, ErrorKind::domain,
                "layer " + std::to_string(l) + " has a different token count");
    }
    const int t = static_cast<int>(n / width);
    if (capacity < 0) capacity = std::max(t, 1);
    require(t <= capacity, ErrorKind::capacity, "tensor length exceeds cache capacity");
    KVCache cache(static_cast<int>(keys.size()), num_kv_heads, d_head, capacity);
    cache.keys_ = std::move(keys);
    cache.values_ = std::move(values);
    cache.length_ = t;
    return cache;
}

std::span<const float> KVCache::keys(int layer) const {
    return {keys_.at(layer).data(), row_width() * length_};
}

std::span<const float> KVCache::values(int layer) const {
    return {values_.at(layer).data(), row_width() * length_};
}

std::span<const float> KVCache::key_row(int layer, int pos) const {
    return keys(layer).subspan(row_width() * pos, row_width());
}

std::span<const float> KVCache::value_row(int layer, int pos) const {
    return values(layer).subspan(row_width() * pos, row_width());
}

void KVCache::append(std::span<const float> key_rows, std::span<const float> value_rows) {
    const std::size_t w = row_width();
    require(key_rows.size() == w * num_layers_ && value_rows.size() == w * num_layers_,
            ErrorKind::domain, "append expects L rows of H_kv*d_head for keys and values");
    for (int l = 0; l < num_layers_; ++l) {
        auto k = pending_key(l);
        auto v = pending_value(l);
        std::copy_n(key_rows.begin() + w * l, w, k.begin());
        std::copy_n(value_rows.begin() + w * l, w, v.begin());
    }
    commit();
}

std::span<float> KVCache::pending_key(int layer) {
    require(!full(), ErrorKind::capacity, "KV cache is full");
    auto& buf = keys_.at(layer);
    buf.resize(row_width() * (length_ + 1));
    return {buf.data() + row_width() * length_, row_width()};
}

std::span<float> KVCache::pending_value(int layer) {
    require(!full(), ErrorKind::capacity, "KV cache is full");
    auto& buf = values_.at(layer);
    buf.resize(row_width() * (length_ + 1));
    return {buf.data() + row_width() * length_, row_width()};
}

void KVCache::commit() {
    require(!full(), ErrorKind::capacity, "KV cache is full");
    const std::size_t want = row_width() * (length_ + 1);
    for (int l = 0; l < num_layers_; ++l) {
        require(keys_[l].size() == want && values_[l].size() == want, ErrorKind::domain,
                "commit without a pending row in layer " + std::to_string(l));
    }
    ++length_;
}

}  // namespace kvr::minitx
