#pragma once

#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include "advrep/common.hpp"
#include "advrep/tensor.hpp"

namespace advrep {

enum class ParamGroup { kEncoder, kDecoder, kPdHead, kSpkHead };

inline const char* group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::kEncoder: return "encoder";
    case ParamGroup::kDecoder: return "decoder";
    case ParamGroup::kPdHead: return "pd_head";
    case ParamGroup::kSpkHead: return "spk_head";
  }
  return "?";
}

// Named parameter registry. Insertion order is part of the contract: the
// checkpoint format, checksums and SGD all walk entries in this order.
// Non-trainable entries (batch-norm running statistics) are carried for
// checkpointing and checksums but never touched by the optimizer.
template <typename T>
class ParamSet {
 public:
  struct Entry {
    std::string name;
    ParamGroup group;
    TensorT<T> tensor;
    bool trainable;
  };

  TensorT<T> add(std::string name, ParamGroup group, TensorT<T> tensor,
                 bool trainable = true) {
    for (const auto& e : entries_)
      ADVREP_CHECK(e.name != name, "duplicate parameter name");
    tensor.set_requires_grad(trainable);
    entries_.push_back({std::move(name), group, tensor, trainable});
    return tensor;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  const Entry* find(std::string_view name) const {
    for (const auto& e : entries_)
      if (e.name == name) return &e;
    return nullptr;
  }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  size_t param_count(ParamGroup group, bool trainable_only = true) const {
    size_t n = 0;
    for (const auto& e : entries_)
      if (e.group == group && (!trainable_only || e.trainable))
        n += e.tensor.numel();
    return n;
  }

  size_t total_count(bool trainable_only = true) const {
    size_t n = 0;
    for (const auto& e : entries_)
      if (!trainable_only || e.trainable) n += e.tensor.numel();
    return n;
  }

  // FNV-1a over names and raw value bytes of every entry in the group (or all
  // entries). Bit-level: two states collide only if identical bytewise.
  uint64_t checksum(ParamGroup group) const { return checksum_impl(&group); }
  uint64_t checksum() const { return checksum_impl(nullptr); }

  // Deep copy of all values, for in-memory restore.
  std::vector<std::vector<T>> snapshot() const {
    std::vector<std::vector<T>> s;
    s.reserve(entries_.size());
    for (const auto& e : entries_) s.push_back(e.tensor.values());
    return s;
  }

  void restore(const std::vector<std::vector<T>>& s) {
    ADVREP_CHECK(s.size() == entries_.size(), "snapshot entry count mismatch");
    for (size_t i = 0; i < entries_.size(); ++i) {
      ADVREP_CHECK(s[i].size() == entries_[i].tensor.numel(),
                   "snapshot size mismatch");
      entries_[i].tensor.values() = s[i];
    }
  }

 private:
  uint64_t checksum_impl(const ParamGroup* group) const {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* p, size_t n) {
      const auto* b = static_cast<const uint8_t*>(p);
      for (size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 0x100000001b3ULL;
      }
    };
    for (const auto& e : entries_) {
      if (group && e.group != *group) continue;
      mix(e.name.data(), e.name.size());
      mix(e.tensor.data(), e.tensor.numel() * sizeof(T));
    }
    return h;
  }

  std::vector<Entry> entries_;
};

struct GroupMask {
  bool encoder = false;
  bool decoder = false;
  bool pd_head = false;
  bool spk_head = false;

  static GroupMask of(std::initializer_list<ParamGroup> groups) {
    GroupMask m;
    for (ParamGroup g : groups) m.set(g, true);
    return m;
  }

  bool get(ParamGroup g) const {
    switch (g) {
      case ParamGroup::kEncoder: return encoder;
      case ParamGroup::kDecoder: return decoder;
      case ParamGroup::kPdHead: return pd_head;
      case ParamGroup::kSpkHead: return spk_head;
    }
    return false;
  }

  void set(ParamGroup g, bool v) {
    switch (g) {
      case ParamGroup::kEncoder: encoder = v; break;
      case ParamGroup::kDecoder: decoder = v; break;
      case ParamGroup::kPdHead: pd_head = v; break;
      case ParamGroup::kSpkHead: spk_head = v; break;
    }
  }
};

// Vanilla SGD over the enabled groups. Only touches trainable entries whose
// gradient buffer was actually materialized, and clears exactly the
// gradients it consumed.
template <typename T>
void sgd_step(ParamSet<T>& params, T lr, const GroupMask& enabled) {
  for (auto& e : params.entries()) {
    if (!e.trainable || !enabled.get(e.group) || !e.tensor.has_grad())
      continue;
    T* w = e.tensor.data();
    T* g = e.tensor.grad();
    const size_t n = e.tensor.numel();
    for (size_t i = 0; i < n; ++i) w[i] -= lr * g[i];
    e.tensor.zero_grad();
  }
}

}  // namespace advrep
