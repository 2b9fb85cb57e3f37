#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "exitrack/numerics/layers.hpp"

namespace exitrack::num {

// Named float32 tensors plus a free-form UTF-8 metadata block.
//
// On-disk layout, all integers little-endian:
//   "DYTX"  u32 version
//   u32 metadata_bytes, metadata (UTF-8)
//   u32 entry_count
//   per entry: u32 name_bytes, name (UTF-8), u32 rank, u64 extents[rank],
//              f32 payload[product of extents]
class Checkpoint {
 public:
  static constexpr std::uint32_t kVersion = 1;

  struct Entry {
    std::string name;
    Shape shape;
    std::vector<float> values;
  };

  std::string metadata;

  void add(std::string name, Shape shape, std::vector<float> values);
  const Entry* find(const std::string& name) const;
  const std::vector<Entry>& entries() const { return entries_; }

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

 private:
  std::vector<Entry> entries_;
};

template <class T>
Checkpoint capture(const ParameterList<T>& params, std::string metadata = {}) {
  Checkpoint ckpt;
  ckpt.metadata = std::move(metadata);
  for (const auto& p : params)
    ckpt.add(p.name, p.tensor.shape(), std::vector<float>(p.tensor.data().begin(), p.tensor.data().end()));
  return ckpt;
}

// Copies matching entries into `params`. Every parameter must be present
// with an identical shape unless its name starts with one of
// `optional_prefixes`, in which case a missing entry is skipped.
// Returns the number of parameters restored.
template <class T>
std::size_t restore(const Checkpoint& ckpt, ParameterList<T>& params,
                    const std::vector<std::string>& optional_prefixes = {}) {
  std::size_t restored = 0;
  for (auto& p : params) {
    const auto* entry = ckpt.find(p.name);
    if (!entry) {
      bool optional = false;
      for (const auto& prefix : optional_prefixes) optional = optional || p.name.rfind(prefix, 0) == 0;
      if (optional) continue;
      throw ContractError("checkpoint has no entry '" + p.name + "'");
    }
    if (entry->shape != p.tensor.shape())
      throw DimensionError("checkpoint entry '" + p.name + "' has shape " + to_string(entry->shape) +
                           ", parameter expects " + to_string(p.tensor.shape()));
    auto data = p.tensor.data();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<T>(entry->values[i]);
    ++restored;
  }
  return restored;
}

}  // namespace exitrack::num
