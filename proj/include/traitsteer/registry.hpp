#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace traitsteer {

struct RegistryEntry {
  std::string explanation;
  std::int64_t index = 0;
  bool operator==(const RegistryEntry&) const = default;
};

struct RegistryCategory {
  std::string name;
  std::vector<RegistryEntry> entries;  // ranked, best first
  bool operator==(const RegistryCategory&) const = default;
};

struct RegistryFactor {
  std::string name;
  std::vector<RegistryCategory> categories;
  bool operator==(const RegistryFactor&) const = default;

  const RegistryCategory* find(const std::string& category) const;
};

/// factor -> category -> {explanation: SAE feature index}, in insertion order.
/// `layer` and `sae_id` are absent for the bare fragment form.
struct FactorRegistry {
  std::vector<RegistryFactor> factors;
  std::optional<int> layer;
  std::optional<std::string> sae_id;
  bool operator==(const FactorRegistry&) const = default;

  const RegistryFactor* find(const std::string& factor) const;
  std::vector<std::int64_t> all_indices() const;
};

}  // namespace traitsteer
