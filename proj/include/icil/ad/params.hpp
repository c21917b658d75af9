#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "icil/ad/graph.hpp"

namespace icil::ad {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

enum class UpdateDirection { descent, ascent };

// Named trainable leaves plus their Adam moments. Copying deep-copies values
// and optimizer state, so a copy can be handed to another thread for
// read-only evaluation.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Var var;
    Array m;
    Array v;
    std::int64_t t = 0;
  };

  ParameterStore() = default;
  ParameterStore(const ParameterStore& other);
  ParameterStore& operator=(const ParameterStore& other);
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  const Var& add(std::string name, Array init);
  const Var& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t parameter_count() const;

  void zero_grad();
  // One Adam step on every entry, then zeroes grads. Entries whose grad was
  // never touched are treated as having a zero gradient.
  void adam_step(double learning_rate, UpdateDirection direction = UpdateDirection::descent,
                 const AdamConfig& config = {});

  // Replaces the value of an existing parameter (shapes must match).
  void assign(std::string_view name, const Array& value);

 private:
  Entry& find(std::string_view name);
  const Entry& find(std::string_view name) const;

  std::vector<Entry> entries_;
};

}  // namespace icil::ad
