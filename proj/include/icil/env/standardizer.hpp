#pragma once

#include <vector>

#include <json.hpp>

#include "icil/ad/array.hpp"
#include "icil/env/dataset.hpp"

namespace icil::env {

// Per-coordinate affine map to mean 0 / std 1 over the training observations.
// Coordinates with zero spread (constant env-id flags, for instance) keep
// scale 1.
class Standardizer {
 public:
  Standardizer() = default;
  Standardizer(std::vector<double> mean, std::vector<double> scale);

  static Standardizer fit(const TransitionTable& table);
  static Standardizer identity(std::size_t dim);

  std::size_t dim() const noexcept { return mean_.size(); }
  const std::vector<double>& mean() const noexcept { return mean_; }
  const std::vector<double>& scale() const noexcept { return scale_; }

  ad::Array apply(const ad::Array& x) const;
  std::vector<double> apply(std::span<const double> x) const;
  // Standardizes the observation and next-observation blocks in place.
  TransitionTable apply(const TransitionTable& table) const;

  nlohmann::json to_json() const;
  static Standardizer from_json(const nlohmann::json& j);

  friend bool operator==(const Standardizer&, const Standardizer&) = default;

 private:
  std::vector<double> mean_;
  std::vector<double> scale_;
};

}  // namespace icil::env
