#include "icil/env/standardizer.hpp"

#include <cmath>

#include "icil/common/error.hpp"

namespace icil::env {

Standardizer::Standardizer(std::vector<double> mean, std::vector<double> scale)
    : mean_(std::move(mean)), scale_(std::move(scale)) {
  if (mean_.size() != scale_.size()) throw ShapeError("Standardizer: mean and scale widths differ");
  for (double s : scale_) {
    if (!(s > 0.0) || !std::isfinite(s)) throw NumericError("Standardizer: scales must be positive");
  }
}

Standardizer Standardizer::fit(const TransitionTable& table) {
  if (table.size() == 0) throw ConfigError("Standardizer: no observations to fit");
  const std::size_t d = table.dim, n = table.size();
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += table.observations[r * d + j];
  }
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      const double z = table.observations[r * d + j] - mean[j];
      var[j] += z * z;
    }
  }
  std::vector<double> scale(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double s = std::sqrt(var[j] / static_cast<double>(n));
    scale[j] = s > 1e-12 ? s : 1.0;
  }
  return Standardizer(std::move(mean), std::move(scale));
}

Standardizer Standardizer::identity(std::size_t dim) {
  return Standardizer(std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0));
}

ad::Array Standardizer::apply(const ad::Array& x) const {
  if (x.cols() != dim()) {
    throw ShapeError("Standardizer: input has " + std::to_string(x.cols()) + " columns, expected " +
                     std::to_string(dim()));
  }
  ad::Array out = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t j = 0; j < dim(); ++j) out.at(r, j) = (x.at(r, j) - mean_[j]) / scale_[j];
  }
  return out;
}

std::vector<double> Standardizer::apply(std::span<const double> x) const {
  if (x.size() != dim()) throw ShapeError("Standardizer: observation width mismatch");
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean_[j]) / scale_[j];
  return out;
}

TransitionTable Standardizer::apply(const TransitionTable& table) const {
  if (table.dim != dim()) throw ShapeError("Standardizer: table width mismatch");
  TransitionTable out = table;
  for (std::size_t i = 0; i < out.observations.size(); ++i) {
    const std::size_t j = i % dim();
    out.observations[i] = (out.observations[i] - mean_[j]) / scale_[j];
    out.next_observations[i] = (out.next_observations[i] - mean_[j]) / scale_[j];
  }
  return out;
}

nlohmann::json Standardizer::to_json() const { return {{"mean", mean_}, {"scale", scale_}}; }

Standardizer Standardizer::from_json(const nlohmann::json& j) {
  return Standardizer(j.at("mean").get<std::vector<double>>(), j.at("scale").get<std::vector<double>>());
}

}  // namespace icil::env
