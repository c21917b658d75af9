#include "icil/ad/params.hpp"

#include <cmath>

#include "icil/common/error.hpp"

namespace icil::ad {

ParameterStore::ParameterStore(const ParameterStore& other) { *this = other; }

ParameterStore& ParameterStore::operator=(const ParameterStore& other) {
  if (this == &other) return *this;
  entries_.clear();
  entries_.reserve(other.entries_.size());
  for (const Entry& e : other.entries_) {
    Entry copy{e.name, parameter(e.var.value()), e.m, e.v, e.t};
    if (!e.var.grad().empty()) copy.var.mutable_grad() = e.var.grad();
    entries_.push_back(std::move(copy));
  }
  return *this;
}

const Var& ParameterStore::add(std::string name, Array init) {
  if (contains(name)) throw ConfigError("ParameterStore: duplicate parameter name '" + name + "'");
  Array zeros = Array::zeros_like(init);
  entries_.push_back(Entry{std::move(name), parameter(std::move(init)), zeros, zeros, 0});
  return entries_.back().var;
}

ParameterStore::Entry& ParameterStore::find(std::string_view name) {
  for (Entry& e : entries_) {
    if (e.name == name) return e;
  }
  throw ConfigError("ParameterStore: no parameter named '" + std::string(name) + "'");
}

const ParameterStore::Entry& ParameterStore::find(std::string_view name) const {
  return const_cast<ParameterStore*>(this)->find(name);
}

const Var& ParameterStore::get(std::string_view name) const { return find(name).var; }

bool ParameterStore::contains(std::string_view name) const {
  for (const Entry& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const Entry& e : entries_) n += e.var.value().size();
  return n;
}

void ParameterStore::zero_grad() {
  for (Entry& e : entries_) {
    if (!e.var.grad().empty()) e.var.mutable_grad() = Array::zeros_like(e.var.value());
  }
}

void ParameterStore::adam_step(double learning_rate, UpdateDirection direction,
                               const AdamConfig& config) {
  for (const Entry& e : entries_) {
    if (!e.var.grad().empty() && !e.var.grad().all_finite()) {
      throw NumericError("adam_step: non-finite gradient for parameter '" + e.name + "'");
    }
  }
  const double sign = direction == UpdateDirection::descent ? 1.0 : -1.0;
  for (Entry& e : entries_) {
    ++e.t;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(e.t));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(e.t));
    Array& value = e.var.mutable_value();
    const bool has_grad = !e.var.grad().empty();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = has_grad ? sign * e.var.grad()[i] : 0.0;
      e.m[i] = config.beta1 * e.m[i] + (1.0 - config.beta1) * g;
      e.v[i] = config.beta2 * e.v[i] + (1.0 - config.beta2) * g * g;
      const double mhat = e.m[i] / bc1;
      const double vhat = e.v[i] / bc2;
      value[i] -= learning_rate * mhat / (std::sqrt(vhat) + config.epsilon);
    }
  }
  zero_grad();
}

void ParameterStore::assign(std::string_view name, const Array& value) {
  Entry& e = find(name);
  if (e.var.value().shape() != value.shape()) {
    throw ShapeError("ParameterStore::assign: '" + std::string(name) + "' has shape " +
                     e.var.value().shape_string() + ", got " + value.shape_string());
  }
  if (!value.all_finite()) {
    throw NumericError("ParameterStore::assign: non-finite value for '" + std::string(name) + "'");
  }
  e.var.mutable_value() = value;
}

}  // namespace icil::ad
