#pragma once

// Instrumented single iteration of the ICIL update: backpropagates every loss
// term on its own and records which parameter stores received a non-zero
// gradient element. Compared exactly against the allowed routing table.

#include <map>
#include <set>
#include <string>
#include <vector>

#include "icil/learner/icil.hpp"

namespace icil::testkit {

struct RoutingReport {
  // loss -> stores with at least one non-zero gradient element
  std::map<std::string, std::set<std::string>> touched;
  std::vector<std::string> violations;  // "loss -> store" pairs outside the table
  std::vector<std::string> missing;     // allowed pairs that stayed exactly zero
};

inline std::vector<std::pair<std::string, ad::ParameterStore*>> labelled_stores(learner::IcilModel& m) {
  std::vector<std::pair<std::string, ad::ParameterStore*>> out{{"phi", &m.phi.params()}};
  for (auto& n : m.mu) out.emplace_back("mu", &n.params());
  out.emplace_back("g_s", &m.g_s.params());
  for (auto& n : m.g_eta) out.emplace_back("g_eta", &n.params());
  out.emplace_back("psi", &m.psi.params());
  out.emplace_back("classifier", &m.classifier.params());
  out.emplace_back("pi", &m.pi.params());
  out.emplace_back("mine", &m.mine.params());
  return out;
}

inline const std::map<std::string, std::set<std::string>>& allowed_routing() {
  static const std::map<std::string, std::set<std::string>> table{
      {"l_inv", {"phi"}},
      {"l_dyn", {"phi", "mu", "g_s", "g_eta", "psi"}},
      {"l_mi/representation", {"phi", "mu"}},
      {"l_mi/statistics", {"mine"}},
      {"l_pi", {"phi", "pi"}},
      {"l_energy", {"pi"}},
      {"l_c", {"classifier"}},
  };
  return table;
}

inline RoutingReport audit_gradient_routing(learner::IcilModel& model, const learner::IcilBatch& batch,
                                            const ebm::EnergyModel& energy_model, std::span<const std::size_t> perm,
                                            const ad::Array& noise, double temperature = 1.0) {
  using namespace learner;
  RoutingReport report;
  auto run = [&](const std::string& name, auto&& build) {
    model.zero_grad();
    const ad::Var loss = build();
    ad::backward(loss);
    for (auto& [label, store] : labelled_stores(model)) {
      for (const auto& e : store->entries()) {
        const ad::Array& g = e.var.grad();
        bool nonzero = false;
        for (double v : g.data()) nonzero = nonzero || v != 0.0;
        if (nonzero) report.touched[name].insert(label);
      }
    }
    model.zero_grad();
  };
  run("l_inv", [&] { return loss_inv(model, encode_state(model, batch), batch); });
  run("l_dyn", [&] { return loss_dyn(model, encode_state(model, batch), encode_noise(model, batch), batch); });
  run("l_mi/representation", [&] {
    return loss_mi(model, encode_state(model, batch), encode_noise(model, batch), perm, ad::Params::frozen);
  });
  run("l_mi/statistics", [&] {
    const ad::Var s = ad::constant(model.phi.predict(batch.encoder_x.value()));
    const ad::Var eta =
        ad::constant(apply_per_env(model.mu, batch.encoder_x, env_runs(batch.env_index), ad::Params::frozen).value());
    return loss_mi(model, s, eta, perm, ad::Params::live);
  });
  run("l_pi", [&] { return loss_pi(model, encode_state(model, batch), batch); });
  run("l_energy", [&] {
    return loss_energy(model, energy_model, encode_state(model, batch), encode_noise(model, batch), batch,
                       temperature, noise);
  });
  run("l_c", [&] { return loss_classifier(model, encode_state(model, batch), batch); });

  for (const auto& [loss, allowed] : allowed_routing()) {
    const auto& got = report.touched[loss];
    for (const auto& store : got) {
      if (!allowed.count(store)) report.violations.push_back(loss + " -> " + store);
    }
    for (const auto& store : allowed) {
      if (!got.count(store)) report.missing.push_back(loss + " -> " + store);
    }
  }
  return report;
}

}  // namespace icil::testkit
