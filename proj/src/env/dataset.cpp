#include "icil/env/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "icil/common/binary_io.hpp"
#include "icil/common/error.hpp"
#include "icil/env/clinical.hpp"

namespace icil::env {

bool Trajectory::chains() const {
  for (std::size_t t = 1; t < steps.size(); ++t) {
    if (steps[t - 1].next_observation != steps[t].observation) return false;
  }
  return true;
}

std::size_t Dataset::observation_dim() const {
  for (const Trajectory& tr : trajectories) {
    if (!tr.steps.empty()) return tr.steps.front().observation.size();
  }
  return specs.empty() ? 0 : specs.front().observation_dim();
}

std::size_t Dataset::transition_count() const {
  std::size_t n = 0;
  for (const Trajectory& tr : trajectories) n += tr.steps.size();
  return n;
}

std::vector<int> Dataset::env_ids() const {
  std::set<int> ids;
  for (const Trajectory& tr : trajectories) ids.insert(tr.env_id);
  return {ids.begin(), ids.end()};
}

std::size_t Dataset::trajectories_for(int env_id) const {
  return static_cast<std::size_t>(std::count_if(trajectories.begin(), trajectories.end(),
                                                [&](const Trajectory& t) { return t.env_id == env_id; }));
}

const EnvironmentSpec& Dataset::spec_for(int env_id) const {
  for (const EnvironmentSpec& s : specs) {
    if (s.env_id == env_id) return s;
  }
  throw ConfigError("dataset has no spec for env-id " + std::to_string(env_id));
}

void Dataset::validate() const {
  if (trajectories.empty()) throw ConfigError("dataset is empty");
  const std::size_t dim = observation_dim();
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const Trajectory& tr = trajectories[i];
    const EnvironmentSpec& spec = spec_for(tr.env_id);
    if (tr.steps.empty()) throw ConfigError("trajectory " + std::to_string(i) + " has no steps");
    if (tr.steps.size() > static_cast<std::size_t>(spec.horizon)) {
      throw ConfigError("trajectory " + std::to_string(i) + " exceeds the horizon");
    }
    if (!tr.chains()) throw ConfigError("trajectory " + std::to_string(i) + " does not chain");
    for (const Step& s : tr.steps) {
      if (s.observation.size() != dim || s.next_observation.size() != dim) {
        throw ShapeError("trajectory " + std::to_string(i) + ": observation width differs from " +
                         std::to_string(dim));
      }
      if (s.action < 0 || s.action >= spec.action_count) {
        throw ConfigError("trajectory " + std::to_string(i) + ": action " + std::to_string(s.action) +
                          " out of range");
      }
    }
  }
  const int actions = specs.front().action_count;
  for (const EnvironmentSpec& s : specs) {
    if (s.action_count != actions) throw ConfigError("environments disagree on the action count");
  }
}

std::span<const double> TransitionTable::observation(std::size_t row) const {
  return {observations.data() + row * dim, dim};
}

std::span<const double> TransitionTable::next_observation(std::size_t row) const {
  return {next_observations.data() + row * dim, dim};
}

namespace {

ad::Array gather(const std::vector<double>& src, std::size_t dim, std::span<const std::size_t> rows) {
  std::vector<double> out(rows.size() * dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(rows[i] * dim), dim,
                out.begin() + static_cast<std::ptrdiff_t>(i * dim));
  }
  return ad::Array::matrix(rows.size(), dim, std::move(out));
}

}  // namespace

ad::Array TransitionTable::gather_observations(std::span<const std::size_t> rows) const {
  return gather(observations, dim, rows);
}

ad::Array TransitionTable::gather_next_observations(std::span<const std::size_t> rows) const {
  return gather(next_observations, dim, rows);
}

std::vector<int> TransitionTable::gather_actions(std::span<const std::size_t> rows) const {
  std::vector<int> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = actions[rows[i]];
  return out;
}

std::vector<std::vector<std::size_t>> TransitionTable::rows_by_env(const std::vector<int>& env_order) const {
  std::vector<std::vector<std::size_t>> out(env_order.size());
  for (std::size_t r = 0; r < size(); ++r) {
    auto it = std::find(env_order.begin(), env_order.end(), env_ids[r]);
    if (it == env_order.end()) throw ConfigError("row with unknown env-id " + std::to_string(env_ids[r]));
    out[static_cast<std::size_t>(it - env_order.begin())].push_back(r);
  }
  return out;
}

TransitionTable flatten(const Dataset& dataset) {
  TransitionTable t;
  t.dim = dataset.observation_dim();
  const std::size_t n = dataset.transition_count();
  t.observations.reserve(n * t.dim);
  t.next_observations.reserve(n * t.dim);
  t.actions.reserve(n);
  t.env_ids.reserve(n);
  t.terminal.reserve(n);
  for (const Trajectory& tr : dataset.trajectories) {
    for (const Step& s : tr.steps) {
      t.observations.insert(t.observations.end(), s.observation.begin(), s.observation.end());
      t.next_observations.insert(t.next_observations.end(), s.next_observation.begin(),
                                 s.next_observation.end());
      t.actions.push_back(s.action);
      t.env_ids.push_back(tr.env_id);
      t.terminal.push_back(s.terminal ? 1 : 0);
    }
  }
  return t;
}

Dataset generate_cartpole_dataset(const std::vector<EnvironmentSpec>& specs, const ExpertFn& expert,
                                  std::size_t trajectories_per_env, std::uint64_t seed) {
  if (trajectories_per_env == 0) throw ConfigError("need at least one trajectory per environment");
  Dataset ds;
  ds.specs = specs;
  ds.seed = seed;
  for (const EnvironmentSpec& spec : specs) {
    spec.validate();
    if (spec.task != Task::cartpole) throw ConfigError("generate_cartpole_dataset: non-cartpole spec");
    const std::optional<int> id_feature =
        spec.env_identifier ? std::optional<int>(spec.env_id) : std::nullopt;
    for (std::size_t i = 0; i < trajectories_per_env; ++i) {
      Rng rng(derive_seed(seed, "demo", {static_cast<std::uint64_t>(spec.env_id), i}));
      Trajectory tr;
      tr.env_id = spec.env_id;
      CartPoleState state = cartpole_reset(rng);
      std::vector<double> obs = augment(state, spec.intervention, id_feature);
      for (int t = 0; t < spec.horizon; ++t) {
        const int a = expert(state);
        const CartPoleStep next = cartpole_step(state, a);
        std::vector<double> next_obs = augment(next.next, spec.intervention, id_feature);
        tr.steps.push_back({obs, a, next_obs, next.terminated});
        if (next.terminated) break;
        state = next.next;
        obs = std::move(next_obs);
      }
      ds.trajectories.push_back(std::move(tr));
    }
  }
  return ds;
}

Dataset generate_dataset(const std::vector<EnvironmentSpec>& specs, std::size_t trajectories_per_env,
                         std::uint64_t seed) {
  if (specs.empty()) throw ConfigError("generate_dataset: no environment specs");
  const Task task = specs.front().task;
  for (const EnvironmentSpec& s : specs) {
    if (s.task != task) throw ConfigError("generate_dataset: specs mix tasks");
  }
  switch (task) {
    case Task::cartpole:
      return generate_cartpole_dataset(specs, scripted_expert, trajectories_per_env, seed);
    case Task::offline_clinical:
      return generate_clinical_dataset(specs, trajectories_per_env, seed);
    case Task::tabular:
      break;
  }
  throw ConfigError("generate_dataset: tabular tasks have no trajectory generator");
}

// ---- binary format ----
// "ICILDATA" | u32 version | u64 header-bytes | header JSON {specs, seed, dim, counts}
// | per trajectory: i32 env-id | u64 steps | steps x {dim f64 | i32 action | dim f64 | u8 terminal}

namespace {
constexpr char kMagic[8] = {'I', 'C', 'I', 'L', 'D', 'A', 'T', 'A'};
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  nlohmann::json header;
  header["format_version"] = kDatasetFormatVersion;
  header["seed"] = dataset.seed;
  header["observation_dim"] = dataset.observation_dim();
  header["trajectory_count"] = dataset.trajectories.size();
  nlohmann::json counts = nlohmann::json::object();
  for (int e : dataset.env_ids()) counts[std::to_string(e)] = dataset.trajectories_for(e);
  header["trajectories_per_env"] = counts;
  header["specs"] = nlohmann::json::array();
  for (const EnvironmentSpec& s : dataset.specs) header["specs"].push_back(to_json(s));
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("dataset: cannot open '" + path.string() + "' for writing");
  os.write(kMagic, sizeof(kMagic));
  bin::put<std::uint32_t>(os, kDatasetFormatVersion);
  bin::put<std::uint64_t>(os, text.size());
  bin::put_bytes(os, text);
  const std::size_t dim = dataset.observation_dim();
  for (const Trajectory& tr : dataset.trajectories) {
    bin::put<std::int32_t>(os, tr.env_id);
    bin::put<std::uint64_t>(os, tr.steps.size());
    for (const Step& s : tr.steps) {
      bin::put_span(os, s.observation.data(), dim);
      bin::put<std::int32_t>(os, s.action);
      bin::put_span(os, s.next_observation.data(), dim);
      bin::put<std::uint8_t>(os, s.terminal ? 1 : 0);
    }
  }
  if (!os) throw Error("dataset: write failed for '" + path.string() + "'");
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("dataset: cannot open '" + path.string() + "'");
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || !std::equal(magic, magic + 8, kMagic)) {
    throw FormatError("'" + path.string() + "' is not a dataset file");
  }
  const auto version = bin::take<std::uint32_t>(is, "version");
  if (version != kDatasetFormatVersion) {
    throw FormatError("dataset: unsupported format version " + std::to_string(version));
  }
  const auto len = bin::take<std::uint64_t>(is, "header length");
  const nlohmann::json header = nlohmann::json::parse(bin::take_bytes(is, len, "header"));
  Dataset ds;
  ds.seed = header.at("seed").get<std::uint64_t>();
  for (const auto& s : header.at("specs")) ds.specs.push_back(spec_from_json(s));
  const auto dim = header.at("observation_dim").get<std::size_t>();
  const auto count = header.at("trajectory_count").get<std::size_t>();
  ds.trajectories.resize(count);
  for (Trajectory& tr : ds.trajectories) {
    tr.env_id = bin::take<std::int32_t>(is, "env-id");
    const auto steps = bin::take<std::uint64_t>(is, "step count");
    tr.steps.resize(steps);
    for (Step& s : tr.steps) {
      s.observation.resize(dim);
      s.next_observation.resize(dim);
      bin::take_span(is, s.observation.data(), dim, "observation");
      s.action = bin::take<std::int32_t>(is, "action");
      bin::take_span(is, s.next_observation.data(), dim, "next observation");
      s.terminal = bin::take<std::uint8_t>(is, "terminal flag") != 0;
    }
  }
  ds.validate();
  return ds;
}

void export_dataset_csv(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("dataset: cannot open '" + path.string() + "' for writing");
  const std::size_t dim = dataset.observation_dim();
  os << "env_id,traj_id,t";
  for (std::size_t j = 0; j < dim; ++j) os << ",x_" << j;
  os << ",a";
  for (std::size_t j = 0; j < dim; ++j) os << ",x'_" << j;
  os << '\n';
  os.precision(17);
  for (std::size_t i = 0; i < dataset.trajectories.size(); ++i) {
    const Trajectory& tr = dataset.trajectories[i];
    for (std::size_t t = 0; t < tr.steps.size(); ++t) {
      const Step& s = tr.steps[t];
      os << tr.env_id << ',' << i << ',' << t;
      for (double v : s.observation) os << ',' << v;
      os << ',' << s.action;
      for (double v : s.next_observation) os << ',' << v;
      os << '\n';
    }
  }
}

}  // namespace icil::env
