#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "channel_model.hpp"
#include "common.hpp"
#include "eval_harness.hpp"
#include "measurement.hpp"
#include "sparse_recovery.hpp"
#include "trainer.hpp"

namespace l1ae {

using Json = nlohmann::ordered_json;

/// Everything one experiment needs; `seed` drives data, init and shuffling.
struct ExperimentConfig {
  std::string profile = "paper";
  std::uint64_t seed = 0;
  ChannelConfig channel;
  std::size_t num_samples = 20000;
  SplitRatios split;
  double floor = 0.1;
  double zero_tol = 1e-12;
  TrainConfig train;
  RecoveryConfig recovery;
  MetricConfig metrics;
  std::vector<std::size_t> m_values{20, 25, 30, 35, 40};
  std::vector<MatrixKind> kinds{MatrixKind::Learned,   MatrixKind::PartialFourier, MatrixKind::Selection,
                                MatrixKind::Bernoulli, MatrixKind::Gaussian,       MatrixKind::PhaseShifter};
  std::vector<std::uint64_t> baseline_seeds{0};
  std::size_t phase_shifter_q = 4;
  std::string output_dir = "out";

  std::size_t input_dim() const { return 2 * channel.num_antennas; }

  ChannelConfig channel_config() const {
    ChannelConfig c = channel;
    c.seed = seed;
    return c;
  }

  TrainConfig train_config() const {
    TrainConfig t = train;
    t.seed = seed;
    return t;
  }

  void validate() const {
    channel.validate();
    require(num_samples >= 10, "config: dataset.num_samples must be >= 10");
    split_sizes(num_samples, split);
    require(floor > 0.0 && floor < 1.0, "config: dataset.floor must lie in (0, 1)");
    require(zero_tol >= 0.0, "config: dataset.zero_tol must be >= 0");
    train.validate();
    recovery.validate();
    metrics.validate();
    require(!m_values.empty(), "config: sweep.m_values is empty");
    for (std::size_t i = 0; i < m_values.size(); ++i) {
      require(m_values[i] >= 1 && m_values[i] < input_dim(),
              "config: m=" + std::to_string(m_values[i]) + " must lie in [1, 2N)");
      if (i > 0) require(m_values[i] > m_values[i - 1], "config: sweep.m_values must be strictly increasing");
    }
    require(!kinds.empty(), "config: sweep.kinds is empty");
    require(!baseline_seeds.empty(), "config: sweep.baseline_seeds is empty");
    require(phase_shifter_q >= 1, "config: sweep.phase_shifter_q must be >= 1");
  }
};

inline ExperimentConfig paper_profile() { return {}; }

/// Desk-scale profile: 64-dimensional vectors, 2000 samples, 200 epochs of batch 32.
inline ExperimentConfig ci_profile() {
  ExperimentConfig c;
  c.profile = "ci";
  c.channel.num_antennas = 32;
  c.channel.num_paths = 2;
  c.num_samples = 2000;
  c.train.max_epochs = 200;
  c.train.batch_size = 32; // 1600 training rows; 128 leaves too few steps in 200 epochs
  c.train.init_stddev = 0.125; // 1/sqrt(2N)
  c.m_values = {8, 12, 16};
  c.baseline_seeds = {0, 1, 2};
  return c;
}

inline ExperimentConfig profile_config(std::string_view name) {
  if (name == "paper") return paper_profile();
  if (name == "ci") return ci_profile();
  throw ConfigError("unknown profile '" + std::string(name) + "' (expected paper or ci)");
}

inline std::string_view to_string(AngleMode mode) { return mode == AngleMode::OnGrid ? "on_grid" : "off_grid"; }

inline std::string_view to_string(GainModel model) {
  return model == GainModel::ComplexGaussian ? "complex_gaussian" : "unit_modulus";
}

inline std::string_view to_string(SolverKind kind) {
  return kind == SolverKind::BasisPursuitLP ? "basis_pursuit" : "projected_subgradient";
}

inline Json to_json(const ExperimentConfig& c) {
  Json kinds = Json::array();
  for (auto k : c.kinds) kinds.push_back(std::string(to_string(k)));
  return Json{
      {"profile", c.profile},
      {"seed", c.seed},
      {"channel",
       {{"num_antennas", c.channel.num_antennas},
        {"num_paths", c.channel.num_paths},
        {"antenna_spacing_ratio", c.channel.antenna_spacing_ratio},
        {"angle_mode", std::string(to_string(c.channel.angle_mode))},
        {"gain_model", std::string(to_string(c.channel.gain_model))}}},
      {"dataset",
       {{"num_samples", c.num_samples},
        {"split", {c.split.train, c.split.dev, c.split.test}},
        {"floor", c.floor},
        {"zero_tol", c.zero_tol}}},
      {"train",
       {{"learning_rate", c.train.learning_rate},
        {"batch_size", c.train.batch_size},
        {"max_epochs", c.train.max_epochs},
        {"init_stddev", c.train.init_stddev},
        {"layers", c.train.layers},
        {"alpha_init", c.train.alpha_init},
        {"dev_eval_every", c.train.dev_eval_every},
        {"early_stop_patience", c.train.early_stop_patience},
        {"momentum", c.train.momentum},
        {"bn_epsilon", c.train.bn_epsilon},
        {"bn_momentum", c.train.bn_momentum}}},
      {"recovery",
       {{"solver", std::string(to_string(c.recovery.solver))},
        {"feas_tol", c.recovery.feas_tol},
        {"opt_tol", c.recovery.opt_tol},
        {"max_iters", c.recovery.max_iters},
        {"subgradient_alpha", c.recovery.subgradient_alpha}}},
      {"metrics", {{"exact_tol", c.metrics.exact_tol}, {"block_length", c.metrics.block_length}, {"r0", c.metrics.r0}}},
      {"sweep",
       {{"m_values", c.m_values},
        {"kinds", kinds},
        {"baseline_seeds", c.baseline_seeds},
        {"phase_shifter_q", c.phase_shifter_q}}},
      {"output_dir", c.output_dir},
  };
}

namespace detail {

// Rejects keys outside `allowed` so typos do not silently fall back to defaults.
inline void check_keys(const Json& obj, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw ConfigError("config: '" + std::string(where) + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw ConfigError("config: unknown key '" + std::string(where) + "." + key + "'");
  }
}

template <class T>
void read(const Json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config: bad value for '") + key + "'");
  }
}

} // namespace detail

/// Overlays the keys present in `j` onto `base`.
inline ExperimentConfig from_json(const Json& j, ExperimentConfig base) {
  using detail::read;
  detail::check_keys(j, "", {"profile", "seed", "channel", "dataset", "train", "recovery", "metrics", "sweep",
                             "output_dir"});
  ExperimentConfig c = std::move(base);
  read(j, "profile", c.profile);
  read(j, "seed", c.seed);
  read(j, "output_dir", c.output_dir);

  if (j.contains("channel")) {
    const Json& s = j["channel"];
    detail::check_keys(s, "channel", {"num_antennas", "num_paths", "antenna_spacing_ratio", "angle_mode", "gain_model"});
    read(s, "num_antennas", c.channel.num_antennas);
    read(s, "num_paths", c.channel.num_paths);
    read(s, "antenna_spacing_ratio", c.channel.antenna_spacing_ratio);
    std::string text;
    if (s.contains("angle_mode")) {
      read(s, "angle_mode", text);
      if (text == "on_grid") c.channel.angle_mode = AngleMode::OnGrid;
      else if (text == "off_grid") c.channel.angle_mode = AngleMode::OffGrid;
      else throw ConfigError("config: angle_mode must be on_grid or off_grid");
    }
    if (s.contains("gain_model")) {
      read(s, "gain_model", text);
      if (text == "complex_gaussian") c.channel.gain_model = GainModel::ComplexGaussian;
      else if (text == "unit_modulus") c.channel.gain_model = GainModel::UnitModulus;
      else throw ConfigError("config: gain_model must be complex_gaussian or unit_modulus");
    }
  }
  if (j.contains("dataset")) {
    const Json& s = j["dataset"];
    detail::check_keys(s, "dataset", {"num_samples", "split", "floor", "zero_tol"});
    read(s, "num_samples", c.num_samples);
    read(s, "floor", c.floor);
    read(s, "zero_tol", c.zero_tol);
    if (s.contains("split")) {
      std::vector<double> r;
      read(s, "split", r);
      require(r.size() == 3, "config: dataset.split needs three ratios");
      c.split = {r[0], r[1], r[2]};
    }
  }
  if (j.contains("train")) {
    const Json& s = j["train"];
    detail::check_keys(s, "train", {"learning_rate", "batch_size", "max_epochs", "init_stddev", "layers", "alpha_init",
                                    "dev_eval_every", "early_stop_patience", "momentum", "bn_epsilon", "bn_momentum"});
    read(s, "learning_rate", c.train.learning_rate);
    read(s, "batch_size", c.train.batch_size);
    read(s, "max_epochs", c.train.max_epochs);
    read(s, "init_stddev", c.train.init_stddev);
    read(s, "layers", c.train.layers);
    read(s, "alpha_init", c.train.alpha_init);
    read(s, "dev_eval_every", c.train.dev_eval_every);
    read(s, "early_stop_patience", c.train.early_stop_patience);
    read(s, "momentum", c.train.momentum);
    read(s, "bn_epsilon", c.train.bn_epsilon);
    read(s, "bn_momentum", c.train.bn_momentum);
  }
  if (j.contains("recovery")) {
    const Json& s = j["recovery"];
    detail::check_keys(s, "recovery", {"solver", "feas_tol", "opt_tol", "max_iters", "subgradient_alpha"});
    if (s.contains("solver")) {
      std::string text;
      read(s, "solver", text);
      if (text == "basis_pursuit") c.recovery.solver = SolverKind::BasisPursuitLP;
      else if (text == "projected_subgradient") c.recovery.solver = SolverKind::ProjectedSubgradient;
      else throw ConfigError("config: recovery.solver must be basis_pursuit or projected_subgradient");
    }
    read(s, "feas_tol", c.recovery.feas_tol);
    read(s, "opt_tol", c.recovery.opt_tol);
    read(s, "max_iters", c.recovery.max_iters);
    read(s, "subgradient_alpha", c.recovery.subgradient_alpha);
  }
  if (j.contains("metrics")) {
    const Json& s = j["metrics"];
    detail::check_keys(s, "metrics", {"exact_tol", "block_length", "r0"});
    read(s, "exact_tol", c.metrics.exact_tol);
    read(s, "block_length", c.metrics.block_length);
    read(s, "r0", c.metrics.r0);
  }
  if (j.contains("sweep")) {
    const Json& s = j["sweep"];
    detail::check_keys(s, "sweep", {"m_values", "kinds", "baseline_seeds", "phase_shifter_q"});
    read(s, "m_values", c.m_values);
    read(s, "baseline_seeds", c.baseline_seeds);
    read(s, "phase_shifter_q", c.phase_shifter_q);
    if (s.contains("kinds")) {
      std::vector<std::string> names;
      read(s, "kinds", names);
      c.kinds.clear();
      for (const auto& n : names) {
        const auto k = parse_kind(n);
        if (!k) throw ConfigError("config: unknown matrix kind '" + n + "'");
        c.kinds.push_back(*k);
      }
    }
  }
  return c;
}

/// Reads a JSON config file. A "profile" key selects the defaults it overlays.
inline ExperimentConfig load_config(const std::string& path, std::string_view fallback_profile = "paper") {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  std::string profile(fallback_profile);
  if (j.is_object() && j.contains("profile") && j["profile"].is_string()) profile = j["profile"].get<std::string>();
  return from_json(j, profile_config(profile));
}

/// Comma-separated list parsing for the --m and --kinds flags.
inline std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in{std::string(text)};
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::vector<std::size_t> parse_m_list(std::string_view text) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(text)) {
    try {
      if (item.front() < '0' || item.front() > '9') throw std::invalid_argument(item);
      std::size_t used = 0;
      const unsigned long long v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("--m: '" + item + "' is not a non-negative integer");
    }
  }
  require(!out.empty(), "--m: empty list");
  return out;
}

inline std::vector<MatrixKind> parse_kind_list(std::string_view text) {
  std::vector<MatrixKind> out;
  for (const auto& item : split_list(text)) {
    const auto k = parse_kind(item);
    if (!k) throw ConfigError("--kinds: unknown matrix kind '" + item + "'");
    out.push_back(*k);
  }
  require(!out.empty(), "--kinds: empty list");
  return out;
}

} // namespace l1ae
