#pragma once

// Synthetic multipath channels for a half-wavelength uniform linear array, their
// sparse beamspace (DFT-grid) representation, real stacking, and the per-sample
// [0, 1] preprocessing used for training and recovery.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"
#include "parallel.hpp"
#include "random.hpp"

namespace l1ae {

enum class AngleMode { OnGrid, OffGrid };

enum class GainModel {
  ComplexGaussian, ///< CN(0, 1): real and imaginary parts N(0, 1/2).
  UnitModulus,     ///< e^{j theta}, theta uniform on [0, 2 pi).
};

struct ChannelConfig {
  std::size_t num_antennas = 256;
  std::size_t num_paths = 3;
  double antenna_spacing_ratio = 0.5;
  AngleMode angle_mode = AngleMode::OnGrid;
  GainModel gain_model = GainModel::ComplexGaussian;
  std::uint64_t seed = 0;

  void validate() const {
    require(num_antennas >= 1, "num_antennas must be >= 1");
    require(num_paths >= 1 && num_paths <= num_antennas, "num_paths must lie in [1, num_antennas]");
    require(antenna_spacing_ratio == 0.5, "antenna_spacing_ratio is fixed at 0.5");
  }
};

struct PathComponent {
  std::complex<double> gain;
  double direction; ///< spatial direction in [-1/2, 1/2]
};

struct SpatialChannel {
  ComplexVector coeffs;
  std::vector<PathComponent> paths;
};

struct BeamspaceChannel {
  ComplexVector coeffs;
};

struct RealChannelVector {
  Vector values;
};

struct PreprocessParams {
  double min_nz = 0.0;
  double max_nz = 0.0;
  double floor = 0.1;
  double zero_tol = 1e-12;
  /// False for the sentinel produced from an all-zero vector.
  bool has_support = false;
};

namespace detail {

// exp(-j 2 pi x) with x reduced modulo 1 first, so grid phases stay exact for
// large antenna indices.
inline std::complex<double> unit_phasor(double x) {
  const double r = std::remainder(x, 1.0);
  const double angle = -2.0 * std::numbers::pi * r;
  return {std::cos(angle), std::sin(angle)};
}

} // namespace detail

/// Array response toward spatial direction `phi`, unit 2-norm.
inline ComplexVector steering_vector(double phi, std::size_t n) {
  require(n >= 1, "steering_vector: N must be >= 1");
  ComplexVector a(static_cast<Eigen::Index>(n));
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  const double center = (static_cast<double>(n) - 1.0) / 2.0;
  for (std::size_t i = 0; i < n; ++i) {
    a(static_cast<Eigen::Index>(i)) = scale * detail::unit_phasor(phi * (static_cast<double>(i) - center));
  }
  return a;
}

/// Grid direction for 0-based beam index `index` (1-based m = index + 1):
/// (1/N)(m - (N+1)/2).
inline double grid_direction(std::size_t index, std::size_t n) {
  return (static_cast<double>(index) - (static_cast<double>(n) - 1.0) / 2.0) / static_cast<double>(n);
}

/// N x N unitary DFT grid; row m is the conjugate transpose of the steering
/// vector toward grid direction m.
inline ComplexMatrix dft_grid_matrix(std::size_t n) {
  require(n >= 1, "dft_grid_matrix: N must be >= 1");
  const auto size = static_cast<Eigen::Index>(n);
  ComplexMatrix u(size, size);
  for (std::size_t m = 0; m < n; ++m) {
    u.row(static_cast<Eigen::Index>(m)) = steering_vector(grid_direction(m, n), n).adjoint();
  }
  return u;
}

/// sqrt(N/P) * sum_i gain_i * a(direction_i).
inline SpatialChannel assemble_spatial_channel(std::size_t n, std::vector<PathComponent> paths) {
  require(n >= 1, "assemble_spatial_channel: N must be >= 1");
  require(!paths.empty(), "assemble_spatial_channel: need at least one path");
  SpatialChannel channel;
  channel.coeffs = ComplexVector::Zero(static_cast<Eigen::Index>(n));
  for (const auto& path : paths) {
    require(path.direction >= -0.5 && path.direction <= 0.5, "path direction outside [-1/2, 1/2]");
    channel.coeffs += path.gain * steering_vector(path.direction, n);
  }
  channel.coeffs *= std::sqrt(static_cast<double>(n) / static_cast<double>(paths.size()));
  channel.paths = std::move(paths);
  return channel;
}

template <class Rng>
std::complex<double> draw_gain(GainModel model, Rng& rng) {
  switch (model) {
  case GainModel::ComplexGaussian: {
    std::normal_distribution<double> dist(0.0, std::sqrt(0.5));
    const double re = dist(rng);
    const double im = dist(rng);
    return {re, im};
  }
  case GainModel::UnitModulus: {
    std::uniform_real_distribution<double> dist(0.0, 2.0 * std::numbers::pi);
    return std::polar(1.0, dist(rng));
  }
  }
  throw ConfigError("unknown gain model");
}

template <class Rng>
SpatialChannel generate_spatial_channel(const ChannelConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t n = cfg.num_antennas;
  std::vector<double> directions;
  directions.reserve(cfg.num_paths);
  if (cfg.angle_mode == AngleMode::OnGrid) {
    // Partial Fisher-Yates: first P entries are a uniform draw without replacement.
    std::vector<std::size_t> beams(n);
    std::iota(beams.begin(), beams.end(), std::size_t{0});
    for (std::size_t i = 0; i < cfg.num_paths; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(beams[i], beams[pick(rng)]);
      directions.push_back(grid_direction(beams[i], n));
    }
  } else {
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    for (std::size_t i = 0; i < cfg.num_paths; ++i) directions.push_back(dist(rng));
  }
  std::vector<PathComponent> paths;
  paths.reserve(cfg.num_paths);
  for (double phi : directions) paths.push_back({draw_gain(cfg.gain_model, rng), phi});
  return assemble_spatial_channel(n, std::move(paths));
}

inline BeamspaceChannel to_beamspace(const SpatialChannel& h, const ComplexMatrix& u) {
  if (u.cols() != h.coeffs.size() || u.rows() != u.cols()) {
    throw ConfigError("to_beamspace: grid matrix " + dims(u.rows(), u.cols()) +
                      " does not match channel length " + std::to_string(h.coeffs.size()));
  }
  return {u * h.coeffs};
}

/// [Re; Im].
inline RealChannelVector stack_real(const BeamspaceChannel& h) {
  const Eigen::Index n = h.coeffs.size();
  RealChannelVector v{Vector(2 * n)};
  v.values.head(n) = h.coeffs.real();
  v.values.tail(n) = h.coeffs.imag();
  return v;
}

inline BeamspaceChannel unstack_real(const RealChannelVector& v) {
  if (v.values.size() % 2 != 0) throw ConfigError("unstack_real: odd-length real vector");
  const Eigen::Index n = v.values.size() / 2;
  BeamspaceChannel h{ComplexVector(n)};
  h.coeffs.real() = v.values.head(n);
  h.coeffs.imag() = v.values.tail(n);
  return h;
}

/// Zeroes entries with |x| <= zero_tol and maps the remaining entries affinely
/// onto [floor, 1] (min -> floor, max -> 1). Support is preserved because
/// floor > 0.
inline std::pair<RealChannelVector, PreprocessParams> preprocess(const RealChannelVector& v, double floor = 0.1,
                                                                  double zero_tol = 1e-12) {
  require(floor > 0.0 && floor < 1.0, "preprocess: floor must lie in (0, 1)");
  require(zero_tol >= 0.0, "preprocess: zero_tol must be >= 0");
  PreprocessParams params;
  params.floor = floor;
  params.zero_tol = zero_tol;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : v.values) {
    if (std::abs(x) > zero_tol) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  }
  if (!(lo <= hi)) return {v, params};

  params.min_nz = lo;
  params.max_nz = hi;
  params.has_support = true;
  RealChannelVector out{Vector(v.values.size())};
  const double span = hi - lo;
  for (Eigen::Index i = 0; i < v.values.size(); ++i) {
    const double x = v.values(i);
    if (std::abs(x) <= zero_tol) {
      out.values(i) = 0.0;
    } else if (span == 0.0) {
      out.values(i) = 1.0;
    } else {
      out.values(i) = floor + (1.0 - floor) * (x - lo) / span;
    }
  }
  return {std::move(out), params};
}

/// Inverse of preprocess on the support; entries with |x| <= zero_tol stay 0.
inline RealChannelVector invert_preprocess(const RealChannelVector& v, const PreprocessParams& params) {
  if (params.max_nz < params.min_nz) throw ConfigError("invert_preprocess: max_nz < min_nz");
  if (!params.has_support) return v;
  RealChannelVector out{Vector(v.values.size())};
  const double span = params.max_nz - params.min_nz;
  for (Eigen::Index i = 0; i < v.values.size(); ++i) {
    const double x = v.values(i);
    if (std::abs(x) <= params.zero_tol) {
      out.values(i) = 0.0;
    } else {
      out.values(i) = params.min_nz + span * (x - params.floor) / (1.0 - params.floor);
    }
  }
  return out;
}

struct SplitRatios {
  double train = 0.8;
  double dev = 0.1;
  double test = 0.1;
};

struct ChannelDataset {
  ChannelConfig config;
  RowMatrix samples; ///< n x 2N, preprocessed
  std::vector<PreprocessParams> params;
  std::size_t n_train = 0;
  std::size_t n_dev = 0;
  std::size_t n_test = 0;
  double floor = 0.1;

  std::size_t size() const { return static_cast<std::size_t>(samples.rows()); }
  std::size_t dimension() const { return static_cast<std::size_t>(samples.cols()); }

  auto train() const { return samples.topRows(static_cast<Eigen::Index>(n_train)); }
  auto dev() const { return samples.middleRows(static_cast<Eigen::Index>(n_train), static_cast<Eigen::Index>(n_dev)); }
  auto test() const { return samples.bottomRows(static_cast<Eigen::Index>(n_test)); }
  std::size_t test_offset() const { return n_train + n_dev; }
};

struct SplitSizes {
  std::size_t train, dev, test;
};

inline SplitSizes split_sizes(std::size_t n, const SplitRatios& ratios) {
  const bool in_range = ratios.train >= 0 && ratios.dev >= 0 && ratios.test >= 0 && ratios.train <= 1 &&
                        ratios.dev <= 1 && ratios.test <= 1;
  require(in_range, "split ratios must lie in [0, 1]");
  require(std::abs(ratios.train + ratios.dev + ratios.test - 1.0) <= 1e-9, "split ratios must sum to 1");
  const auto n_train = static_cast<std::size_t>(std::llround(ratios.train * static_cast<double>(n)));
  const auto n_dev = std::min(n - n_train, static_cast<std::size_t>(std::llround(ratios.dev * static_cast<double>(n))));
  return {n_train, n_dev, n - n_train - n_dev};
}

/// Preprocessed real beamspace vector for sample `index` of the run seeded by
/// cfg.seed; each sample draws from its own substream.
inline std::pair<RealChannelVector, PreprocessParams> generate_sample(const ChannelConfig& cfg, const ComplexMatrix& u,
                                                                      std::size_t index, double floor,
                                                                      double zero_tol = 1e-12) {
  auto rng = make_stream(cfg.seed, StreamTag::ChannelSample, index);
  const auto spatial = generate_spatial_channel(cfg, rng);
  return preprocess(stack_real(to_beamspace(spatial, u)), floor, zero_tol);
}

inline ChannelDataset generate_dataset(const ChannelConfig& cfg, std::size_t n, const SplitRatios& ratios = {},
                                       double floor = 0.1, double zero_tol = 1e-12) {
  cfg.validate();
  require(n >= 10, "generate_dataset: need at least 10 samples");
  const SplitSizes split = split_sizes(n, ratios);

  ChannelDataset data;
  data.config = cfg;
  data.floor = floor;
  data.n_train = split.train;
  data.n_dev = split.dev;
  data.n_test = split.test;
  data.samples.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(2 * cfg.num_antennas));
  data.params.resize(n);

  const ComplexMatrix u = dft_grid_matrix(cfg.num_antennas);
  parallel_for(n, [&](std::size_t i) {
    auto [v, params] = generate_sample(cfg, u, i, floor, zero_tol);
    data.samples.row(static_cast<Eigen::Index>(i)) = v.values.transpose();
    data.params[i] = params;
  });
  return data;
}

} // namespace l1ae
