#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "common.hpp"
#include "random.hpp"

namespace l1ae {

enum class MatrixKind : std::uint32_t {
  Learned = 0,
  Gaussian = 1,
  Bernoulli = 2,
  PartialFourier = 3,
  Selection = 4,
  PhaseShifter = 5,
};

inline constexpr MatrixKind kBaselineKinds[] = {MatrixKind::PartialFourier, MatrixKind::Selection,
                                                MatrixKind::Bernoulli, MatrixKind::Gaussian,
                                                MatrixKind::PhaseShifter};

inline std::string_view to_string(MatrixKind kind) {
  switch (kind) {
  case MatrixKind::Learned: return "learned";
  case MatrixKind::Gaussian: return "gaussian";
  case MatrixKind::Bernoulli: return "bernoulli";
  case MatrixKind::PartialFourier: return "partial_fourier";
  case MatrixKind::Selection: return "selection";
  case MatrixKind::PhaseShifter: return "phase_shifter";
  }
  return "unknown";
}

inline std::optional<MatrixKind> parse_kind(std::string_view name) {
  for (auto kind : {MatrixKind::Learned, MatrixKind::Gaussian, MatrixKind::Bernoulli, MatrixKind::PartialFourier,
                    MatrixKind::Selection, MatrixKind::PhaseShifter}) {
    if (name == to_string(kind)) return kind;
  }
  return std::nullopt;
}

struct MeasurementMatrix {
  Matrix data; ///< m x n_cols
  MatrixKind kind = MatrixKind::Learned;
  std::uint64_t seed = 0;
  std::size_t quantized_angles = 0; ///< PhaseShifter only

  Eigen::Index rows() const { return data.rows(); }
  Eigen::Index cols() const { return data.cols(); }
};

namespace detail {

// Each complex row becomes the real row pair [Re; Im].
inline Matrix realify_rows(const ComplexMatrix& c) {
  Matrix out(2 * c.rows(), c.cols());
  for (Eigen::Index r = 0; r < c.rows(); ++r) {
    out.row(2 * r) = c.row(r).real();
    out.row(2 * r + 1) = c.row(r).imag();
  }
  return out;
}

} // namespace detail

/// Random baseline construction; deterministic in (kind, m, n_cols, seed, q).
inline MeasurementMatrix generate_baseline(MatrixKind kind, std::size_t m, std::size_t n_cols, std::uint64_t seed,
                                           std::size_t q = 4) {
  require(kind != MatrixKind::Learned, "generate_baseline: learned matrices come from training");
  require(m >= 1 && m < n_cols, "generate_baseline: need 1 <= m < n_cols");
  const auto rows = static_cast<Eigen::Index>(m);
  // Complex kinds draw ceil(m/2) rows; for odd m the last imaginary row is dropped.
  const auto complex_rows = static_cast<Eigen::Index>((m + 1) / 2);
  const auto cols = static_cast<Eigen::Index>(n_cols);
  auto rng = make_stream(seed, StreamTag::Baseline, static_cast<std::uint64_t>(kind));
  MeasurementMatrix out;
  out.kind = kind;
  out.seed = seed;
  out.data.resize(rows, cols);

  switch (kind) {
  case MatrixKind::Gaussian: {
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(m)));
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) out.data(i, j) = dist(rng);
    break;
  }
  case MatrixKind::Bernoulli: {
    std::bernoulli_distribution coin(0.5);
    const double v = 1.0 / std::sqrt(static_cast<double>(m));
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) out.data(i, j) = coin(rng) ? v : -v;
    break;
  }
  case MatrixKind::Selection: {
    std::bernoulli_distribution coin(0.5);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) out.data(i, j) = coin(rng) ? 1.0 : 0.0;
    break;
  }
  case MatrixKind::PartialFourier: {
    std::vector<std::size_t> all(n_cols);
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (std::size_t i = 0; i < static_cast<std::size_t>(complex_rows); ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n_cols - 1);
      std::swap(all[i], all[pick(rng)]);
    }
    ComplexMatrix f(complex_rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n_cols));
    for (Eigen::Index r = 0; r < complex_rows; ++r) {
      const std::size_t k = all[static_cast<std::size_t>(r)];
      for (Eigen::Index c = 0; c < cols; ++c) {
        // Reduce k*c modulo n_cols in integers for exact phases.
        const auto idx = static_cast<double>((k * static_cast<std::size_t>(c)) % n_cols);
        f(r, c) = std::polar(scale, -2.0 * std::numbers::pi * idx / static_cast<double>(n_cols));
      }
    }
    out.data = detail::realify_rows(f).topRows(rows);
    break;
  }
  case MatrixKind::PhaseShifter: {
    require(q >= 1, "generate_baseline: phase shifter needs Q >= 1");
    out.quantized_angles = q;
    std::uniform_int_distribution<std::size_t> level(0, q - 1);
    ComplexMatrix p(complex_rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n_cols));
    // Exact values on the quadrature axes so that Q in {1, 2, 4} yields exact zeros.
    auto phase = [q](std::size_t l) -> std::complex<double> {
      if ((4 * l) % q == 0) {
        switch ((4 * l / q) % 4) {
        case 0: return {1.0, 0.0};
        case 1: return {0.0, 1.0};
        case 2: return {-1.0, 0.0};
        default: return {0.0, -1.0};
        }
      }
      return std::polar(1.0, 2.0 * std::numbers::pi * static_cast<double>(l) / static_cast<double>(q));
    };
    for (Eigen::Index r = 0; r < complex_rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) p(r, c) = scale * phase(level(rng));
    out.data = detail::realify_rows(p).topRows(rows);
    break;
  }
  case MatrixKind::Learned: break;
  }
  return out;
}

/// y = Phi h.
inline Vector measure(const MeasurementMatrix& phi, const Vector& h) {
  if (h.size() != phi.cols()) {
    throw ConfigError("measure: vector length " + std::to_string(h.size()) + " does not match matrix " +
                      dims(phi.rows(), phi.cols()));
  }
  return phi.data * h;
}

} // namespace l1ae
