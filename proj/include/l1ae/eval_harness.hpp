#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "common.hpp"
#include "measurement.hpp"
#include "parallel.hpp"
#include "sparse_recovery.hpp"

namespace l1ae {

struct MetricConfig {
  double exact_tol = 1e-8;
  std::size_t block_length = 200; ///< B, in symbols
  double r0 = 1.0;

  void validate() const {
    require(exact_tol > 0.0, "metrics: exact_tol must be > 0");
    require(block_length >= 1, "metrics: block_length must be >= 1");
    require(r0 > 0.0, "metrics: r0 must be > 0");
  }
};

namespace detail {

inline void check_pairs(const Matrix& h, const Matrix& h_hat, const char* who) {
  if (h.rows() != h_hat.rows() || h.cols() != h_hat.cols())
    throw ConfigError(std::string(who) + ": shape mismatch " + dims(h.rows(), h.cols()) + " vs " +
                      dims(h_hat.rows(), h_hat.cols()));
  if (h.rows() == 0) throw ConfigError(std::string(who) + ": no samples");
}

} // namespace detail

/// Fraction of rows with ||h - h_hat||_2 <= tol.
inline double exact_recovery_rate(const Matrix& h, const Matrix& h_hat, double tol = 1e-8) {
  detail::check_pairs(h, h_hat, "exact_recovery_rate");
  const auto hits = ((h - h_hat).rowwise().norm().array() <= tol).count();
  return static_cast<double>(hits) / static_cast<double>(h.rows());
}

struct NrseResult {
  double mean = 0.0;
  std::size_t used = 0;
  std::size_t zero_norm = 0; ///< samples excluded because ||h|| = 0
};

/// Mean of per-row ||h - h_hat|| / ||h||.
inline NrseResult nrse(const Matrix& h, const Matrix& h_hat) {
  detail::check_pairs(h, h_hat, "nrse");
  NrseResult out;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    const double norm = h.row(i).norm();
    if (norm == 0.0) {
      ++out.zero_norm;
      continue;
    }
    sum += (h.row(i) - h_hat.row(i)).norm() / norm;
    ++out.used;
  }
  if (out.used == 0) throw ConfigError("nrse: every sample has zero norm");
  out.mean = sum / static_cast<double>(out.used);
  return out;
}

/// R0 (1 - m/B) p.
inline double effective_rate(double p, std::size_t m, std::size_t block_length, double r0 = 1.0) {
  require(p >= 0.0 && p <= 1.0, "effective_rate: p must lie in [0, 1]");
  require(m > 0 && m < block_length,
          "effective_rate: need 0 < m < B (m=" + std::to_string(m) + ", B=" + std::to_string(block_length) + ")");
  return r0 * (1.0 - static_cast<double>(m) / static_cast<double>(block_length)) * p;
}

/// Per-sample outcome of compressing and recovering one test set with one matrix.
struct CellEvaluation {
  double p = 0.0;
  double nrse = 0.0;
  std::size_t samples = 0;
  std::size_t zero_norm = 0;
  std::size_t solver_failures = 0; ///< non-Optimal statuses
  double seconds = 0.0;
};

inline CellEvaluation evaluate_matrix(const Matrix& phi, const RowMatrix& test, const RecoveryConfig& rcfg,
                                      const MetricConfig& mcfg) {
  require(test.rows() > 0, "evaluate: test split is empty");
  require(phi.cols() == test.cols(), "evaluate: matrix " + dims(phi.rows(), phi.cols()) + " does not fit samples of width " +
                                         std::to_string(test.cols()));
  const auto start = std::chrono::steady_clock::now();
  std::optional<BasisPursuit> lp;
  if (rcfg.solver == SolverKind::BasisPursuitLP) lp.emplace(phi, rcfg);
  const auto n = static_cast<std::size_t>(test.rows());
  Matrix h_hat(test.rows(), test.cols());
  std::vector<char> failed(n, 0);
  parallel_for(n, [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    const Vector h = test.row(r).transpose();
    const Vector y = phi * h;
    const RecoveryResult result = lp ? lp->solve(y) : projected_subgradient(phi, y, rcfg.subgradient_alpha, rcfg);
    h_hat.row(r) = result.h_hat.transpose();
    failed[i] = result.status != RecoveryStatus::Optimal;
  });

  const Matrix h = test;
  CellEvaluation out;
  out.samples = n;
  out.p = exact_recovery_rate(h, h_hat, mcfg.exact_tol);
  const NrseResult e = nrse(h, h_hat);
  out.nrse = e.mean;
  out.zero_norm = e.zero_norm;
  for (char f : failed) out.solver_failures += static_cast<std::size_t>(f);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

struct SweepRow {
  MatrixKind kind = MatrixKind::Learned;
  std::size_t m = 0;
  double p = std::numeric_limits<double>::quiet_NaN(); ///< mean over seeds
  double p_stderr = 0.0;
  double nrse = std::numeric_limits<double>::quiet_NaN();
  double nrse_stderr = 0.0;
  double effective_rate = std::numeric_limits<double>::quiet_NaN();
  std::size_t samples = 0; ///< per seed
  std::vector<std::uint64_t> seeds;
  std::size_t solver_failures = 0; ///< summed over seeds
  std::size_t zero_norm = 0;
  std::string diagnostic; ///< empty when the cell is clean
  bool errored = false;   ///< no metrics could be computed
  ErrorKind error = ErrorKind::Config;
  double seconds = 0.0;   ///< wall-clock, excluded from byte-identical outputs
};

struct SweepReport {
  std::vector<SweepRow> rows;
  std::vector<std::string> monotonicity_violations;

  bool any_errored() const {
    for (const auto& r : rows)
      if (r.errored) return true;
    return false;
  }
};

struct SweepPlan {
  std::vector<std::size_t> m_values;
  std::vector<MatrixKind> kinds;
  std::vector<std::uint64_t> seeds{0}; ///< baseline draws per cell
  std::size_t phase_shifter_q = 4;
  std::map<std::size_t, std::vector<MeasurementMatrix>> learned; ///< trained matrices by m
};

namespace detail {

inline std::pair<double, double> mean_stderr(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double var = ss / static_cast<double>(v.size() - 1);
  return {mean, std::sqrt(var / static_cast<double>(v.size()))};
}

// Mean NRSE should not rise with m by more than one standard error.
inline std::vector<std::string> monotonicity_violations(const std::vector<SweepRow>& rows) {
  std::vector<std::string> out;
  std::map<MatrixKind, std::vector<const SweepRow*>> by_kind;
  for (const auto& r : rows)
    if (!r.errored) by_kind[r.kind].push_back(&r);
  for (auto& [kind, list] : by_kind) {
    for (std::size_t i = 1; i < list.size(); ++i) {
      const SweepRow& a = *list[i - 1];
      const SweepRow& b = *list[i];
      const double slack = std::max(a.nrse_stderr, b.nrse_stderr);
      if (b.nrse > a.nrse + slack) {
        out.push_back(std::string(to_string(kind)) + ": nrse rises from " + std::to_string(a.nrse) + " at m=" +
                      std::to_string(a.m) + " to " + std::to_string(b.nrse) + " at m=" + std::to_string(b.m));
      }
    }
  }
  return out;
}

} // namespace detail

/// Evaluates every (kind, m) cell of the plan on the test rows. Cells that
/// cannot be evaluated become rows flagged `errored` instead of aborting.
inline SweepReport run_sweep(const RowMatrix& test, const SweepPlan& plan, const RecoveryConfig& rcfg,
                             const MetricConfig& mcfg) {
  mcfg.validate();
  require(test.rows() > 0, "sweep: test split is empty");
  require(!plan.m_values.empty() && !plan.kinds.empty(), "sweep: nothing to evaluate");
  require(!plan.seeds.empty(), "sweep: at least one seed is required");
  const auto n_cols = static_cast<std::size_t>(test.cols());

  SweepReport report;
  for (MatrixKind kind : plan.kinds) {
    for (std::size_t m : plan.m_values) {
      SweepRow row;
      row.kind = kind;
      row.m = m;
      std::vector<MeasurementMatrix> matrices;
      try {
        require(m < mcfg.block_length, "m=" + std::to_string(m) + " is not below the block length");
        if (kind == MatrixKind::Learned) {
          const auto it = plan.learned.find(m);
          if (it == plan.learned.end() || it->second.empty())
            throw ConfigError("missing learned checkpoint for m=" + std::to_string(m));
          matrices = it->second;
        } else {
          for (std::uint64_t seed : plan.seeds)
            matrices.push_back(generate_baseline(kind, m, n_cols, seed, plan.phase_shifter_q));
        }
        std::vector<double> ps, nrses;
        for (const auto& mat : matrices) {
          require(mat.rows() == static_cast<Eigen::Index>(m), "matrix for m=" + std::to_string(m) + " has " +
                                                                  std::to_string(mat.rows()) + " rows");
          const CellEvaluation cell = evaluate_matrix(mat.data, test, rcfg, mcfg);
          ps.push_back(cell.p);
          nrses.push_back(cell.nrse);
          row.seeds.push_back(mat.seed);
          row.samples = cell.samples;
          row.solver_failures += cell.solver_failures;
          row.zero_norm += cell.zero_norm;
          row.seconds += cell.seconds;
        }
        std::tie(row.p, row.p_stderr) = detail::mean_stderr(ps);
        std::tie(row.nrse, row.nrse_stderr) = detail::mean_stderr(nrses);
        row.effective_rate = effective_rate(row.p, m, mcfg.block_length, mcfg.r0);
        const std::size_t solves = row.samples * matrices.size();
        if (2 * row.solver_failures > solves) {
          row.diagnostic = "solver failed on " + std::to_string(row.solver_failures) + " of " +
                           std::to_string(solves) + " samples";
        }
      } catch (const Error& e) {
        row.errored = true;
        row.error = e.kind();
        row.diagnostic = e.what();
      }
      report.rows.push_back(std::move(row));
    }
  }
  report.monotonicity_violations = detail::monotonicity_violations(report.rows);
  return report;
}

} // namespace l1ae
