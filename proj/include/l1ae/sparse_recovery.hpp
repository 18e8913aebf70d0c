#pragma once

// Sparse recovery from noiseless measurements y = Phi h:
//   * basis pursuit  min ||h||_1  s.t. Phi h = y, as an LP solved by a
//     Mehrotra predictor-corrector interior-point method, followed by a
//     vertex polish on the identified support;
//   * projected subgradient descent on the same program;
//   * brute-force support enumeration, the verification oracle.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "common.hpp"

namespace l1ae {

enum class SolverKind { BasisPursuitLP, ProjectedSubgradient };

enum class RecoveryStatus { Optimal, MaxIters, Infeasible };

inline std::string_view to_string(RecoveryStatus status) {
  switch (status) {
  case RecoveryStatus::Optimal: return "optimal";
  case RecoveryStatus::MaxIters: return "max_iters";
  case RecoveryStatus::Infeasible: return "infeasible";
  }
  return "unknown";
}

struct RecoveryConfig {
  double feas_tol = 1e-10; ///< bound on ||Phi h - y||_2 for an Optimal result
  double opt_tol = 1e-9;   ///< relative duality gap
  std::size_t max_iters = 200;
  SolverKind solver = SolverKind::BasisPursuitLP;
  double subgradient_alpha = 1.0; ///< alpha in the alpha / t step rule

  void validate() const {
    require(feas_tol > 0.0 && opt_tol > 0.0, "recovery: tolerances must be > 0");
    require(max_iters >= 1, "recovery: max_iters must be >= 1");
    require(subgradient_alpha > 0.0, "recovery: subgradient_alpha must be > 0");
  }
};

struct RecoveryResult {
  Vector h_hat;
  RecoveryStatus status = RecoveryStatus::MaxIters;
  double residual = 0.0;  ///< ||Phi h_hat - y||_2
  double objective = 0.0; ///< ||h_hat||_1
  std::size_t iterations = 0;
  double gap = std::numeric_limits<double>::quiet_NaN(); ///< final relative duality gap (LP only)
  bool polished = false; ///< h_hat was refined on the identified support
};

namespace detail {

// Rows of phi that span its row space, picked by column-pivoted QR of phi^T.
inline std::vector<Eigen::Index> independent_rows(const Matrix& phi, Eigen::Index& rank) {
  Eigen::ColPivHouseholderQR<Matrix> qr(phi.transpose());
  qr.setThreshold(1e-10);
  rank = qr.rank();
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < rank; ++i) rows.push_back(qr.colsPermutation().indices()(i));
  std::sort(rows.begin(), rows.end());
  return rows;
}

inline double l1(const Vector& v) { return v.lpNorm<1>(); }

} // namespace detail

/// Cholesky factor of Phi Phi^T, reused by every projection onto {h : Phi h = y}.
class PseudoinverseFactor {
public:
  explicit PseudoinverseFactor(const Matrix& phi) : llt_(phi * phi.transpose()) {
    const Matrix gram = phi * phi.transpose();
    const auto& diag = llt_.matrixLLT().diagonal();
    const double scale = std::max(gram.diagonal().maxCoeff(), std::numeric_limits<double>::min());
    if (llt_.info() != Eigen::Success || !diag.allFinite() || diag.minCoeff() * diag.minCoeff() <= 1e-12 * scale) {
      throw NumericalError("pseudoinverse: Phi Phi^T is singular");
    }
  }

  /// (Phi Phi^T)^{-1} r
  Vector solve(const Vector& r) const { return llt_.solve(r); }

private:
  Eigen::LLT<Matrix> llt_;
};

/// Euclidean projection of `x` onto {h : Phi h = y}: x + Phi^T (Phi Phi^T)^{-1} (y - Phi x),
/// with one refinement pass.
inline Vector projection(const Matrix& phi, const PseudoinverseFactor& factor, const Vector& y, const Vector& x) {
  if (x.size() != phi.cols() || y.size() != phi.rows()) throw ConfigError("projection: dimension mismatch");
  Vector out = x + phi.transpose() * factor.solve(y - phi * x);
  out += phi.transpose() * factor.solve(y - phi * out);
  return out;
}

/// Basis pursuit solver bound to one measurement matrix. Construction
/// factors the matrix once; solve() is const and safe to call concurrently.
class BasisPursuit {
public:
  explicit BasisPursuit(const Matrix& phi, RecoveryConfig cfg = {}) : cfg_(cfg), n_(phi.cols()), full_(phi) {
    cfg_.validate();
    require(phi.rows() >= 1 && phi.cols() >= 1, "basis_pursuit: empty matrix");
    rows_ = detail::independent_rows(phi, rank_);
    if (rank_ == 0) throw NumericalError("basis_pursuit: measurement matrix is zero");
    phi_ = Matrix(rank_, n_);
    for (Eigen::Index i = 0; i < rank_; ++i) phi_.row(i) = phi.row(rows_[static_cast<std::size_t>(i)]);
    factor_.emplace(phi_);
  }

  Eigen::Index rank() const { return rank_; }
  const RecoveryConfig& config() const { return cfg_; }

  RecoveryResult solve(const Vector& y_full) const {
    if (y_full.size() != full_.rows()) {
      throw ConfigError("basis_pursuit: measurement length " + std::to_string(y_full.size()) + ", expected " +
                        std::to_string(full_.rows()));
    }
    Vector y(rank_);
    for (Eigen::Index i = 0; i < rank_; ++i) y(i) = y_full(rows_[static_cast<std::size_t>(i)]);

    RecoveryResult result;
    if (rank_ < full_.rows()) {
      // Dropped rows must be consistent with the kept ones.
      const Vector h0 = projection(phi_, *factor_, y, Vector::Zero(n_));
      if ((full_ * h0 - y_full).norm() > cfg_.feas_tol * std::max(1.0, y_full.norm())) {
        result.h_hat = h0;
        result.status = RecoveryStatus::Infeasible;
        finish(result, y_full);
        return result;
      }
    }
    if (y.norm() == 0.0) {
      result.h_hat = Vector::Zero(n_);
      result.status = RecoveryStatus::Optimal;
      result.gap = 0.0;
      result.polished = true;
      finish(result, y_full);
      return result;
    }
    interior_point(y, result);
    finish(result, y_full);
    if (result.status == RecoveryStatus::Optimal && result.residual > cfg_.feas_tol) {
      result.status = RecoveryStatus::MaxIters;
    }
    return result;
  }

private:
  void finish(RecoveryResult& r, const Vector& y_full) const {
    r.residual = (full_ * r.h_hat - y_full).norm();
    r.objective = detail::l1(r.h_hat);
  }

  // LP in standard form over x = (p, q) >= 0 with h = p - q:
  //   min 1^T p + 1^T q  s.t. Phi p - Phi q = y,
  //   dual  max y^T lam  s.t. -1 <= Phi^T lam <= 1.
  void interior_point(const Vector& y, RecoveryResult& result) const {
    const Matrix& a = phi_;
    const Eigen::Index n = n_;
    const double n2 = 2.0 * static_cast<double>(n);
    const double y_norm = y.norm();

    // Mehrotra starting point.
    const Vector w = factor_->solve(y) / 2.0;
    const Vector x_ls = a.transpose() * w;
    Vector p = x_ls, q = -x_ls;
    Vector sp = Vector::Ones(n), sq = Vector::Ones(n);
    Vector lam = Vector::Zero(a.rows());
    const double dx = std::max(-1.5 * std::min(p.minCoeff(), q.minCoeff()), 0.0);
    p.array() += dx;
    q.array() += dx;
    const double xs = p.dot(sp) + q.dot(sq);
    const double hat_x = 0.5 * xs / (sp.sum() + sq.sum());
    const double hat_s = 0.5 * xs / (p.sum() + q.sum());
    p.array() += hat_x;
    q.array() += hat_x;
    sp.array() += hat_s;
    sq.array() += hat_s;

    Vector rb, rcp, rcq, dp, dq, dsp, dsq, dlam, dp_aff, dq_aff, dsp_aff, dsq_aff;
    Matrix normal(a.rows(), a.rows());
    Eigen::LDLT<Matrix> ldlt;

    auto residuals = [&] {
      const Vector at_lam = a.transpose() * lam;
      rb = a * (p - q) - y;
      rcp = at_lam + sp - Vector::Ones(n);
      rcq = -at_lam + sq - Vector::Ones(n);
    };
    // Newton direction for complementarity target rxs_p, rxs_q (x o s - target).
    auto direction = [&](const Vector& rxp, const Vector& rxq) {
      const Vector dpp = p.cwiseQuotient(sp);
      const Vector dqq = q.cwiseQuotient(sq);
      const Vector rhs_p = rxp.cwiseQuotient(sp) - dpp.cwiseProduct(rcp);
      const Vector rhs_q = rxq.cwiseQuotient(sq) - dqq.cwiseProduct(rcq);
      const Vector rhs = -rb + a * (rhs_p - rhs_q);
      dlam = ldlt.solve(rhs);
      const Vector at_dlam = a.transpose() * dlam;
      dsp = -rcp - at_dlam;
      dsq = -rcq + at_dlam;
      dp = -(rxp + p.cwiseProduct(dsp)).cwiseQuotient(sp);
      dq = -(rxq + q.cwiseProduct(dsq)).cwiseQuotient(sq);
    };
    auto max_step = [](const Vector& v, const Vector& dv) {
      double step = 1.0;
      for (Eigen::Index i = 0; i < v.size(); ++i)
        if (dv(i) < 0.0) step = std::min(step, -v(i) / dv(i));
      return step;
    };

    std::size_t iter = 0;
    bool converged = false;
    double best_merit = std::numeric_limits<double>::infinity();
    Vector best_h = p - q;
    Vector best_lam = lam;
    for (; iter < cfg_.max_iters; ++iter) {
      residuals();
      const double primal = p.sum() + q.sum();
      const double dual = y.dot(lam);
      const double gap = std::abs(primal - dual) / (1.0 + std::abs(primal));
      const double pres = rb.norm() / (1.0 + y_norm);
      const double dres = std::sqrt(rcp.squaredNorm() + rcq.squaredNorm()) / (1.0 + std::sqrt(n2));
      if (!std::isfinite(gap) || !std::isfinite(pres) || !std::isfinite(dres)) break;
      const double merit = std::max({gap, pres, dres});
      if (merit < best_merit) {
        best_merit = merit;
        best_h = p - q;
        best_lam = lam;
        result.gap = gap;
      } else if (merit > 1e6 * best_merit) {
        break; // numerical breakdown; keep the best iterate seen
      }
      if (gap <= 1e-3 && pres <= 1e-6) {
        if (auto vertex = crossover(y, p, q, sp, sq, lam)) {
          result.h_hat = std::move(*vertex);
          result.polished = true;
          result.status = RecoveryStatus::Optimal;
          result.iterations = iter;
          result.gap = 0.0;
          return;
        }
      }
      if (pres <= cfg_.feas_tol && dres <= cfg_.feas_tol && gap <= cfg_.opt_tol) {
        converged = true;
        break;
      }
      const double mu = (p.dot(sp) + q.dot(sq)) / n2;

      const Vector d = p.cwiseQuotient(sp) + q.cwiseQuotient(sq);
      normal.noalias() = a * d.asDiagonal() * a.transpose();
      // Tiny ridge keeps the factorization alive near a degenerate vertex.
      normal.diagonal().array() += 1e-14 * std::max(1.0, normal.diagonal().maxCoeff());
      ldlt.compute(normal);
      if (ldlt.info() != Eigen::Success) break;

      // Predictor.
      direction(p.cwiseProduct(sp), q.cwiseProduct(sq));
      const double ap_aff = std::min(max_step(p, dp), max_step(q, dq));
      const double ad_aff = std::min(max_step(sp, dsp), max_step(sq, dsq));
      const double mu_aff = ((p + ap_aff * dp).dot(sp + ad_aff * dsp) + (q + ap_aff * dq).dot(sq + ad_aff * dsq)) / n2;
      const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);
      dp_aff = dp;
      dq_aff = dq;
      dsp_aff = dsp;
      dsq_aff = dsq;

      // Corrector.
      const Vector rxp = p.cwiseProduct(sp) + dp_aff.cwiseProduct(dsp_aff) - Vector::Constant(n, sigma * mu);
      const Vector rxq = q.cwiseProduct(sq) + dq_aff.cwiseProduct(dsq_aff) - Vector::Constant(n, sigma * mu);
      direction(rxp, rxq);
      const double eta = std::max(0.9, 1.0 - mu);
      const double ap = std::min(1.0, eta * std::min(max_step(p, dp), max_step(q, dq)));
      const double ad = std::min(1.0, eta * std::min(max_step(sp, dsp), max_step(sq, dsq)));
      p += ap * dp;
      q += ap * dq;
      sp += ad * dsp;
      sq += ad * dsq;
      lam += ad * dlam;
    }
    result.iterations = iter;
    if (converged) {
      best_h = p - q;
      best_lam = lam;
    }
    if (!best_h.allFinite()) best_h = Vector::Zero(n);
    result.h_hat = projection(phi_, *factor_, y, best_h);

    // Certified bounds: the projected primal is feasible and the scaled
    // multiplier is dual feasible, so their gap bounds the true one. This
    // also covers degenerate problems whose optimal face is not a vertex.
    double lower = -std::numeric_limits<double>::infinity();
    if (best_lam.allFinite()) {
      const double scale = std::max(1.0, (a.transpose() * best_lam).cwiseAbs().maxCoeff());
      lower = y.dot(best_lam) / scale;
    }
    const double upper = detail::l1(result.h_hat);
    result.gap = (upper - lower) / (1.0 + upper);
    result.status = result.gap <= cfg_.opt_tol ? RecoveryStatus::Optimal : RecoveryStatus::MaxIters;
  }

  // Least squares on the support suggested by complementarity, accepted when
  // a dual certificate proves it optimal: lam* with Phi_S^T lam* = sign(h_S)
  // (closest to the current lam) and ||Phi^T lam*||_inf <= 1 + opt_tol. Then
  // y^T lam* = ||h||_1, so the relative gap is at most opt_tol.
  std::optional<Vector> crossover(const Vector& y, const Vector& p, const Vector& q, const Vector& sp,
                                  const Vector& sq, const Vector& lam) const {
    std::vector<Eigen::Index> support;
    for (Eigen::Index i = 0; i < n_; ++i)
      if (p(i) > sp(i) || q(i) > sq(i)) support.push_back(i);
    const auto k = static_cast<Eigen::Index>(support.size());
    if (k == 0 || k > rank_) return std::nullopt;
    Matrix sub(phi_.rows(), k);
    for (Eigen::Index j = 0; j < k; ++j) sub.col(j) = phi_.col(support[static_cast<std::size_t>(j)]);
    Eigen::ColPivHouseholderQR<Matrix> qr(sub);
    if (qr.rank() < k) return std::nullopt;
    const Vector z = qr.solve(y);
    if (!z.allFinite() || (z.array() == 0.0).any()) return std::nullopt;
    Vector out = Vector::Zero(n_);
    for (Eigen::Index j = 0; j < k; ++j) out(support[static_cast<std::size_t>(j)]) = z(j);
    if ((phi_ * out - y).norm() > cfg_.feas_tol) return std::nullopt;

    const Vector signs = detail::sign(z);
    const Matrix gram = sub.transpose() * sub;
    const Eigen::LDLT<Matrix> ldlt(gram);
    if (ldlt.info() != Eigen::Success) return std::nullopt;
    const Vector lam_star = lam + sub * ldlt.solve(signs - sub.transpose() * lam);
    if (!lam_star.allFinite()) return std::nullopt;
    if ((phi_.transpose() * lam_star).cwiseAbs().maxCoeff() > 1.0 + cfg_.opt_tol) return std::nullopt;
    return out;
  }

  RecoveryConfig cfg_;
  Eigen::Index n_;
  Matrix full_;
  Matrix phi_; ///< independent rows of full_
  std::vector<Eigen::Index> rows_;
  Eigen::Index rank_ = 0;
  std::optional<PseudoinverseFactor> factor_;
};

/// min ||h||_1 s.t. Phi h = y.
inline RecoveryResult basis_pursuit(const Matrix& phi, const Vector& y, const RecoveryConfig& cfg = {}) {
  return BasisPursuit(phi, cfg).solve(y);
}

/// Projected subgradient iteration h <- P[h - (alpha0/t) sign(h)] from
/// h0 = Phi^+ y, returning the best feasible iterate in l1. Reports Optimal when
/// the best iterate is feasible and either improved on h0 or h0 is stationary;
/// MaxIters when the budget ran out without improvement.
inline RecoveryResult projected_subgradient(const Matrix& phi, const Vector& y, double alpha0,
                                            const RecoveryConfig& cfg = {}) {
  cfg.validate();
  require(alpha0 > 0.0, "projected_subgradient: alpha0 must be > 0");
  if (y.size() != phi.rows()) throw ConfigError("projected_subgradient: dimension mismatch");
  const PseudoinverseFactor factor(phi);
  const Eigen::Index n = phi.cols();

  RecoveryResult result;
  Vector h = projection(phi, factor, y, Vector::Zero(n));
  Vector best = h;
  double best_obj = detail::l1(h);
  const double start_obj = best_obj;
  bool stationary = false;
  std::size_t t = 1;
  for (; t <= cfg.max_iters; ++t) {
    const Vector g = detail::sign(h);
    // Zero projected subgradient: sign(h) lies in the row space, so h is optimal.
    const Vector step_dir = g - phi.transpose() * factor.solve(phi * g);
    if (step_dir.norm() <= 1e-12 * std::max(1.0, g.norm()) && (h.array() != 0.0).all()) {
      stationary = true;
      break;
    }
    if (y.norm() == 0.0) {
      stationary = true;
      break;
    }
    h = projection(phi, factor, y, h - (alpha0 / static_cast<double>(t)) * g);
    const double obj = detail::l1(h);
    if (obj < best_obj) {
      best_obj = obj;
      best = h;
    }
  }
  result.h_hat = std::move(best);
  result.iterations = std::min(t, cfg.max_iters);
  result.residual = (phi * result.h_hat - y).norm();
  result.objective = detail::l1(result.h_hat);
  const bool progressed = stationary || best_obj < start_obj;
  result.status = progressed && result.residual <= cfg.feas_tol ? RecoveryStatus::Optimal : RecoveryStatus::MaxIters;
  return result;
}

inline RecoveryResult recover(const Matrix& phi, const Vector& y, const RecoveryConfig& cfg) {
  if (cfg.solver == SolverKind::ProjectedSubgradient) return projected_subgradient(phi, y, cfg.subgradient_alpha, cfg);
  return basis_pursuit(phi, y, cfg);
}

enum class OracleStatus { Unique, NotUnique, NoSolution };

struct OracleResult {
  OracleStatus status = OracleStatus::NoSolution;
  Vector h;
  double objective = std::numeric_limits<double>::infinity();
  std::size_t supports_tried = 0;
};

/// Enumerates every support of size <= k_max, solves least squares on each,
/// and returns the feasible solution of least l1 norm. Distinct solutions
/// within 1e-9 of the optimum are reported as NotUnique. With k_max >= rank
/// every basic solution is visited, so the result is the exact l1 optimum.
inline OracleResult oracle_sparse_recover(const Matrix& phi, const Vector& y, std::size_t k_max,
                                          std::size_t budget = 1'000'000) {
  if (y.size() != phi.rows()) throw ConfigError("oracle: dimension mismatch");
  const auto n = static_cast<std::size_t>(phi.cols());
  require(n <= 24, "oracle: at most 24 columns");
  k_max = std::min({k_max, n, static_cast<std::size_t>(phi.rows())});

  std::size_t total = 0;
  for (std::size_t k = 0; k <= k_max; ++k) {
    double c = 1.0;
    for (std::size_t i = 0; i < k; ++i) c = c * static_cast<double>(n - i) / static_cast<double>(i + 1);
    total += static_cast<std::size_t>(std::llround(c));
  }
  if (total > budget) throw ConfigError("oracle: combinatorial budget exceeded (" + std::to_string(total) + " supports)");

  const double tol = 1e-9 * (1.0 + y.norm());
  struct Candidate {
    double objective;
    Vector h;
  };
  std::vector<Candidate> feasible;
  OracleResult out;
  out.supports_tried = total;

  std::vector<Eigen::Index> idx;
  for (std::size_t k = 0; k <= k_max; ++k) {
    idx.resize(k);
    for (std::size_t i = 0; i < k; ++i) idx[i] = static_cast<Eigen::Index>(i);
    for (;;) {
      Vector h = Vector::Zero(phi.cols());
      bool ok = true;
      if (k == 0) {
        ok = y.norm() <= tol;
      } else {
        Matrix sub(phi.rows(), static_cast<Eigen::Index>(k));
        for (std::size_t j = 0; j < k; ++j) sub.col(static_cast<Eigen::Index>(j)) = phi.col(idx[j]);
        Eigen::ColPivHouseholderQR<Matrix> qr(sub);
        if (qr.rank() < static_cast<Eigen::Index>(k)) {
          ok = false;
        } else {
          const Vector z = qr.solve(y);
          for (std::size_t j = 0; j < k; ++j) h(idx[j]) = z(static_cast<Eigen::Index>(j));
          ok = (phi * h - y).norm() <= tol;
        }
      }
      if (ok) feasible.push_back({detail::l1(h), std::move(h)});

      // Next combination in lexicographic order.
      std::size_t i = k;
      while (i > 0 && idx[i - 1] == static_cast<Eigen::Index>(n - k + i - 1)) --i;
      if (i == 0) break;
      ++idx[i - 1];
      for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
  }
  if (feasible.empty()) return out;

  const auto best = std::min_element(feasible.begin(), feasible.end(),
                                     [](const Candidate& a, const Candidate& b) { return a.objective < b.objective; });
  out.h = best->h;
  out.objective = best->objective;
  out.status = OracleStatus::Unique;
  for (const auto& c : feasible) {
    if (c.objective <= out.objective + 1e-9 && (c.h - out.h).norm() > 1e-8) {
      out.status = OracleStatus::NotUnique;
      break;
    }
  }
  return out;
}

} // namespace l1ae
