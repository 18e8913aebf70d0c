#pragma once

// Unrolled l1-minimization autoencoder.
//
//   encoder        y        = Phi h
//   first layer    z_1      = Phi^T y,                          a_1 = BN_1(z_1)
//   layer t=1..L   z_{t+1}  = a_t - (alpha/t)(s_t - Phi^T Phi s_t),  s_t = sign(a_t)
//                  a_{t+1}  = BN_{t+1}(z_{t+1})
//   output         h_hat    = max(a_{L+1}, 0)
//
// (I - Phi^T Phi) is never formed; every layer costs two m x 2N products per
// sample. Gradients are hand-derived for this fixed graph, with sign(.) held
// piecewise constant.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "common.hpp"

namespace l1ae {

enum class Mode { Train, Infer };

struct BatchNormParams {
  Vector gamma;
  Vector beta;
  Vector running_mean;
  Vector running_var;
  double epsilon = 1e-5;
  double momentum = 0.99;

  static BatchNormParams identity(Eigen::Index dim, double epsilon = 1e-5, double momentum = 0.99) {
    return {Vector::Ones(dim), Vector::Zero(dim), Vector::Zero(dim), Vector::Ones(dim), epsilon, momentum};
  }
};

struct L1aeModel {
  Matrix phi;             ///< m x 2N measurement matrix
  double alpha = 1.0;     ///< shared step size; layer t uses alpha / t
  std::size_t layers = 9; ///< L unrolled update layers
  std::vector<BatchNormParams> bn; ///< L + 1 modules, one after every decoder layer
  Mode mode = Mode::Train;

  Eigen::Index measurements() const { return phi.rows(); }
  Eigen::Index input_dim() const { return phi.cols(); }

  void validate() const {
    require(phi.rows() >= 1 && phi.cols() >= 1, "model: empty measurement matrix");
    require(alpha > 0.0, "model: alpha must be > 0");
    require(bn.size() == layers + 1, "model: expected L + 1 batch-norm modules");
    for (const auto& p : bn) {
      require(p.gamma.size() == phi.cols() && p.beta.size() == phi.cols() && p.running_mean.size() == phi.cols() &&
                  p.running_var.size() == phi.cols(),
              "model: batch-norm parameter length mismatch");
      require(p.epsilon > 0.0, "model: batch-norm epsilon must be > 0");
      require((p.running_var.array() >= 0.0).all(), "model: negative running variance");
    }
  }
};

/// Builds a model around `phi` with identity batch-norm modules.
inline L1aeModel make_model(Matrix phi, std::size_t layers, double alpha = 1.0, double bn_epsilon = 1e-5,
                            double bn_momentum = 0.99) {
  L1aeModel model;
  const Eigen::Index n = phi.cols();
  model.phi = std::move(phi);
  model.alpha = alpha;
  model.layers = layers;
  model.bn.assign(layers + 1, BatchNormParams::identity(n, bn_epsilon, bn_momentum));
  model.validate();
  return model;
}

struct BatchNormCache {
  Matrix normalized; ///< x_hat
  Vector mean;       ///< statistics used for standardization
  Vector var;
  Vector inv_std;
};

struct ForwardTrace {
  Mode mode = Mode::Train;
  Matrix y;                          ///< B x m
  std::vector<Matrix> pre_bn;        ///< z_1 .. z_{L+1}
  std::vector<Matrix> post_bn;       ///< a_1 .. a_{L+1}; the last is the pre-ReLU output
  std::vector<Matrix> signs;         ///< s_1 .. s_L
  std::vector<Matrix> sign_measured; ///< s_t Phi^T (B x m)
  std::vector<Matrix> directions;    ///< s_t - Phi^T Phi s_t, row-wise
  std::vector<BatchNormCache> bn;
  Matrix output;

  // Fingerprints of the inputs that produced this trace.
  double input_checksum = 0.0;
  double phi_checksum = 0.0;
  double alpha = 0.0;
};

struct Gradients {
  Matrix d_phi;
  double d_alpha = 0.0;
  std::vector<Vector> d_gamma;
  std::vector<Vector> d_beta;

  bool all_finite() const {
    if (!d_phi.allFinite() || !std::isfinite(d_alpha)) return false;
    for (const auto& g : d_gamma)
      if (!g.allFinite()) return false;
    for (const auto& b : d_beta)
      if (!b.allFinite()) return false;
    return true;
  }
};

namespace detail {

inline double checksum(const Matrix& m) {
  // Position-weighted so permutations and transposes register.
  double acc = 0.0;
  const double* p = m.data();
  for (Eigen::Index i = 0; i < m.size(); ++i) acc += p[i] * (1.0 + 1e-3 * static_cast<double>(i % 997));
  return acc + static_cast<double>(m.rows()) * 1e-7 + static_cast<double>(m.cols()) * 1e-9;
}

inline void check_batch(const L1aeModel& model, const Matrix& h) {
  if (h.cols() != model.input_dim()) {
    throw ConfigError("batch has " + std::to_string(h.cols()) + " columns, model expects " +
                      std::to_string(model.input_dim()));
  }
}

/// Standardization with either batch statistics (Train) or running statistics
/// (Infer), column by column into `out`.
inline void bn_apply(const BatchNormParams& p, const Matrix& x, Mode mode, BatchNormCache& cache, Matrix& out) {
  const Eigen::Index rows = x.rows();
  const Eigen::Index cols = x.cols();
  if (mode == Mode::Train && rows < 2) throw ConfigError("batch_norm: Train mode needs a batch of at least 2");
  cache.mean.resize(cols);
  cache.var.resize(cols);
  cache.inv_std.resize(cols);
  cache.normalized.resize(rows, cols);
  out.resize(rows, cols);
  if (mode == Mode::Infer) {
    cache.mean = p.running_mean;
    cache.var = p.running_var;
    cache.inv_std = (p.running_var.array() + p.epsilon).rsqrt().matrix();
    cache.normalized.array() = (x.rowwise() - cache.mean.transpose()).array().rowwise() * cache.inv_std.transpose().array();
    out.array() = (cache.normalized.array().rowwise() * p.gamma.transpose().array()).rowwise() + p.beta.transpose().array();
    return;
  }
  for (Eigen::Index j = 0; j < cols; ++j) {
    const double mean = x.col(j).sum() / static_cast<double>(rows);
    const double var = (x.col(j).array() - mean).square().sum() / static_cast<double>(rows);
    const double inv_std = 1.0 / std::sqrt(var + p.epsilon);
    cache.mean(j) = mean;
    cache.var(j) = var;
    cache.inv_std(j) = inv_std;
    cache.normalized.col(j) = (x.col(j).array() - mean) * inv_std;
    out.col(j) = (p.gamma(j) * cache.normalized.col(j).array() + p.beta(j)).matrix();
  }
}

inline void bn_update_running(BatchNormParams& p, const BatchNormCache& cache, Eigen::Index batch) {
  // Running variance tracks the unbiased batch estimate.
  const double correction = static_cast<double>(batch) / static_cast<double>(batch - 1);
  p.running_mean = p.momentum * p.running_mean + (1.0 - p.momentum) * cache.mean;
  p.running_var = p.momentum * p.running_var + (1.0 - p.momentum) * correction * cache.var;
}

/// Overwrites `g` (d/d output) with d/d input; sets d_gamma, d_beta.
inline void bn_backward(const BatchNormParams& p, const BatchNormCache& cache, Matrix& g, Mode mode,
                        Vector& d_gamma, Vector& d_beta) {
  const Eigen::Index rows = g.rows();
  const Eigen::Index cols = g.cols();
  const auto n = static_cast<double>(rows);
  d_gamma.resize(cols);
  d_beta.resize(cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    auto col = g.col(j);
    const auto xhat = cache.normalized.col(j);
    const double db = col.sum();
    const double dg = col.dot(xhat);
    d_beta(j) = db;
    d_gamma(j) = dg;
    const double scale = p.gamma(j) * cache.inv_std(j);
    if (mode == Mode::Infer) {
      col *= scale;
    } else {
      col = (scale / n) * (n * col.array() - db - dg * xhat.array()).matrix();
    }
  }
}

inline void propagate(const L1aeModel& model, const Matrix& h, Mode mode, ForwardTrace& tr) {
  const Matrix& phi = model.phi;
  const std::size_t layers = model.layers;
  tr.mode = mode;
  tr.pre_bn.resize(layers + 1);
  tr.post_bn.resize(layers + 1);
  tr.signs.resize(layers);
  tr.sign_measured.resize(layers);
  tr.directions.resize(layers);
  tr.bn.resize(layers + 1);

  tr.y.noalias() = h * phi.transpose();
  tr.pre_bn[0].noalias() = tr.y * phi;
  bn_apply(model.bn[0], tr.pre_bn[0], mode, tr.bn[0], tr.post_bn[0]);
  for (std::size_t t = 1; t <= layers; ++t) {
    const Matrix& a = tr.post_bn[t - 1];
    Matrix& s = tr.signs[t - 1];
    Matrix& r = tr.directions[t - 1];
    s = a.unaryExpr([](double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); });
    tr.sign_measured[t - 1].noalias() = s * phi.transpose();
    r = s;
    r.noalias() -= tr.sign_measured[t - 1] * phi;
    tr.pre_bn[t] = a - (model.alpha / static_cast<double>(t)) * r;
    bn_apply(model.bn[t], tr.pre_bn[t], mode, tr.bn[t], tr.post_bn[t]);
  }
  tr.output = tr.post_bn[layers].cwiseMax(0.0);
}

} // namespace detail

/// y = Phi h for every row of `h_batch`.
inline Matrix encode(const L1aeModel& model, const Matrix& h_batch) {
  detail::check_batch(model, h_batch);
  Matrix y;
  y.noalias() = h_batch * model.phi.transpose();
  return y;
}

/// First decoder layer before normalization: Phi^T y for every row.
inline Matrix decoder_init(const L1aeModel& model, const Matrix& y_batch) {
  if (y_batch.cols() != model.measurements()) {
    throw ConfigError("decoder_init: measurement length " + std::to_string(y_batch.cols()) + ", expected " +
                      std::to_string(model.measurements()));
  }
  Matrix h;
  h.noalias() = y_batch * model.phi;
  return h;
}

/// Unrolled update t (1-based) before normalization:
/// h - (alpha/t)(s - Phi^T (Phi s)), s = sign(h).
inline Matrix decoder_update(const L1aeModel& model, const Matrix& h_t, std::size_t t) {
  if (t == 0 || t > model.layers) {
    throw ConfigError("decoder layer index must lie in [1, L], got " + std::to_string(t));
  }
  detail::check_batch(model, h_t);
  const Matrix s = detail::sign(h_t);
  Matrix w;
  w.noalias() = s * model.phi.transpose();
  Matrix r = s;
  r.noalias() -= w * model.phi;
  return h_t - (model.alpha / static_cast<double>(t)) * r;
}

/// decoder_update followed by the layer's batch-norm module (statistics of the
/// given batch in Train mode, running statistics in Infer mode; running
/// statistics are left untouched).
inline Matrix decoder_layer(const L1aeModel& model, const Matrix& h_t, std::size_t t) {
  const Matrix z = decoder_update(model, h_t, t);
  BatchNormCache cache;
  Matrix out;
  detail::bn_apply(model.bn[t], z, model.mode, cache, out);
  return out;
}

/// Batch normalization of `x`; in Train mode also folds the batch statistics
/// into the running estimates.
inline Matrix batch_norm(BatchNormParams& params, const Matrix& x, Mode mode) {
  if (params.gamma.size() != x.cols()) throw ConfigError("batch_norm: width mismatch");
  BatchNormCache cache;
  Matrix out;
  detail::bn_apply(params, x, mode, cache, out);
  if (mode == Mode::Train) detail::bn_update_running(params, cache, x.rows());
  return out;
}

/// Full forward pass in the model's mode, reusing the buffers of `trace`.
/// Infer mode runs each sample on its own, so outputs do not depend on batch
/// composition.
inline void forward(const L1aeModel& model, const Matrix& h_batch, ForwardTrace& trace) {
  detail::check_batch(model, h_batch);
  if (model.mode == Mode::Train || h_batch.rows() <= 1) {
    detail::propagate(model, h_batch, model.mode, trace);
  } else {
    const Eigen::Index rows = h_batch.rows();
    ForwardTrace single;
    for (Eigen::Index i = 0; i < rows; ++i) {
      detail::propagate(model, h_batch.row(i), Mode::Infer, single);
      if (i == 0) {
        trace = single;
        auto grow = [rows](Matrix& m) { m.conservativeResize(rows, m.cols()); };
        grow(trace.y);
        grow(trace.output);
        for (auto* group : {&trace.pre_bn, &trace.post_bn, &trace.signs, &trace.sign_measured, &trace.directions})
          for (auto& m : *group) grow(m);
        for (auto& c : trace.bn) grow(c.normalized);
        continue;
      }
      trace.y.row(i) = single.y;
      trace.output.row(i) = single.output;
      for (std::size_t k = 0; k < trace.pre_bn.size(); ++k) {
        trace.pre_bn[k].row(i) = single.pre_bn[k];
        trace.post_bn[k].row(i) = single.post_bn[k];
        trace.bn[k].normalized.row(i) = single.bn[k].normalized;
      }
      for (std::size_t k = 0; k < trace.signs.size(); ++k) {
        trace.signs[k].row(i) = single.signs[k];
        trace.sign_measured[k].row(i) = single.sign_measured[k];
        trace.directions[k].row(i) = single.directions[k];
      }
    }
  }
  trace.input_checksum = detail::checksum(h_batch);
  trace.phi_checksum = detail::checksum(model.phi);
  trace.alpha = model.alpha;
}

inline ForwardTrace forward(const L1aeModel& model, const Matrix& h_batch) {
  ForwardTrace trace;
  forward(model, h_batch, trace);
  return trace;
}

/// Output only.
inline Matrix predict(const L1aeModel& model, const Matrix& h_batch) {
  detail::check_batch(model, h_batch);
  ForwardTrace work;
  if (model.mode == Mode::Train) {
    detail::propagate(model, h_batch, Mode::Train, work);
    return std::move(work.output);
  }
  Matrix out(h_batch.rows(), h_batch.cols());
  for (Eigen::Index i = 0; i < h_batch.rows(); ++i) {
    detail::propagate(model, h_batch.row(i), Mode::Infer, work);
    out.row(i) = work.output;
  }
  return out;
}

/// Folds a Train-mode trace's batch statistics into the running estimates.
inline void commit_batch_statistics(L1aeModel& model, const ForwardTrace& trace) {
  if (trace.mode != Mode::Train) return;
  const Eigen::Index batch = trace.output.rows();
  for (std::size_t k = 0; k < model.bn.size(); ++k) detail::bn_update_running(model.bn[k], trace.bn[k], batch);
}

/// (1/n) sum_i ||h_i - h_hat_i||^2 over rows.
inline double loss(const Matrix& h_batch, const Matrix& h_hat_batch) {
  if (h_batch.rows() != h_hat_batch.rows() || h_batch.cols() != h_hat_batch.cols()) {
    throw ConfigError("loss: shape mismatch " + dims(h_batch.rows(), h_batch.cols()) + " vs " +
                      dims(h_hat_batch.rows(), h_hat_batch.cols()));
  }
  if (h_batch.rows() == 0) throw ConfigError("loss: empty batch");
  return (h_batch - h_hat_batch).squaredNorm() / static_cast<double>(h_batch.rows());
}

/// Reverse-mode gradients of loss(h_batch, forward(model, h_batch).output).
inline Gradients backward(const L1aeModel& model, const ForwardTrace& trace, const Matrix& h_batch) {
  detail::check_batch(model, h_batch);
  const std::size_t layers = model.layers;
  const bool shapes_ok = trace.output.rows() == h_batch.rows() && trace.output.cols() == h_batch.cols() &&
                         trace.post_bn.size() == layers + 1 && trace.signs.size() == layers;
  if (!shapes_ok || trace.input_checksum != detail::checksum(h_batch) ||
      trace.phi_checksum != detail::checksum(model.phi) || trace.alpha != model.alpha) {
    throw ConfigError("backward: trace does not belong to this model and batch");
  }

  const Matrix& phi = model.phi;
  const auto rows = static_cast<double>(h_batch.rows());
  Gradients grads;
  grads.d_phi = Matrix::Zero(phi.rows(), phi.cols());
  grads.d_gamma.resize(layers + 1);
  grads.d_beta.resize(layers + 1);

  // d loss / d a_{L+1}; ReLU passes gradient only where its input is > 0.
  Matrix g = ((2.0 / rows) * (trace.output - h_batch)).cwiseProduct(
      trace.post_bn[layers].unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));

  Matrix g_measured;
  for (std::size_t k = layers + 1; k-- > 0;) {
    detail::bn_backward(model.bn[k], trace.bn[k], g, trace.mode, grads.d_gamma[k], grads.d_beta[k]);
    if (k == 0) break;
    // g is d/dz_{k+1}; z_{k+1} = a_k - c (s_k - (s_k Phi^T) Phi) with c = alpha / k.
    const double t = static_cast<double>(k);
    const double c = model.alpha / t;
    grads.d_alpha -= g.cwiseProduct(trace.directions[k - 1]).sum() / t;
    g_measured.noalias() = g * phi.transpose();
    grads.d_phi.noalias() += c * (trace.sign_measured[k - 1].transpose() * g);
    grads.d_phi.noalias() += c * (g_measured.transpose() * trace.signs[k - 1]);
    // sign() is locally constant, so d/da_k = d/dz_{k+1}.
  }
  // z_1 = (h Phi^T) Phi.
  grads.d_phi.noalias() += trace.y.transpose() * g;
  g_measured.noalias() = g * phi.transpose();
  grads.d_phi.noalias() += g_measured.transpose() * h_batch;
  return grads;
}

} // namespace l1ae
