#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "autoencoder.hpp"
#include "channel_model.hpp"
#include "common.hpp"
#include "measurement.hpp"
#include "random.hpp"

namespace l1ae {

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 1000;
  double init_stddev = 0.04419417382415922; // 1/sqrt(512)
  std::size_t layers = 9;
  double alpha_init = 1.0;
  std::uint64_t seed = 0;
  std::size_t dev_eval_every = 1;
  std::size_t early_stop_patience = 0; ///< dev evaluations without improvement; 0 disables
  double momentum = 0.0;               ///< heavy-ball coefficient; 0 is plain SGD
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.99;

  void validate() const {
    require(learning_rate > 0.0, "train: learning_rate must be > 0");
    require(batch_size >= 2, "train: batch_size must be >= 2");
    require(max_epochs >= 1, "train: max_epochs must be >= 1");
    require(init_stddev > 0.0, "train: init_stddev must be > 0");
    require(alpha_init > 0.0, "train: alpha_init must be > 0");
    require(dev_eval_every >= 1, "train: dev_eval_every must be >= 1");
    require(momentum >= 0.0 && momentum < 1.0, "train: momentum must lie in [0, 1)");
    require(bn_epsilon > 0.0, "train: bn_epsilon must be > 0");
    require(bn_momentum >= 0.0 && bn_momentum < 1.0, "train: bn_momentum must lie in [0, 1)");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_loss = std::numeric_limits<double>::quiet_NaN(); ///< NaN when not evaluated
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  double initial_dev_loss = 0.0;
  std::size_t best_epoch = 0; ///< 0 means the initial model was never beaten
  double best_dev_loss = 0.0;
  bool early_stopped = false;
  double total_seconds = 0.0;
};

/// Phi ~ truncated normal (+-2 stddev), alpha = alpha_init, identity batch norm.
inline L1aeModel init_model(std::size_t m, std::size_t n_cols, const TrainConfig& cfg) {
  cfg.validate();
  require(m >= 1 && m < n_cols, "init_model: need 1 <= m < n_cols");
  auto rng = make_stream(cfg.seed, StreamTag::ModelInit);
  Matrix phi(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n_cols));
  for (Eigen::Index i = 0; i < phi.rows(); ++i)
    for (Eigen::Index j = 0; j < phi.cols(); ++j) phi(i, j) = truncated_normal(rng, cfg.init_stddev);
  return make_model(std::move(phi), cfg.layers, cfg.alpha_init, cfg.bn_epsilon, cfg.bn_momentum);
}

/// Mean loss of the model in Infer mode over all rows of `data`.
template <class Rows>
double evaluate_loss(const L1aeModel& model, const Rows& data) {
  L1aeModel infer = model;
  infer.mode = Mode::Infer;
  const Matrix h = data;
  return loss(h, predict(infer, h));
}

using EpochCallback = std::function<void(const EpochRecord&)>;

namespace detail {

struct SgdState {
  Matrix v_phi;
  double v_alpha = 0.0;
  std::vector<Vector> v_gamma, v_beta;
};

inline void sgd_step(L1aeModel& model, const Gradients& g, const TrainConfig& cfg, SgdState& state) {
  const double lr = cfg.learning_rate;
  if (cfg.momentum == 0.0) {
    model.phi.noalias() -= lr * g.d_phi;
    model.alpha -= lr * g.d_alpha;
    for (std::size_t k = 0; k < model.bn.size(); ++k) {
      model.bn[k].gamma.noalias() -= lr * g.d_gamma[k];
      model.bn[k].beta.noalias() -= lr * g.d_beta[k];
    }
  } else {
    const double mu = cfg.momentum;
    if (state.v_phi.size() == 0) {
      state.v_phi = Matrix::Zero(model.phi.rows(), model.phi.cols());
      state.v_gamma.assign(model.bn.size(), Vector::Zero(model.phi.cols()));
      state.v_beta = state.v_gamma;
    }
    state.v_phi = mu * state.v_phi + g.d_phi;
    state.v_alpha = mu * state.v_alpha + g.d_alpha;
    model.phi.noalias() -= lr * state.v_phi;
    model.alpha -= lr * state.v_alpha;
    for (std::size_t k = 0; k < model.bn.size(); ++k) {
      state.v_gamma[k] = mu * state.v_gamma[k] + g.d_gamma[k];
      state.v_beta[k] = mu * state.v_beta[k] + g.d_beta[k];
      model.bn[k].gamma.noalias() -= lr * state.v_gamma[k];
      model.bn[k].beta.noalias() -= lr * state.v_beta[k];
    }
  }
  // alpha must stay a positive step size.
  model.alpha = std::max(model.alpha, 1e-8);
}

inline bool model_finite(const L1aeModel& model) {
  if (!model.phi.allFinite() || !std::isfinite(model.alpha)) return false;
  for (const auto& p : model.bn) {
    if (!p.gamma.allFinite() || !p.beta.allFinite() || !p.running_mean.allFinite() || !p.running_var.allFinite())
      return false;
  }
  return true;
}

} // namespace detail

/// Shuffled mini-batch SGD on `train_rows`, keeping the model with the best
/// dev loss (the initial model included). Bit-reproducible given cfg.seed.
inline std::pair<L1aeModel, TrainReport> train(const RowMatrix& train_rows, const RowMatrix& dev_rows,
                                               std::size_t m, const TrainConfig& cfg,
                                               const EpochCallback& on_epoch = {}) {
  cfg.validate();
  require(train_rows.rows() >= 2, "train: training split needs at least 2 samples");
  require(dev_rows.rows() >= 1, "train: dev split is empty");
  require(dev_rows.cols() == train_rows.cols(), "train: dev/train width mismatch");

  using Clock = std::chrono::steady_clock;
  const auto run_start = Clock::now();
  const auto n_cols = static_cast<std::size_t>(train_rows.cols());
  L1aeModel model = init_model(m, n_cols, cfg);
  L1aeModel best = model;

  TrainReport report;
  report.initial_dev_loss = evaluate_loss(model, dev_rows);
  if (!std::isfinite(report.initial_dev_loss)) throw NumericalError("train: initial dev loss is not finite");
  report.best_dev_loss = report.initial_dev_loss;

  const auto n_train = static_cast<std::size_t>(train_rows.rows());
  const std::size_t batch = std::min(cfg.batch_size, n_train);
  std::vector<std::size_t> order(n_train);
  Matrix h(static_cast<Eigen::Index>(batch), train_rows.cols());
  detail::SgdState sgd;
  ForwardTrace trace;
  std::size_t stale_evals = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = make_stream(cfg.seed, StreamTag::EpochShuffle, epoch);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < n_train; start += batch) {
      const std::size_t count = std::min(batch, n_train - start);
      if (count < 2) break; // batch norm needs two samples
      if (static_cast<std::size_t>(h.rows()) != count) h.resize(static_cast<Eigen::Index>(count), h.cols());
      for (std::size_t r = 0; r < count; ++r)
        h.row(static_cast<Eigen::Index>(r)) = train_rows.row(static_cast<Eigen::Index>(order[start + r]));

      forward(model, h, trace);
      const double batch_loss = loss(h, trace.output);
      if (!std::isfinite(batch_loss)) {
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch starting " +
                             std::to_string(start) + " (alpha=" + std::to_string(model.alpha) + ")");
      }
      const Gradients grads = backward(model, trace, h);
      if (!grads.all_finite()) {
        throw NumericalError("train: non-finite gradient at epoch " + std::to_string(epoch));
      }
      commit_batch_statistics(model, trace);
      detail::sgd_step(model, grads, cfg, sgd);
      loss_sum += batch_loss * static_cast<double>(count);
      seen += count;
    }
    if (!detail::model_finite(model)) {
      throw NumericalError("train: parameters became non-finite at epoch " + std::to_string(epoch));
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(seen);
    const bool evaluate = epoch % cfg.dev_eval_every == 0 || epoch == cfg.max_epochs;
    if (evaluate) {
      record.dev_loss = evaluate_loss(model, dev_rows);
      if (!std::isfinite(record.dev_loss)) {
        throw NumericalError("train: non-finite dev loss at epoch " + std::to_string(epoch));
      }
      if (record.dev_loss < report.best_dev_loss) {
        report.best_dev_loss = record.dev_loss;
        report.best_epoch = epoch;
        best = model;
        stale_evals = 0;
      } else {
        ++stale_evals;
      }
    }
    record.seconds = std::chrono::duration<double>(Clock::now() - epoch_start).count();
    report.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
    if (cfg.early_stop_patience > 0 && stale_evals >= cfg.early_stop_patience) {
      report.early_stopped = true;
      break;
    }
  }
  report.total_seconds = std::chrono::duration<double>(Clock::now() - run_start).count();
  best.mode = Mode::Infer;
  return {std::move(best), std::move(report)};
}

inline std::pair<L1aeModel, TrainReport> train(const ChannelDataset& data, std::size_t m, const TrainConfig& cfg,
                                               const EpochCallback& on_epoch = {}) {
  require(data.n_train >= 2 && data.n_dev >= 1, "train: dataset needs train and dev splits");
  return train(RowMatrix(data.train()), RowMatrix(data.dev()), m, cfg, on_epoch);
}

/// The trained encoder, the only part a terminal needs for compression.
inline MeasurementMatrix extract_matrix(const L1aeModel& model, std::uint64_t seed = 0) {
  MeasurementMatrix out;
  out.data = model.phi;
  out.kind = MatrixKind::Learned;
  out.seed = seed;
  return out;
}

} // namespace l1ae
