// Train a small l1-AE and compare its measurement matrix with a Gaussian one.

#include <cstdio>

#include "l1ae/eval_harness.hpp"
#include "l1ae/trainer.hpp"

int main() {
  using namespace l1ae;

  ChannelConfig channel;
  channel.num_antennas = 32;
  channel.num_paths = 2;
  channel.seed = 7;
  const ChannelDataset data = generate_dataset(channel, 2000);

  TrainConfig cfg;
  cfg.max_epochs = 100;
  cfg.batch_size = 32;
  cfg.init_stddev = 0.125;
  cfg.seed = 7;

  const std::size_t m = 12;
  auto [model, report] = train(data, m, cfg);
  std::printf("trained m=%zu: dev loss %.4f -> %.4f, alpha %.3f\n", m, report.initial_dev_loss, report.best_dev_loss,
              model.alpha);

  const RowMatrix test = data.test();
  const RecoveryConfig rcfg;
  const MetricConfig mcfg;
  const CellEvaluation learned = evaluate_matrix(extract_matrix(model).data, test, rcfg, mcfg);
  const CellEvaluation gaussian =
      evaluate_matrix(generate_baseline(MatrixKind::Gaussian, m, data.dimension(), 7).data, test, rcfg, mcfg);
  std::printf("exact recovery: learned %.3f, gaussian %.3f\n", learned.p, gaussian.p);
  std::printf("nrse:           learned %.4f, gaussian %.4f\n", learned.nrse, gaussian.nrse);
}
