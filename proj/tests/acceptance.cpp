// Acceptance checks. One PASS/FAIL line per criterion; exit status is the
// number of failing criteria (capped at 1).
//
//   l1ae_acceptance [--criteria 1,2,...] [--work DIR] [--cli PATH]
//
// Criteria 1-3 run at full scale and cache their dataset and checkpoints in
// WORK/paper; delete that directory to retrain from scratch.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "l1ae/channel_model.hpp"
#include "l1ae/config.hpp"
#include "l1ae/eval_harness.hpp"
#include "l1ae/io.hpp"
#include "l1ae/sparse_recovery.hpp"
#include "l1ae/trainer.hpp"

using namespace l1ae;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path work = "acceptance";
  std::string cli;
};

std::string pct(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * p);
  return buf;
}

std::string num(double v, const char* fmt = "%.3g") {
  char buf[32];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

void log(const std::string& line) { std::cerr << "  " << line << std::endl; }

// ---- paper-scale pipeline shared by criteria 1-3 -----------------------------

struct PaperRun {
  SweepReport report;
  bool ready = false;
  std::string error;

  const SweepRow* row(MatrixKind k, std::size_t m) const {
    for (const auto& r : report.rows)
      if (r.kind == k && r.m == m && !r.errored) return &r;
    return nullptr;
  }
};

PaperRun& paper_run(const Context& ctx) {
  static PaperRun run;
  if (run.ready || !run.error.empty()) return run;
  try {
    const ExperimentConfig cfg = paper_profile();
    const std::string echo = to_json(cfg).dump();
    const fs::path dir = ctx.work / "paper";
    fs::create_directories(dir / "checkpoints");

    const std::string data_path = (dir / "dataset.bcsl").string();
    ChannelDataset data;
    if (fs::exists(data_path) && load_dataset(data_path).config_echo == echo) {
      data = load_dataset(data_path).data;
      log("paper: reusing " + data_path);
    } else {
      log("paper: generating 20000 samples");
      data = generate_dataset(cfg.channel_config(), cfg.num_samples, cfg.split, cfg.floor, cfg.zero_tol);
      save_dataset(data_path, data, echo);
    }

    SweepPlan plan;
    plan.m_values = cfg.m_values;
    plan.kinds = cfg.kinds;
    plan.seeds = cfg.baseline_seeds;
    plan.phase_shifter_q = cfg.phase_shifter_q;
    for (std::size_t m : cfg.m_values) {
      const std::string ckpt = (dir / "checkpoints" / ("l1ae_m" + std::to_string(m) + ".bcsw")).string();
      L1aeModel model;
      if (fs::exists(ckpt) && load_checkpoint(ckpt).config_echo == echo) {
        model = load_checkpoint(ckpt).model;
        log("paper: reusing " + ckpt);
      } else {
        log("paper: training m=" + std::to_string(m));
        auto [trained, report] = train(data, m, cfg.train_config(), [m](const EpochRecord& e) {
          if (e.epoch % 100 == 0)
            log("m=" + std::to_string(m) + " epoch " + std::to_string(e.epoch) + " train " + num(e.train_loss, "%.5f") +
                " dev " + num(e.dev_loss, "%.5f"));
        });
        log("paper: m=" + std::to_string(m) + " best dev " + num(report.best_dev_loss, "%.5f") + " at epoch " +
            std::to_string(report.best_epoch) + " (" + num(report.total_seconds, "%.0f") + " s)");
        write_training_csv((dir / ("train_m" + std::to_string(m) + ".csv")).string(), report);
        save_checkpoint(ckpt, trained, cfg.seed, echo);
        model = std::move(trained);
      }
      plan.learned[m] = {extract_matrix(model, cfg.seed)};
    }
    log("paper: sweeping " + std::to_string(data.n_test) + " test samples");
    run.report = run_sweep(RowMatrix(data.test()), plan, cfg.recovery, cfg.metrics);
    write_sweep_csv((dir / "sweep.csv").string(), run.report);
    for (const auto& r : run.report.rows)
      log(std::string(to_string(r.kind)) + " m=" + std::to_string(r.m) + " p=" + pct(r.p) + " nrse=" +
          num(r.nrse, "%.4f") + " failures=" + std::to_string(r.solver_failures) +
          (r.errored ? " ERROR " + r.diagnostic : ""));
    run.ready = true;
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  return run;
}

const std::map<std::size_t, double> kLearnedTable{{20, 0.959}, {25, 0.987}, {30, 0.996}, {35, 1.0}, {40, 1.0}};

Outcome criterion1(const Context& ctx) {
  const PaperRun& run = paper_run(ctx);
  if (!run.ready) return {false, "pipeline failed: " + run.error};
  Outcome out{true, ""};
  for (const auto& [m, target] : kLearnedTable) {
    const SweepRow* r = run.row(MatrixKind::Learned, m);
    if (!r) return {false, "learned cell missing at m=" + std::to_string(m)};
    const bool ok = std::abs(r->p - target) <= 0.10;
    out.pass = out.pass && ok;
    out.detail += "m=" + std::to_string(m) + " " + pct(r->p) + (ok ? "" : "(!)") + " ";
  }
  double best_baseline = 0.0;
  std::string best_name;
  for (MatrixKind k : kBaselineKinds) {
    const SweepRow* r = run.row(k, 20);
    if (!r) return {false, std::string("baseline cell missing: ") + std::string(to_string(k))};
    if (r->p >= best_baseline) {
      best_baseline = r->p;
      best_name = std::string(to_string(k));
    }
  }
  const double margin = run.row(MatrixKind::Learned, 20)->p - best_baseline;
  out.pass = out.pass && margin >= 0.40;
  out.detail += "| m=20 margin over " + best_name + " " + num(100 * margin, "%.2f") + " points (need >= 40)";
  return out;
}

Outcome criterion2(const Context& ctx) {
  const PaperRun& run = paper_run(ctx);
  if (!run.ready) return {false, "pipeline failed: " + run.error};
  const SweepRow* g20 = run.row(MatrixKind::Gaussian, 20);
  const SweepRow* g40 = run.row(MatrixKind::Gaussian, 40);
  if (!g20 || !g40) return {false, "gaussian cells missing"};
  Outcome out{true, ""};
  // Both the absolute bounds and +-10 points around the reference values.
  const bool low = g20->p <= 0.15 && std::abs(g20->p - 0.0215) <= 0.10;
  const bool high = g40->p >= 0.85 && std::abs(g40->p - 0.977) <= 0.10;
  out.pass = low && high;
  out.detail = "gaussian m=20 " + pct(g20->p) + (low ? "" : "(!)") + ", m=40 " + pct(g40->p) + (high ? "" : "(!)") + " |";
  for (std::size_t m : paper_profile().m_values) {
    const SweepRow* ps = run.row(MatrixKind::PhaseShifter, m);
    if (!ps) return {false, "phase_shifter cell missing"};
    bool weakest = ps->p <= 0.0685 + 0.10;
    std::string beaten_by;
    for (MatrixKind k : kBaselineKinds) {
      if (k == MatrixKind::PhaseShifter) continue;
      const SweepRow* r = run.row(k, m);
      if (r && r->p < ps->p) {
        weakest = false;
        beaten_by += " " + std::string(to_string(k)) + "=" + pct(r->p);
      }
    }
    out.pass = out.pass && weakest;
    out.detail += " ps m=" + std::to_string(m) + " " + pct(ps->p) + (weakest ? "" : "(weaker:" + beaten_by + ")");
  }
  return out;
}

Outcome criterion3(const Context& ctx) {
  const PaperRun& run = paper_run(ctx);
  if (!run.ready) return {false, "pipeline failed: " + run.error};
  auto peak = [&](MatrixKind k) {
    std::pair<double, std::size_t> best{-1.0, 0};
    for (std::size_t m : paper_profile().m_values) {
      const SweepRow* r = run.row(k, m);
      if (r && r->effective_rate > best.first) best = {r->effective_rate, m};
    }
    return best;
  };
  const auto learned = peak(MatrixKind::Learned);
  double random_best = -1.0;
  std::string random_name;
  for (MatrixKind k : {MatrixKind::Selection, MatrixKind::Bernoulli, MatrixKind::Gaussian}) {
    const auto p = peak(k);
    if (p.first > random_best) {
      random_best = p.first;
      random_name = std::string(to_string(k)) + " at m=" + std::to_string(p.second);
    }
  }
  const bool at_smallest = learned.second == paper_profile().m_values.front();
  const bool above = learned.first > random_best;
  return {at_smallest && above, "learned R_e/R0 peak " + num(learned.first, "%.4f") + " at m=" +
                                    std::to_string(learned.second) + ", best random peak " + num(random_best, "%.4f") +
                                    " (" + random_name + ")"};
}

// ---- fast criteria -----------------------------------------------------------

Outcome criterion4(const Context&) {
  std::mt19937_64 rng(2024);
  std::size_t checked = 0, failed = 0, kinked = 0;
  double worst = 0.0;
  std::string worst_name;
  for (int c = 0; c < 20; ++c) {
    const L1aeModel model = gradcheck::random_model(rng, 4, 16, 3);
    const Matrix h = gradcheck::random_batch(rng, 4, 16);
    const gradcheck::Report r = gradcheck::check(model, h, 1e-5, 1e-4, 1e-7);
    checked += r.checked;
    failed += r.failed;
    kinked += r.kinked;
    if (r.worst_rel > worst) {
      worst = r.worst_rel;
      worst_name = r.worst_name;
    }
  }
  std::string detail = std::to_string(checked) + " coordinates checked, " + std::to_string(failed) + " failed, " +
                       std::to_string(kinked) + " skipped at sign kinks";
  if (failed) detail += ", worst " + num(worst) + " at " + worst_name;
  return {failed == 0 && checked > 0, detail};
}

Outcome criterion5(const Context&) {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g(0, 1);
  std::size_t unique = 0, bad_obj = 0, bad_min = 0, not_optimal = 0;
  double worst_obj = 0.0, worst_min = 0.0;
  for (int inst = 0; inst < 200; ++inst) {
    const int k = 1 + inst % 2;
    const int n = std::uniform_int_distribution<int>(2 * k + 3, 12)(rng);
    const int m = std::uniform_int_distribution<int>(2 * k + 2, n - 1)(rng);
    Matrix phi(m, n);
    for (Eigen::Index i = 0; i < phi.size(); ++i) phi(i) = g(rng);
    Vector h = Vector::Zero(n);
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    for (int j = 0; j < k; ++j) h(idx[j]) = g(rng);
    const Vector y = phi * h;

    // Every basic solution is enumerated, so the oracle objective is the LP optimum.
    const OracleResult o = oracle_sparse_recover(phi, y, static_cast<std::size_t>(m));
    const RecoveryResult r = basis_pursuit(phi, y);
    if (r.status != RecoveryStatus::Optimal) ++not_optimal;
    const double dobj = std::abs(r.objective - o.objective);
    worst_obj = std::max(worst_obj, dobj);
    if (dobj > 1e-6) ++bad_obj;
    if (o.status == OracleStatus::Unique) {
      ++unique;
      const double dmin = (r.h_hat - o.h).lpNorm<Eigen::Infinity>();
      worst_min = std::max(worst_min, dmin);
      if (dmin > 1e-6) ++bad_min;
    }
  }
  return {bad_obj == 0 && bad_min == 0 && not_optimal == 0,
          "200 instances, objective mismatches " + std::to_string(bad_obj) + " (worst " + num(worst_obj) +
              "), unique minimizers " + std::to_string(unique) + " with " + std::to_string(bad_min) +
              " mismatches (worst " + num(worst_min) + "), non-optimal " + std::to_string(not_optimal)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Runs gen-data, train and sweep through the CLI into `dir`.
bool run_pipeline(const Context& ctx, const fs::path& dir, const fs::path& cfg, std::string& err) {
  fs::remove_all(dir);
  for (const char* sub : {"gen-data", "train --quiet", "sweep"}) {
    const std::string cmd = "\"" + ctx.cli + "\" " + sub + " --config \"" + cfg.string() + "\" --seed 11 --out \"" +
                            dir.string() + "\" > \"" + (dir.string() + ".log") + "\" 2>&1";
    if (std::system(cmd.c_str()) != 0) {
      err = std::string(sub) + " failed, see " + dir.string() + ".log";
      return false;
    }
  }
  return true;
}

Outcome determinism(const Context& ctx) {
  if (ctx.cli.empty()) return {false, "no --cli given"};
  fs::create_directories(ctx.work);
  const fs::path cfg = ctx.work / "determinism.json";
  {
    std::ofstream out(cfg);
    out << R"({"profile": "ci", "channel": {"num_antennas": 16, "num_paths": 2},
 "dataset": {"num_samples": 300}, "train": {"max_epochs": 5, "batch_size": 32},
 "sweep": {"m_values": [8, 10], "kinds": ["learned", "gaussian", "phase_shifter"], "baseline_seeds": [0, 1]}})";
  }
  std::string err;
  // Both runs use the same output path, since it is echoed into the files.
  const fs::path run = ctx.work / "determinism_run";
  const fs::path a = ctx.work / "determinism_a", b = ctx.work / "determinism_b";
  for (const fs::path& dest : {a, b}) {
    fs::remove_all(dest);
    if (!run_pipeline(ctx, run, cfg, err)) return {false, err};
    fs::rename(run, dest);
  }
  std::size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a);
    // Training logs carry wall-clock seconds.
    if (rel.filename().string().rfind("train_m", 0) == 0) continue;
    if (slurp(entry.path()) != slurp(b / rel)) return {false, rel.string() + " differs between runs"};
    ++compared;
  }
  if (compared < 6) return {false, "only " + std::to_string(compared) + " outputs found"};
  return {true, std::to_string(compared) + " data outputs byte-identical"};
}

Outcome criterion6(const Context& ctx) {
  std::vector<std::string> failures;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };

  double unitary = 0.0;
  for (std::size_t n : {1u, 2u, 7u, 16u, 64u, 256u}) {
    const ComplexMatrix u = dft_grid_matrix(n);
    unitary = std::max(unitary, (u.adjoint() * u - ComplexMatrix::Identity(n, n)).cwiseAbs().maxCoeff());
  }
  expect(unitary <= 1e-10, "DFT grid unitarity " + num(unitary));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dir(-0.5, 0.5);
  double norm_err = 0.0;
  for (int i = 0; i < 200; ++i)
    norm_err = std::max(norm_err, std::abs(steering_vector(dir(rng), 1 + i % 300).norm() - 1.0));
  expect(norm_err <= 1e-12, "steering norm " + num(norm_err));

  ChannelConfig ch;
  ch.seed = 3;
  const ComplexMatrix u = dft_grid_matrix(ch.num_antennas);
  double pre_err = 0.0;
  bool stack_exact = true;
  auto stream = make_stream(ch.seed, 99);
  for (int i = 0; i < 50; ++i) {
    const BeamspaceChannel b = to_beamspace(generate_spatial_channel(ch, stream), u);
    const RealChannelVector v = stack_real(b);
    stack_exact = stack_exact && unstack_real(v).coeffs == b.coeffs;
    const auto [p, params] = preprocess(v);
    pre_err = std::max(pre_err, (invert_preprocess(p, params).values - v.values).cwiseAbs().maxCoeff());
  }
  expect(pre_err <= 1e-12, "preprocess round trip " + num(pre_err));
  expect(stack_exact, "stack/unstack round trip not exact");

  double layer_err = 0.0;
  for (int c = 0; c < 10; ++c) {
    const L1aeModel model = gradcheck::random_model(rng, 6, 24, 4);
    const Matrix h = Matrix::Random(5, 24);
    const Matrix proj = Matrix::Identity(24, 24) - model.phi.transpose() * model.phi;
    Matrix s = h;
    for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = h(i) > 0 ? 1.0 : h(i) < 0 ? -1.0 : 0.0;
    for (std::size_t t = 1; t <= 4; ++t) {
      const Matrix dense = h - (model.alpha / static_cast<double>(t)) * s * proj.transpose();
      layer_err = std::max(layer_err, (decoder_update(model, h, t) - dense).cwiseAbs().maxCoeff());
    }
  }
  expect(layer_err <= 1e-12, "decoder layer factored vs dense " + num(layer_err));

  double rate_err = std::abs(effective_rate(0.959, 20, 200) - 0.8631);
  std::uniform_real_distribution<double> unit(0, 1);
  for (int i = 0; i < 100; ++i) {
    const double p = unit(rng), r0 = 0.5 + unit(rng);
    const std::size_t m = 1 + static_cast<std::size_t>(unit(rng) * 198);
    rate_err = std::max(rate_err, std::abs(effective_rate(p, m, 200, r0) - r0 * (1.0 - m / 200.0) * p));
  }
  expect(rate_err <= 1e-15, "effective rate identity " + num(rate_err));

  const Outcome det = determinism(ctx);
  expect(det.pass, "determinism: " + det.detail);

  std::string detail = "unitarity " + num(unitary) + ", steering " + num(norm_err) + ", preprocess " + num(pre_err) +
                       ", layer " + num(layer_err) + ", rate " + num(rate_err) + ", " + det.detail;
  for (const auto& f : failures) detail += " | FAILED " + f;
  return {failures.empty(), detail};
}

Outcome criterion7(const Context&) {
  const ExperimentConfig base = ci_profile();
  std::map<std::size_t, double> learned, gaussian;
  for (std::uint64_t seed : base.baseline_seeds) {
    ExperimentConfig cfg = base;
    cfg.seed = seed;
    const ChannelDataset data =
        generate_dataset(cfg.channel_config(), cfg.num_samples, cfg.split, cfg.floor, cfg.zero_tol);
    const RowMatrix test(data.test());
    for (std::size_t m : cfg.m_values) {
      const L1aeModel model = train(data, m, cfg.train_config()).first;
      const double pl = evaluate_matrix(model.phi, test, cfg.recovery, cfg.metrics).p;
      const double pg =
          evaluate_matrix(generate_baseline(MatrixKind::Gaussian, m, data.dimension(), seed).data, test, cfg.recovery,
                          cfg.metrics)
              .p;
      log("ci seed " + std::to_string(seed) + " m=" + std::to_string(m) + " learned " + pct(pl) + " gaussian " + pct(pg));
      learned[m] += pl / static_cast<double>(base.baseline_seeds.size());
      gaussian[m] += pg / static_cast<double>(base.baseline_seeds.size());
    }
  }
  Outcome out{true, "mean over 3 seeds:"};
  for (std::size_t m : base.m_values) {
    const bool ok = learned[m] > gaussian[m];
    out.pass = out.pass && ok;
    out.detail += " m=" + std::to_string(m) + " learned " + pct(learned[m]) + " vs gaussian " + pct(gaussian[m]) +
                  (ok ? "" : "(!)");
  }
  return out;
}

} // namespace

int main(int argc, char** argv) {
  Context ctx;
  std::set<int> wanted{1, 2, 3, 4, 5, 6, 7};
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (i + 1 >= argc) {
      std::cerr << "missing value for " << arg << "\n";
      return 2;
    }
    if (arg == "--criteria") {
      wanted.clear();
      for (const auto& item : split_list(argv[++i])) wanted.insert(std::stoi(item));
    } else if (arg == "--work") {
      ctx.work = argv[++i];
    } else if (arg == "--cli") {
      ctx.cli = argv[++i];
    } else {
      std::cerr << "unknown argument " << arg << "\n";
      return 2;
    }
  }

  const std::map<int, std::pair<std::string, std::function<Outcome(const Context&)>>> criteria{
      {1, {"learned exact recovery vs reference table", criterion1}},
      {2, {"baseline trends", criterion2}},
      {3, {"effective rate peak", criterion3}},
      {4, {"gradients vs finite differences", criterion4}},
      {5, {"basis pursuit vs enumeration oracle", criterion5}},
      {6, {"invariants and determinism", criterion6}},
      {7, {"learning signal at small scale", criterion7}},
  };

  int failed = 0;
  for (int c : wanted) {
    const auto it = criteria.find(c);
    if (it == criteria.end()) {
      std::cerr << "no criterion " << c << "\n";
      return 2;
    }
    Outcome o;
    try {
      o = it->second.second(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c << " (" << it->second.first << "): " << o.detail
              << std::endl;
    failed += o.pass ? 0 : 1;
  }
  return failed ? 1 : 0;
}
