#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "autoencoder.hpp"
#include "channel_model.hpp"
#include "common.hpp"
#include "config.hpp"
#include "eval_harness.hpp"
#include "measurement.hpp"
#include "trainer.hpp"

namespace l1ae {

// Binary containers: 4-byte magic, u32 version, payload, then the generating
// config as u64 length + JSON text. Integers and doubles are little-endian.
inline constexpr std::string_view kDatasetMagic = "BCSL";
inline constexpr std::string_view kMatrixMagic = "BCSM";
inline constexpr std::string_view kCheckpointMagic = "BCSW";
inline constexpr std::uint32_t kFormatVersion = 1;

namespace detail {

class BinaryWriter {
public:
  explicit BinaryWriter(const std::string& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot open " + path + " for writing");
  }

  void magic(std::string_view m) { bytes(m.data(), m.size()); }

  void u32(std::uint32_t v) { little(v); }
  void u64(std::uint64_t v) { little(v); }
  void f64(double v) { little(std::bit_cast<std::uint64_t>(v)); }

  template <class Derived>
  void f64s(const Eigen::DenseBase<Derived>& block) {
    // Row-major order regardless of the storage order of `block`.
    for (Eigen::Index i = 0; i < block.rows(); ++i)
      for (Eigen::Index j = 0; j < block.cols(); ++j) f64(block(i, j));
  }

  void text(std::string_view s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }

  void close() {
    out_.flush();
    if (!out_) throw IoError("write to " + path_ + " failed");
    out_.close();
  }

private:
  template <class T>
  void little(T v) {
    std::array<char, sizeof(T)> buf;
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    bytes(buf.data(), buf.size());
  }

  void bytes(const char* p, std::size_t n) {
    out_.write(p, static_cast<std::streamsize>(n));
    if (!out_) throw IoError("write to " + path_ + " failed");
  }

  std::string path_;
  std::ofstream out_;
};

class BinaryReader {
public:
  explicit BinaryReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open " + path);
  }

  void expect_header(std::string_view magic) {
    char got[4];
    bytes(got, 4);
    if (std::string_view(got, 4) != magic) {
      throw IoError(path_ + ": bad magic '" + printable(got) + "', expected '" + std::string(magic) + "'");
    }
    const std::uint32_t version = u32();
    if (version != kFormatVersion)
      throw IoError(path_ + ": unsupported format version " + std::to_string(version));
  }

  std::uint32_t u32() { return little<std::uint32_t>(); }
  std::uint64_t u64() { return little<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(little<std::uint64_t>()); }

  // Sizes read from the file are bounded before allocating.
  std::uint64_t count(std::uint64_t limit, const char* what) {
    const std::uint64_t v = u64();
    if (v > limit) throw IoError(path_ + ": implausible " + std::string(what) + " " + std::to_string(v));
    return v;
  }

  template <class Derived>
  void f64s(Eigen::DenseBase<Derived>& block) {
    for (Eigen::Index i = 0; i < block.rows(); ++i)
      for (Eigen::Index j = 0; j < block.cols(); ++j) block(i, j) = f64();
  }

  std::string text() {
    const std::uint64_t n = count(std::uint64_t{1} << 30, "text length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) throw IoError(path_ + ": trailing bytes after payload");
  }

  const std::string& path() const { return path_; }

private:
  static std::string printable(const char* p) {
    std::string s;
    for (int i = 0; i < 4; ++i) s += (p[i] >= 32 && p[i] < 127) ? p[i] : '?';
    return s;
  }

  template <class T>
  T little() {
    std::array<unsigned char, sizeof(T)> buf;
    bytes(reinterpret_cast<char*>(buf.data()), buf.size());
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
    return v;
  }

  void bytes(char* p, std::size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw IoError(path_ + ": truncated file");
  }

  std::string path_;
  std::ifstream in_;
};

constexpr std::uint64_t kMaxDim = std::uint64_t{1} << 24;

} // namespace detail

/// Reads the 4-byte magic of a container file.
inline std::string peek_magic(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char buf[4];
  in.read(buf, 4);
  if (in.gcount() != 4) throw IoError(path + ": truncated file");
  return std::string(buf, 4);
}

// ---- datasets ---------------------------------------------------------------

struct LoadedDataset {
  ChannelDataset data;
  std::string config_echo;
};

inline void save_dataset(const std::string& path, const ChannelDataset& d, std::string_view config_echo = "{}") {
  detail::BinaryWriter w(path);
  w.magic(kDatasetMagic);
  w.u32(kFormatVersion);
  w.u64(d.config.num_antennas);
  w.u64(d.config.num_paths);
  w.u64(d.size());
  w.u64(d.n_train);
  w.u64(d.n_dev);
  w.u64(d.n_test);
  w.f64s(d.samples);
  for (const auto& p : d.params) {
    w.f64(p.min_nz);
    w.f64(p.max_nz);
    w.f64(p.floor);
    w.f64(p.zero_tol);
    w.u32(p.has_support ? 1 : 0);
  }
  w.u64(d.config.seed);
  w.u32(static_cast<std::uint32_t>(d.config.angle_mode));
  w.u32(static_cast<std::uint32_t>(d.config.gain_model));
  w.f64(d.floor);
  w.text(config_echo);
  w.close();
}

inline LoadedDataset load_dataset(const std::string& path) {
  detail::BinaryReader r(path);
  r.expect_header(kDatasetMagic);
  LoadedDataset out;
  ChannelDataset& d = out.data;
  d.config.num_antennas = r.count(detail::kMaxDim, "antenna count");
  d.config.num_paths = r.count(detail::kMaxDim, "path count");
  const std::uint64_t n = r.count(detail::kMaxDim, "sample count");
  d.n_train = r.u64();
  d.n_dev = r.u64();
  d.n_test = r.u64();
  if (d.n_train + d.n_dev + d.n_test != n) throw IoError(path + ": split sizes do not sum to the sample count");
  if (d.config.num_antennas == 0) throw IoError(path + ": zero antennas");
  d.samples.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(2 * d.config.num_antennas));
  r.f64s(d.samples);
  d.params.resize(n);
  for (auto& p : d.params) {
    p.min_nz = r.f64();
    p.max_nz = r.f64();
    p.floor = r.f64();
    p.zero_tol = r.f64();
    p.has_support = r.u32() != 0;
  }
  d.config.seed = r.u64();
  const std::uint32_t angle = r.u32();
  const std::uint32_t gain = r.u32();
  if (angle > 1 || gain > 1) throw IoError(path + ": unknown angle or gain model tag");
  d.config.angle_mode = static_cast<AngleMode>(angle);
  d.config.gain_model = static_cast<GainModel>(gain);
  d.floor = r.f64();
  out.config_echo = r.text();
  r.expect_end();
  return out;
}

// ---- measurement matrices ---------------------------------------------------

struct LoadedMatrix {
  MeasurementMatrix matrix;
  std::string config_echo;
};

inline void save_matrix(const std::string& path, const MeasurementMatrix& m, std::string_view config_echo = "{}") {
  detail::BinaryWriter w(path);
  w.magic(kMatrixMagic);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(m.kind));
  w.u64(static_cast<std::uint64_t>(m.rows()));
  w.u64(static_cast<std::uint64_t>(m.cols()));
  w.u64(m.seed);
  w.u64(m.quantized_angles);
  w.f64s(m.data);
  w.text(config_echo);
  w.close();
}

inline LoadedMatrix load_matrix(const std::string& path) {
  detail::BinaryReader r(path);
  r.expect_header(kMatrixMagic);
  LoadedMatrix out;
  const std::uint32_t kind = r.u32();
  if (kind > static_cast<std::uint32_t>(MatrixKind::PhaseShifter)) throw IoError(path + ": unknown matrix kind tag");
  out.matrix.kind = static_cast<MatrixKind>(kind);
  const auto rows = r.count(detail::kMaxDim, "row count");
  const auto cols = r.count(detail::kMaxDim, "column count");
  out.matrix.seed = r.u64();
  out.matrix.quantized_angles = r.u64();
  out.matrix.data.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  r.f64s(out.matrix.data);
  out.config_echo = r.text();
  r.expect_end();
  return out;
}

// ---- model checkpoints ------------------------------------------------------

struct LoadedCheckpoint {
  L1aeModel model;
  std::uint64_t seed = 0;
  std::string config_echo;
};

inline void save_checkpoint(const std::string& path, const L1aeModel& model, std::uint64_t seed,
                            std::string_view config_echo = "{}") {
  model.validate();
  detail::BinaryWriter w(path);
  w.magic(kCheckpointMagic);
  w.u32(kFormatVersion);
  w.u64(static_cast<std::uint64_t>(model.measurements()));
  w.u64(static_cast<std::uint64_t>(model.input_dim()));
  w.u64(model.layers);
  w.f64(model.alpha);
  w.f64s(model.phi);
  for (const auto& p : model.bn) {
    w.f64(p.epsilon);
    w.f64(p.momentum);
    w.f64s(p.gamma.transpose());
    w.f64s(p.beta.transpose());
    w.f64s(p.running_mean.transpose());
    w.f64s(p.running_var.transpose());
  }
  w.u64(seed);
  w.text(config_echo);
  w.close();
}

/// The loaded model is in Infer mode.
inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  detail::BinaryReader r(path);
  r.expect_header(kCheckpointMagic);
  LoadedCheckpoint out;
  L1aeModel& model = out.model;
  const auto m = static_cast<Eigen::Index>(r.count(detail::kMaxDim, "measurement count"));
  const auto n = static_cast<Eigen::Index>(r.count(detail::kMaxDim, "input dimension"));
  model.layers = r.count(4096, "layer count");
  model.alpha = r.f64();
  model.phi.resize(m, n);
  r.f64s(model.phi);
  model.bn.resize(model.layers + 1);
  for (auto& p : model.bn) {
    p.epsilon = r.f64();
    p.momentum = r.f64();
    for (Vector* v : {&p.gamma, &p.beta, &p.running_mean, &p.running_var}) {
      v->resize(n);
      Eigen::Map<Eigen::RowVectorXd> row(v->data(), n);
      r.f64s(row);
    }
  }
  out.seed = r.u64();
  out.config_echo = r.text();
  r.expect_end();
  model.mode = Mode::Infer;
  try {
    model.validate();
  } catch (const ConfigError& e) {
    throw IoError(path + ": " + e.what());
  }
  return out;
}

// ---- text exports -----------------------------------------------------------

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::ofstream open_text(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  return out;
}

inline void finish_text(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw IoError("write to " + path + " failed");
}

template <class Derived>
void write_rows(std::ostream& out, const Eigen::DenseBase<Derived>& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

inline Json vector_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vector_json(m.row(i).transpose()));
  return rows;
}

inline Json parse_echo(const std::string& echo) {
  try {
    return Json::parse(echo);
  } catch (const nlohmann::json::parse_error&) {
    return echo;
  }
}

} // namespace detail

/// One sample per row; `split` column marks train/dev/test.
inline void write_dataset_csv(const std::string& path, const ChannelDataset& d) {
  auto out = detail::open_text(path);
  out << "index,split";
  for (std::size_t j = 0; j < d.dimension(); ++j) out << ",x" << j;
  out << '\n';
  for (std::size_t i = 0; i < d.size(); ++i) {
    const char* split = i < d.n_train ? "train" : i < d.n_train + d.n_dev ? "dev" : "test";
    out << i << ',' << split;
    for (Eigen::Index j = 0; j < d.samples.cols(); ++j) out << ',' << format_double(d.samples(static_cast<Eigen::Index>(i), j));
    out << '\n';
  }
  detail::finish_text(out, path);
}

/// m rows, n_cols columns, no header.
inline void write_matrix_csv(const std::string& path, const Matrix& m) {
  auto out = detail::open_text(path);
  detail::write_rows(out, m);
  detail::finish_text(out, path);
}

inline void write_training_csv(const std::string& path, const TrainReport& report) {
  auto out = detail::open_text(path);
  out << "epoch,train_loss,dev_loss,seconds\n";
  out << "0,," << format_double(report.initial_dev_loss) << ",0\n";
  for (const auto& e : report.epochs) {
    out << e.epoch << ',' << format_double(e.train_loss) << ',' << (std::isnan(e.dev_loss) ? "" : format_double(e.dev_loss))
        << ',' << format_double(e.seconds) << '\n';
  }
  detail::finish_text(out, path);
}

inline Json dataset_json(const ChannelDataset& d, const std::string& echo) {
  Json params = Json::array();
  for (const auto& p : d.params)
    params.push_back({{"min_nz", p.min_nz}, {"max_nz", p.max_nz}, {"floor", p.floor}, {"zero_tol", p.zero_tol},
                      {"has_support", p.has_support}});
  return Json{{"format", "dataset"},
              {"num_antennas", d.config.num_antennas},
              {"num_paths", d.config.num_paths},
              {"num_samples", d.size()},
              {"split", {d.n_train, d.n_dev, d.n_test}},
              {"seed", d.config.seed},
              {"floor", d.floor},
              {"config", detail::parse_echo(echo)},
              {"params", params},
              {"samples", detail::matrix_json(d.samples)}};
}

inline Json matrix_json(const MeasurementMatrix& m, const std::string& echo) {
  return Json{{"format", "matrix"},
              {"kind", std::string(to_string(m.kind))},
              {"rows", m.rows()},
              {"cols", m.cols()},
              {"seed", m.seed},
              {"quantized_angles", m.quantized_angles},
              {"config", detail::parse_echo(echo)},
              {"data", detail::matrix_json(m.data)}};
}

inline Json checkpoint_json(const L1aeModel& model, std::uint64_t seed, const std::string& echo) {
  Json bn = Json::array();
  for (const auto& p : model.bn) {
    bn.push_back({{"epsilon", p.epsilon},
                  {"momentum", p.momentum},
                  {"gamma", detail::vector_json(p.gamma)},
                  {"beta", detail::vector_json(p.beta)},
                  {"running_mean", detail::vector_json(p.running_mean)},
                  {"running_var", detail::vector_json(p.running_var)}});
  }
  return Json{{"format", "checkpoint"},
              {"m", model.measurements()},
              {"n_cols", model.input_dim()},
              {"layers", model.layers},
              {"alpha", model.alpha},
              {"seed", seed},
              {"config", detail::parse_echo(echo)},
              {"phi", detail::matrix_json(model.phi)},
              {"batch_norm", bn}};
}

inline void write_json(const std::string& path, const Json& j) {
  auto out = detail::open_text(path);
  out << j.dump(2) << '\n';
  detail::finish_text(out, path);
}

// ---- sweep reports ----------------------------------------------------------

inline void write_sweep_csv(const std::string& path, const SweepReport& report) {
  auto out = detail::open_text(path);
  out << "kind,m,p,p_stderr,nrse,nrse_stderr,effective_rate,samples,seeds,solver_failures,zero_norm,status,diagnostic\n";
  for (const auto& r : report.rows) {
    std::string seeds;
    for (std::size_t i = 0; i < r.seeds.size(); ++i) seeds += (i ? ";" : "") + std::to_string(r.seeds[i]);
    std::string diag = r.diagnostic;
    for (char& c : diag)
      if (c == '"') c = '\'';
    out << to_string(r.kind) << ',' << r.m << ',' << format_double(r.p) << ',' << format_double(r.p_stderr) << ','
        << format_double(r.nrse) << ',' << format_double(r.nrse_stderr) << ',' << format_double(r.effective_rate) << ','
        << r.samples << ',' << seeds << ',' << r.solver_failures << ',' << r.zero_norm << ','
        << (r.errored ? "error" : "ok") << ",\"" << diag << "\"\n";
  }
  detail::finish_text(out, path);
}

/// Full report with config echo. Wall-clock times are left out so reruns are
/// byte-identical; they go to the log instead.
inline Json sweep_json(const SweepReport& report, const Json& config) {
  Json rows = Json::array();
  for (const auto& r : report.rows) {
    auto num = [](double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); };
    rows.push_back({{"kind", std::string(to_string(r.kind))},
                    {"m", r.m},
                    {"p", num(r.p)},
                    {"p_stderr", num(r.p_stderr)},
                    {"nrse", num(r.nrse)},
                    {"nrse_stderr", num(r.nrse_stderr)},
                    {"effective_rate", num(r.effective_rate)},
                    {"samples", r.samples},
                    {"seeds", r.seeds},
                    {"solver_failures", r.solver_failures},
                    {"zero_norm", r.zero_norm},
                    {"errored", r.errored},
                    {"diagnostic", r.diagnostic}});
  }
  return Json{{"config", config}, {"rows", rows}, {"monotonicity_violations", report.monotonicity_violations}};
}

enum class FigureMetric { ExactRecovery, Nrse, EffectiveRate };

inline std::string_view to_string(FigureMetric metric) {
  switch (metric) {
  case FigureMetric::ExactRecovery: return "exact_recovery";
  case FigureMetric::Nrse: return "nrse";
  case FigureMetric::EffectiveRate: return "effective_rate";
  }
  return "unknown";
}

/// x = m, one column per kind; empty cells mark gaps.
inline void write_figure_csv(const std::string& path, const SweepReport& report, FigureMetric metric) {
  std::vector<MatrixKind> kinds;
  std::vector<std::size_t> ms;
  for (const auto& r : report.rows) {
    if (std::find(kinds.begin(), kinds.end(), r.kind) == kinds.end()) kinds.push_back(r.kind);
    if (std::find(ms.begin(), ms.end(), r.m) == ms.end()) ms.push_back(r.m);
  }
  std::sort(ms.begin(), ms.end());
  auto out = detail::open_text(path);
  out << 'm';
  for (auto k : kinds) out << ',' << to_string(k);
  out << '\n';
  for (std::size_t m : ms) {
    out << m;
    for (auto k : kinds) {
      out << ',';
      for (const auto& r : report.rows) {
        if (r.kind != k || r.m != m || r.errored) continue;
        const double v = metric == FigureMetric::ExactRecovery ? r.p
                         : metric == FigureMetric::Nrse        ? r.nrse
                                                               : r.effective_rate;
        out << format_double(v);
      }
    }
    out << '\n';
  }
  detail::finish_text(out, path);
}

} // namespace l1ae
