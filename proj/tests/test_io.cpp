#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include <gtest/gtest.h>

#include "l1ae/io.hpp"

using namespace l1ae;
namespace fs = std::filesystem;

namespace {

class TempDir : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("l1ae_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << bytes;
}

ChannelDataset small_dataset() {
  ChannelConfig cfg;
  cfg.num_antennas = 8;
  cfg.num_paths = 2;
  cfg.seed = 5;
  return generate_dataset(cfg, 20);
}

} // namespace

using Io = TempDir;

TEST_F(Io, DatasetRoundTrip) {
  const ChannelDataset d = small_dataset();
  save_dataset(path("d.bcsl"), d, R"({"a":1})");
  const LoadedDataset back = load_dataset(path("d.bcsl"));
  EXPECT_TRUE(back.data.samples == d.samples);
  EXPECT_EQ(back.data.n_train, d.n_train);
  EXPECT_EQ(back.data.n_dev, d.n_dev);
  EXPECT_EQ(back.data.n_test, d.n_test);
  EXPECT_EQ(back.data.config.num_antennas, 8u);
  EXPECT_EQ(back.data.config.num_paths, 2u);
  EXPECT_EQ(back.data.config.seed, 5u);
  EXPECT_EQ(back.data.floor, d.floor);
  ASSERT_EQ(back.data.params.size(), d.params.size());
  for (std::size_t i = 0; i < d.params.size(); ++i) {
    EXPECT_EQ(back.data.params[i].min_nz, d.params[i].min_nz);
    EXPECT_EQ(back.data.params[i].max_nz, d.params[i].max_nz);
    EXPECT_EQ(back.data.params[i].has_support, d.params[i].has_support);
  }
  EXPECT_EQ(back.config_echo, R"({"a":1})");
  EXPECT_EQ(peek_magic(path("d.bcsl")), "BCSL");
}

TEST_F(Io, RewriteIsByteIdentical) {
  const ChannelDataset d = small_dataset();
  save_dataset(path("a.bcsl"), d);
  save_dataset(path("b.bcsl"), load_dataset(path("a.bcsl")).data);
  EXPECT_EQ(slurp(path("a.bcsl")), slurp(path("b.bcsl")));
  const MeasurementMatrix g = generate_baseline(MatrixKind::PhaseShifter, 6, 16, 2, 8);
  save_matrix(path("a.bcsm"), g, "{}");
  save_matrix(path("b.bcsm"), load_matrix(path("a.bcsm")).matrix, "{}");
  EXPECT_EQ(slurp(path("a.bcsm")), slurp(path("b.bcsm")));
}

TEST_F(Io, MatrixRoundTrip) {
  const MeasurementMatrix g = generate_baseline(MatrixKind::PhaseShifter, 6, 16, 2, 8);
  save_matrix(path("m.bcsm"), g);
  const LoadedMatrix back = load_matrix(path("m.bcsm"));
  EXPECT_TRUE(back.matrix.data == g.data);
  EXPECT_EQ(back.matrix.kind, MatrixKind::PhaseShifter);
  EXPECT_EQ(back.matrix.seed, 2u);
  EXPECT_EQ(back.matrix.quantized_angles, 8u);
}

TEST_F(Io, CheckpointRoundTrip) {
  Matrix phi = Matrix::Random(3, 10);
  L1aeModel model = make_model(phi, 2, 0.7);
  model.bn[1].gamma.setRandom();
  model.bn[2].running_var.setConstant(2.5);
  save_checkpoint(path("c.bcsw"), model, 9);
  const LoadedCheckpoint back = load_checkpoint(path("c.bcsw"));
  EXPECT_TRUE(back.model.phi == model.phi);
  EXPECT_EQ(back.model.alpha, 0.7);
  EXPECT_EQ(back.model.layers, 2u);
  EXPECT_TRUE(back.model.bn[1].gamma == model.bn[1].gamma);
  EXPECT_TRUE(back.model.bn[2].running_var == model.bn[2].running_var);
  EXPECT_EQ(back.model.mode, Mode::Infer);
  EXPECT_EQ(back.seed, 9u);
}

TEST_F(Io, WrongMagicRejected) {
  const MeasurementMatrix g = generate_baseline(MatrixKind::Gaussian, 4, 8, 0);
  save_matrix(path("m.bcsm"), g);
  EXPECT_THROW(load_dataset(path("m.bcsm")), IoError);
  EXPECT_THROW(load_checkpoint(path("m.bcsm")), IoError);
  std::string bytes = slurp(path("m.bcsm"));
  bytes[0] = 'X';
  spit(path("x.bcsm"), bytes);
  EXPECT_THROW(load_matrix(path("x.bcsm")), IoError);
}

TEST_F(Io, WrongVersionRejected) {
  save_matrix(path("m.bcsm"), generate_baseline(MatrixKind::Gaussian, 4, 8, 0));
  std::string bytes = slurp(path("m.bcsm"));
  bytes[4] = 2; // little-endian u32 after the magic
  spit(path("v.bcsm"), bytes);
  EXPECT_THROW(load_matrix(path("v.bcsm")), IoError);
}

TEST_F(Io, TruncationAndTrailingBytesRejected) {
  save_dataset(path("d.bcsl"), small_dataset());
  const std::string bytes = slurp(path("d.bcsl"));
  for (std::size_t cut : {std::size_t{2}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    spit(path("t.bcsl"), bytes.substr(0, cut));
    EXPECT_THROW(load_dataset(path("t.bcsl")), IoError) << "cut at " << cut;
  }
  spit(path("t.bcsl"), bytes + "x");
  EXPECT_THROW(load_dataset(path("t.bcsl")), IoError);
}

TEST_F(Io, HugeDimensionRejectedBeforeAllocation) {
  save_matrix(path("m.bcsm"), generate_baseline(MatrixKind::Gaussian, 4, 8, 0));
  std::string bytes = slurp(path("m.bcsm"));
  for (int i = 0; i < 8; ++i) bytes[12 + i] = '\xff'; // row count
  spit(path("h.bcsm"), bytes);
  EXPECT_THROW(load_matrix(path("h.bcsm")), IoError);
}

TEST_F(Io, MissingFile) {
  EXPECT_THROW(load_matrix(path("nope.bcsm")), IoError);
  EXPECT_THROW(peek_magic(path("nope.bcsm")), IoError);
}

TEST(Text, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 12345678.9, 0.0}) EXPECT_EQ(std::stod(format_double(v)), v);
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(std::nan("")), "nan");
}

TEST_F(Io, CsvShapes) {
  const ChannelDataset d = small_dataset();
  write_dataset_csv(path("d.csv"), d);
  std::ifstream in(path("d.csv"));
  std::string header, line;
  std::getline(in, header);
  EXPECT_EQ(header.rfind("index,split,x0,", 0), 0u);
  std::size_t lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, d.size());

  write_matrix_csv(path("m.csv"), Matrix::Identity(2, 3));
  EXPECT_EQ(slurp(path("m.csv")), "1,0,0\n0,1,0\n");
}

TEST_F(Io, SweepOutputsAreStable) {
  SweepReport report;
  SweepRow row;
  row.kind = MatrixKind::Gaussian;
  row.m = 20;
  row.p = 0.5;
  row.nrse = 0.25;
  row.effective_rate = 0.45;
  row.samples = 10;
  row.seeds = {0, 1};
  row.seconds = 3.0;
  report.rows.push_back(row);
  row.seconds = 7.0;
  SweepReport again = report;
  again.rows[0].seconds = 99.0;
  write_json(path("a.json"), sweep_json(report, Json::object()));
  write_json(path("b.json"), sweep_json(again, Json::object()));
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
  write_sweep_csv(path("s.csv"), report);
  EXPECT_NE(slurp(path("s.csv")).find("gaussian,20,0.5,0,0.25,0,0.45,10,0;1,0,0,ok,\"\""), std::string::npos);
  write_figure_csv(path("f.csv"), report, FigureMetric::ExactRecovery);
  EXPECT_EQ(slurp(path("f.csv")), "m,gaussian\n20,0.5\n");
}

TEST_F(Io, JsonExportsParse) {
  const MeasurementMatrix g = generate_baseline(MatrixKind::Bernoulli, 2, 4, 1);
  const Json j = matrix_json(g, R"({"seed":1})");
  EXPECT_EQ(j["kind"], "bernoulli");
  EXPECT_EQ(j["data"].size(), 2u);
  EXPECT_EQ(j["config"]["seed"], 1);
  EXPECT_EQ(j["data"][1][3].get<double>(), g.data(1, 3));
}
