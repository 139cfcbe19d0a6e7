#include <gtest/gtest.h>

#include <sstream>
#include <string>

#include "mumimo/checkpoint.hpp"
#include "mumimo/config.hpp"
#include "mumimo/io.hpp"
#include "mumimo/manifest.hpp"
#include "mumimo/verify.hpp"

using namespace mumimo;

namespace {

RunConfig parse(const std::string& text) {
  std::istringstream is(text);
  return parse_run_config(is, "test.ini");
}

std::string config_error(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(RunConfig, DefaultsDescribeTheExperiment) {
  const RunConfig cfg = parse("");
  EXPECT_EQ(cfg.system.users, 3);
  EXPECT_EQ(cfg.system.bs_antennas, 4);
  EXPECT_EQ(cfg.system.user_antennas, (std::vector<int>{4, 4, 4}));
  EXPECT_EQ(cfg.system.pilot_length, 8);
  EXPECT_EQ(cfg.system.total_antennas, 12);
  EXPECT_EQ(cfg.training.batch_size, 200);
  EXPECT_DOUBLE_EQ(cfg.training.step_size, 1e-3);
  EXPECT_EQ(cfg.training.hidden_layers, 5);
  EXPECT_EQ(cfg.training.hidden_width, 60);
  EXPECT_EQ(cfg.training.snr_offsets_db, (std::vector<double>{3, 0, -3}));
  EXPECT_EQ(cfg.sweep.snr_list, (std::vector<double>{5, 15, 25}));
}

TEST(RunConfig, ParsesSectionsListsAndComments) {
  const RunConfig cfg = parse(
      "# comment\n"
      "[system]\n"
      "users = 2 ; trailing\n"
      "bs_antennas = 3\n"
      "user_antennas = 1, 2\n"
      "pilot_length = 4\n"
      "power_budgets = 2\n"
      "[training]\n"
      "snr_offsets_db = 0, 0\n"
      "snr_mode = strict\n"
      "sic_order = 1, 0\n"
      "pilot_init = heuristic\n"
      "seed = 77\n"
      "[baseline]\n"
      "mode = fair\n"
      "pilots = orthogonal\n"
      "snr_db = 5, 10\n"
      "[sweep]\n"
      "retrain = false\n");
  EXPECT_EQ(cfg.system.users, 2);
  EXPECT_EQ(cfg.system.user_antennas, (std::vector<int>{1, 2}));
  EXPECT_EQ(cfg.system.power_budgets, (std::vector<double>{2, 2}));
  EXPECT_EQ(cfg.training.snr_mode, SnrMode::StrictPaper);
  EXPECT_EQ(cfg.training.sic_order, (std::vector<int>{1, 0}));
  EXPECT_EQ(cfg.training.pilot_init, PilotInit::Heuristic);
  EXPECT_EQ(cfg.training.seed, 77u);
  EXPECT_EQ(cfg.baseline.mode, BaselineMode::Fair);
  EXPECT_EQ(cfg.baseline.pilots, BaselinePilots::Orthogonal);
  EXPECT_EQ(cfg.baseline.snr_db, (std::vector<double>{5, 10}));
  EXPECT_FALSE(cfg.sweep.retrain);
}

TEST(RunConfig, ErrorsCarryLineNumbers) {
  EXPECT_EQ(config_error("[system]\nusers = two\n"), "test.ini:2: 'system.users' has invalid value 'two'");
  EXPECT_EQ(config_error("\n\n[training]\nbogus = 1\n"), "test.ini:4: unknown key 'training.bogus'");
  EXPECT_EQ(config_error("[system\n"), "test.ini:1: unterminated section header");
  EXPECT_EQ(config_error("[system]\nusers\n"), "test.ini:2: expected 'key = value'");
  EXPECT_EQ(config_error("[system]\nusers = 1\nusers = 2\n"), "test.ini:3: duplicate key 'system.users'");
  EXPECT_NE(config_error("[system]\nusers = 2\nuser_antennas = 1, 2, 3\n").find("test.ini:3:"), std::string::npos);
  EXPECT_NE(config_error("[training]\nsnr_mode = loud\n").find("test.ini:2:"), std::string::npos);
  EXPECT_NE(config_error("[training]\nbatch_size = 0\n").find("test.ini:2:"), std::string::npos);
  EXPECT_NE(config_error("[sweep]\nretrain = maybe\n").find("test.ini:2:"), std::string::npos);
  EXPECT_NE(config_error("[training]\nstep_size = inf\n").find("finite"), std::string::npos);
}

TEST(RunConfig, MissingFileNamesPath) {
  try {
    load_run_config("/nonexistent/run.ini");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/run.ini"), std::string::npos);
  }
}

TEST(FormatNumber, NineSignificantDigits) {
  EXPECT_EQ(format_number(1.0 / 3.0), "0.333333333");
  EXPECT_EQ(format_number(32.0018086123), "32.0018086");
  EXPECT_EQ(format_number(3.953e-4), "0.0003953");
  EXPECT_EQ(format_number(0.0), "0");
}

TEST(CsvWriters, LayoutAndManifestLine) {
  ComplexMatrix x(1, 2);
  x << Complex(1, -1), Complex(0.5, 0);
  const std::vector<ComplexMatrix> pilots = {x};
  std::ostringstream os;
  write_pilots_csv(os, pilots, "abc");
  EXPECT_EQ(os.str(), "# manifest abc\nuser,row,col,re,im\n0,0,0,1,-1\n0,0,1,0.5,0\n");

  std::vector<BaselineRow> rows = {{25, 32.0, 31.9, true, 100}};
  std::ostringstream bs;
  write_baseline_csv(bs, rows);
  EXPECT_EQ(bs.str(), "snr_db,mse_closed_form,mse_monte_carlo,normalized_flag,samples\n25,32,31.9,1,100\n");

  std::vector<SweepRow> sweep = {{5, 10, 11, 12}};
  std::ostringstream ss;
  write_sweep_csv(ss, sweep, "h");
  EXPECT_EQ(ss.str(), "# manifest h\nsnr_db,mse_proposed,mse_lmmse_literal,mse_lmmse_fair\n5,10,11,12\n");

  TrainReport report;
  std::ostringstream cs;
  write_curves_csv(cs, report);
  EXPECT_EQ(cs.str(), "epoch,train_mse,test_mse\n");

  std::vector<ComplexVector> samples = {ComplexVector::Ones(1), ComplexVector::Ones(2)};
  std::ostringstream xs;
  EXPECT_THROW(write_samples_csv(xs, "g", samples), DimensionError);
}

TEST(Manifest, HashIgnoresTimestampsAndTracksConfig) {
  const RunConfig a = parse("");
  RunConfig b = a;
  const auto ma = make_manifest("train", a);
  EXPECT_EQ(ma.hash, make_manifest("train", a).hash);
  EXPECT_EQ(ma.hash.size(), 16u);
  EXPECT_TRUE(ma.with_timestamps().contains("created_utc"));
  b.training.seed = 2;
  EXPECT_NE(make_manifest("train", b).hash, ma.hash);
  EXPECT_NE(make_manifest("sweep", a).hash, ma.hash);
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto sys = SystemConfig::make(2, {2, 1}, 3, {1.5, 0.7}, 0.1);
  TrainConfig cfg;
  cfg.hidden_layers = 2;
  cfg.hidden_width = 7;
  cfg.snr_offsets_db = {0, 0};
  cfg.seed = 11;
  Checkpoint ck{sys, cfg.seed, cfg.hidden_layers, cfg.hidden_width, make_model(sys, cfg)};
  ck.model.params.value(0)(0, 0) = 0.123456789012345678;
  std::stringstream buf;
  write_checkpoint(buf, ck);
  const Checkpoint back = read_checkpoint(buf);
  EXPECT_TRUE(back.model.params == ck.model.params);
  EXPECT_EQ(back.model.sic_order, ck.model.sic_order);
  EXPECT_EQ(back.system.power_budgets, sys.power_budgets);
  EXPECT_EQ(back.system.noise_variance, sys.noise_variance);
  EXPECT_EQ(back.seed, 11u);
}

TEST(Checkpoint, RejectsCorruptInput) {
  std::stringstream bad("NOTACHECKPOINT");
  EXPECT_THROW(read_checkpoint(bad), CheckpointError);

  const auto sys = SystemConfig::make(1, {1}, 1, {1}, 1);
  TrainConfig cfg;
  cfg.snr_offsets_db.clear();
  cfg.hidden_layers = 1;
  cfg.hidden_width = 2;
  Checkpoint ck{sys, 1, 1, 2, make_model(sys, cfg)};
  std::stringstream buf;
  write_checkpoint(buf, ck);
  std::string bytes = buf.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_checkpoint(truncated), CheckpointError);
  EXPECT_THROW(load_checkpoint("/nonexistent/ck.bin"), CheckpointError);
}

TEST(Verify, FreshBuildPassesEveryProperty) {
  for (const auto& r : run_verification()) EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
}

TEST(Verify, CorruptedTyingFailsOnlyTying) {
  VerifyOptions opt;
  opt.corrupt_tying = true;
  for (const auto& r : run_verification(opt)) EXPECT_EQ(r.passed, r.name != "tying_structure") << r.name;
}

TEST(Verify, ReducedSamplesLoosenTolerance) {
  VerifyOptions opt;
  opt.mc_samples = 1000;
  const PropertyResult r = check_lmmse_monte_carlo(opt);
  EXPECT_TRUE(r.passed) << r.detail;
  EXPECT_NE(r.detail.find("tol 0.2"), std::string::npos) << r.detail;
}
