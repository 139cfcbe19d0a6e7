// Command-line front end.
//
//   mumimo baseline --config run.ini [--fair-baseline] [--seed N] [--out DIR]
//   mumimo train    --config run.ini [--strict-paper] [--seed N] [--out DIR]
//   mumimo sweep    --config run.ini [--snr-list 5,15,25] [--out DIR]
//   mumimo verify   [--samples N]
//   mumimo evaluate --config run.ini --checkpoint ckpt.bin
//   mumimo samples  --config run.ini --count N [--out DIR]
//
// Exit codes: 0 success, 2 configuration error, 3 divergence,
// 4 verification failure, 1 anything else.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mumimo/checkpoint.hpp"
#include "mumimo/config.hpp"
#include "mumimo/io.hpp"
#include "mumimo/lmmse.hpp"
#include "mumimo/manifest.hpp"
#include "mumimo/trainer.hpp"
#include "mumimo/verify.hpp"

namespace fs = std::filesystem;
using namespace mumimo;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitVerify = 4;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string snr_list;
  bool strict_paper = false;
  bool fair_baseline = false;
  std::string out = ".";
  std::size_t verify_samples = 10'000;
  bool corrupt_tying = false;
  std::string checkpoint;
  std::size_t count = 100;
};

std::vector<double> parse_snr_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--snr-list: '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw ConfigError("--snr-list is empty");
  return out;
}

RunConfig resolve_config(const Options& opt) {
  if (opt.config.empty()) throw ConfigError("--config PATH is required");
  if (!fs::exists(opt.config)) throw ConfigError("config file not found: " + opt.config);
  RunConfig cfg = load_run_config(opt.config);
  if (opt.seed) cfg.training.seed = *opt.seed;
  if (opt.strict_paper) {
    cfg.training.snr_mode = SnrMode::StrictPaper;
    cfg.training.snr_offsets_db.clear();
  }
  if (opt.fair_baseline) cfg.baseline.mode = BaselineMode::Fair;
  if (!opt.snr_list.empty()) cfg.sweep.snr_list = parse_snr_list(opt.snr_list);
  return cfg;
}

fs::path out_dir(const Options& opt) {
  fs::path dir(opt.out);
  fs::create_directories(dir);
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

void write_manifest(const fs::path& dir, const RunManifest& manifest) {
  open_out(dir / "manifest.json") << manifest.with_timestamps().dump(2) << '\n';
}

int cmd_baseline(const Options& opt) {
  const RunConfig cfg = resolve_config(opt);
  const RunManifest manifest = make_manifest("baseline", cfg);
  std::vector<double> snrs = cfg.baseline.snr_db;
  if (snrs.empty()) snrs.push_back(cfg.training.snr_db);

  std::vector<BaselineRow> rows;
  for (double snr : snrs) {
    const SystemConfig sys = realize_snr(cfg.system, cfg.training, snr);
    const auto cov = identity_covariances(sys);
    const ComplexMatrix cz =
        sys.noise_variance * ComplexMatrix::Identity(sys.observation_length(), sys.observation_length());
    std::vector<bool> modes;
    if (cfg.baseline.pilots == BaselinePilots::Orthogonal)
      modes = {true};
    else if (cfg.baseline.mode == BaselineMode::Both)
      modes = {false, true};
    else
      modes = {cfg.baseline.mode == BaselineMode::Fair};
    for (bool normalized : modes) {
      const auto pilots = cfg.baseline.pilots == BaselinePilots::Orthogonal
                              ? orthogonal_pilots(sys)
                              : heuristic_pilots(sys, normalized);
      const LmmseEstimator est = build_lmmse(pilots, cov, cz);
      BaselineRow row;
      row.snr_db = snr;
      row.mse_closed_form = lmmse_mse(pilots, cov, cz);
      row.mse_monte_carlo =
          lmmse_mse_monte_carlo(est, pilots, sys, cov, cfg.baseline.mc_samples, cfg.training.seed);
      row.normalized = normalized;
      row.samples = cfg.baseline.mc_samples;
      rows.push_back(row);
    }
  }
  const fs::path dir = out_dir(opt);
  auto os = open_out(dir / "baseline.csv");
  write_baseline_csv(os, rows, manifest.hash);
  write_baseline_csv(std::cout, rows);
  write_manifest(dir, manifest);
  return 0;
}

nlohmann::ordered_json baseline_json(const std::optional<BaselineResult>& b) {
  if (!b) return nullptr;
  return {{"closed_form", b->closed_form}, {"monte_carlo", b->monte_carlo}};
}

void write_train_outputs(const fs::path& dir, const RunConfig& cfg, const RunManifest& manifest,
                         const TrainReport& report, const JointModel* model) {
  {
    auto os = open_out(dir / "curves.csv");
    write_curves_csv(os, report, manifest.hash);
  }
  {
    auto os = open_out(dir / "pilots.csv");
    write_pilots_csv(os, report.final_pilots, manifest.hash);
  }
  nlohmann::ordered_json j;
  j["manifest_hash"] = manifest.hash;
  j["metadata"] = {{"code_version", kCodeVersion},
                   {"seed", cfg.training.seed},
                   {"realized_system", system_json(report.system)},
                   {"batch_size", cfg.training.batch_size},
                   {"step_size", cfg.training.step_size},
                   {"weight_init", "glorot_uniform"},
                   {"pilot_init", to_string(cfg.training.pilot_init)},
                   {"snr_mode", to_string(cfg.training.snr_mode)},
                   {"steps", report.steps}};
  if (model) j["metadata"]["sic_order"] = model->sic_order;
  j["per_epoch_train_mse"] = report.per_epoch_train_mse;
  j["per_epoch_test_mse"] = report.per_epoch_test_mse;
  j["initial_test_mse"] = report.initial_test_mse;
  j["baseline_fair"] = baseline_json(report.baseline_fair);
  j["baseline_literal"] = baseline_json(report.baseline_literal);
  std::vector<double> energies;
  for (const auto& p : report.final_pilots) energies.push_back(pilot_energy(p));
  j["final_pilot_energy"] = energies;
  j["wall_time_s"] = report.wall_time_s;
  open_out(dir / "report.json") << j.dump(2) << '\n';
  write_manifest(dir, manifest);
}

/// First few test samples pushed through the trained chain.
std::vector<std::vector<ComplexVector>> sample_estimates(const JointModel& model, const SystemConfig& sys,
                                                         const TrainConfig& tc, std::size_t count) {
  SampleSet test(sys, identity_covariances(sys), tc.seed, Stream::Test, count, static_cast<Eigen::Index>(count));
  const Batch batch = test.batch(0);
  Tape tape(model.params);
  const ForwardGraph graph = record_forward(model, batch, 1.0, tape);
  std::vector<std::vector<ComplexVector>> out(batch.size());
  for (Eigen::Index s = 0; s < batch.size(); ++s)
    for (int k = 0; k < sys.users; ++k) out[s].push_back(unpack(tape.value(graph.sic.estimates[k]).col(s)));
  return out;
}

int cmd_train(const Options& opt) {
  const RunConfig cfg = resolve_config(opt);
  const RunManifest manifest = make_manifest("train", cfg);
  const fs::path dir = out_dir(opt);
  TrainHooks hooks;
  hooks.on_epoch = [](int epoch, const TrainReport& r) {
    std::cerr << "epoch " << epoch << ": train " << format_number(r.per_epoch_train_mse.back())
              << ", test " << format_number(r.per_epoch_test_mse.back()) << '\n';
  };
  try {
    const SystemConfig sys = realize_snr(cfg.system, cfg.training);
    const TrainResult result = train_realized(sys, cfg.training, {}, hooks);
    write_train_outputs(dir, cfg, manifest, result.report, &result.model);
    Checkpoint ck{sys, cfg.training.seed, cfg.training.hidden_layers, cfg.training.hidden_width, result.model};
    save_checkpoint((dir / "checkpoint.bin").string(), ck);
    if (cfg.training.test_samples > 0) {
      auto os = open_out(dir / "estimates.csv");
      write_estimates_csv(os, sample_estimates(result.model, sys, cfg.training,
                                               std::min<std::size_t>(8, cfg.training.test_samples)),
                          manifest.hash);
    }
    std::cout << "initial test MSE " << format_number(result.report.initial_test_mse) << '\n';
    if (!result.report.per_epoch_test_mse.empty())
      std::cout << "final test MSE " << format_number(result.report.per_epoch_test_mse.back()) << '\n';
    if (result.report.baseline_fair)
      std::cout << "LMMSE (budget-fair) MSE " << format_number(result.report.baseline_fair->monte_carlo) << '\n';
    if (result.report.baseline_literal)
      std::cout << "LMMSE (literal) MSE " << format_number(result.report.baseline_literal->monte_carlo) << '\n';
    std::cout << "outputs written to " << dir.string() << '\n';
  } catch (const DivergenceError& e) {
    write_train_outputs(dir, cfg, manifest, e.report(), nullptr);
    std::cerr << "error: " << e.what() << '\n';
    return kExitDivergence;
  }
  return 0;
}

int cmd_sweep(const Options& opt) {
  const RunConfig cfg = resolve_config(opt);
  const RunManifest manifest = make_manifest("sweep", cfg);
  TrainHooks hooks;
  hooks.on_epoch = [](int epoch, const TrainReport& r) {
    std::cerr << "  epoch " << epoch << ": train " << format_number(r.per_epoch_train_mse.back()) << '\n';
  };
  try {
    const auto rows = snr_sweep(cfg.system, cfg.training, cfg.sweep.snr_list, cfg.sweep.retrain, hooks);
    const fs::path dir = out_dir(opt);
    auto os = open_out(dir / "sweep.csv");
    write_sweep_csv(os, rows, manifest.hash);
    write_sweep_csv(std::cout, rows);
    write_manifest(dir, manifest);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDivergence;
  }
  return 0;
}

int cmd_verify(const Options& opt) {
  VerifyOptions vo;
  vo.mc_samples = opt.verify_samples;
  vo.corrupt_tying = opt.corrupt_tying;
  bool ok = true;
  for (const auto& r : run_verification(vo)) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
    ok = ok && r.passed;
  }
  if (!ok) {
    std::cout << "verification failed\n";
    return kExitVerify;
  }
  return 0;
}

int cmd_evaluate(const Options& opt) {
  const RunConfig cfg = resolve_config(opt);
  const Checkpoint ck = load_checkpoint(opt.checkpoint);
  const SystemConfig sys = realize_snr(cfg.system, cfg.training);
  if (sys.users != ck.system.users || sys.bs_antennas != ck.system.bs_antennas ||
      sys.pilot_length != ck.system.pilot_length || sys.user_antennas != ck.system.user_antennas)
    throw ConfigError("checkpoint shapes do not match the configuration");
  SampleSet test(sys, identity_covariances(sys), cfg.training.seed, Stream::Test, cfg.training.test_samples, 1000);
  std::cout << "test MSE " << format_number(evaluate(ck.model, test)) << '\n';
  return 0;
}

int cmd_samples(const Options& opt) {
  const RunConfig cfg = resolve_config(opt);
  const RunManifest manifest = make_manifest("samples", cfg);
  const SystemConfig sys = realize_snr(cfg.system, cfg.training);
  ChannelSampler sampler(sys, identity_covariances(sys));
  Rng rng = make_rng(cfg.training.seed, Stream::Samples);
  ComplexNormal normal;
  std::vector<ComplexVector> channels, noise;
  for (std::size_t i = 0; i < opt.count; ++i) {
    channels.push_back(sampler(rng).stacked);
    ComplexVector z(sys.observation_length());
    for (auto& v : z) v = normal(rng, sys.noise_variance);
    noise.push_back(z);
  }
  const fs::path dir = out_dir(opt);
  auto cs = open_out(dir / "channels.csv");
  write_samples_csv(cs, "g", channels, manifest.hash);
  auto ns = open_out(dir / "noise.csv");
  write_samples_csv(ns, "z", noise, manifest.hash);
  write_manifest(dir, manifest);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint pilot design and channel estimation for uplink multiuser MIMO"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&opt](CLI::App* sub) {
    sub->add_option("--config", opt.config, "Run configuration file");
    sub->add_option("--seed", opt.seed, "Override the configured seed");
    sub->add_flag("--strict-paper", opt.strict_paper, "Equal budgets, one noise level, no SNR offsets");
    sub->add_option("--out", opt.out, "Output directory");
  };

  auto* baseline = app.add_subcommand("baseline", "LMMSE baseline MSE table");
  add_common(baseline);
  baseline->add_flag("--fair-baseline", opt.fair_baseline, "Only the budget-normalized heuristic pilots");

  auto* train_cmd = app.add_subcommand("train", "Train pilots and estimators jointly");
  add_common(train_cmd);

  auto* sweep = app.add_subcommand("sweep", "Train and compare across SNR points");
  add_common(sweep);
  sweep->add_option("--snr-list", opt.snr_list, "Comma-separated SNR values in dB");
  sweep->add_flag("--fair-baseline", opt.fair_baseline, "Accepted for symmetry; both baselines are always listed");

  auto* verify = app.add_subcommand("verify", "Run the fast oracle suite");
  verify->add_option("--samples", opt.verify_samples, "Monte-Carlo samples (tolerance scales as 1/sqrt)")
      ->check(CLI::PositiveNumber);
  verify->add_flag("--corrupt-tying", opt.corrupt_tying, "Fault injection: break one tied pilot entry")
      ->group("");

  auto* eval = app.add_subcommand("evaluate", "Test MSE of a saved checkpoint");
  add_common(eval);
  eval->add_option("--checkpoint", opt.checkpoint, "Checkpoint file")->required();

  auto* samples = app.add_subcommand("samples", "Export channel and noise samples as CSV");
  add_common(samples);
  samples->add_option("--count", opt.count, "Number of realizations")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*baseline) return cmd_baseline(opt);
    if (*train_cmd) return cmd_train(opt);
    if (*sweep) return cmd_sweep(opt);
    if (*verify) return cmd_verify(opt);
    if (*eval) return cmd_evaluate(opt);
    if (*samples) return cmd_samples(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
