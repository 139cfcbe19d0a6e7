#pragma once

// Plain-text run configuration: `[section]` headers, `key = value` lines,
// `#` or `;` comments. Lists are comma separated.
//
//   [system]   users, bs_antennas, user_antennas, pilot_length,
//              power_budgets, noise_variance
//   [training] step_size, batch_size, train_samples, test_samples, epochs,
//              snr_db, snr_offsets_db, seed, hidden_layers, hidden_width,
//              snr_mode (per_user_power | strict), sic_order
//              (descending_snr | comma list of 0-based users),
//              pilot_init (random | heuristic), chunk_size, threads,
//              divergence_factor
//   [baseline] snr_db (list), mc_samples, mode (both | fair | literal),
//              pilots (heuristic | orthogonal)
//   [sweep]    snr_list (list), retrain (true | false)
//
// Every error is reported as `path:line: message`.

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mumimo/errors.hpp"
#include "mumimo/mimo_model.hpp"
#include "mumimo/trainer.hpp"

namespace mumimo {

enum class BaselineMode { Both, Fair, Literal };
enum class BaselinePilots { Heuristic, Orthogonal };

struct BaselineOptions {
  std::vector<double> snr_db;  // empty: the training SNR
  std::size_t mc_samples = 100'000;
  BaselineMode mode = BaselineMode::Both;
  BaselinePilots pilots = BaselinePilots::Heuristic;
};

struct SweepOptions {
  std::vector<double> snr_list = {5.0, 15.0, 25.0};
  bool retrain = true;
};

struct RunConfig {
  SystemConfig system;
  TrainConfig training;
  BaselineOptions baseline;
  SweepOptions sweep;
};

class KeyValueFile {
 public:
  struct Entry {
    std::string value;
    int line = 0;
  };

  static KeyValueFile parse(std::istream& is, std::string origin) {
    KeyValueFile file;
    file.origin_ = std::move(origin);
    std::string raw;
    std::string section;
    int line = 0;
    while (std::getline(is, raw)) {
      ++line;
      const std::string text = trim(strip_comment(raw));
      if (text.empty()) continue;
      if (text.front() == '[') {
        if (text.back() != ']') file.fail(line, "unterminated section header");
        section = trim(text.substr(1, text.size() - 2));
        if (section.empty()) file.fail(line, "empty section name");
        continue;
      }
      const auto eq = text.find('=');
      if (eq == std::string::npos) file.fail(line, "expected 'key = value'");
      const std::string key = trim(text.substr(0, eq));
      if (key.empty()) file.fail(line, "missing key");
      const std::string full = section.empty() ? key : section + "." + key;
      if (file.entries_.count(full)) file.fail(line, "duplicate key '" + full + "'");
      file.entries_[full] = {trim(text.substr(eq + 1)), line};
    }
    return file;
  }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  [[noreturn]] void fail(int line, const std::string& message) const {
    throw ConfigError(origin_ + ":" + std::to_string(line) + ": " + message);
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second.value;
  }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    return convert<T>(it->second, key);
  }

  template <typename T>
  std::vector<T> get_list(const std::string& key, std::vector<T> fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    std::vector<T> out;
    std::stringstream ss(it->second.value);
    std::string item;
    while (std::getline(ss, item, ','))
      out.push_back(convert<T>({trim(item), it->second.line}, key));
    return out;
  }

  int line_of(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? 0 : it->second.line;
  }

 private:
  static std::string strip_comment(const std::string& s) {
    const auto pos = s.find_first_of("#;");
    return pos == std::string::npos ? s : s.substr(0, pos);
  }

  static std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
  }

  template <typename T>
  T convert(const Entry& e, const std::string& key) const {
    const std::string& v = e.value;
    T out{};
    if constexpr (std::is_same_v<T, bool>) {
      if (v == "true" || v == "1" || v == "yes") return true;
      if (v == "false" || v == "0" || v == "no") return false;
      fail(e.line, "'" + key + "' expects true or false, got '" + v + "'");
    } else {
      const char* begin = v.data();
      const char* end = v.data() + v.size();
      auto [ptr, ec] = std::from_chars(begin, end, out);
      if (v.empty() || ec != std::errc() || ptr != end)
        fail(e.line, "'" + key + "' has invalid value '" + v + "'");
      if constexpr (std::is_floating_point_v<T>)
        if (!std::isfinite(out)) fail(e.line, "'" + key + "' must be finite");
    }
    return out;
  }

  std::string origin_;
  std::map<std::string, Entry> entries_;
};

namespace detail {

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "system.users", "system.bs_antennas", "system.user_antennas", "system.pilot_length",
      "system.power_budgets", "system.noise_variance",
      "training.step_size", "training.batch_size", "training.train_samples",
      "training.test_samples", "training.epochs", "training.snr_db", "training.snr_offsets_db",
      "training.seed", "training.hidden_layers", "training.hidden_width", "training.snr_mode",
      "training.sic_order", "training.pilot_init", "training.chunk_size", "training.threads",
      "training.divergence_factor",
      "baseline.snr_db", "baseline.mc_samples", "baseline.mode", "baseline.pilots",
      "sweep.snr_list", "sweep.retrain"};
  return keys;
}

}  // namespace detail

/// Missing keys take the defaults of the experiment (K = 3, N = 4, M_k = 4,
/// L = 8, p_k = 1).
inline RunConfig parse_run_config(std::istream& is, const std::string& origin) {
  const KeyValueFile file = KeyValueFile::parse(is, origin);
  for (const auto& [key, entry] : file.entries())
    if (!detail::known_keys().count(key)) file.fail(entry.line, "unknown key '" + key + "'");

  RunConfig cfg;
  auto& sys = cfg.system;
  const auto antennas = file.get_list<int>("system.user_antennas", {});
  sys.users = file.get<int>("system.users", antennas.size() <= 1 ? 3 : static_cast<int>(antennas.size()));
  sys.bs_antennas = file.get<int>("system.bs_antennas", 4);
  sys.pilot_length = file.get<int>("system.pilot_length", 8);
  const int k = std::max(sys.users, 0);
  // A single value applies to every user.
  sys.user_antennas = antennas.empty() ? std::vector<int>(k, 4) : antennas;
  if (sys.user_antennas.size() == 1) sys.user_antennas.assign(k, sys.user_antennas.front());
  sys.power_budgets = file.get_list<double>("system.power_budgets", std::vector<double>(k, 1.0));
  if (sys.power_budgets.size() == 1) sys.power_budgets.assign(k, sys.power_budgets.front());
  sys.noise_variance = file.get<double>("system.noise_variance", 1.0);
  try {
    sys.validate();
  } catch (const ConfigError& e) {
    const int line = file.line_of("system.user_antennas") ? file.line_of("system.user_antennas")
                                                          : file.line_of("system.users");
    file.fail(line, e.what());
  }

  auto& tr = cfg.training;
  tr.step_size = file.get<double>("training.step_size", tr.step_size);
  tr.batch_size = file.get<int>("training.batch_size", tr.batch_size);
  tr.train_samples = file.get<std::size_t>("training.train_samples", tr.train_samples);
  tr.test_samples = file.get<std::size_t>("training.test_samples", tr.test_samples);
  tr.epochs = file.get<int>("training.epochs", tr.epochs);
  tr.snr_db = file.get<double>("training.snr_db", tr.snr_db);
  tr.snr_offsets_db = file.get_list<double>(
      "training.snr_offsets_db", sys.users == 3 ? tr.snr_offsets_db : std::vector<double>(k, 0.0));
  tr.seed = file.get<std::uint64_t>("training.seed", tr.seed);
  tr.hidden_layers = file.get<int>("training.hidden_layers", tr.hidden_layers);
  tr.hidden_width = file.get<int>("training.hidden_width", tr.hidden_width);
  tr.chunk_size = file.get<int>("training.chunk_size", tr.chunk_size);
  tr.threads = file.get<int>("training.threads", tr.threads);
  tr.divergence_factor = file.get<double>("training.divergence_factor", tr.divergence_factor);

  const std::string mode = file.get_string("training.snr_mode", "per_user_power");
  if (mode == "per_user_power")
    tr.snr_mode = SnrMode::PerUserPower;
  else if (mode == "strict")
    tr.snr_mode = SnrMode::StrictPaper;
  else
    file.fail(file.line_of("training.snr_mode"), "snr_mode must be per_user_power or strict");

  const std::string order = file.get_string("training.sic_order", "descending_snr");
  if (order != "descending_snr") tr.sic_order = file.get_list<int>("training.sic_order", {});

  const std::string init = file.get_string("training.pilot_init", "random");
  if (init == "random")
    tr.pilot_init = PilotInit::Random;
  else if (init == "heuristic")
    tr.pilot_init = PilotInit::Heuristic;
  else
    file.fail(file.line_of("training.pilot_init"), "pilot_init must be random or heuristic");

  try {
    tr.validate(sys);
  } catch (const ConfigError& e) {
    int line = 0;
    for (const auto& [key, entry] : file.entries())
      if (key.rfind("training.", 0) == 0) line = std::max(line, entry.line);
    file.fail(line, e.what());
  }

  auto& bl = cfg.baseline;
  bl.snr_db = file.get_list<double>("baseline.snr_db", {});
  bl.mc_samples = file.get<std::size_t>("baseline.mc_samples", bl.mc_samples);
  if (bl.mc_samples == 0) file.fail(file.line_of("baseline.mc_samples"), "mc_samples must be > 0");
  const std::string bmode = file.get_string("baseline.mode", "both");
  if (bmode == "both")
    bl.mode = BaselineMode::Both;
  else if (bmode == "fair")
    bl.mode = BaselineMode::Fair;
  else if (bmode == "literal")
    bl.mode = BaselineMode::Literal;
  else
    file.fail(file.line_of("baseline.mode"), "mode must be both, fair or literal");
  const std::string bpilots = file.get_string("baseline.pilots", "heuristic");
  if (bpilots == "heuristic")
    bl.pilots = BaselinePilots::Heuristic;
  else if (bpilots == "orthogonal")
    bl.pilots = BaselinePilots::Orthogonal;
  else
    file.fail(file.line_of("baseline.pilots"), "pilots must be heuristic or orthogonal");

  cfg.sweep.snr_list = file.get_list<double>("sweep.snr_list", cfg.sweep.snr_list);
  cfg.sweep.retrain = file.get<bool>("sweep.retrain", cfg.sweep.retrain);
  if (cfg.sweep.snr_list.empty()) file.fail(file.line_of("sweep.snr_list"), "snr_list is empty");
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  return parse_run_config(is, path);
}

}  // namespace mumimo
