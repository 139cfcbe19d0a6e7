#pragma once

// Run manifest: the fully resolved configuration plus mode flags. Its hash
// covers everything except timestamps, so identical runs share a hash.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <string>

#include <json.hpp>

#include "mumimo/config.hpp"

namespace mumimo {

inline constexpr const char* kCodeVersion = "0.1.0";

inline std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline const char* to_string(SnrMode m) {
  return m == SnrMode::PerUserPower ? "per_user_power" : "strict";
}
inline const char* to_string(PilotInit p) { return p == PilotInit::Random ? "random" : "heuristic"; }
inline const char* to_string(BaselineMode m) {
  switch (m) {
    case BaselineMode::Both: return "both";
    case BaselineMode::Fair: return "fair";
    case BaselineMode::Literal: return "literal";
  }
  return "both";
}

inline nlohmann::ordered_json system_json(const SystemConfig& s) {
  return {{"users", s.users},
          {"bs_antennas", s.bs_antennas},
          {"user_antennas", s.user_antennas},
          {"pilot_length", s.pilot_length},
          {"power_budgets", s.power_budgets},
          {"noise_variance", s.noise_variance},
          {"total_antennas", s.total_antennas}};
}

struct RunManifest {
  nlohmann::ordered_json content;
  std::string hash;

  nlohmann::ordered_json with_timestamps() const {
    auto out = content;
    out["manifest_hash"] = hash;
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    out["created_utc"] = buf;
    return out;
  }
};

inline RunManifest make_manifest(const std::string& command, const RunConfig& cfg) {
  const auto& t = cfg.training;
  nlohmann::ordered_json j;
  j["code_version"] = kCodeVersion;
  j["command"] = command;
  j["seed"] = t.seed;
  j["system"] = system_json(cfg.system);
  j["training"] = {{"step_size", t.step_size},
                   {"batch_size", t.batch_size},
                   {"train_samples", t.train_samples},
                   {"test_samples", t.test_samples},
                   {"epochs", t.epochs},
                   {"snr_db", t.snr_db},
                   {"snr_offsets_db", t.snr_offsets_db},
                   {"hidden_layers", t.hidden_layers},
                   {"hidden_width", t.hidden_width},
                   {"chunk_size", t.chunk_size},
                   {"divergence_factor", t.divergence_factor},
                   {"weight_init", "glorot_uniform"},
                   {"pilot_init", to_string(t.pilot_init)}};
  j["baseline"] = {{"snr_db", cfg.baseline.snr_db}, {"mc_samples", cfg.baseline.mc_samples}};
  j["sweep"] = {{"snr_list", cfg.sweep.snr_list}, {"retrain", cfg.sweep.retrain}};
  j["modes"] = {{"baseline_normalization", to_string(cfg.baseline.mode)},
                {"baseline_pilots", cfg.baseline.pilots == BaselinePilots::Heuristic ? "heuristic" : "orthogonal"},
                {"snr_mode", to_string(t.snr_mode)},
                {"sic_order", t.sic_order.empty() ? nlohmann::ordered_json("descending_snr")
                                                  : nlohmann::ordered_json(t.sic_order)}};
  return {j, fnv1a_hex(j.dump())};
}

}  // namespace mumimo
