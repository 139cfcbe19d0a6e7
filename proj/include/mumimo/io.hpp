#pragma once

// CSV exports. Numbers use 9 significant digits. Each file may start with a
// `# manifest <hash>` comment line naming the run that produced it.

#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mumimo/mimo_model.hpp"
#include "mumimo/trainer.hpp"

namespace mumimo {

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline void write_manifest_line(std::ostream& os, const std::string& manifest_hash) {
  if (!manifest_hash.empty()) os << "# manifest " << manifest_hash << '\n';
}

/// user,row,col,re,im (0-based indices).
inline void write_pilots_csv(std::ostream& os, std::span<const ComplexMatrix> pilots,
                             const std::string& manifest_hash = {}) {
  write_manifest_line(os, manifest_hash);
  os << "user,row,col,re,im\n";
  for (std::size_t k = 0; k < pilots.size(); ++k)
    for (Eigen::Index c = 0; c < pilots[k].cols(); ++c)
      for (Eigen::Index r = 0; r < pilots[k].rows(); ++r)
        os << k << ',' << r << ',' << c << ',' << format_number(pilots[k](r, c).real()) << ','
           << format_number(pilots[k](r, c).imag()) << '\n';
}

/// sample,user,element,re,im; estimates[s][k] is h_hat_k of sample s.
inline void write_estimates_csv(std::ostream& os,
                                const std::vector<std::vector<ComplexVector>>& estimates,
                                const std::string& manifest_hash = {}) {
  write_manifest_line(os, manifest_hash);
  os << "sample,user,element,re,im\n";
  for (std::size_t s = 0; s < estimates.size(); ++s)
    for (std::size_t k = 0; k < estimates[s].size(); ++k)
      for (Eigen::Index e = 0; e < estimates[s][k].size(); ++e)
        os << s << ',' << k << ',' << e << ',' << format_number(estimates[s][k](e).real()) << ','
           << format_number(estimates[s][k](e).imag()) << '\n';
}

/// One realization per row, interleaved (re, im). The header names every
/// column as <name><index>_re / <name><index>_im.
inline void write_samples_csv(std::ostream& os, const std::string& name,
                              std::span<const ComplexVector> rows,
                              const std::string& manifest_hash = {}) {
  write_manifest_line(os, manifest_hash);
  const Eigen::Index width = rows.empty() ? 0 : rows.front().size();
  for (Eigen::Index i = 0; i < width; ++i)
    os << (i ? "," : "") << name << i << "_re," << name << i << "_im";
  os << '\n';
  for (const auto& r : rows) {
    if (r.size() != width) throw DimensionError("write_samples_csv: rows differ in length");
    for (Eigen::Index i = 0; i < width; ++i)
      os << (i ? "," : "") << format_number(r(i).real()) << ',' << format_number(r(i).imag());
    os << '\n';
  }
}

/// epoch,train_mse,test_mse
inline void write_curves_csv(std::ostream& os, const TrainReport& report,
                             const std::string& manifest_hash = {}) {
  write_manifest_line(os, manifest_hash);
  os << "epoch,train_mse,test_mse\n";
  for (std::size_t e = 0; e < report.per_epoch_train_mse.size(); ++e)
    os << e + 1 << ',' << format_number(report.per_epoch_train_mse[e]) << ','
       << format_number(report.per_epoch_test_mse[e]) << '\n';
}

struct BaselineRow {
  double snr_db = 0.0;
  double mse_closed_form = 0.0;
  double mse_monte_carlo = 0.0;
  bool normalized = false;
  std::size_t samples = 0;
};

inline void write_baseline_csv(std::ostream& os, std::span<const BaselineRow> rows,
                               const std::string& manifest_hash = {}) {
  write_manifest_line(os, manifest_hash);
  os << "snr_db,mse_closed_form,mse_monte_carlo,normalized_flag,samples\n";
  for (const auto& r : rows)
    os << format_number(r.snr_db) << ',' << format_number(r.mse_closed_form) << ','
       << format_number(r.mse_monte_carlo) << ',' << (r.normalized ? 1 : 0) << ',' << r.samples << '\n';
}

inline void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows,
                            const std::string& manifest_hash = {}) {
  write_manifest_line(os, manifest_hash);
  os << "snr_db,mse_proposed,mse_lmmse_literal,mse_lmmse_fair\n";
  for (const auto& r : rows)
    os << format_number(r.snr_db) << ',' << format_number(r.mse_proposed) << ','
       << format_number(r.mse_lmmse_literal) << ',' << format_number(r.mse_lmmse_fair) << '\n';
}

}  // namespace mumimo
