#pragma once

// Binary checkpoint of a JointModel. All integers and doubles are
// little-endian.
//
//   char[8]  magic "MUMIMOCK"
//   u32      format version (1)
//   u32      neural core version, u32 pilot net version, u32 estimator version
//   u64      seed
//   i32      K, N, L
//   i32[K]   M_k
//   f64[K]   p_k
//   f64      noise variance
//   i32      hidden layers, hidden width
//   i32[K]   SIC order
//   u32      parameter count
//   per parameter, in registry order:
//     u32 name length, name bytes, u32 rows, u32 cols, f64[rows*cols] column-major
//
// Pilot parameters are packed vec(X_k) as [Re; Im]; estimator inputs and
// outputs use the same packing.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "mumimo/trainer.hpp"

namespace mumimo {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'M', 'U', 'M', 'I', 'M', 'O', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kNeuralCoreVersion = 1;
inline constexpr std::uint32_t kPilotNetVersion = 1;
inline constexpr std::uint32_t kEstimatorVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  SystemConfig system;
  std::uint64_t seed = 0;
  int hidden_layers = 0;
  int hidden_width = 0;
  JointModel model;
};

namespace detail {

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw CheckpointError("checkpoint truncated");
  return v;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  using detail::put;
  const auto& sys = ck.system;
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint32_t>(os, kNeuralCoreVersion);
  put<std::uint32_t>(os, kPilotNetVersion);
  put<std::uint32_t>(os, kEstimatorVersion);
  put<std::uint64_t>(os, ck.seed);
  put<std::int32_t>(os, sys.users);
  put<std::int32_t>(os, sys.bs_antennas);
  put<std::int32_t>(os, sys.pilot_length);
  for (int m : sys.user_antennas) put<std::int32_t>(os, m);
  for (double p : sys.power_budgets) put<double>(os, p);
  put<double>(os, sys.noise_variance);
  put<std::int32_t>(os, ck.hidden_layers);
  put<std::int32_t>(os, ck.hidden_width);
  for (int u : ck.model.sic_order) put<std::int32_t>(os, u);
  const auto& params = ck.model.params.all();
  put<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p.value.rows()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p.value.cols()));
    os.write(reinterpret_cast<const char*>(p.value.data()),
             static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  }
  if (!os) throw CheckpointError("failed to write checkpoint");
}

/// Rebuilds the network structure from the header, then loads the arrays and
/// checks every name and shape against the rebuilt registry.
inline Checkpoint read_checkpoint(std::istream& is) {
  using detail::get;
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw CheckpointError("not a checkpoint file (bad magic)");
  if (get<std::uint32_t>(is) != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version");
  if (get<std::uint32_t>(is) != kNeuralCoreVersion || get<std::uint32_t>(is) != kPilotNetVersion ||
      get<std::uint32_t>(is) != kEstimatorVersion)
    throw CheckpointError("checkpoint written by incompatible module versions");

  Checkpoint ck;
  ck.seed = get<std::uint64_t>(is);
  auto& sys = ck.system;
  sys.users = get<std::int32_t>(is);
  sys.bs_antennas = get<std::int32_t>(is);
  sys.pilot_length = get<std::int32_t>(is);
  if (sys.users < 1 || sys.users > 4096) throw CheckpointError("implausible user count");
  for (int k = 0; k < sys.users; ++k) sys.user_antennas.push_back(get<std::int32_t>(is));
  for (int k = 0; k < sys.users; ++k) sys.power_budgets.push_back(get<double>(is));
  sys.noise_variance = get<double>(is);
  try {
    sys.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("invalid system in checkpoint: ") + e.what());
  }
  ck.hidden_layers = get<std::int32_t>(is);
  ck.hidden_width = get<std::int32_t>(is);

  TrainConfig shape;
  shape.hidden_layers = ck.hidden_layers;
  shape.hidden_width = ck.hidden_width;
  shape.seed = ck.seed;
  shape.snr_offsets_db.assign(sys.users, 0.0);
  for (int k = 0; k < sys.users; ++k) shape.sic_order.push_back(get<std::int32_t>(is));
  try {
    shape.validate(sys);
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("invalid network shape in checkpoint: ") + e.what());
  }
  ck.model = make_model(sys, shape);

  auto& params = ck.model.params.all();
  if (get<std::uint32_t>(is) != params.size()) throw CheckpointError("parameter count mismatch");
  for (auto& p : params) {
    const auto len = get<std::uint32_t>(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    const auto rows = get<std::uint32_t>(is);
    const auto cols = get<std::uint32_t>(is);
    if (name != p.name || rows != p.value.rows() || cols != p.value.cols())
      throw CheckpointError("parameter '" + name + "' does not match the expected '" + p.name + "'");
    is.read(reinterpret_cast<char*>(p.value.data()),
            static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    if (!is) throw CheckpointError("checkpoint truncated");
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open " + path + " for writing");
  write_checkpoint(os, ck);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path);
  return read_checkpoint(is);
}

}  // namespace mumimo
