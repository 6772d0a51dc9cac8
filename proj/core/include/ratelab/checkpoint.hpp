#pragma once

// Versioned binary container for networks, optimizer states and text blobs.
//
// Layout (all integers and floats little-endian):
//   magic    8 bytes  "RLABCKPT"
//   version  u32
//   count    u32      number of sections
//   section  u8 kind (1 network, 2 optimizer, 3 text), u32 name length, name,
//            then the payload:
//     network   u32 layers; per layer u32 rows, u32 cols, u8 activation,
//               f64[rows*cols] weights (row-major), f64[rows] bias
//     optimizer u64 step, f64 beta1, f64 beta2, f64 epsilon, u32 layers;
//               per layer u32 rows, u32 cols, then first-moment weights and
//               bias, then second-moment weights and bias (f64, row-major)
//     text      u64 length, bytes
// Sections are written in name order, so equal contents give equal bytes.

#include <filesystem>
#include <map>
#include <string>

#include "ratelab/neural.hpp"

namespace ratelab {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::map<std::string, DenseNetwork> networks;
  std::map<std::string, OptimizerState> optimizers;
  std::map<std::string, std::string> texts;

  std::string serialize() const;
  // Throws VersionMismatch for another format version, InvalidArgument for
  // corrupt data.
  static Checkpoint deserialize(const std::string& bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  bool operator==(const Checkpoint&) const = default;
};

}  // namespace ratelab
