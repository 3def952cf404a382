#pragma once

// Checkpoint container (little-endian):
//
//   "CEBCKPT\0" | u32 version | u64 config_hash
//   | u64 len | metadata JSON (len bytes)
//   | u64 n_tensors
//   | n_tensors x { u64 len | name | u64 rank | u64 dims[rank] | f64 data[numel] }
//
// The metadata holds the encoder spec, class count, objective, classifier
// head, target rho, schedule config and state, seed and step count. Nothing
// time- or host-dependent is written, so identical training runs produce
// identical bytes.

#include <cstdint>
#include <filesystem>

#include "ceb/objective.hpp"
#include "ceb/schedule.hpp"

namespace ceb {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct Checkpoint {
  CebModel model;
  Objective objective = Objective::Ceb;
  double rho = 0.0;
  RhoScheduleConfig schedule;
  RhoSchedule::State schedule_state;
  std::uint64_t seed = 0;
  std::size_t step = 0;
  std::uint64_t config_hash = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws io::FormatError for foreign files, truncation and version
/// mismatches, with a message naming the file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ceb
