#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>

#include "fedrec/federation.hpp"

namespace fedrec {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary checkpoint of a TrainState: global parameters, server optimizer
/// moments, every client's embedding and optimizer moments. Doubles are stored
/// as their IEEE-754 bit patterns in little-endian order, so a save/load cycle
/// is bit-exact.
///
/// Layout: magic "FEDRECCK", u32 version, then length-prefixed sections.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(std::ostream& out, const TrainState& state);
void save_checkpoint(const std::filesystem::path& path, const TrainState& state);
TrainState load_checkpoint(std::istream& in);
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace fedrec
