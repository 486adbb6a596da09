#pragma once

// Text checkpoint of a trained variational network.
//
//   bpinn-checkpoint 1
//   hidden_layers <int>
//   hidden_width <int>
//   normalize_input <0|1>
//   t_max <hexfloat>
//   input_scale <hexfloat>
//   input_shift <hexfloat>
//   config_hash <16 hex digits>
//   param_count <int>
//   mu
//   <param_count hexfloats, one per line>
//   rho
//   <param_count hexfloats, one per line>
//   end
//
// Hexadecimal floats make the round trip bit-exact.

#include <cstdint>
#include <filesystem>
#include <string>

#include "bpinn/model/architecture.hpp"
#include "bpinn/model/variational.hpp"

namespace bpinn::model {

struct Checkpoint {
  Architecture arch;
  VariationalParams params;
  std::uint64_t config_hash = 0;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace bpinn::model
