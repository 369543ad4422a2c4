#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <variant>

#include "eq/equalizers.hpp"

namespace eq {

using EqualizerModel = std::variant<FirModel, VolterraModel, CnnModel>;

/// Provenance recorded next to every model.
struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::string rng_algorithm = Rng::kAlgorithm;
  std::uint64_t config_hash = 0;
  nlohmann::ordered_json extra;  // quantization formats, channel, notes
};

/// Versioned header (JSON) followed by a little-endian float64 parameter
/// blob. Identical model + meta produce identical bytes.
void save_checkpoint(const std::string& path, const EqualizerModel& model,
                     const CheckpointMeta& meta);

struct Checkpoint {
  EqualizerModel model;
  CheckpointMeta meta;
};
Checkpoint load_checkpoint(const std::string& path);

/// Human-readable dump of header and parameters for diffing.
void dump_checkpoint(const std::string& path, std::ostream& out);

}  // namespace eq
