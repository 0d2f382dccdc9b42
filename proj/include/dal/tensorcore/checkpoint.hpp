#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "dal/tensorcore/nn.hpp"
#include "dal/tensorcore/optim.hpp"

namespace dal::tc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::int64_t step = 0;
  double beta1_power = 1.0, beta2_power = 1.0;
  std::string config_json;
};

/// Writes parameters, buffers and (optionally) Adam moments as a versioned
/// little-endian binary file. Values round-trip exactly.
void save_checkpoint(const std::filesystem::path& path, const ParamStore<float>& store,
                     Adam<float>* optimizer, const CheckpointMeta& meta);

/// Loads into an already-constructed store. Every stored tensor must match a
/// tensor of the same name and shape; missing or extra names are errors.
CheckpointMeta load_checkpoint(const std::filesystem::path& path, ParamStore<float>& store,
                               Adam<float>* optimizer);

/// Reads only the header (step, config) without touching a model.
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

}  // namespace dal::tc
