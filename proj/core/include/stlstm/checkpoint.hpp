#pragma once

#include <filesystem>

#include "stlstm/model.hpp"

namespace stlstm {

// Self-describing container: one JSON header line (format, version, model
// config, parameter names and shapes) followed by each parameter's values as
// little-endian 64-bit floats in header order. Loading rejects unknown
// versions and any shape drift.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace stlstm
