#pragma once

namespace stlstm {

inline constexpr const char* kVersion = "0.1.0";

// Checkpoint container format revision. Loaders reject anything else.
inline constexpr int kCheckpointVersion = 1;

}  // namespace stlstm
