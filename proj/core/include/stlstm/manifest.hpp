#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace stlstm {

// FNV-1a over a file's bytes, hex encoded; identifies inputs in manifests.
std::string file_hash(const std::filesystem::path& path);

// Written next to every command's primary output so a run can be reproduced
// from its recorded configuration.
struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
  std::string started_utc;
  std::string finished_utc;

  nlohmann::json to_json() const;
  // Writes to `<primary_output>.manifest.json`.
  void write(const std::filesystem::path& primary_output) const;
};

std::string utc_now();

}  // namespace stlstm
