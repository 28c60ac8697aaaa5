#include "stlstm/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

#include "stlstm/errors.hpp"
#include "stlstm/version.hpp"

namespace stlstm {

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot hash missing file: " + path.string());
  std::uint64_t h = 1469598103934665603ull;
  char buf[1 << 14];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (!in) break;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j;
  j["command"] = command;
  j["tool_version"] = kVersion;
  j["config"] = config;
  j["seed"] = seed;
  j["started_utc"] = started_utc;
  j["finished_utc"] = finished_utc;
  j["inputs"] = nlohmann::json::array();
  for (const auto& p : inputs)
    j["inputs"].push_back({{"path", p.string()}, {"fnv1a64", file_hash(p)}});
  j["outputs"] = nlohmann::json::array();
  for (const auto& p : outputs) j["outputs"].push_back(p.string());
  return j;
}

void RunManifest::write(const std::filesystem::path& primary_output) const {
  const auto path = primary_output.string() + ".manifest.json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write manifest: " + path);
  out << to_json().dump(2) << '\n';
}

}  // namespace stlstm
