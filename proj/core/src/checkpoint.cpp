#include "stlstm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "stlstm/version.hpp"

namespace stlstm {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is written as native little-endian doubles");

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  nlohmann::json header;
  header["format"] = "stlstm-checkpoint";
  header["version"] = kCheckpointVersion;
  header["config"] = params.config.to_json();
  nlohmann::json plist = nlohmann::json::array();
  const auto named = params.named_params();
  for (const auto& [name, t] : named) {
    nlohmann::json entry;
    entry["name"] = name;
    entry["shape"] = t.shape();
    plist.push_back(entry);
  }
  header["params"] = plist;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write checkpoint: " + path.string());
  out << header.dump() << '\n';
  for (const auto& [name, t] : named) {
    (void)name;
    const auto d = t.data();
    out.write(reinterpret_cast<const char*>(d.data()),
              static_cast<std::streamsize>(d.size() * sizeof(double)));
  }
  if (!out) throw UsageError("failed while writing checkpoint: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open checkpoint: " + path.string());
  std::string header_line;
  if (!std::getline(in, header_line))
    throw DataError("checkpoint has no header: " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint header is not valid JSON: " + std::string(e.what()));
  }
  if (header.value("format", "") != "stlstm-checkpoint")
    throw DataError("not a checkpoint file: " + path.string());
  const int version = header.value("version", -1);
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version) +
                    " (this build reads version " + std::to_string(kCheckpointVersion) + ")");

  ModelParams params = ModelParams::init(ModelConfig::from_json(header.at("config")), 0);
  auto named = params.named_params();
  const auto& plist = header.at("params");
  if (plist.size() != named.size())
    throw DataError("checkpoint lists " + std::to_string(plist.size()) + " parameters, model has " +
                    std::to_string(named.size()));
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& entry = plist.at(i);
    if (entry.at("name").get<std::string>() != named[i].first)
      throw DataError("checkpoint parameter " + std::to_string(i) + " is `" +
                      entry.at("name").get<std::string>() + "`, expected `" +
                      named[i].first + "`");
    const auto shape = entry.at("shape").get<Shape>();
    if (shape != named[i].second.shape())
      throw DataError("checkpoint parameter `" + named[i].first + "` has shape " +
                      shape_str(shape) + ", expected " + shape_str(named[i].second.shape()));
    Tensor t = named[i].second;
    auto dst = t.mutable_data();
    in.read(reinterpret_cast<char*>(dst.data()),
            static_cast<std::streamsize>(dst.size() * sizeof(double)));
    if (!in)
      throw DataError("checkpoint payload truncated at parameter `" + named[i].first + "`");
  }
  char extra;
  if (in.read(&extra, 1))
    throw DataError("checkpoint has trailing bytes after the declared payload");
  return params;
}

}  // namespace stlstm
