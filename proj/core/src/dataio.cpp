#include "stlstm/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "stlstm/rng.hpp"

namespace stlstm {

namespace {

bool parse_double(const std::string& tok, double& out) {
  const char* begin = tok.data();
  const char* end = begin + tok.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

// Divides raw frame ids by their common stride so consecutive samples become
// consecutive integers; gaps in the recording stay gaps.
void reindex_frames(std::vector<Observation>& obs) {
  if (obs.empty()) return;
  std::vector<long> frames;
  frames.reserve(obs.size());
  for (const auto& o : obs) frames.push_back(o.frame);
  std::sort(frames.begin(), frames.end());
  frames.erase(std::unique(frames.begin(), frames.end()), frames.end());
  const long fmin = frames.front();
  long g = 0;
  for (std::size_t i = 1; i < frames.size(); ++i) g = std::gcd(g, frames[i] - frames[i - 1]);
  if (g == 0) g = 1;
  for (auto& o : obs) o.frame = (o.frame - fmin) / g;
}

}  // namespace

Scene parse_dataset_text(std::string_view text, std::string name) {
  Scene scene;
  scene.name = std::move(name);
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::vector<std::string> tokens;
    std::string tok;
    while (ls >> tok) tokens.push_back(tok);
    if (tokens.empty()) continue;
    if (tokens.size() != 4)
      throw ParseError(scene.name + ": line " + std::to_string(line_no) + ": expected 4 fields "
                       "`frame_id ped_id x y`, got " + std::to_string(tokens.size()));
    double fields[4];
    for (int i = 0; i < 4; ++i)
      if (!parse_double(tokens[i], fields[i]))
        throw ParseError(scene.name + ": line " + std::to_string(line_no) +
                         ": not a number: `" + tokens[i] + "`");
    Observation o;
    o.frame = static_cast<long>(fields[0]);
    o.ped = static_cast<long>(fields[1]);
    o.x = fields[2];
    o.y = fields[3];
    scene.observations.push_back(o);
  }
  std::sort(scene.observations.begin(), scene.observations.end(),
            [](const Observation& a, const Observation& b) {
              return std::tie(a.frame, a.ped) < std::tie(b.frame, b.ped);
            });
  for (std::size_t i = 1; i < scene.observations.size(); ++i) {
    const auto& a = scene.observations[i - 1];
    const auto& b = scene.observations[i];
    if (a.frame == b.frame && a.ped == b.ped)
      throw DataError(scene.name + ": duplicate observation for frame " +
                      std::to_string(a.frame) + ", pedestrian " + std::to_string(a.ped));
  }
  reindex_frames(scene.observations);
  return scene;
}

Scene parse_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open trajectory file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset_text(buf.str(), path.stem().string());
}

std::string serialize_dataset(const Scene& scene) {
  std::string out;
  for (const auto& o : scene.observations) {
    out += std::to_string(o.frame);
    out += ' ';
    out += std::to_string(o.ped);
    out += ' ';
    out += format_double(o.x);
    out += ' ';
    out += format_double(o.y);
    out += '\n';
  }
  return out;
}

void write_dataset(const Scene& scene, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write trajectory file: " + path.string());
  out << serialize_dataset(scene);
}

std::vector<SequenceBatch> make_sequences(const Scene& scene, std::size_t t_obs,
                                          std::size_t t_pred, std::size_t stride) {
  if (t_obs < 1 || t_pred < 1 || stride < 1)
    throw ContractError("make_sequences: t_obs, t_pred and stride must all be >= 1");
  std::vector<SequenceBatch> result;
  if (scene.observations.empty()) return result;

  const long window = static_cast<long>(t_obs + t_pred);
  // Per-pedestrian lookup and maximal consecutive runs.
  std::map<long, std::unordered_map<long, Vec2>> by_ped;
  for (const auto& o : scene.observations) by_ped[o.ped][o.frame] = {o.x, o.y};

  long max_frame = 0;
  for (const auto& o : scene.observations) max_frame = std::max(max_frame, o.frame);

  // window start -> qualifying pedestrians (sorted: by_ped iterates in id order)
  std::map<long, std::vector<long>> starts;
  for (const auto& [ped, frames] : by_ped) {
    std::vector<long> fs;
    fs.reserve(frames.size());
    for (const auto& [f, p] : frames) fs.push_back(f);
    std::sort(fs.begin(), fs.end());
    std::size_t run_begin = 0;
    for (std::size_t i = 1; i <= fs.size(); ++i) {
      if (i == fs.size() || fs[i] != fs[i - 1] + 1) {
        const long a = fs[run_begin];
        const long b = fs[i - 1];
        for (long s = a; s + window - 1 <= b; ++s)
          if (s % static_cast<long>(stride) == 0) starts[s].push_back(ped);
        run_begin = i;
      }
    }
  }

  for (const auto& [start, peds] : starts) {
    SequenceBatch batch;
    batch.scene_name = scene.name;
    batch.ped_ids = peds;
    batch.start_frame = start;
    batch.node_mask.assign(peds.size(), 1);
    const std::size_t n = peds.size();
    std::vector<double> obs(n * t_obs * 2), gt(n * t_pred * 2);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& frames = by_ped[peds[i]];
      for (std::size_t t = 0; t < t_obs + t_pred; ++t) {
        const Vec2 p = frames.at(start + static_cast<long>(t));
        if (t < t_obs) {
          obs[(i * t_obs + t) * 2 + 0] = p.x;
          obs[(i * t_obs + t) * 2 + 1] = p.y;
        } else {
          const std::size_t tp = t - t_obs;
          gt[(i * t_pred + tp) * 2 + 0] = p.x;
          gt[(i * t_pred + tp) * 2 + 1] = p.y;
        }
      }
    }
    batch.positions_obs = Tensor::from_data({n, t_obs, 2}, std::move(obs));
    batch.positions_gt = Tensor::from_data({n, t_pred, 2}, std::move(gt));
    result.push_back(std::move(batch));
  }
  return result;
}

SequenceBatch normalize(const SequenceBatch& batch) {
  SequenceBatch out = batch;
  const std::size_t n = batch.nodes();
  if (n == 0) return out;
  double cx = 0.0, cy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cx += batch.positions_obs.at(i, 0, 0);
    cy += batch.positions_obs.at(i, 0, 1);
  }
  cx /= static_cast<double>(n);
  cy /= static_cast<double>(n);

  auto shift = [](const Tensor& t, double dx, double dy) {
    std::vector<double> v(t.data().begin(), t.data().end());
    for (std::size_t i = 0; i < v.size(); i += 2) {
      v[i] += dx;
      v[i + 1] += dy;
    }
    return Tensor::from_data(t.shape(), std::move(v));
  };
  out.positions_obs = shift(batch.positions_obs, -cx, -cy);
  out.positions_gt = shift(batch.positions_gt, -cx, -cy);
  out.origin = {batch.origin.x + cx, batch.origin.y + cy};
  return out;
}

SequenceBatch denormalize(const SequenceBatch& batch) {
  SequenceBatch out = batch;
  auto shift = [](const Tensor& t, double dx, double dy) {
    std::vector<double> v(t.data().begin(), t.data().end());
    for (std::size_t i = 0; i < v.size(); i += 2) {
      v[i] += dx;
      v[i + 1] += dy;
    }
    return Tensor::from_data(t.shape(), std::move(v));
  };
  out.positions_obs = shift(batch.positions_obs, batch.origin.x, batch.origin.y);
  out.positions_gt = shift(batch.positions_gt, batch.origin.x, batch.origin.y);
  out.origin = {0.0, 0.0};
  return out;
}

nlohmann::json to_json(const SequenceBatch& batch) {
  nlohmann::json j;
  j["scene"] = batch.scene_name;
  j["ped_ids"] = batch.ped_ids;
  j["start_frame"] = batch.start_frame;
  j["origin"] = {batch.origin.x, batch.origin.y};
  j["node_mask"] = batch.node_mask;
  auto dump = [](const Tensor& t) {
    nlohmann::json arr = nlohmann::json::array();
    const std::size_t n = t.dim(0), steps = t.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
      nlohmann::json rows = nlohmann::json::array();
      for (std::size_t s = 0; s < steps; ++s)
        rows.push_back({t.at(i, s, 0), t.at(i, s, 1)});
      arr.push_back(rows);
    }
    return arr;
  };
  j["positions_obs"] = dump(batch.positions_obs);
  j["positions_gt"] = dump(batch.positions_gt);
  return j;
}

// ---- synthetic scenarios --------------------------------------------------------

ScenarioKind scenario_kind_from_string(std::string_view name) {
  if (name == "following") return ScenarioKind::kFollowing;
  if (name == "meeting") return ScenarioKind::kMeeting;
  if (name == "group_avoid") return ScenarioKind::kGroupAvoid;
  if (name == "merge") return ScenarioKind::kMerge;
  if (name == "angle_cross") return ScenarioKind::kAngleCross;
  throw UsageError("unknown scenario kind: `" + std::string(name) +
                   "` (expected following|meeting|group_avoid|merge|angle_cross)");
}

std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kFollowing: return "following";
    case ScenarioKind::kMeeting: return "meeting";
    case ScenarioKind::kGroupAvoid: return "group_avoid";
    case ScenarioKind::kMerge: return "merge";
    case ScenarioKind::kAngleCross: return "angle_cross";
  }
  return "?";
}

namespace {

struct Walker {
  Vec2 start;
  Vec2 velocity;          // m/s, used until the turn point (if any)
  double turn_time = -1;  // seconds; < 0 means straight throughout
  Vec2 velocity_after;
};

Vec2 walker_pos(const Walker& w, double t) {
  if (w.turn_time < 0 || t <= w.turn_time)
    return {w.start.x + w.velocity.x * t, w.start.y + w.velocity.y * t};
  const double t1 = w.turn_time, t2 = t - w.turn_time;
  return {w.start.x + w.velocity.x * t1 + w.velocity_after.x * t2,
          w.start.y + w.velocity.y * t1 + w.velocity_after.y * t2};
}

Walker straight(Vec2 start, Vec2 velocity) {
  Walker w;
  w.start = start;
  w.velocity = velocity;
  return w;
}

}  // namespace

Scene synth_scenario(ScenarioKind kind, const ScenarioParams& params, std::uint64_t seed) {
  if (params.frames < 20)
    throw ContractError("synth_scenario: needs >= 20 frames, got " +
                        std::to_string(params.frames));
  const double v = params.speed;
  const double d = params.start_offset;
  std::vector<Walker> walkers;
  switch (kind) {
    case ScenarioKind::kFollowing:
      walkers.push_back(straight({0.0, 0.0}, {v, 0.0}));
      walkers.push_back(straight({-d, 0.0}, {v, 0.0}));
      break;
    case ScenarioKind::kMeeting:
      walkers.push_back(straight({0.0, 0.0}, {v, 0.0}));
      walkers.push_back(straight({d, 0.0}, {-v, 0.0}));
      break;
    case ScenarioKind::kGroupAvoid: {
      walkers.push_back(straight({0.0, 0.0}, {v, 0.0}));
      for (double dy : {-0.6, 0.0, 0.6}) walkers.push_back(straight({d, dy}, {-v, 0.0}));
      break;
    }
    case ScenarioKind::kMerge: {
      // Two walkers funnel onto the +x axis at a midway merge point.
      const double duration = params.dt * static_cast<double>(params.frames - 1);
      const double merge_x = 0.5 * v * duration;
      for (double sy : {+0.5 * d, -0.5 * d}) {
        Walker w;
        w.start = {0.0, sy};
        const double len = std::hypot(merge_x, sy);
        w.velocity = {v * merge_x / len, v * (-sy) / len};
        w.turn_time = len / v;
        w.velocity_after = {v, 0.0};
        walkers.push_back(w);
      }
      break;
    }
    case ScenarioKind::kAngleCross: {
      const double r = 0.5 * d;
      const double a = params.angle_deg * 3.14159265358979323846 / 180.0;
      walkers.push_back(straight({-r, 0.0}, {v, 0.0}));
      walkers.push_back(straight({-r * std::cos(a), -r * std::sin(a)},
                                 {v * std::cos(a), v * std::sin(a)}));
      break;
    }
  }

  Rng rng(seed);
  Scene scene;
  scene.name = to_string(kind);
  scene.frame_interval = params.dt;
  for (std::size_t i = 0; i < walkers.size(); ++i) {
    for (std::size_t f = 0; f < params.frames; ++f) {
      Vec2 p = walker_pos(walkers[i], params.dt * static_cast<double>(f));
      if (params.noise_std > 0.0) {
        p.x += rng.normal(0.0, params.noise_std);
        p.y += rng.normal(0.0, params.noise_std);
      }
      scene.observations.push_back({static_cast<long>(f), static_cast<long>(i + 1), p.x, p.y});
    }
  }
  std::sort(scene.observations.begin(), scene.observations.end(),
            [](const Observation& a, const Observation& b) {
              return std::tie(a.frame, a.ped) < std::tie(b.frame, b.ped);
            });
  return scene;
}

}  // namespace stlstm
