#include "stlstm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "stlstm/rng.hpp"

namespace stlstm {

namespace {

void require_pred_shapes(const char* who, const Tensor& pred, const Tensor& gt) {
  if (pred.rank() != 3 || pred.dim(2) != 2)
    throw DimensionError(std::string(who) + ": predictions must be [n x T x 2], got " +
                         shape_str(pred.shape()));
  if (pred.shape() != gt.shape())
    throw DimensionError(std::string(who) + ": shape mismatch " + shape_str(pred.shape()) +
                         " vs " + shape_str(gt.shape()));
}

}  // namespace

double ade(const Tensor& pred, const Tensor& gt) {
  require_pred_shapes("ade", pred, gt);
  const std::size_t n = pred.dim(0), t_len = pred.dim(1);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < t_len; ++t) {
      const double dx = pred.at(i, t, 0) - gt.at(i, t, 0);
      const double dy = pred.at(i, t, 1) - gt.at(i, t, 1);
      acc += std::sqrt(dx * dx + dy * dy);
    }
  return acc / static_cast<double>(n * t_len);
}

double fde(const Tensor& pred, const Tensor& gt) {
  require_pred_shapes("fde", pred, gt);
  const std::size_t n = pred.dim(0), t_last = pred.dim(1) - 1;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = pred.at(i, t_last, 0) - gt.at(i, t_last, 0);
    const double dy = pred.at(i, t_last, 1) - gt.at(i, t_last, 1);
    acc += std::sqrt(dx * dx + dy * dy);
  }
  return acc / static_cast<double>(n);
}

double collision_rate(const std::vector<std::vector<Vec2>>& frames, double threshold) {
  if (frames.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& frame : frames) {
    const std::size_t m = frame.size();
    if (m < 2) continue;  // contributes 0
    std::size_t colliding = 0;
    for (std::size_t i = 0; i < m; ++i) {
      bool hit = false;
      for (std::size_t j = 0; j < m && !hit; ++j) {
        if (i == j) continue;
        const double dx = frame[i].x - frame[j].x;
        const double dy = frame[i].y - frame[j].y;
        hit = std::sqrt(dx * dx + dy * dy) < threshold;
      }
      if (hit) ++colliding;
    }
    acc += 100.0 * static_cast<double>(colliding) / static_cast<double>(m);
  }
  return acc / static_cast<double>(frames.size());
}

double scene_collision_rate(const Scene& scene, double threshold) {
  std::map<long, std::vector<Vec2>> by_frame;
  for (const auto& o : scene.observations) by_frame[o.frame].push_back({o.x, o.y});
  std::vector<std::vector<Vec2>> frames;
  frames.reserve(by_frame.size());
  for (auto& [f, v] : by_frame) frames.push_back(std::move(v));
  return collision_rate(frames, threshold);
}

double sampled_collision_rate(const Scene& scene, double threshold, std::size_t n_agents,
                              std::uint64_t seed, std::size_t window_frames) {
  std::map<long, std::vector<std::pair<long, Vec2>>> by_frame;  // frame -> (ped, pos)
  std::map<long, long> first_frame;
  std::vector<long> peds;
  for (const auto& o : scene.observations) {
    by_frame[o.frame].push_back({o.ped, {o.x, o.y}});
    auto it = first_frame.find(o.ped);
    if (it == first_frame.end()) {
      first_frame[o.ped] = o.frame;
      peds.push_back(o.ped);
    } else {
      it->second = std::min(it->second, o.frame);
    }
  }
  std::sort(peds.begin(), peds.end());
  Rng rng(seed);
  rng.shuffle(peds);
  if (peds.size() > n_agents) peds.resize(n_agents);
  std::sort(peds.begin(), peds.end());

  std::vector<std::vector<Vec2>> frames;
  for (const auto& [f, entries] : by_frame) {
    std::vector<Vec2> active;
    for (const auto& [ped, pos] : entries) {
      if (!std::binary_search(peds.begin(), peds.end(), ped)) continue;
      if (f - first_frame[ped] >= static_cast<long>(window_frames)) continue;
      active.push_back(pos);
    }
    if (!active.empty()) frames.push_back(std::move(active));
  }
  return collision_rate(frames, threshold);
}

Tensor linear_baseline(const Tensor& obs, std::size_t t_pred) {
  if (obs.rank() != 3 || obs.dim(2) != 2)
    throw DimensionError("linear_baseline: observations must be [n x T x 2], got " +
                         shape_str(obs.shape()));
  const std::size_t n = obs.dim(0), t_obs = obs.dim(1);
  if (t_obs < 2) throw ContractError("linear_baseline: needs at least 2 observed steps");

  const double t_mean = 0.5 * static_cast<double>(t_obs - 1);
  double sxx = 0.0;
  for (std::size_t t = 0; t < t_obs; ++t) {
    const double d = static_cast<double>(t) - t_mean;
    sxx += d * d;
  }
  std::vector<double> out(n * t_pred * 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 2; ++c) {
      double mean = 0.0;
      for (std::size_t t = 0; t < t_obs; ++t) mean += obs.at(i, t, c);
      mean /= static_cast<double>(t_obs);
      double sxy = 0.0;
      for (std::size_t t = 0; t < t_obs; ++t)
        sxy += (static_cast<double>(t) - t_mean) * (obs.at(i, t, c) - mean);
      const double slope = sxy / sxx;
      const double intercept = mean - slope * t_mean;
      for (std::size_t k = 0; k < t_pred; ++k) {
        const double t = static_cast<double>(t_obs + k);
        out[(i * t_pred + k) * 2 + c] = intercept + slope * t;
      }
    }
  return Tensor::from_data({n, t_pred, 2}, std::move(out));
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["config"] = config;
  j["seed"] = seed;
  auto dump = [](const SceneReport& r) {
    nlohmann::json s;
    s["scene"] = r.scene;
    s["n_sequences"] = r.n_sequences;
    s["ade_m"] = r.ade_m;
    s["fde_m"] = r.fde_m;
    s["collision_pct"] = r.collision_pct;
    return s;
  };
  j["scenes"] = nlohmann::json::array();
  for (const auto& s : scenes) j["scenes"].push_back(dump(s));
  j["aggregate"] = dump(aggregate);
  return j;
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << "scene,n_sequences,ade_m,fde_m,collision_pct\n";
  auto line = [&os](const SceneReport& r) {
    os << r.scene << ',' << r.n_sequences << ',' << r.ade_m << ',' << r.fde_m << ','
       << r.collision_pct << '\n';
  };
  for (const auto& s : scenes) line(s);
  line(aggregate);
  return os.str();
}

}  // namespace stlstm
