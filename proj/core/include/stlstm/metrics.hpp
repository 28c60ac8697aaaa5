#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "stlstm/dataio.hpp"
#include "stlstm/tensor.hpp"

namespace stlstm {

// Mean Euclidean distance between prediction and ground truth over all nodes
// and predicted steps. Both tensors are [n x T x 2] in meters.
double ade(const Tensor& pred, const Tensor& gt);

// Mean Euclidean distance at the final predicted step only.
double fde(const Tensor& pred, const Tensor& gt);

// Per frame, a pedestrian collides when any other pedestrian is strictly
// closer than `threshold`. Returns the average over frames of
// (colliding / present) * 100; frames with fewer than two pedestrians
// contribute zero.
double collision_rate(const std::vector<std::vector<Vec2>>& frames, double threshold = 0.10);

// Collision rate over a scene's raw frames.
double scene_collision_rate(const Scene& scene, double threshold = 0.10);

// Sampled protocol: draw n_agents pedestrians at random, keep the first
// window_frames frames of each trajectory, and score only frames where at
// least one sampled pedestrian is active.
double sampled_collision_rate(const Scene& scene, double threshold, std::size_t n_agents,
                              std::uint64_t seed, std::size_t window_frames = 20);

// Ordinary least-squares fit of position against step index per node and
// coordinate, extrapolated t_pred steps. obs is [n x T_obs x 2], T_obs >= 2.
Tensor linear_baseline(const Tensor& obs, std::size_t t_pred);

struct SceneReport {
  std::string scene;
  std::size_t n_sequences = 0;
  double ade_m = 0.0;
  double fde_m = 0.0;
  double collision_pct = 0.0;
};

struct EvalReport {
  std::vector<SceneReport> scenes;
  SceneReport aggregate;  // named AVG: unweighted mean over scenes
  nlohmann::json config;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  std::string to_csv() const;  // columns: scene,n_sequences,ade_m,fde_m,collision_pct
};

}  // namespace stlstm
