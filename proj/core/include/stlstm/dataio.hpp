#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "stlstm/tensor.hpp"

namespace stlstm {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

struct Observation {
  long frame = 0;  // re-indexed to consecutive time steps starting at 0
  long ped = 0;
  double x = 0.0;
  double y = 0.0;
};

// One recording: time-stamped pedestrian positions in world meters.
// Observations are sorted by (frame, ped) and frames are consecutive indices;
// the loader divides raw frame ids by their common stride (ETH/UCY files step
// by 10 video frames per 0.4 s sample).
struct Scene {
  std::string name;
  std::vector<Observation> observations;
  double frame_interval = 0.4;  // seconds between consecutive frames
};

// Reads a whitespace-separated `frame_id ped_id x y` text file.
// Throws ParseError with the offending line number on malformed input and
// DataError on duplicate (frame, ped) pairs.
Scene parse_dataset(const std::filesystem::path& path);
Scene parse_dataset_text(std::string_view text, std::string name);

std::string serialize_dataset(const Scene& scene);
void write_dataset(const Scene& scene, const std::filesystem::path& path);

// One training/evaluation window: n pedestrians present at every frame of
// t_obs observed plus t_pred future steps.
struct SequenceBatch {
  std::string scene_name;
  std::vector<long> ped_ids;
  Tensor positions_obs;  // [n x t_obs x 2]
  Tensor positions_gt;   // [n x t_pred x 2]
  std::vector<std::uint8_t> node_mask;
  Vec2 origin;  // world offset removed by normalize()
  long start_frame = 0;

  std::size_t nodes() const { return ped_ids.size(); }
};

// Slides a window of t_obs + t_pred consecutive frames with the given stride.
// A pedestrian joins a window only when present at every frame of it; windows
// with no qualifying pedestrian are dropped.
std::vector<SequenceBatch> make_sequences(const Scene& scene, std::size_t t_obs = 8,
                                          std::size_t t_pred = 12, std::size_t stride = 1);

// Subtracts the centroid of all pedestrians at the first observed frame and
// accumulates it into `origin`; denormalize inverts exactly. Metrics are
// always computed on denormalized (world-meter) coordinates.
SequenceBatch normalize(const SequenceBatch& batch);
SequenceBatch denormalize(const SequenceBatch& batch);

nlohmann::json to_json(const SequenceBatch& batch);

// ---- synthetic social scenarios ------------------------------------------------

enum class ScenarioKind { kFollowing, kMeeting, kGroupAvoid, kMerge, kAngleCross };

// Throws UsageError on unknown names.
ScenarioKind scenario_kind_from_string(std::string_view name);
std::string to_string(ScenarioKind kind);

struct ScenarioParams {
  double speed = 1.0;        // m/s, every walker
  double start_offset = 8.0; // m, initial separation (meaning varies per kind)
  double noise_std = 0.0;    // additive Gaussian noise per coordinate
  std::size_t frames = 24;   // >= 20 so one full window fits
  double angle_deg = 90.0;   // crossing angle for kAngleCross
  double dt = 0.4;           // seconds per frame
};

// Deterministic given seed. Kinds:
//   following   two collinear same-direction walkers, constant gap
//   meeting     two head-on walkers
//   group_avoid one walker against a 3-walker group, head-on
//   merge       two walkers converging onto a shared path
//   angle_cross two walkers crossing at params.angle_deg
Scene synth_scenario(ScenarioKind kind, const ScenarioParams& params, std::uint64_t seed);

}  // namespace stlstm
