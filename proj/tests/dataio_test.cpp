#include <cmath>

#include "doctest.h"
#include "stlstm/dataio.hpp"

using namespace stlstm;

TEST_CASE("parse_dataset_text maps fields and truncates float ids") {
  Scene s = parse_dataset_text("10 5 3.20 4.10\n", "t");
  REQUIRE(s.observations.size() == 1);
  CHECK(s.observations[0].frame == 0);  // single frame re-indexed to 0
  CHECK(s.observations[0].ped == 5);
  CHECK(s.observations[0].x == 3.20);
  CHECK(s.observations[0].y == 4.10);

  Scene f = parse_dataset_text("10.0 5.9 1.0 2.0\n20.0 5.9 1.5 2.0\n", "t");
  CHECK(f.observations[0].ped == 5);
  CHECK(f.observations[0].frame == 0);
  CHECK(f.observations[1].frame == 1);
}

TEST_CASE("parse_dataset_text accepts empty input") {
  Scene s = parse_dataset_text("", "t");
  CHECK(s.observations.empty());
  Scene s2 = parse_dataset_text("\n  \n", "t");
  CHECK(s2.observations.empty());
}

TEST_CASE("parse errors carry line numbers") {
  try {
    parse_dataset_text("1 1 0.0 0.0\n10 5 3.2\n", "t");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_dataset_text("1 1 abc 0.0\n", "t"), ParseError);
  CHECK_THROWS_AS(parse_dataset_text("1 1 0.0 0.0 9\n", "t"), ParseError);
}

TEST_CASE("duplicate frame/ped pairs are rejected") {
  CHECK_THROWS_AS(parse_dataset_text("1 7 0.0 0.0\n1 7 1.0 1.0\n", "t"), DataError);
}

TEST_CASE("frame re-indexing divides by the common stride and keeps gaps") {
  Scene s = parse_dataset_text("0 1 0 0\n10 1 1 0\n30 1 3 0\n", "t");
  CHECK(s.observations[0].frame == 0);
  CHECK(s.observations[1].frame == 1);
  CHECK(s.observations[2].frame == 3);
}

TEST_CASE("trajectory round trip is identity on observations") {
  ScenarioParams p;
  p.noise_std = 0.013;
  Scene s = synth_scenario(ScenarioKind::kMeeting, p, 99);
  Scene back = parse_dataset_text(serialize_dataset(s), s.name);
  REQUIRE(back.observations.size() == s.observations.size());
  for (std::size_t i = 0; i < s.observations.size(); ++i) {
    CHECK(back.observations[i].frame == s.observations[i].frame);
    CHECK(back.observations[i].ped == s.observations[i].ped);
    CHECK(back.observations[i].x == s.observations[i].x);
    CHECK(back.observations[i].y == s.observations[i].y);
  }
}

namespace {

Scene single_ped_scene(std::size_t frames) {
  Scene s;
  s.name = "one";
  for (std::size_t f = 0; f < frames; ++f)
    s.observations.push_back({static_cast<long>(f), 1, 0.1 * static_cast<double>(f), 0.0});
  return s;
}

}  // namespace

TEST_CASE("make_sequences window counts") {
  CHECK(make_sequences(single_ped_scene(20), 8, 12, 1).size() == 1);
  CHECK(make_sequences(single_ped_scene(21), 8, 12, 1).size() == 2);
  CHECK(make_sequences(single_ped_scene(19), 8, 12, 1).empty());

  auto batches = make_sequences(single_ped_scene(20), 8, 12, 1);
  CHECK(batches[0].nodes() == 1);
  CHECK(batches[0].positions_obs.shape() == Shape{1, 8, 2});
  CHECK(batches[0].positions_gt.shape() == Shape{1, 12, 2});
}

TEST_CASE("pedestrians missing part of the window are excluded") {
  Scene s = single_ped_scene(20);
  for (std::size_t f = 0; f < 10; ++f)  // second pedestrian for half the window
    s.observations.push_back({static_cast<long>(f), 2, 5.0, 1.0});
  auto batches = make_sequences(s, 8, 12, 1);
  REQUIRE(batches.size() == 1);
  CHECK(batches[0].ped_ids == std::vector<long>{1});
}

TEST_CASE("window count formula over presence length and stride") {
  for (std::size_t frames : {20u, 25u, 37u, 53u}) {
    for (std::size_t stride : {1u, 2u, 3u, 5u}) {
      const auto got = make_sequences(single_ped_scene(frames), 8, 12, stride).size();
      const long f = static_cast<long>(frames);
      const long want = f < 20 ? 0 : (f - 20) / static_cast<long>(stride) + 1;
      CHECK(got == static_cast<std::size_t>(want));
    }
  }
}

TEST_CASE("normalize subtracts the first-frame centroid and denormalize inverts") {
  Scene s;
  s.name = "two";
  for (std::size_t f = 0; f < 20; ++f) {
    const double t = static_cast<double>(f);
    s.observations.push_back({static_cast<long>(f), 1, 0.0 + 0.1 * t, 0.0});
    s.observations.push_back({static_cast<long>(f), 2, 2.0 - 0.1 * t, 2.0});
  }
  auto batches = make_sequences(s, 8, 12, 1);
  REQUIRE(batches.size() == 1);
  SequenceBatch norm = normalize(batches[0]);
  CHECK(norm.origin.x == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(norm.origin.y == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(norm.positions_obs.at(0, 0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(norm.positions_obs.at(1, 0, 0) == doctest::Approx(1.0).epsilon(1e-12));

  SequenceBatch round = denormalize(norm);
  CHECK(round.origin.x == 0.0);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t t = 0; t < 8; ++t) {
      CHECK(round.positions_obs.at(i, t, 0) ==
            doctest::Approx(batches[0].positions_obs.at(i, t, 0)).epsilon(1e-12));
      CHECK(round.positions_obs.at(i, t, 1) ==
            doctest::Approx(batches[0].positions_obs.at(i, t, 1)).epsilon(1e-12));
    }
}

TEST_CASE("normalize of a single pedestrian zeroes its start") {
  Scene s;
  s.name = "one";
  for (std::size_t f = 0; f < 20; ++f)
    s.observations.push_back({static_cast<long>(f), 1, 7.0 + 0.1 * f, 3.0});
  auto norm = normalize(make_sequences(s, 8, 12, 1)[0]);
  CHECK(norm.positions_obs.at(0, 0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(norm.positions_obs.at(0, 0, 1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(norm.origin.x == doctest::Approx(7.0).epsilon(1e-12));
  CHECK(norm.origin.y == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("meeting walkers close at 2 * speed * dt per frame") {
  ScenarioParams p;  // speed 1 m/s, 8 m apart, dt 0.4
  Scene s = synth_scenario(ScenarioKind::kMeeting, p, 1);
  auto pos = [&](long frame, long ped) {
    for (const auto& o : s.observations)
      if (o.frame == frame && o.ped == ped) return Vec2{o.x, o.y};
    FAIL("missing observation");
    return Vec2{};
  };
  for (long f = 0; f + 1 < 8; ++f) {
    const auto a0 = pos(f, 1), b0 = pos(f, 2), a1 = pos(f + 1, 1), b1 = pos(f + 1, 2);
    const double d0 = std::hypot(a0.x - b0.x, a0.y - b0.y);
    const double d1 = std::hypot(a1.x - b1.x, a1.y - b1.y);
    CHECK(d0 - d1 == doctest::Approx(0.8).epsilon(1e-12));
  }
}

TEST_CASE("following walkers stay collinear at constant gap") {
  ScenarioParams p;
  p.start_offset = 1.5;
  Scene s = synth_scenario(ScenarioKind::kFollowing, p, 1);
  for (long f = 0; f < static_cast<long>(p.frames); ++f) {
    Vec2 lead{}, trail{};
    for (const auto& o : s.observations)
      if (o.frame == f) (o.ped == 1 ? lead : trail) = {o.x, o.y};
    CHECK(lead.y == 0.0);
    CHECK(trail.y == 0.0);
    CHECK(lead.x - trail.x == doctest::Approx(1.5).epsilon(1e-12));
  }
}

TEST_CASE("scenarios are deterministic under a fixed seed") {
  ScenarioParams p;
  p.noise_std = 0.05;
  for (auto kind : {ScenarioKind::kFollowing, ScenarioKind::kMeeting, ScenarioKind::kGroupAvoid,
                    ScenarioKind::kMerge, ScenarioKind::kAngleCross}) {
    Scene a = synth_scenario(kind, p, 42);
    Scene b = synth_scenario(kind, p, 42);
    REQUIRE(a.observations.size() == b.observations.size());
    CHECK(a.observations.size() >= 20u * 2u);
    for (std::size_t i = 0; i < a.observations.size(); ++i) {
      CHECK(a.observations[i].x == b.observations[i].x);
      CHECK(a.observations[i].y == b.observations[i].y);
    }
  }
}

TEST_CASE("scenario taxonomy shapes") {
  ScenarioParams p;
  CHECK(synth_scenario(ScenarioKind::kGroupAvoid, p, 1).observations.size() == 4 * p.frames);

  // merge: both walkers end on the shared path (y = 0) heading +x
  Scene m = synth_scenario(ScenarioKind::kMerge, p, 1);
  for (const auto& o : m.observations)
    if (o.frame == static_cast<long>(p.frames - 1)) CHECK(std::abs(o.y) < 0.3);

  // angle_cross at 90 degrees: walkers cross the origin at the same frame
  ScenarioParams pc;
  pc.start_offset = 8.0;
  Scene c = synth_scenario(ScenarioKind::kAngleCross, pc, 1);
  long cross_frame = static_cast<long>(std::lround((pc.start_offset / 2) / (pc.speed * pc.dt)));
  for (const auto& o : c.observations)
    if (o.frame == cross_frame) CHECK(std::hypot(o.x, o.y) < 1e-9);
}

TEST_CASE("unknown scenario kind is a usage error") {
  CHECK_THROWS_AS(scenario_kind_from_string("sprinting"), UsageError);
  CHECK(scenario_kind_from_string("merge") == ScenarioKind::kMerge);
  CHECK(to_string(ScenarioKind::kAngleCross) == "angle_cross");
}

TEST_CASE("sequence batches serialize to JSON") {
  auto batches = make_sequences(synth_scenario(ScenarioKind::kMeeting, {}, 3), 8, 12, 1);
  REQUIRE(!batches.empty());
  auto j = to_json(batches[0]);
  CHECK(j["ped_ids"].size() == 2);
  CHECK(j["positions_obs"][0].size() == 8);
  CHECK(j["positions_gt"][0].size() == 12);
}
