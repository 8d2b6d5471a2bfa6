#include <doctest.h>

#include <Eigen/Geometry>
#include <cstdio>
#include <filesystem>

#include "hep/container.hpp"
#include "hep/dataset.hpp"
#include "hep/error.hpp"
#include "hep/scene.hpp"
#include "test_util.hpp"

using namespace hep;
using hep::testing::max_abs_diff;
using hep::testing::random_cloud;
using hep::testing::random_gripper;

namespace {

Observation make_obs(const GripperState& s, Rng& rng, std::size_t points = 8) {
  Observation o;
  o.cloud = random_cloud(rng, points);
  o.state_history = {s};
  o.action_history = {s, s, s};
  return o;
}

/// Demo built from a list of gripper states, one per tick.
Demonstration demo_from_states(const std::vector<GripperState>& states, std::uint64_t seed = 0) {
  Rng rng(seed);
  Demonstration d;
  d.task_id = "synthetic";
  d.seed = seed;
  for (std::size_t i = 0; i < states.size(); ++i)
    d.frames.push_back({static_cast<std::int64_t>(i), make_obs(states[i], rng), states[i]});
  return d;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("hep_test_" + name);
}

}  // namespace

TEST_CASE("GripperState validation") {
  CHECK_NOTHROW(validate(GripperState{}));
  GripperState s;
  s.c = 1.5;
  CHECK_THROWS_AS(validate(s), InvalidArgument);
  s.c = 0.5;
  s.q = -Mat3::Identity();
  CHECK_THROWS_AS(validate(s), InvalidArgument);
}

TEST_CASE("extract_keyframes") {
  SUBCASE("constant velocity with one close") {
    std::vector<GripperState> states(30);
    for (int i = 0; i < 30; ++i) {
      states[i].position = Vec3(0.01 * i, 0, 0);
      states[i].c = i < 17 ? 1.0 : 0.0;
    }
    CHECK(extract_keyframes(demo_from_states(states)) == std::vector<std::size_t>{17, 29});
  }
  SUBCASE("static demo") {
    std::vector<GripperState> states(10);
    CHECK(extract_keyframes(demo_from_states(states)) == std::vector<std::size_t>{0, 9});
  }
  SUBCASE("short dwell is ignored, long dwell is not") {
    std::vector<GripperState> states;
    Vec3 p = Vec3::Zero();
    for (int i = 0; i < 5; ++i) states.push_back({p += Vec3(0.01, 0, 0), Mat3::Identity(), 1.0});
    for (int i = 0; i < 3; ++i) states.push_back({p, Mat3::Identity(), 1.0});  // 3 slow steps
    for (int i = 0; i < 5; ++i) states.push_back({p += Vec3(0.01, 0, 0), Mat3::Identity(), 1.0});
    const std::size_t dwell_start = states.size() - 1;
    for (int i = 0; i < 4; ++i) states.push_back({p, Mat3::Identity(), 1.0});  // 4 slow steps
    for (int i = 0; i < 5; ++i) states.push_back({p += Vec3(0.01, 0, 0), Mat3::Identity(), 1.0});
    CHECK(extract_keyframes(demo_from_states(states)) ==
          std::vector<std::size_t>{dwell_start, states.size() - 1});
  }
  SUBCASE("invariant under the group action") {
    std::vector<GripperState> states(30);
    for (int i = 0; i < 30; ++i) {
      states[i].position = Vec3(0.01 * std::min(i, 12), 0.02 * std::max(0, i - 20), 0);
      states[i].c = (i >= 8 && i < 22) ? 0.0 : 1.0;
    }
    const Demonstration d = demo_from_states(states);
    const auto k = extract_keyframes(d);
    Rng rng(1);
    for (int t = 0; t < 8; ++t) {
      const GroupElement g = hep::testing::random_element(rng);
      CHECK(extract_keyframes(act_demonstration(g, d)) == k);
    }
  }
  CHECK_THROWS_AS(extract_keyframes(demo_from_states({GripperState{}})), InvalidArgument);
}

TEST_CASE("interpolate_segment") {
  Rng rng(2);
  const GripperState a = random_gripper(rng);
  const ActionChunk c = interpolate_segment(a, a, 5);
  REQUIRE(c.size() == 5);
  for (const auto& s : c.steps) CHECK(max_abs_diff(s, a) <= 1e-12);

  GripperState b = random_gripper(rng);
  const ActionChunk two = interpolate_segment(a, b, 2);
  CHECK((two.steps[0].position - 0.5 * (a.position + b.position)).norm() <= 1e-15);
  CHECK(two.steps[0].c == a.c);
  CHECK(two.steps[1] == b);

  SUBCASE("180 degree geodesic at constant angular velocity") {
    GripperState s0, s1;
    const Vec3 axis = Vec3(1, 2, -0.5).normalized();
    s1.q = Eigen::AngleAxisd(M_PI, axis).toRotationMatrix();
    const ActionChunk r = interpolate_segment(s0, s1, 4);
    for (int i = 0; i < 4; ++i) {
      // Oracle: matrix log through the rotation angle/axis of q_a^T q_i.
      const Eigen::AngleAxisd step(s0.q.transpose() * r.steps[i].q);
      CHECK(step.angle() == doctest::Approx(M_PI / 4 * (i + 1)).epsilon(1e-9));
      CHECK(std::abs(std::abs(step.axis().dot(axis)) - 1.0) <= 1e-9);
      CHECK(is_rotation(r.steps[i].q, 1e-12));
    }
  }
  CHECK_THROWS_AS(interpolate_segment(a, b, 0), InvalidArgument);
}

namespace {

Demonstration two_phase_demo() {
  std::vector<GripperState> states;
  Vec3 p(0.1, 0.0, 0.2);
  for (int i = 0; i < 5; ++i) states.push_back({p, Mat3::Identity(), 1.0});
  for (int i = 0; i < 10; ++i) states.push_back({p += Vec3(0.0, 0.01, -0.01), Mat3::Identity(), 1.0});
  for (int i = 0; i < 10; ++i) states.push_back({p += Vec3(0.01, 0.0, 0.01), Mat3::Identity(), 0.0});
  return demo_from_states(states, 3);
}

}  // namespace

TEST_CASE("make_training_pairs") {
  const Demonstration d = two_phase_demo();
  const auto k = extract_keyframes(d);
  REQUIRE(k == std::vector<std::size_t>{0, 15, 24});

  const auto open = make_training_pairs(d, ControlMode::Open, 18, k);
  REQUIRE(open.size() == 2);
  CHECK(open[0].obs == d.frames[0].obs);
  CHECK(open[0].target_chunk.steps.back() == d.state(15));
  CHECK(open[1].target_chunk.steps.back() == d.state(24));
  CHECK(open[0].target_keypose == d.state(15).position);

  const auto two = make_training_pairs(d, ControlMode::Open, 18, {0, 24});
  CHECK(two.size() == 1);

  const auto closed = make_training_pairs(d, ControlMode::Closed, 18, k);
  REQUIRE(closed.size() == d.frames.size() - 1);
  CHECK(closed[0].target_keypose == d.state(15).position);
  CHECK(closed[15].target_keypose == d.state(24).position);
  CHECK(closed[3].target_chunk.steps[0] == d.frames[3].executed);
  // padded with the final command past the end
  CHECK(closed[20].target_chunk.steps.back() == d.frames.back().executed);
  CHECK(closed[20].target_chunk.size() == 18);

  CHECK_THROWS_AS(make_training_pairs(d, ControlMode::Open, 18, {3}), InvalidArgument);

  SUBCASE("construction commutes with the group action") {
    Rng rng(4);
    for (int t = 0; t < 4; ++t) {
      const GroupElement g = hep::testing::random_element(rng);
      for (ControlMode mode : {ControlMode::Open, ControlMode::Closed}) {
        const auto lhs = make_training_pairs(act_demonstration(g, d), mode, 18, k);
        const auto rhs = make_training_pairs(d, mode, 18, k);
        REQUIRE(lhs.size() == rhs.size());
        double err = 0.0;
        for (std::size_t i = 0; i < lhs.size(); ++i) {
          const TrainingPair gp = act_pair(g, rhs[i]);
          err = std::max(err, (lhs[i].target_keypose - gp.target_keypose).cwiseAbs().maxCoeff());
          for (std::size_t s = 0; s < gp.target_chunk.size(); ++s)
            err = std::max(err, max_abs_diff(lhs[i].target_chunk.steps[s], gp.target_chunk.steps[s]));
          for (std::size_t p = 0; p < gp.obs.cloud.size(); ++p)
            err = std::max(err, (lhs[i].obs.cloud.position(p) - gp.obs.cloud.position(p))
                                    .cwiseAbs()
                                    .maxCoeff());
        }
        CHECK(err <= 1e-9);
      }
    }
  }
}

TEST_CASE("dataset round trip") {
  const DatasetHeader h;
  SUBCASE("empty") {
    const auto bytes = encode_dataset(h, std::span<const TrainingPair>{});
    const Dataset d = decode_dataset(bytes);
    CHECK(d.header == h);
    CHECK(d.kind == RecordKind::TrainingPairs);
    CHECK(d.pairs.empty());
  }
  SUBCASE("one pair, bit exact") {
    Rng rng(5);
    TrainingPair p;
    p.obs = make_obs(random_gripper(rng), rng, 20);
    for (int i = 0; i < 18; ++i) p.target_chunk.steps.push_back(random_gripper(rng));
    p.target_keypose = Vec3(1.0 / 3.0, -2.0 / 7.0, 1e-300);
    const std::vector<TrainingPair> v{p};
    const Dataset d = decode_dataset(encode_dataset(h, v));
    REQUIRE(d.pairs.size() == 1);
    CHECK(d.pairs[0] == p);
  }
  SUBCASE("demos through a file") {
    const std::vector<Demonstration> v{two_phase_demo()};
    const auto path = temp_path("demos.hepd").string();
    write_dataset(path, h, v);
    const Dataset d = read_dataset(path);
    CHECK(d.kind == RecordKind::Demonstrations);
    REQUIRE(d.demos.size() == 1);
    CHECK(d.demos[0] == v[0]);
    std::filesystem::remove(path);
  }
  SUBCASE("10k pairs with checksum") {
    Rng rng(6);
    std::vector<TrainingPair> v;
    for (int i = 0; i < 10000; ++i) {
      TrainingPair p;
      p.obs = make_obs(random_gripper(rng), rng, 2);
      for (int s = 0; s < 18; ++s) p.target_chunk.steps.push_back(random_gripper(rng));
      p.target_keypose = hep::testing::random_vec(rng);
      v.push_back(std::move(p));
    }
    const auto bytes = encode_dataset(h, v);
    const Dataset d = decode_dataset(bytes);
    REQUIRE(d.pairs.size() == v.size());
    const auto again = encode_dataset(h, d.pairs);
    CHECK(fnv1a64(again) == fnv1a64(bytes));
    CHECK(d.pairs == v);
  }
  SUBCASE("distinct errors") {
    const std::vector<Demonstration> v{two_phase_demo()};
    auto bytes = encode_dataset(h, v);

    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_dataset(bad_magic), UnknownMagic);

    auto bad_version = bytes;
    bad_version[4] = 99;
    CHECK_THROWS_AS(decode_dataset(bad_version), VersionMismatch);

    auto truncated = bytes;
    truncated.resize(bytes.size() - 7);
    CHECK_THROWS_AS(decode_dataset(truncated), TruncatedFile);

    auto bad_kf = bytes;
    bad_kf[12] = 4;  // header kf no longer matches the records
    CHECK_THROWS_AS(decode_dataset(bad_kf), FeatureWidthMismatch);

    DatasetHeader wide = h;
    wide.kf = 4;
    CHECK_THROWS_AS(encode_dataset(wide, v), FeatureWidthMismatch);
  }
}
