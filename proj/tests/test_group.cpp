#include <doctest.h>

#include <Eigen/Dense>

#include "hep/error.hpp"
#include "hep/group.hpp"
#include "hep/voxel_grid.hpp"
#include "test_util.hpp"

using namespace hep;
using hep::testing::max_abs_diff;
using hep::testing::random_cloud;
using hep::testing::random_element;
using hep::testing::random_gripper;
using hep::testing::random_vec;

namespace {

// Independent oracle: g as a 4x4 homogeneous matrix [R, R t; 0, 1].
Eigen::Matrix4d homogeneous(const GroupElement& g) {
  const double a = 2.0 * M_PI * g.m / g.u;
  Eigen::Matrix3d r = Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  Eigen::Matrix4d h = Eigen::Matrix4d::Identity();
  h.topLeftCorner<3, 3>() = r;
  h.topRightCorner<3, 1>() = r * g.t;
  return h;
}

Vec3 oracle_point(const GroupElement& g, const Vec3& p) {
  return (homogeneous(g) * p.homogeneous()).head<3>();
}

}  // namespace

TEST_CASE("compose") {
  Rng rng(1);
  const GroupElement g = random_element(rng);
  CHECK(compose(GroupElement::identity(), g) == g);
  const GroupElement e = compose(g, inverse(g));
  CHECK(e.m == 0);
  CHECK(e.t.cwiseAbs().maxCoeff() <= 1e-15);

  // (t=(1,0,0), 90 deg) first, then (t=(0,1,0), 90 deg).
  const GroupElement g1{{1, 0, 0}, 1, 4}, g2{{0, 1, 0}, 1, 4};
  const GroupElement c = compose(g2, g1);
  for (int i = 0; i < 50; ++i) {
    const Vec3 p = random_vec(rng);
    const Vec3 two_step = act_point(g2, act_point(g1, p));
    CHECK((act_point(c, p) - two_step).cwiseAbs().maxCoeff() <= 1e-12);
  }
  CHECK(c.m == 2);

  CHECK_THROWS_AS(compose(GroupElement::identity(4), GroupElement::identity(8)), InvalidArgument);
}

TEST_CASE("inverse") {
  CHECK(inverse(GroupElement::identity()) == GroupElement::identity());
  const GroupElement r90 = GroupElement::rotation(1, 4);
  CHECK(inverse(r90).m == 3);
  CHECK(inverse(r90).t == Vec3::Zero());

  Rng rng(2);
  for (int k = 0; k < 20; ++k) {
    const GroupElement g = random_element(rng);
    const GroupElement gi = inverse(g);
    for (int i = 0; i < 50; ++i) {
      const Vec3 p = random_vec(rng);
      CHECK((act_point(gi, act_point(g, p)) - p).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("act_point") {
  const FeaturePoint p{{1, 2, 3}, {0.1, 0.2, 0.3}};
  CHECK(act_point(GroupElement::identity(), p) == p);

  const FeaturePoint q = act_point(GroupElement::rotation(1), FeaturePoint{{1, 0, 0}, {7.0}});
  CHECK(q.position == Vec3(0, 1, 0));
  CHECK(q.features == std::vector<double>{7.0});

  // R_90 (x + t_x, y + t_y) = R_90 (2, 1) = (-1, 2)
  const GroupElement g{{1, 1, 0}, 1, 4};
  const Vec3 r = act_point(g, Vec3(1, 0, 0.5));
  CHECK(r == Vec3(-1, 2, 0.5));
  CHECK((oracle_point(g, Vec3(1, 0, 0.5)) - r).norm() <= 1e-15);
}

TEST_CASE("act_gripper matches homogeneous pose product") {
  GripperState s;
  CHECK(act_gripper(GroupElement::identity(), s) == s);
  CHECK(act_gripper(GroupElement::rotation(1), s).q == rotation3(GroupElement::rotation(1)));

  Rng rng(3);
  for (int k = 0; k < 100; ++k) {
    const GroupElement g = random_element(rng, k % 2 == 0 ? 4 : 8);
    const GripperState a = random_gripper(rng);
    Eigen::Matrix4d pose = Eigen::Matrix4d::Identity();
    pose.topLeftCorner<3, 3>() = a.q;
    pose.topRightCorner<3, 1>() = a.position;
    const Eigen::Matrix4d moved = homogeneous(g) * pose;
    const GripperState b = act_gripper(g, a);
    CHECK((b.position - moved.topRightCorner<3, 1>()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((b.q - moved.topLeftCorner<3, 3>()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(b.c == a.c);
    CHECK(is_rotation(b.q, 1e-12));
  }

  GripperState bad;
  bad.q(0, 0) = 2.0;
  CHECK_THROWS_AS(act_gripper(GroupElement::rotation(1), bad), InvalidArgument);
}

TEST_CASE("act_chunk and act_cloud are element-wise") {
  Rng rng(4);
  ActionChunk a;
  for (int i = 0; i < 18; ++i) a.steps.push_back(random_gripper(rng));
  CHECK(act_chunk(GroupElement::identity(), a) == a);
  const GroupElement g = random_element(rng);
  const ActionChunk b = act_chunk(g, a);
  REQUIRE(b.size() == 18);
  for (int i = 0; i < 18; ++i) CHECK(b.steps[i] == act_gripper(g, a.steps[i]));

  ActionChunk one{{a.steps[0]}};
  CHECK(act_chunk(g, one).steps[0] == act_gripper(g, a.steps[0]));

  const PointCloud cloud = random_cloud(rng, 1000);
  CHECK(act_cloud(GroupElement::identity(), cloud) == cloud);
  const PointCloud moved = act_cloud(g, cloud);
  REQUIRE(moved.size() == cloud.size());
  double err = 0.0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    err = std::max(err, (moved.position(i) - oracle_point(g, cloud.position(i))).cwiseAbs().maxCoeff());
    CHECK(std::ranges::equal(moved.features(i), cloud.features(i)));
  }
  CHECK(err <= 1e-12);
}

TEST_CASE("rep_matrix") {
  const RepSpec rep{4, 2, 1, 1};
  CHECK(rep_matrix(rep, GroupElement::identity()).isIdentity(0.0));

  // rho_reg(r^1) (x1, x2, x3, x4) = (x4, x1, x2, x3)
  const Eigen::MatrixXd p = rep_matrix(RepSpec::regular(1), GroupElement::rotation(1));
  Eigen::Vector4d x(1, 2, 3, 4);
  CHECK((p * x) == Eigen::Vector4d(4, 1, 2, 3));

  Eigen::Matrix2d expect;
  expect << 0, -1, 1, 0;
  CHECK(rep_matrix(RepSpec{4, 0, 1, 0}, GroupElement::rotation(1)) == expect);
}

TEST_CASE("homomorphism and inverse over random pairs") {
  Rng rng(5);
  for (int u : {4, 8}) {
    const RepSpec rep{u, 1, 2, 2};
    double err = 0.0;
    for (int k = 0; k < 200; ++k) {
      const GroupElement g1 = random_element(rng, u), g2 = random_element(rng, u);
      const GroupElement c = compose(g2, g1);
      const Vec3 p = random_vec(rng);
      err = std::max(err, (act_point(c, p) - act_point(g2, act_point(g1, p))).cwiseAbs().maxCoeff());
      err = std::max(err, (act_point(inverse(g1), act_point(g1, p)) - p).cwiseAbs().maxCoeff());
      const GripperState s = random_gripper(rng);
      err = std::max(err, max_abs_diff(act_gripper(c, s), act_gripper(g2, act_gripper(g1, s))));
      err = std::max(err, max_abs_diff(act_gripper(inverse(g1), act_gripper(g1, s)), s));
      const Eigen::MatrixXd r1 = rep_matrix(rep, g1), r2 = rep_matrix(rep, g2);
      err = std::max(err, (rep_matrix(rep, c) - r2 * r1).cwiseAbs().maxCoeff());
      err = std::max(err, (r1.transpose() * r1 - Eigen::MatrixXd::Identity(rep.dim(), rep.dim()))
                              .cwiseAbs()
                              .maxCoeff());
    }
    CHECK(err <= 1e-12);

    const PointCloud cloud = random_cloud(rng, 64);
    const GroupElement g1 = random_element(rng, u), g2 = random_element(rng, u);
    const PointCloud a = act_cloud(compose(g2, g1), cloud), b = act_cloud(g2, act_cloud(g1, cloud));
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      CHECK((a.position(i) - b.position(i)).cwiseAbs().maxCoeff() <= 1e-12);
      // features are copied, never recomputed
      CHECK(std::ranges::equal(a.features(i), cloud.features(i)));
    }
  }
}

namespace {

VoxelGrid random_grid(Rng& rng, const VoxelGridSpec& spec, const RepSpec& rep) {
  VoxelGrid grid(spec, rep);
  for (auto& v : grid.data()) v = rng.uniform(-1.0, 1.0);
  return grid;
}

// Brute force: for every destination voxel take its world center, pull it back
// with the inverse point action, and transform the source features by the
// dense representation matrix.
VoxelGrid brute_force_action(const GroupElement& g, const VoxelGrid& grid) {
  const VoxelGridSpec& spec = grid.spec();
  VoxelGrid out(spec, grid.rep());
  const Eigen::MatrixXd rho = rep_matrix(grid.rep(), g);
  for (std::size_t lin = 0; lin < spec.num_voxels(); ++lin) {
    const VoxelIndex j = spec.unravel(lin);
    const Vec3 src = act_point(inverse(g), spec.index_to_center(j));
    const auto sj = spec.world_to_index(src);
    if (!sj) continue;
    const auto f = grid.features(*sj);
    const Eigen::VectorXd v = rho * Eigen::Map<const Eigen::VectorXd>(f.data(), f.size());
    out.set_features(j, std::vector<double>(v.data(), v.data() + v.size()));
  }
  return out;
}

}  // namespace

TEST_CASE("act_voxelmap") {
  const VoxelGridSpec spec = VoxelGridSpec::cube(0.125, 8);
  const RepSpec rep{4, 1, 1, 1};
  Rng rng(6);

  const VoxelGrid v = random_grid(rng, spec, rep);
  CHECK(act_voxelmap(GroupElement::identity(), v) == v);

  VoxelGrid onehot(spec, RepSpec::trivial(1));
  onehot.at(0, {6, 1, 3}) = 1.0;
  const VoxelGrid rotated = act_voxelmap(GroupElement::rotation(1), onehot);
  // (x, y) -> (-y, x) about the grid center: index (6, 1) -> (6, 6)
  CHECK(rotated.at(0, {6, 6, 3}) == 1.0);
  double total = 0.0;
  for (double d : rotated.data()) total += d;
  CHECK(total == 1.0);

  SUBCASE("matches per-voxel brute force") {
    const GroupElement g{{0.125, 0, 0}, 1, 4};
    const VoxelGrid fast = act_voxelmap(g, v);
    const VoxelGrid slow = brute_force_action(g, v);
    double err = 0.0;
    for (std::size_t i = 0; i < fast.data().size(); ++i)
      err = std::max(err, std::abs(fast.data()[i] - slow.data()[i]));
    CHECK(err == 0.0);
    for (int k = 0; k < 20; ++k) {
      const GroupElement h{{0.125 * rng.uniform_int(-3, 3), 0.125 * rng.uniform_int(-3, 3),
                            0.125 * rng.uniform_int(-3, 3)},
                           rng.uniform_int(0, 3), 4};
      CHECK(act_voxelmap(h, v) == brute_force_action(h, v));
    }
  }

  SUBCASE("four quarter turns restore the grid exactly") {
    VoxelGrid w = v;
    for (int i = 0; i < 4; ++i) w = act_voxelmap(GroupElement::rotation(1), w);
    CHECK(w == v);
  }

  SUBCASE("inexact transforms are rejected") {
    CHECK_THROWS_AS(act_voxelmap(GroupElement{{0.05, 0, 0}, 0, 4}, v), InexactTransform);
    VoxelGrid v8(spec, RepSpec::trivial(1, 8));
    CHECK_THROWS_AS(act_voxelmap(GroupElement::rotation(1, 8), v8), InexactTransform);
    CHECK_NOTHROW(act_voxelmap(GroupElement::rotation(2, 8), v8));
  }
}
