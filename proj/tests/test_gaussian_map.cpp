#include <doctest.h>

#include <cmath>
#include <random>

#include "splatflow/gaussian_map.hpp"
#include "splatflow/renderer.hpp"
#include "splatflow/synthetic.hpp"
#include "support.hpp"

using namespace splatflow;

namespace {

Frame flat_frame(const Intrinsics& k, double depth) {
  Frame f;
  f.intrinsics = k;
  f.rgb = ColorImage(k.width, k.height, Eigen::Vector3d(0.2, 0.4, 0.6));
  f.depth = DepthMap(k.width, k.height);
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) f.depth.set(x, y, depth);
  return f;
}

}  // namespace

TEST_CASE("eval_gaussian closed forms") {
  Gaussian g;
  g.center = {1, 2, 3};
  g.radius = 0.5;
  g.opacity = 0.7;
  CHECK(eval_gaussian(g, g.center) == doctest::Approx(0.7));
  g.opacity = 1.0;
  CHECK(eval_gaussian(g, g.center + Eigen::Vector3d(0, 0.5, 0)) == doctest::Approx(0.60653065971).epsilon(1e-10));
  g.opacity = 0.0;
  CHECK(eval_gaussian(g, {9, 9, 9}) == 0.0);
}

TEST_CASE("init_from_depth: empty, single pixel, strided frame") {
  const Intrinsics k = sftest::small_k(33, 25, 40.0);
  MapSettings s;

  Frame none;
  none.intrinsics = k;
  none.rgb = ColorImage(k.width, k.height);
  none.depth = DepthMap(k.width, k.height);
  CHECK(init_from_depth(none, Pose(), {}, s).size() == 0);

  Frame one = none;
  one.depth.set(16, 12, 2.0);
  s.initial_scale = 1.5;
  const NewGaussians g1 = init_from_depth(one, Pose(), {}, s);
  REQUIRE(g1.size() == 1);
  CHECK((g1.gaussians[0].center - Eigen::Vector3d(0, 0, 2)).norm() < 1e-12);
  CHECK(g1.gaussians[0].radius == doctest::Approx(2.0 / k.fx * 1.5));
  CHECK(g1.gaussians[0].opacity == doctest::Approx(s.initial_opacity));
  CHECK(g1.provenance[0].pixel == Eigen::Vector2d(16, 12));

  std::mt19937_64 rng(11);
  Frame full = flat_frame(k, 1.0);
  std::uniform_real_distribution<double> u(0.5, 5.0), v(0, 1);
  int invalid_on_grid = 0;
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) {
      if (v(rng) < 0.1) {
        full.depth.invalidate(x, y);
        if (x % 4 == 0 && y % 4 == 0) ++invalid_on_grid;
      } else {
        full.depth.set(x, y, u(rng));
      }
    }
  s.stride = 4;
  const Pose pose = sftest::random_pose(rng);
  const NewGaussians gs = init_from_depth(full, pose, {}, s);
  const int expected = ((k.width + 3) / 4) * ((k.height + 3) / 4) - invalid_on_grid;
  CHECK(static_cast<int>(gs.size()) == expected);
  for (std::size_t i = 0; i < gs.size(); ++i) {
    const Eigen::Vector3d cam = inverse(pose) * gs.gaussians[i].center;
    const Eigen::Vector2d src = gs.provenance[i].pixel;
    CHECK((project(cam, k) - src).norm() < 1e-6);
    CHECK(std::abs(cam.z() - full.depth(int(src.x()), int(src.y()))) <= 1e-9 * cam.z());
  }
}

TEST_CASE("init_from_depth honours the mask") {
  const Intrinsics k = sftest::small_k(10, 8, 10.0);
  const Frame f = flat_frame(k, 2.0);
  Mask m(k.width, k.height, 0);
  m(3, 4) = 1;
  m(7, 1) = 1;
  CHECK(init_from_depth(f, Pose(), m, {}).size() == 2);
}

TEST_CASE("densify: empty map takes every valid pixel, explained frame adds none") {
  const Intrinsics k = sftest::small_k(24, 18, 20.0);
  Frame f = flat_frame(k, 2.0);
  f.depth.invalidate(0, 0);
  GaussianMap map;
  const ScalarImage zero(k.width, k.height, 0.0);
  MapSettings s;
  CHECK(densify(map, f, Pose(), zero, zero, s) == f.depth.valid_count());

  // Render the map it just built: every pixel is explained.
  s.initial_scale = 1.0;
  map = GaussianMap{};
  map.append(init_from_depth(f, Pose(), {}, s));
  const RenderOutput out = render(map, Pose(), k);
  const std::size_t before = map.size();
  std::size_t interior = 0;
  const Mask m = densify_mask(f.depth, out.silhouette, out.depth, s);
  for (int y = 1; y < k.height - 1; ++y)
    for (int x = 1; x < k.width - 1; ++x) interior += m(x, y);
  CHECK(interior == 0);
  // Idempotent once the border is filled in.
  densify(map, f, Pose(), out.silhouette, out.depth, s);
  const RenderOutput again = render(map, Pose(), k);
  CHECK(densify(map, f, Pose(), again.silhouette, again.depth, s) == 0);
  CHECK(map.size() >= before);
}

TEST_CASE("densify adds roughly the newly visible pixels") {
  const SyntheticScene scene = SyntheticScene::standard(1);
  const Intrinsics k = standard_intrinsics();
  TrajectorySpec spec;
  spec.frames = 100;
  const std::vector<Pose> poses = make_trajectory(spec);
  const Pose a = poses[0], b = poses[4];
  const SyntheticView va = render_synthetic(scene, a, k), vb = render_synthetic(scene, b, k);
  const Frame fa{0, 0.0, va.rgb, va.depth, k}, fb{1, 0.0, vb.rgb, vb.depth, k};

  // The first view only maps its left half; the rest counts as hidden.
  const int split = k.width / 2;
  Mask left(k.width, k.height, 0);
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < split; ++x) left(x, y) = 1;
  MapSettings s;
  GaussianMap map;
  map.append(init_from_depth(fa, a, left, s));
  const RenderOutput out = render(map, b, k);

  // Oracle: pixels of b whose surface point the mapped half never saw.
  std::size_t fresh = 0;
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) {
      if (!vb.depth.valid(x, y)) continue;
      const Eigen::Vector3d w = b * backproject({x, y}, vb.depth(x, y), k);
      Eigen::Vector2d px;
      if (!point_visible(scene, a, k, w, &px, 0.01) || std::lround(px.x()) >= split) ++fresh;
    }
  const std::size_t added = densify(map, fb, b, out.silhouette, out.depth, s);
  MESSAGE("newly visible " << fresh << ", added " << added);
  REQUIRE(fresh > 2000);
  CHECK(std::abs(double(added) - double(fresh)) <= 0.1 * double(fresh));
}

TEST_CASE("prune keeps exactly the survivors of the predicate") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> o(0, 0.02), r(0, 1.5);
  GaussianMap map;
  for (int i = 0; i < 500; ++i) {
    Gaussian g;
    g.opacity = o(rng);
    g.radius = i % 3 == 0 ? r(rng) * 1e-4 : r(rng);
    map.add(g, Provenance{i, 0.0, {}, {}});
  }
  MapSettings s;
  std::vector<int> expect;
  for (std::size_t i = 0; i < map.size(); ++i) {
    const Gaussian& g = map[i];
    if (g.opacity >= s.prune_opacity && g.radius >= s.min_radius && g.radius <= s.max_radius) expect.push_back(int(i));
  }
  prune(map, s);
  REQUIRE(map.size() == expect.size());
  for (std::size_t i = 0; i < map.size(); ++i) CHECK(map.provenance()[i].frame == expect[i]);

  GaussianMap empty;
  CHECK(prune(empty, s) == 0);
  GaussianMap clear;
  for (int i = 0; i < 10; ++i) {
    Gaussian g;
    g.opacity = 0.0;
    clear.add(g);
  }
  prune(clear, s);
  CHECK(clear.empty());
}

TEST_CASE("clamp restores field invariants") {
  GaussianMap map;
  Gaussian g;
  g.radius = -1;
  g.opacity = 1.7;
  g.color = {-0.2, 0.5, 3.0};
  map.add(g);
  map.clamp(1e-4, 1.0);
  CHECK(map[0].radius == doctest::Approx(1e-4));
  CHECK(map[0].opacity == 1.0);
  CHECK(map[0].color == Eigen::Vector3d(0, 0.5, 1));
}
