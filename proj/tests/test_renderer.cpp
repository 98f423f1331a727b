#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "splatflow/renderer.hpp"
#include "support.hpp"

using namespace splatflow;

namespace {

GaussianMap random_scene(std::mt19937_64& rng, int n, const Pose& camera) {
  std::uniform_real_distribution<double> u(0, 1);
  GaussianMap map;
  for (int i = 0; i < n; ++i) {
    Gaussian g;
    g.center = camera * Eigen::Vector3d(2 * (u(rng) - 0.5), 1.5 * (u(rng) - 0.5), 1 + 3 * u(rng));
    g.radius = 0.01 + 0.1 * u(rng);
    g.opacity = u(rng);
    g.color = {u(rng), u(rng), u(rng)};
    map.add(g);
  }
  return map;
}

bool bit_equal(const ScalarImage& a, const ScalarImage& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("project_splat closed forms") {
  const Intrinsics k{100, 100, 31.5, 23.5, 64, 48};
  Gaussian g;
  g.center = {0, 0, 1};
  g.radius = 0.01;
  const auto s = project_splat(g, Pose(), k);
  REQUIRE(s);
  CHECK(s->center.x() == doctest::Approx(31.5));
  CHECK(s->center.y() == doctest::Approx(23.5));
  CHECK(s->radius_px == doctest::Approx(1.0));
  CHECK(s->depth == doctest::Approx(1.0));

  g.center = {0, 0, -1};
  CHECK_FALSE(project_splat(g, Pose(), k));
  // Far off-screen: 10 px beyond the border with a 1 px footprint.
  g.center = {(64 - 0.5 - 31.5 + 10) / 100.0, 0, 1};
  CHECK_FALSE(project_splat(g, Pose(), k));
  // Just inside the 3-sigma reach.
  g.center = {(64 - 0.5 - 31.5 + 2.9) / 100.0, 0, 1};
  CHECK(project_splat(g, Pose(), k));
}

TEST_CASE("project_splat agrees with a direct per-element evaluation") {
  std::mt19937_64 rng(5);
  const Intrinsics k{120, 110, 80, 60, 160, 120};
  for (int trial = 0; trial < 200; ++trial) {
    const Pose cam = sftest::random_pose(rng);
    Gaussian g;
    g.center = cam.translation() + sftest::random_vec(rng, 2.0);
    g.radius = 0.05;
    // Oracle: camera point from the rotation matrix, pinhole by hand.
    const Eigen::Matrix3d R = cam.rotation().toRotationMatrix();
    const Eigen::Vector3d x = R.transpose() * (g.center - cam.translation());
    const auto s = project_splat(g, cam, k);
    if (x.z() <= kMinDepth) {
      CHECK_FALSE(s);
      continue;
    }
    const double u = k.fx * x.x() / x.z() + k.cx, v = k.fy * x.y() / x.z() + k.cy;
    const double rp = g.radius * 0.5 * (k.fx + k.fy) / x.z();
    const double ox = std::max({-0.5 - u, 0.0, u - 159.5}), oy = std::max({-0.5 - v, 0.0, v - 119.5});
    const bool visible = std::sqrt(ox * ox + oy * oy) <= 3 * rp;
    REQUIRE(bool(s) == visible);
    if (!s) continue;
    CHECK(std::abs(s->center.x() - u) < 1e-9);
    CHECK(std::abs(s->center.y() - v) < 1e-9);
    CHECK(std::abs(s->radius_px - rp) < 1e-9);
    CHECK(std::abs(s->depth - x.z()) < 1e-9);
  }
}

TEST_CASE("render: empty map, single splat, occlusion") {
  const Intrinsics k = sftest::small_k(33, 25, 50);
  const RenderOutput empty = render(GaussianMap{}, Pose(), k);
  for (std::size_t i = 0; i < empty.silhouette.size(); ++i) {
    CHECK(empty.silhouette[i] == 0.0);
    CHECK(empty.color[i].isZero());
  }
  CHECK(empty.depth_map().valid_count() == 0);

  Gaussian g;
  g.center = {0, 0, 2};
  g.radius = 0.1;
  g.opacity = 1.0;
  g.color = {0.2, 0.6, 0.9};
  GaussianMap one;
  one.add(g);
  const RenderOutput r = render(one, Pose(), k);
  CHECK((r.color(16, 12) - 0.999 * g.color).norm() < 1e-12);
  CHECK(std::abs(r.depth(16, 12) - 2.0) <= 1e-6 * 2.0);

  Gaussian back = g;
  back.center.z() = 3.0;
  back.color = {1, 0, 0};
  GaussianMap two;
  two.add(back);
  two.add(g);
  const RenderOutput front = render(two, Pose(), k);
  CHECK((front.color(16, 12) - g.color).norm() < 1e-3 * 2);
  std::swap(two.gaussians()[0].center, two.gaussians()[1].center);
  const RenderOutput swapped = render(two, Pose(), k);
  CHECK((swapped.color(16, 12) - back.color).norm() < 1e-3 * 2);
}

TEST_CASE("render is invariant to map order, bit for bit") {
  std::mt19937_64 rng(6);
  const Intrinsics k = sftest::small_k();
  const Pose cam = sftest::random_pose(rng);
  GaussianMap map = random_scene(rng, 200, cam);
  // A few exact depth ties exercise the index tie-break.
  map.gaussians()[7] = map.gaussians()[3];
  map.gaussians()[7].color = {1, 0, 1};
  const RenderOutput a = render(map, cam, k);
  std::vector<std::size_t> perm(map.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  for (int trial = 0; trial < 3; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    // Keep the tied pair in index order so the tie-break sees the same order.
    auto p3 = std::find(perm.begin(), perm.end(), 3), p7 = std::find(perm.begin(), perm.end(), 7);
    if (p7 < p3) std::iter_swap(p3, p7);
    GaussianMap shuffled;
    for (std::size_t i : perm) shuffled.add(map[i]);
    const RenderOutput b = render(shuffled, cam, k);
    CHECK(bit_equal(a.silhouette, b.silhouette));
    CHECK(bit_equal(a.depth, b.depth));
    bool color_same = true;
    for (std::size_t i = 0; i < a.color.size(); ++i) color_same = color_same && a.color[i] == b.color[i];
    CHECK(color_same);
  }
}

TEST_CASE("adding a Gaussian never lowers the silhouette") {
  std::mt19937_64 rng(7);
  const Intrinsics k = sftest::small_k();
  RenderSettings settings;
  for (int trial = 0; trial < 20; ++trial) {
    const Pose cam = sftest::random_pose(rng);
    GaussianMap map = random_scene(rng, 60, cam);
    const RenderOutput before = render(map, cam, k, settings);
    map.add(random_scene(rng, 1, cam)[0]);
    const RenderOutput after = render(map, cam, k, settings);
    // Early termination leaves up to min_transmittance of slack.
    double worst = 0.0;
    for (std::size_t i = 0; i < before.silhouette.size(); ++i)
      worst = std::max(worst, before.silhouette[i] - after.silhouette[i]);
    CHECK(worst <= settings.min_transmittance);
  }
  settings.min_transmittance = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Pose cam = sftest::random_pose(rng);
    GaussianMap map = random_scene(rng, 60, cam);
    const RenderOutput before = render(map, cam, k, settings);
    map.add(random_scene(rng, 1, cam)[0]);
    const RenderOutput after = render(map, cam, k, settings);
    double worst = 0.0;
    for (std::size_t i = 0; i < before.silhouette.size(); ++i)
      worst = std::max(worst, before.silhouette[i] - after.silhouette[i]);
    CHECK(worst <= 1e-15);
  }
}

TEST_CASE("render output invariants") {
  std::mt19937_64 rng(8);
  const Intrinsics k = sftest::small_k();
  for (int trial = 0; trial < 10; ++trial) {
    const Pose cam = sftest::random_pose(rng);
    const GaussianMap map = random_scene(rng, 300, cam);
    const RenderOutput r = render(map, cam, k);
    for (std::size_t i = 0; i < r.silhouette.size(); ++i) {
      CHECK(r.silhouette[i] >= 0.0);
      CHECK(r.silhouette[i] <= 1.0);
      CHECK((r.color[i].array() >= 0.0).all());
      CHECK((r.color[i].array() <= 1.0 + 1e-12).all());
      if (r.silhouette[i] > 0.0) CHECK(std::isfinite(r.depth[i]));
    }
    // Splats come out sorted front to back.
    for (std::size_t s = 1; s < r.splats.size(); ++s) CHECK(r.splats[s - 1].depth <= r.splats[s].depth);
  }
}

TEST_CASE("zero loss weights give zero gradients") {
  const sftest::GradientScene s = sftest::gradient_scene(1);
  LossSpec loss = s.loss();
  loss.color_weight = 0.0;
  loss.depth_weight = 0.0;
  const LossAndGradients g = render_with_gradients(s.map, s.camera, s.k, loss, s.settings);
  CHECK(g.loss == 0.0);
  CHECK(g.gradients.pose.isZero());
  for (std::size_t i = 0; i < s.map.size(); ++i) {
    CHECK(g.gradients.center[i].isZero());
    CHECK(g.gradients.radius[i] == 0.0);
    CHECK(g.gradients.opacity[i] == 0.0);
    CHECK(g.gradients.color[i].isZero());
  }
}

TEST_CASE("analytic gradients match central differences") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const sftest::GradientScene s = sftest::gradient_scene(seed);
    const sftest::GradientErrors e = sftest::check_gradients(s);
    INFO("seed " << seed << " center " << e.center << " radius " << e.radius << " opacity " << e.opacity
                 << " color " << e.color << " pose " << e.pose);
    CHECK(e.worst() < 1e-3);
  }
}

TEST_CASE("loss and gradients with the default renderer settings stay finite") {
  std::mt19937_64 rng(9);
  const Intrinsics k = sftest::small_k();
  const Pose cam = sftest::random_pose(rng);
  const GaussianMap map = random_scene(rng, 100, cam);
  const ColorImage target(k.width, k.height, Eigen::Vector3d(0.5, 0.5, 0.5));
  DepthMap dt(k.width, k.height);
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) dt.set(x, y, 2.0);
  LossSpec loss{&target, 0.5, &dt, 1.0, 0.5};
  const LossAndGradients g = render_with_gradients(map, cam, k, loss);
  CHECK(std::isfinite(g.loss));
  CHECK(g.gradients.pose.allFinite());
  for (std::size_t i = 0; i < map.size(); ++i) {
    CHECK(g.gradients.center[i].allFinite());
    CHECK(std::isfinite(g.gradients.radius[i]));
    CHECK(std::isfinite(g.gradients.opacity[i]));
  }
  CHECK(g.loss == doctest::Approx(compute_loss(render(map, cam, k), loss)).epsilon(1e-12));
}

TEST_CASE("shifting camera and map together leaves the loss unchanged") {
  sftest::GradientScene s = sftest::gradient_scene(4);
  s.settings = RenderSettings{};
  const double base = s.eval(s.map, s.camera);
  const Eigen::Vector3d offset(3.2, -1.7, 0.4);
  GaussianMap moved = s.map;
  for (auto& g : moved.gaussians()) g.center += offset;
  const Pose cam(s.camera.rotation(), s.camera.translation() + offset);
  CHECK(std::abs(s.eval(moved, cam) - base) <= 1e-9 * std::max(1.0, base));
}
