#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "splatflow/io.hpp"
#include "splatflow/renderer.hpp"
#include "splatflow/synthetic.hpp"
#include "support.hpp"

using namespace splatflow;
namespace fs = std::filesystem;

#ifndef SPLATFLOW_TEST_DATA
#define SPLATFLOW_TEST_DATA "tests/data"
#endif

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "splatflow_test_io" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

ColorImage gradient_image(int w, int h) {
  ColorImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img(x, y) = Eigen::Vector3d(x / double(w - 1), y / double(h - 1), 0.3);
  return img;
}

// Sphere tracing against the scene's signed distance; independent of the
// analytic intersector.
std::optional<double> march(const SyntheticScene& s, const Pose& cam, const Intrinsics& k, Eigen::Vector2d px) {
  const Eigen::Vector3d dir_cam((px.x() - k.cx) / k.fx, (px.y() - k.cy) / k.fy, 1.0);
  const Eigen::Vector3d o = cam.translation(), d = (cam.rotation() * dir_cam).normalized();
  auto sdf = [&](const Eigen::Vector3d& p) {
    double v = std::min((p - s.room_min()).minCoeff(), (s.room_max() - p).minCoeff());
    for (const Sphere& sp : s.spheres()) v = std::min(v, (p - sp.center).norm() - sp.radius);
    return v;
  };
  double t = 0;
  for (int i = 0; i < 10000; ++i) {
    const double step = sdf(o + t * d);
    if (step < 1e-12) return (inverse(cam) * (o + t * d)).z();
    t += step;
    if (t > 100) break;
  }
  return std::nullopt;
}

}  // namespace

TEST_CASE("PNG roundtrips") {
  const fs::path dir = scratch("png");
  const ColorImage img = gradient_image(23, 17);
  write_png_rgb(dir / "c.png", img);
  const ColorImage back = read_png_rgb(dir / "c.png");
  REQUIRE(back.width() == 23);
  REQUIRE(back.height() == 17);
  double worst = 0;
  for (std::size_t i = 0; i < img.size(); ++i) worst = std::max(worst, (back[i] - img[i]).cwiseAbs().maxCoeff());
  CHECK(worst <= 0.5 / 255 + 1e-12);

  DepthMap depth(5, 4);
  depth.set(0, 0, 1.0);
  depth.set(1, 0, 2.3456);
  depth.set(4, 3, 12.0);
  write_png_depth(dir / "d.png", depth);
  const DepthMap d = read_png_depth(dir / "d.png");
  CHECK(d(0, 0) == 1.0);
  CHECK(std::abs(d(1, 0) - 2.3456) <= 0.5 / 5000);
  CHECK(d(4, 3) == doctest::Approx(12.0));
  CHECK_FALSE(d.valid(2, 2));
  CHECK(d.valid_count() == 3);

  CHECK_THROWS_AS(read_png_rgb(dir / "missing.png"), IoError);
  write_text(dir / "junk.png", "not a png");
  CHECK_THROWS_AS(read_png_rgb(dir / "junk.png"), IoError);
}

TEST_CASE("trajectory files") {
  const fs::path dir = scratch("traj");
  Trajectory t{{0.0, Pose()},
               {1.5, Pose(Eigen::Quaterniond(Eigen::AngleAxisd(M_PI / 2, Eigen::Vector3d::UnitZ())), {1, 2, 3})}};
  export_trajectory(t, dir / "t.txt");
  CHECK(slurp(dir / "t.txt") == slurp(fs::path(SPLATFLOW_TEST_DATA) / "golden_trajectory.txt"));

  std::mt19937_64 rng(1);
  Trajectory many;
  for (int i = 0; i < 20; ++i) many.push_back({i / 30.0, sftest::random_pose(rng)});
  export_trajectory(many, dir / "m.txt");
  const Trajectory back = read_trajectory(dir / "m.txt");
  REQUIRE(back.size() == many.size());
  for (std::size_t i = 0; i < many.size(); ++i) {
    // Timestamps are written to the microsecond.
    CHECK(std::abs(back[i].timestamp - many[i].timestamp) <= 5e-7 + 1e-12);
    CHECK(sftest::pose_gap(back[i].pose, many[i].pose) < 1e-9);
  }

  export_trajectory({}, dir / "empty.txt");
  CHECK(slurp(dir / "empty.txt") == "# timestamp tx ty tz qx qy qz qw\n");
  CHECK(read_trajectory(dir / "empty.txt").empty());

  write_text(dir / "bad.txt", "# header\n0 0 0 0 0 0 0 1\n1 0 0 0 0 0 0\n");
  try {
    read_trajectory(dir / "bad.txt");
    FAIL("no error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(parse_tum_line("0 0 0 0 0 0 0 0"), std::invalid_argument);
  CHECK_THROWS_AS(parse_tum_line("0 0 0 0 0 0 0 1 extra"), std::invalid_argument);
  CHECK_THROWS_AS(read_trajectory(dir / "nope.txt"), IoError);
}

TEST_CASE("PLY export matches the golden file") {
  const fs::path dir = scratch("ply");
  PointCloud c;
  c.points = {{0, 0, 0}, {1.5, -2.25, 3.125}, {-0.1, 0.2, 10}};
  c.colors = {{0, 0, 0}, {1, 0.5, 0.2}, {0.1, 2.0, -1}};
  export_ply(c, dir / "c.ply");
  CHECK(slurp(dir / "c.ply") == slurp(fs::path(SPLATFLOW_TEST_DATA) / "golden.ply"));
  const PointCloud back = read_ply(dir / "c.ply");
  REQUIRE(back.size() == 3);
  CHECK((back.points[1] - c.points[1]).norm() < 1e-6);
  CHECK(std::abs(back.colors[1].y() - 128 / 255.0) < 1e-12);
}

TEST_CASE("map export keeps every parameter") {
  const fs::path dir = scratch("map");
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  GaussianMap map;
  const Pose cam = sftest::random_pose(rng);
  for (int i = 0; i < 200; ++i) {
    Gaussian g;
    g.center = cam * Eigen::Vector3d(u(rng) - 0.5, u(rng) - 0.5, 1 + u(rng));
    g.radius = 0.01 + 0.05 * u(rng);
    g.opacity = u(rng);
    g.color = {u(rng), u(rng), u(rng)};
    map.add(g, Provenance{i, i / 30.0, {u(rng) * 100, u(rng) * 100}, sftest::random_pose(rng)});
  }
  export_map(map, dir / "map.ply");
  CHECK(read_ply(dir / "map.ply").size() == 200);
  const GaussianMap back = load_map(dir / "map.ply");
  REQUIRE(back.size() == map.size());
  for (std::size_t i = 0; i < map.size(); ++i) {
    CHECK((back[i].center - map[i].center).norm() < 1e-12);
    CHECK(back[i].radius == doctest::Approx(map[i].radius).epsilon(1e-15));
    CHECK(back.provenance()[i].frame == map.provenance()[i].frame);
    CHECK(sftest::pose_gap(back.provenance()[i].camera, map.provenance()[i].camera) < 1e-12);
  }
  // Rendering the reloaded map reproduces the original.
  const Intrinsics k = sftest::small_k();
  const RenderOutput a = render(map, cam, k), b = render(back, cam, k);
  double worst = 0;
  for (std::size_t i = 0; i < a.color.size(); ++i) {
    worst = std::max(worst, (a.color[i] - b.color[i]).cwiseAbs().maxCoeff());
    worst = std::max(worst, std::abs(a.depth[i] - b.depth[i]));
  }
  CHECK(worst < 1e-6);
  CHECK_THROWS_AS(load_map(dir / "other.ply"), IoError);
}

TEST_CASE("TUM directory fixture") {
  const fs::path dir = scratch("tum");
  fs::create_directories(dir / "rgb");
  fs::create_directories(dir / "depth");
  const ColorImage img = gradient_image(8, 6);
  DepthMap depth(8, 6);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 8; ++x) depth.set(x, y, 1.0);
  for (const char* name : {"1.00", "1.10", "1.20", "1.30"}) {
    write_png_rgb(dir / "rgb" / (std::string(name) + ".png"), img);
    write_png_depth(dir / "depth" / (std::string(name) + ".png"), depth);
  }
  write_text(dir / "rgb.txt",
             "# color images\n# file: x\n# timestamp filename\n1.00 rgb/1.00.png\n1.10 rgb/1.10.png\n"
             "1.20 rgb/1.20.png\n1.30 rgb/1.30.png\n");
  // The last depth frame is 0.03 s away from its color frame.
  write_text(dir / "depth.txt",
             "# depth maps\n1.005 depth/1.00.png\n1.11 depth/1.10.png\n1.19 depth/1.20.png\n1.33 depth/1.30.png\n");
  write_text(dir / "groundtruth.txt", "# gt\n1.0 0 0 0 0 0 0 1\n1.1 0.1 0 0 0 0 0 1\n1.2 0.2 0 0 0 0 0 1\n");

  const TumSequence seq = load_tum(dir);
  REQUIRE(seq.frames.size() == 3);
  CHECK(seq.frames[0].timestamp == 1.0);
  CHECK(seq.frames[2].depth == dir / "depth/1.20.png");
  CHECK(seq.groundtruth.size() == 3);
  CHECK_FALSE(seq.intrinsics);
  // 5000 counts per meter.
  const DepthMap d = read_png_depth(seq.frames[1].depth);
  CHECK(d(3, 3) == 1.0);

  write_text(dir / "groundtruth.txt", "1.0 0 0 0 0 0 0 1\n1.1 0 zero 0 0 0 0 1\n");
  try {
    load_tum(dir);
    FAIL("no error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  write_text(dir / "groundtruth.txt", "");
  write_text(dir / "rgb.txt", "1.0\n");
  CHECK_THROWS_AS(load_tum(dir), ParseError);
  fs::remove(dir / "rgb.txt");
  CHECK_THROWS_AS(load_tum(dir), IoError);
  CHECK_THROWS_AS(load_tum(dir / "absent"), IoError);
}

TEST_CASE("written sequences load back") {
  const fs::path dir = scratch("seq");
  const SyntheticScene scene = SyntheticScene::standard(1);
  Intrinsics k = standard_intrinsics();
  TrajectorySpec spec;
  spec.frames = 3;
  const auto poses = make_trajectory(spec);
  std::vector<Frame> frames;
  Trajectory gt;
  for (int i = 0; i < 3; ++i) {
    SyntheticView v = render_synthetic(scene, poses[i], k);
    frames.push_back(Frame{i, 10 + i / 30.0, std::move(v.rgb), std::move(v.depth), k});
    gt.push_back({10 + i / 30.0, poses[i]});
  }
  write_tum_sequence(dir, frames, gt, k);
  const TumSequence seq = load_tum(dir);
  CHECK(seq.frames.size() == 3);
  REQUIRE(seq.intrinsics);
  CHECK(seq.intrinsics->fx == k.fx);
  CHECK(seq.groundtruth.size() == 3);
  const DepthMap d = read_png_depth(seq.frames[1].depth);
  std::size_t n = 0;
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x)
      if (frames[1].depth.valid(x, y)) {
        CHECK(std::abs(d(x, y) - frames[1].depth(x, y)) <= 0.5 / 5000 + 1e-12);
        ++n;
      }
  CHECK(n > 1000);
}

TEST_CASE("synthetic depth closed forms") {
  const SyntheticScene room({-2, -1.5, -2}, {2, 1.5, 2}, {}, 1);
  const Intrinsics k = standard_intrinsics();
  const SyntheticView v = render_synthetic(room, Pose(), k);
  double worst = 0;
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) worst = std::max(worst, std::abs(v.depth(x, y) - 2.0));
  CHECK(worst < 1e-12);

  const Sphere ball{{0.3, -0.2, 1.0}, 0.25, {1, 0, 0}};
  const SyntheticScene with_ball({-2, -1.5, -2}, {2, 1.5, 2}, {ball}, 1);
  const Pose cam = look_at(Eigen::Vector3d(-0.2, 0.1, -0.5), ball.center);
  const auto d = ray_depth(with_ball, cam, k, {k.cx, k.cy});
  REQUIRE(d);
  CHECK(std::abs(*d - ((ball.center - cam.translation()).norm() - ball.radius)) < 1e-12);
}

TEST_CASE("synthetic depth agrees with sphere tracing") {
  const SyntheticScene scene = SyntheticScene::standard(3);
  const Intrinsics k = standard_intrinsics();
  TrajectorySpec spec;
  const auto poses = make_trajectory(spec);
  for (int f : {0, 50}) {
    const SyntheticView v = render_synthetic(scene, poses[f], k);
    double worst = 0;
    for (int y = 0; y < k.height; y += 5)
      for (int x = 0; x < k.width; x += 5) {
        const auto m = march(scene, poses[f], k, Eigen::Vector2d(x, y));
        REQUIRE(m);
        REQUIRE(v.depth.valid(x, y));
        worst = std::max(worst, std::abs(*m - v.depth(x, y)));
      }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("ground-truth flow") {
  const Intrinsics k = standard_intrinsics();
  const SyntheticScene room({-2, -1.5, -2}, {2, 1.5, 2}, {}, 1);
  const GroundTruthFlow same = gt_flow(room, Pose(), Pose(), k);
  for (int y = 0; y < k.height; y += 7)
    for (int x = 0; x < k.width; x += 7) {
      const std::size_t i = same.correspondences.index(x, y);
      CHECK(same.visible[i]);
      CHECK((same.correspondences.coords[i] - Eigen::Vector2d(x, y)).norm() < 1e-9);
    }

  // Moving 0.5 m toward a wall 2 m away scales offsets by 2 / 1.5.
  const Pose forward(Eigen::Quaterniond::Identity(), {0, 0, 0.5});
  const GroundTruthFlow zoom = gt_flow(room, Pose(), forward, k);
  for (const Eigen::Vector2i& p : {Eigen::Vector2i(60, 50), Eigen::Vector2i(100, 70), Eigen::Vector2i(79, 40),
                                  Eigen::Vector2i(70, 65)}) {
    const Eigen::Vector2d c(k.cx, k.cy);
    const Eigen::Vector2d expect = c + (p.cast<double>() - c) * (2.0 / 1.5);
    const std::size_t i = zoom.correspondences.index(p.x(), p.y());
    CHECK((zoom.correspondences.coords[i] - expect).norm() < 1e-9);
  }

  const SyntheticScene scene = SyntheticScene::standard(4);
  std::mt19937_64 rng(5);
  TrajectorySpec spec;
  const auto poses = make_trajectory(spec);
  for (int trial = 0; trial < 5; ++trial) {
    const Pose a = poses[trial * 17];
    const Pose b = a * exp((Tangent() << 0.05 * sftest::random_vec(rng), 0.1 * sftest::random_vec(rng)).finished());
    const GroundTruthFlow g = gt_flow(scene, a, b, k);
    const PixelField c = correspondence_field(render_synthetic(scene, a, k).depth, a, b, k);
    std::size_t n = 0;
    double worst = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (!g.visible[i]) continue;
      ++n;
      worst = std::max(worst, (g.correspondences.coords[i] - c.coords[i]).norm());
    }
    CHECK(n > 5000);
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("synthetic spec parsing") {
  const SyntheticSpec s = parse_synthetic_spec("orbit,frames=40,seed=3,arc=90");
  CHECK(s.trajectory.kind == TrajectoryKind::orbit);
  CHECK(s.trajectory.frames == 40);
  CHECK(s.trajectory.orbit_arc_deg == 90);
  CHECK(make_trajectory(s.trajectory).size() == 40);
  CHECK(parse_synthetic_spec("cv").trajectory.kind == TrajectoryKind::constant_velocity);
  CHECK_THROWS_AS(parse_synthetic_spec("spiral"), std::invalid_argument);
  CHECK_THROWS_AS(parse_synthetic_spec("orbit,frames=x"), std::invalid_argument);
}
