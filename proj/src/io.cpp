#include "splatflow/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace splatflow {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  png_longjmp(png, 1);
}

/// Decodes to 8-bit RGB (channels = 3) or 16-bit gray (channels = 1).
std::vector<std::uint16_t> decode_png(const fs::path& path, int channels, int& width, int& height) {
  FilePtr f = open_file(path, "rb");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, nullptr);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint16_t> out;
  std::vector<png_byte> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("bad PNG " + path.string() + ": " + err);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);

  if (channels == 3) {
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  } else {
    if (color != PNG_COLOR_TYPE_GRAY) {
      png_destroy_read_struct(&png, &info, nullptr);
      throw IoError("depth PNG must be single-channel: " + path.string());
    }
    if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  }
  png_read_update_info(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  row.resize(rowbytes);
  out.resize(static_cast<std::size_t>(width) * height * channels);
  for (int y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < width * channels; ++x) {
      std::uint16_t v;
      if (bit_depth == 16) {
        v = static_cast<std::uint16_t>((row[2 * static_cast<std::size_t>(x)] << 8) |
                                       row[2 * static_cast<std::size_t>(x) + 1]);
      } else {
        v = row[static_cast<std::size_t>(x)];
      }
      out[static_cast<std::size_t>(y) * width * channels + x] = v;
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void encode_png(const fs::path& path, int width, int height, int channels, int bit_depth,
                const std::vector<std::uint16_t>& samples) {
  FilePtr f = open_file(path, "wb");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, nullptr);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  std::vector<png_byte> row(static_cast<std::size_t>(width) * channels * (bit_depth / 8));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("cannot encode PNG " + path.string() + ": " + err);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width * channels; ++x) {
      const std::uint16_t v = samples[static_cast<std::size_t>(y) * width * channels + x];
      if (bit_depth == 16) {
        row[2 * static_cast<std::size_t>(x)] = static_cast<png_byte>(v >> 8);  // PNG is big-endian
        row[2 * static_cast<std::size_t>(x) + 1] = static_cast<png_byte>(v & 0xff);
      } else {
        row[static_cast<std::size_t>(x)] = static_cast<png_byte>(v);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

ColorImage read_png_rgb(const fs::path& path) {
  int w = 0, h = 0;
  const auto samples = decode_png(path, 3, w, h);
  ColorImage img(w, h);
  for (std::size_t i = 0; i < img.size(); ++i) {
    img[i] = Eigen::Vector3d(samples[3 * i], samples[3 * i + 1], samples[3 * i + 2]) / 255.0;
  }
  return img;
}

void write_png_rgb(const fs::path& path, const ColorImage& img) {
  std::vector<std::uint16_t> samples(img.size() * 3);
  for (std::size_t i = 0; i < img.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const double v = std::isfinite(img[i][c]) ? std::clamp(img[i][c], 0.0, 1.0) : 0.0;
      samples[3 * i + c] = static_cast<std::uint16_t>(std::lround(v * 255.0));
    }
  }
  encode_png(path, img.width(), img.height(), 3, 8, samples);
}

DepthMap read_png_depth(const fs::path& path, double counts_per_meter) {
  int w = 0, h = 0;
  const auto samples = decode_png(path, 1, w, h);
  DepthMap depth(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint16_t v = samples[static_cast<std::size_t>(y) * w + x];
      if (v) depth.set(x, y, v / counts_per_meter);
    }
  }
  return depth;
}

void write_png_depth(const fs::path& path, const DepthMap& depth, double counts_per_meter) {
  std::vector<std::uint16_t> samples(depth.size(), 0);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (!depth.valid(i)) continue;
    samples[i] = static_cast<std::uint16_t>(std::clamp(std::lround(depth[i] * counts_per_meter), 1L, 65535L));
  }
  encode_png(path, depth.width(), depth.height(), 1, 16, samples);
}

std::string format_tum_line(const TimedPose& p) {
  const Eigen::Vector3d& t = p.pose.translation();
  const Eigen::Quaterniond& q = p.pose.rotation();
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.6f %.10f %.10f %.10f %.10f %.10f %.10f %.10f", p.timestamp, t.x(), t.y(), t.z(),
                q.x(), q.y(), q.z(), q.w());
  return buf;
}

TimedPose parse_tum_line(const std::string& line) {
  std::istringstream in(line);
  double v[8];
  for (double& x : v) {
    if (!(in >> x)) throw std::invalid_argument("expected 8 numbers: timestamp tx ty tz qx qy qz qw");
  }
  std::string extra;
  if (in >> extra) throw std::invalid_argument("trailing token '" + extra + "'");
  for (double x : v) {
    if (!std::isfinite(x)) throw std::invalid_argument("non-finite value");
  }
  const Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
  if (q.norm() < 1e-9) throw std::invalid_argument("zero quaternion");
  return {v[0], Pose(q, Eigen::Vector3d(v[1], v[2], v[3]))};
}

void export_trajectory(const Trajectory& t, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# timestamp tx ty tz qx qy qz qw\n";
  for (const TimedPose& p : t) out << format_tum_line(p) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

template <typename Fn>
void for_each_data_line(const fs::path& path, Fn fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    try {
      fn(line);
    } catch (const std::exception& e) {
      throw ParseError(path, number, e.what());
    }
  }
}

std::pair<double, std::string> parse_stamped_path(const std::string& line) {
  std::istringstream in(line);
  double ts = 0.0;
  std::string file;
  if (!(in >> ts >> file) || !std::isfinite(ts)) throw std::invalid_argument("expected 'timestamp path'");
  return {ts, file};
}

}  // namespace

Trajectory read_trajectory(const fs::path& path) {
  Trajectory t;
  for_each_data_line(path, [&](const std::string& line) { t.push_back(parse_tum_line(line)); });
  return t;
}

PointCloud map_cloud(const GaussianMap& map) {
  PointCloud cloud;
  for (const Gaussian& g : map.gaussians()) {
    cloud.points.push_back(g.center);
    cloud.colors.push_back(g.color);
  }
  return cloud;
}

void export_ply(const PointCloud& cloud, const fs::path& path) {
  if (cloud.colors.size() != cloud.points.size()) throw std::invalid_argument("export_ply: colors/points mismatch");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
      << "\nproperty float x\nproperty float y\nproperty float z\n"
         "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  char buf[160];
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector3d& p = cloud.points[i];
    int rgb[3];
    for (int c = 0; c < 3; ++c) {
      const double v = std::isfinite(cloud.colors[i][c]) ? std::clamp(cloud.colors[i][c], 0.0, 1.0) : 0.0;
      rgb[c] = static_cast<int>(std::lround(v * 255.0));
    }
    std::snprintf(buf, sizeof buf, "%.6f %.6f %.6f %d %d %d\n", p.x(), p.y(), p.z(), rgb[0], rgb[1], rgb[2]);
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path.string());
}

PointCloud read_ply(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  int number = 0;
  std::size_t count = 0;
  bool header_done = false;
  auto next = [&]() {
    if (!std::getline(in, line)) throw ParseError(path, number + 1, "unexpected end of file");
    ++number;
  };
  next();
  if (line != "ply") throw ParseError(path, number, "missing 'ply' magic");
  while (!header_done) {
    next();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") throw ParseError(path, number, "only ascii PLY is supported");
    } else if (word == "element") {
      std::string kind;
      ls >> kind >> count;
      if (kind != "vertex" || !ls) throw ParseError(path, number, "expected 'element vertex N'");
    } else if (word == "end_header") {
      header_done = true;
    }
  }
  PointCloud cloud;
  for (std::size_t i = 0; i < count; ++i) {
    next();
    std::istringstream ls(line);
    double x, y, z;
    int r, g, b;
    if (!(ls >> x >> y >> z >> r >> g >> b)) throw ParseError(path, number, "expected 'x y z red green blue'");
    cloud.points.emplace_back(x, y, z);
    cloud.colors.push_back(Eigen::Vector3d(r, g, b) / 255.0);
  }
  return cloud;
}

void export_map(const GaussianMap& map, const fs::path& ply_path) {
  export_ply(map_cloud(map), ply_path);
  fs::path meta = ply_path;
  meta += ".meta";
  std::ofstream out(meta);
  if (!out) throw IoError("cannot write " + meta.string());
  out << "# cx cy cz radius opacity r g b frame timestamp px py tx ty tz qx qy qz qw\n";
  char buf[1024];
  for (std::size_t i = 0; i < map.size(); ++i) {
    const Gaussian& g = map[i];
    const Provenance& p = map.provenance()[i];
    const Eigen::Vector3d& t = p.camera.translation();
    const Eigen::Quaterniond& q = p.camera.rotation();
    std::snprintf(buf, sizeof buf,
                  "%.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %d %.17g %.17g %.17g "
                  "%.17g %.17g %.17g %.17g %.17g %.17g %.17g\n",
                  g.center.x(), g.center.y(), g.center.z(), g.radius, g.opacity, g.color.x(), g.color.y(),
                  g.color.z(), p.frame, p.timestamp, p.pixel.x(), p.pixel.y(), t.x(), t.y(), t.z(), q.x(), q.y(),
                  q.z(), q.w());
    out << buf;
  }
  if (!out) throw IoError("write failed: " + meta.string());
}

GaussianMap load_map(const fs::path& ply_path) {
  fs::path meta = ply_path;
  meta += ".meta";
  if (!fs::exists(meta)) throw IoError("map parameters missing: " + meta.string());
  GaussianMap map;
  for_each_data_line(meta, [&](const std::string& line) {
    std::istringstream in(line);
    Gaussian g;
    Provenance p;
    Eigen::Vector3d t;
    double q[4];
    if (!(in >> g.center.x() >> g.center.y() >> g.center.z() >> g.radius >> g.opacity >> g.color.x() >>
          g.color.y() >> g.color.z() >> p.frame >> p.timestamp >> p.pixel.x() >> p.pixel.y() >> t.x() >> t.y() >>
          t.z() >> q[0] >> q[1] >> q[2] >> q[3])) {
      throw std::invalid_argument("expected 19 fields per Gaussian");
    }
    p.camera = Pose(Eigen::Quaterniond(q[3], q[0], q[1], q[2]), t);
    if (!(g.radius > 0.0) || !std::isfinite(g.opacity)) throw std::invalid_argument("invalid Gaussian parameters");
    map.add(g, p);
  });
  return map;
}

std::string format_intrinsics(const Intrinsics& k) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g %d %d", k.fx, k.fy, k.cx, k.cy, k.width, k.height);
  return buf;
}

Intrinsics parse_intrinsics(const std::string& text) {
  std::istringstream in(text);
  Intrinsics k;
  if (!(in >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height)) {
    throw std::invalid_argument("expected 'fx fy cx cy width height'");
  }
  k.validate();
  return k;
}

TumSequence load_tum(const fs::path& dir, double tolerance) {
  TumSequence seq;
  seq.directory = dir;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  const fs::path rgb_list = dir / "rgb.txt";
  if (!fs::exists(rgb_list)) throw IoError("missing " + rgb_list.string());

  std::vector<std::pair<double, std::string>> rgb, depth;
  for_each_data_line(rgb_list, [&](const std::string& l) { rgb.push_back(parse_stamped_path(l)); });
  const fs::path depth_list = dir / "depth.txt";
  const bool has_depth = fs::exists(depth_list);
  if (has_depth) for_each_data_line(depth_list, [&](const std::string& l) { depth.push_back(parse_stamped_path(l)); });

  auto by_time = [](const auto& a, const auto& b) { return a.first < b.first; };
  std::stable_sort(rgb.begin(), rgb.end(), by_time);
  std::stable_sort(depth.begin(), depth.end(), by_time);

  for (const auto& [ts, file] : rgb) {
    TumEntry e{ts, dir / file, {}};
    if (has_depth) {
      auto it = std::lower_bound(depth.begin(), depth.end(), std::make_pair(ts, std::string()), by_time);
      double best = tolerance + 1.0;
      const std::pair<double, std::string>* match = nullptr;
      for (auto c : {it, it == depth.begin() ? it : std::prev(it)}) {
        if (c == depth.end()) continue;
        const double dt = std::abs(c->first - ts);
        if (dt < best) {
          best = dt;
          match = &*c;
        }
      }
      if (!match || best > tolerance) continue;
      e.depth = dir / match->second;
    }
    if (!seq.frames.empty() && !(ts > seq.frames.back().timestamp)) continue;
    seq.frames.push_back(std::move(e));
  }

  const fs::path gt = dir / "groundtruth.txt";
  if (fs::exists(gt)) {
    seq.groundtruth = read_trajectory(gt);
    std::stable_sort(seq.groundtruth.begin(), seq.groundtruth.end(),
                     [](const TimedPose& a, const TimedPose& b) { return a.timestamp < b.timestamp; });
  }
  const fs::path calib = dir / "calibration.txt";
  if (fs::exists(calib)) {
    for_each_data_line(calib, [&](const std::string& l) {
      if (seq.intrinsics) throw std::invalid_argument("more than one calibration line");
      seq.intrinsics = parse_intrinsics(l);
    });
  }
  return seq;
}

void write_tum_sequence(const fs::path& dir, const std::vector<Frame>& frames, const Trajectory& groundtruth,
                        const Intrinsics& k) {
  fs::create_directories(dir / "rgb");
  fs::create_directories(dir / "depth");
  std::ofstream rgb(dir / "rgb.txt"), depth(dir / "depth.txt"), calib(dir / "calibration.txt");
  if (!rgb || !depth || !calib) throw IoError("cannot write sequence index files in " + dir.string());
  rgb << "# timestamp filename\n";
  depth << "# timestamp filename\n";
  calib << "# fx fy cx cy width height\n" << format_intrinsics(k) << '\n';
  char name[64];
  for (const Frame& f : frames) {
    std::snprintf(name, sizeof name, "%.6f.png", f.timestamp);
    write_png_rgb(dir / "rgb" / name, f.rgb);
    write_png_depth(dir / "depth" / name, f.depth);
    char stamp[32];
    std::snprintf(stamp, sizeof stamp, "%.6f", f.timestamp);
    rgb << stamp << " rgb/" << name << '\n';
    depth << stamp << " depth/" << name << '\n';
  }
  export_trajectory(groundtruth, dir / "groundtruth.txt");
}

}  // namespace splatflow
