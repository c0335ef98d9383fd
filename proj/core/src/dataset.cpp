#include "anuw/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "anuw/png_io.hpp"

namespace anuw {

namespace fs = std::filesystem;

Tensor read_rgb_png(const fs::path& path) {
  const Image img = read_png(path);
  if (img.bit_depth != 8) {
    throw DataError("'" + path.string() + "': expected 8-bit RGB, got " +
                    std::to_string(img.bit_depth) + "-bit");
  }
  Tensor rgb = Tensor::feature_map(3, img.height, img.width);
  const bool gray = img.channels <= 2;
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        rgb.at(ch, r, c) = img.at(r, c, gray ? 0 : ch) / 255.0;
      }
    }
  }
  return rgb;
}

Tensor read_depth_png(const fs::path& path) {
  const Image img = read_png(path);
  if (img.bit_depth != 16 || img.channels != 1) {
    throw DataError("'" + path.string() + "': expected 16-bit single-channel depth, got " +
                    std::to_string(img.bit_depth) + "-bit with " + std::to_string(img.channels) +
                    " channel(s)");
  }
  Tensor d = Tensor::matrix(img.height, img.width);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = img.samples[i] / 65535.0;
  return d;
}

SamplePair pad_to_multiple(SamplePair s, std::size_t multiple) {
  const std::size_t h = s.label.dim(0), w = s.label.dim(1);
  const std::size_t ph = (h + multiple - 1) / multiple * multiple;
  const std::size_t pw = (w + multiple - 1) / multiple * multiple;
  if (ph == h && pw == w) return s;
  Tensor rgb = Tensor::feature_map(3, ph, pw);
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t r = 0; r < ph; ++r)
      for (std::size_t c = 0; c < pw; ++c)
        rgb.at(ch, r, c) = s.rgb.at(ch, std::min(r, h - 1), std::min(c, w - 1));
  auto pad_zero = [&](const Tensor& t) {
    Tensor out = Tensor::matrix(ph, pw);
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) out.at(r, c) = t.at(r, c);
    return out;
  };
  s.rgb = std::move(rgb);
  s.label = pad_zero(s.label);
  if (s.true_depth) s.true_depth = pad_zero(*s.true_depth);
  return s;
}

LoadResult load_dataset(const fs::path& dir, std::size_t multiple) {
  if (multiple == 0) throw ConfigError("load_dataset: size multiple must be positive");
  const fs::path rgb_dir = dir / "rgb", depth_dir = dir / "depth";
  LoadResult result;
  std::map<std::string, fs::path> rgb_files, depth_files;
  auto scan = [](const fs::path& d, std::map<std::string, fs::path>& out) {
    std::error_code ec;
    if (!fs::is_directory(d, ec)) return;
    for (const auto& e : fs::directory_iterator(d)) {
      if (e.is_regular_file() && e.path().extension() == ".png") {
        out.emplace(e.path().stem().string(), e.path());
      }
    }
  };
  scan(rgb_dir, rgb_files);
  scan(depth_dir, depth_files);

  for (const auto& [id, path] : depth_files) {
    if (!rgb_files.count(id)) result.skipped.push_back({path, "no matching rgb/" + id + ".png"});
  }
  for (const auto& [id, rgb_path] : rgb_files) {
    auto it = depth_files.find(id);
    if (it == depth_files.end()) {
      result.skipped.push_back({rgb_path, "no matching depth/" + id + ".png"});
      continue;
    }
    try {
      SamplePair s;
      s.id = id;
      s.source = SampleSource::disk;
      s.rgb = read_rgb_png(rgb_path);
      s.label = read_depth_png(it->second);
      if (s.rgb.dim(1) != s.label.dim(0) || s.rgb.dim(2) != s.label.dim(1)) {
        throw DataError("size mismatch: rgb " + std::to_string(s.rgb.dim(2)) + "x" +
                        std::to_string(s.rgb.dim(1)) + ", depth " +
                        std::to_string(s.label.dim(1)) + "x" + std::to_string(s.label.dim(0)));
      }
      result.samples.push_back(pad_to_multiple(std::move(s), multiple));
    } catch (const DataError& e) {
      result.skipped.push_back({rgb_path, e.what()});
    }
  }
  if (result.samples.empty()) {
    std::string msg = "no pairs found in '" + dir.string() + "'";
    if (!result.skipped.empty()) msg += " (" + result.skipped.front().message + ")";
    throw DataError(msg);
  }
  return result;
}

namespace {

// Uniform double in [0, 1) straight from the engine's bits, so scenes do not
// depend on the standard library's distribution implementations.
class Uniform {
 public:
  explicit Uniform(std::uint64_t seed) : engine_(seed) {}
  double operator()() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double operator()(double lo, double hi) { return lo + (hi - lo) * (*this)(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>((*this)() * n); }

 private:
  std::mt19937_64 engine_;
};

struct Shape2d {
  bool disk;
  double cy, cx, ry, rx;
  double depth;
  double hue[3];

  bool covers(double y, double x) const {
    const double dy = (y - cy) / ry, dx = (x - cx) / rx;
    return disk ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
  }
};

}  // namespace

std::vector<SamplePair> generate_synthetic(std::size_t n, std::size_t height, std::size_t width,
                                           double invalid_fraction, std::uint64_t seed) {
  if (!(invalid_fraction >= 0.0) || invalid_fraction >= 1.0) {
    throw ConfigError("invalid_fraction must lie in [0, 1), got " +
                      std::to_string(invalid_fraction));
  }
  if (height < 2 || width < 2) throw ConfigError("synthetic images must be at least 2 x 2");
  const std::size_t invalid = static_cast<std::size_t>(
      std::floor(invalid_fraction * static_cast<double>(height * width)));

  std::vector<SamplePair> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    Uniform rng(seed * 0x9E3779B97F4A7C15ULL + k + 1);
    // Ground ramp: far at the top row, near at the bottom.
    const double far = rng(0.75, 0.95), near = rng(0.25, 0.4);
    const std::size_t count = 2 + rng.index(4);
    std::vector<Shape2d> shapes;
    for (std::size_t s = 0; s < count; ++s) {
      Shape2d sh{};
      sh.disk = rng() < 0.5;
      sh.cy = rng(0.15, 0.95) * height;
      sh.cx = rng(0.1, 0.9) * width;
      sh.ry = rng(0.08, 0.25) * height;
      sh.rx = rng(0.08, 0.25) * width;
      // Distinct depths: one slot per object within [0.1, 0.7].
      const double slot = 0.6 / static_cast<double>(count);
      sh.depth = 0.1 + slot * (s + rng(0.15, 0.85));
      for (double& h : sh.hue) h = rng(0.2, 1.0);
      shapes.push_back(sh);
    }
    // Nearer objects are drawn last.
    std::sort(shapes.begin(), shapes.end(),
              [](const Shape2d& a, const Shape2d& b) { return a.depth > b.depth; });

    SamplePair p;
    p.id = "syn" + std::to_string(seed) + "_" + std::to_string(k);
    p.source = SampleSource::synthetic;
    p.rgb = Tensor::feature_map(3, height, width);
    Tensor depth = Tensor::matrix(height, width);
    for (std::size_t r = 0; r < height; ++r) {
      const double t = static_cast<double>(r) / static_cast<double>(height - 1);
      for (std::size_t c = 0; c < width; ++c) {
        double d = far + (near - far) * t;
        double tint[3] = {1.0, 1.0, 1.0};
        for (const auto& sh : shapes) {
          if (sh.covers(r + 0.5, c + 0.5)) {
            d = sh.depth;
            std::copy(std::begin(sh.hue), std::end(sh.hue), tint);
          }
        }
        depth.at(r, c) = d;
        const double shade = 1.0 - 0.8 * d;
        for (std::size_t ch = 0; ch < 3; ++ch) p.rgb.at(ch, r, c) = shade * tint[ch];
      }
    }
    p.label = depth;
    for (std::size_t i = 0; i < invalid; ++i) p.label[i] = 0.0;
    p.true_depth = std::move(depth);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace anuw
