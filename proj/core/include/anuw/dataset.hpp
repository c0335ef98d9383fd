#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "anuw/tensor.hpp"

namespace anuw {

enum class SampleSource { disk, synthetic };

/// One RGB/depth training record.
struct SamplePair {
  std::string id;
  Tensor rgb;     // 3 x H x W in [0, 1]
  Tensor label;   // H x W in [0, 1]; 0 marks an invalid pixel
  SampleSource source = SampleSource::disk;
  /// Synthetic data only: depth everywhere, including zeroed label pixels.
  std::optional<Tensor> true_depth;

  std::size_t height() const { return label.dim(0); }
  std::size_t width() const { return label.dim(1); }
};

/// A file that could not be turned into a sample.
struct LoadIssue {
  std::filesystem::path path;
  std::string message;
};

struct LoadResult {
  std::vector<SamplePair> samples;
  std::vector<LoadIssue> skipped;
};

/// Reads `dir/rgb/<id>.png` (8-bit RGB) with `dir/depth/<id>.png` (16-bit
/// gray). Pairs are sorted by id and padded up to multiples of `multiple`
/// (edge replication for rgb, invalid zeros for depth). Broken pairs are
/// reported in `skipped`; DataError if no pair survives.
LoadResult load_dataset(const std::filesystem::path& dir, std::size_t multiple);

/// Pads rgb by edge replication and the label with zeros.
SamplePair pad_to_multiple(SamplePair s, std::size_t multiple);

/// Random scenes: a ground ramp plus 2-5 rectangles/disks at distinct
/// depths. The first floor(invalid_fraction * H * W) pixels in row-major
/// order (a band across the top, like sky) get label 0; the true depth is
/// kept in `true_depth`. Deterministic in `seed`.
std::vector<SamplePair> generate_synthetic(std::size_t n, std::size_t height, std::size_t width,
                                           double invalid_fraction, std::uint64_t seed);

/// RGB image in [0, 1] from an 8-bit PNG (alpha dropped, gray expanded).
Tensor read_rgb_png(const std::filesystem::path& path);

/// Depth label in [0, 1] from a 16-bit single-channel PNG.
Tensor read_depth_png(const std::filesystem::path& path);

}  // namespace anuw
