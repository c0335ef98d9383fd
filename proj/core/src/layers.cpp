#include "anuw/layers.hpp"

#include <cmath>
#include <random>

namespace anuw {

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

Conv2d::Conv2d(const std::string& prefix, std::size_t in_channels,
               std::size_t out_channels, std::size_t kernel, std::size_t pad)
    : weight(prefix + "/weight", Tensor({out_channels, in_channels, kernel, kernel})),
      bias(prefix + "/bias", Tensor({out_channels})),
      padding(pad) {}

void Conv2d::init_he(std::uint64_t seed) {
  const Tensor& w = weight.value();
  const double fan_in = static_cast<double>(w.dim(1) * w.dim(2) * w.dim(3));
  std::mt19937_64 rng(seed ^ fnv1a(weight.name()));
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
  for (auto& v : weight.value().values()) v = normal(rng);
  bias.value().fill(0.0);
  weight.zero_grad();
  bias.zero_grad();
}

}  // namespace anuw
