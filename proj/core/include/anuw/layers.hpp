#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "anuw/ops.hpp"
#include "anuw/tape.hpp"

namespace anuw {

/// Square convolution with bias. Parameters are named "<prefix>/weight" and
/// "<prefix>/bias".
struct Conv2d {
  Parameter weight;
  Parameter bias;
  std::size_t padding = 0;

  Conv2d() = default;
  Conv2d(const std::string& prefix, std::size_t in_channels,
         std::size_t out_channels, std::size_t kernel, std::size_t padding = 0);

  std::size_t in_channels() const { return weight.value().dim(1); }
  std::size_t out_channels() const { return weight.value().dim(0); }

  Var operator()(Var x) {
    Tape& t = x.tape();
    return conv2d(x, t.parameter(weight), t.parameter(bias), 1, padding);
  }

  /// He (fan-in) normal weights, zero bias. The stream is keyed by
  /// (seed, parameter name) so a parameter's initial value does not depend
  /// on which other parameters exist.
  void init_he(std::uint64_t seed);

  void collect(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

/// 64-bit FNV-1a; used to key per-parameter random streams.
std::uint64_t fnv1a(std::string_view text);

}  // namespace anuw
