#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "anuw/tape.hpp"
#include "anuw/tensor_archive.hpp"

namespace anuw {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

/// First/second moments keyed by parameter name, plus the shared step count.
struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::uint64_t step = 0;

  /// Entries "adam/step", "adam/m/<name>", "adam/v/<name>".
  void write(TensorArchive& archive) const;
  static AdamState read(const TensorArchive& archive);

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One bias-corrected Adam update of every parameter from its grad().
/// Parameters are visited in name order whatever order they are passed in.
void adam_step(std::span<Parameter* const> params, AdamState& state, double lr,
               const AdamConfig& cfg = {});

/// lr0 * (1 - progress / total)^power, clamped at 0 once progress >= total.
double poly_lr(double lr0, double progress, double total, double power = 1.5);

}  // namespace anuw
