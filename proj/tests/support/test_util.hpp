#pragma once

#include <algorithm>
#include <cmath>

#include "anuw/tensor.hpp"

inline double max_abs_diff(const anuw::Tensor& a, const anuw::Tensor& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}
