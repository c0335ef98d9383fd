#pragma once

#include <cstddef>
#include <utility>

#include "anuw/tape.hpp"
#include "anuw/tensor.hpp"

// Training loss and evaluation metrics for depth maps.
//
// Conventions: `y` is the reference (label) depth map, `yhat` the
// prediction. Depth maps are H x W tensors; predictions may also be passed as
// 1 x H x W. `valid` selects the pixels that take part; every term averages
// over the valid pixel count.

namespace anuw {

struct LossWeights {
  double lambda1 = 0.2;  // point-wise L1
  double lambda2 = 0.3;  // gradient L1
  double lambda3 = 0.5;  // (1 - SSIM) / 2
};

struct SsimOptions {
  /// Dynamic range of the depth values (1 for normalized depth).
  double dynamic_range = 1.0;
  /// Side of the uniform sliding window; clamped to the image size.
  std::size_t window = 7;
  /// Single window over all valid pixels instead of sliding windows.
  bool global = false;

  double c1() const { return (0.01 * dynamic_range) * (0.01 * dynamic_range); }
  double c2() const { return (0.03 * dynamic_range) * (0.03 * dynamic_range); }
};

enum class AbsRelDenominator { prediction, ground_truth };

struct MetricReport {
  double abs_rel = 0.0;
  double ssim = 0.0;
  double si_rmse = 0.0;
  std::size_t pixel_count = 0;
};

/// Mean |y - yhat| over valid pixels.
double l_depth(const Tensor& y, const Tensor& yhat, const PixelMask& valid);

/// Forward differences along x (columns) and y (rows); the last column of
/// gx and the last row of gy are zero.
std::pair<Tensor, Tensor> image_gradients(const Tensor& d);

/// Mean over valid pixels of |gx(y) - gx(yhat)| + |gy(y) - gy(yhat)|. A
/// directional difference at p only counts when the neighbour it reads is
/// valid too.
double l_grad(const Tensor& y, const Tensor& yhat, const PixelMask& valid);

/// Mean local SSIM over windows lying entirely on valid pixels (or the
/// single global window). Throws DataError when no window qualifies.
double ssim(const Tensor& y, const Tensor& yhat, const SsimOptions& opts,
            const PixelMask& valid);

/// True when ssim() has at least one window to average over.
bool has_ssim_window(const PixelMask& valid, const SsimOptions& opts);

/// (1 - ssim) / 2.
double l_ssim(const Tensor& y, const Tensor& yhat, const SsimOptions& opts,
              const PixelMask& valid);

/// lambda1 l_depth + lambda2 l_grad + lambda3 l_ssim. The SSIM term is
/// dropped for masks that leave no SSIM window.
double total_loss(const Tensor& y, const Tensor& yhat, const LossWeights& w,
                  const SsimOptions& opts, const PixelMask& valid);

/// Mean |y - yhat| / yhat (default) or / y over valid pixels. Throws
/// NumericError if a denominator is not positive.
double abs_rel(const Tensor& y, const Tensor& yhat, const PixelMask& valid,
               AbsRelDenominator denom = AbsRelDenominator::prediction);

/// Standard deviation of (yhat - y) over valid pixels.
double si_rmse(const Tensor& y, const Tensor& yhat, const PixelMask& valid);

/// ssim is NaN when the mask leaves no window.
MetricReport evaluate_metrics(const Tensor& y, const Tensor& yhat,
                              const PixelMask& valid, const SsimOptions& opts,
                              AbsRelDenominator denom = AbsRelDenominator::prediction);

// Differentiable versions. Gradient flows into `prediction` only; labels are
// plain tensors and never enter the tape.

/// Accepts H x W or 1 x H x W; the results are H x W.
std::pair<Var, Var> image_gradients(Var depth);
Var depth_loss(Var prediction, const Tensor& label, const PixelMask& valid);
Var gradient_loss(Var prediction, const Tensor& label, const PixelMask& valid);
Var ssim_index(Var prediction, const Tensor& label, const SsimOptions& opts,
               const PixelMask& valid);
Var ssim_loss(Var prediction, const Tensor& label, const SsimOptions& opts,
              const PixelMask& valid);
Var total_loss(Var prediction, const Tensor& label, const LossWeights& w,
               const SsimOptions& opts, const PixelMask& valid);

}  // namespace anuw
