#include "anuw/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "anuw/ops.hpp"

namespace anuw {

namespace {

struct MapDims {
  std::size_t h, w;
  std::size_t n() const { return h * w; }
};

MapDims check_pair(const Tensor& y, const Tensor& yhat, const PixelMask& valid,
                   const char* op) {
  if (y.rank() != 2) {
    throw ShapeError(std::string(op) + ": label must be H x W, got " + to_string(y.shape()));
  }
  const MapDims d{y.dim(0), y.dim(1)};
  const bool pred_ok = (yhat.rank() == 2 && yhat.dim(0) == d.h && yhat.dim(1) == d.w) ||
                       (yhat.rank() == 3 && yhat.dim(0) == 1 && yhat.dim(1) == d.h &&
                        yhat.dim(2) == d.w);
  if (!pred_ok) {
    throw ShapeError(std::string(op) + ": prediction shape " + to_string(yhat.shape()) +
                     " does not match label " + to_string(y.shape()));
  }
  if (valid.height() != d.h || valid.width() != d.w) {
    throw ShapeError(std::string(op) + ": mask is " + std::to_string(valid.height()) + " x " +
                     std::to_string(valid.width()) + ", label is " + to_string(y.shape()));
  }
  return d;
}

std::size_t require_valid_pixels(const PixelMask& valid, const char* op) {
  const std::size_t n = valid.count();
  if (n == 0) throw DataError(std::string(op) + ": empty valid mask");
  return n;
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Each *_term returns the value and, when `grad` is non-null, adds
// d(value)/d(yhat) into it.

double depth_term(const Tensor& y, const Tensor& x, const PixelMask& valid, double* grad) {
  const MapDims d = check_pair(y, x, valid, "l_depth");
  const double inv = 1.0 / static_cast<double>(require_valid_pixels(valid, "l_depth"));
  double s = 0.0;
  for (std::size_t p = 0; p < d.n(); ++p) {
    if (!valid[p]) continue;
    const double e = x[p] - y[p];
    s += std::abs(e);
    if (grad) grad[p] += inv * sign(e);
  }
  return s * inv;
}

double grad_term(const Tensor& y, const Tensor& x, const PixelMask& valid, double* grad) {
  const MapDims d = check_pair(y, x, valid, "l_grad");
  const double inv = 1.0 / static_cast<double>(require_valid_pixels(valid, "l_grad"));
  double s = 0.0;
  for (std::size_t i = 0; i < d.h; ++i) {
    for (std::size_t j = 0; j < d.w; ++j) {
      const std::size_t p = i * d.w + j;
      if (!valid[p]) continue;
      if (j + 1 < d.w && valid[p + 1]) {
        const double e = (x[p + 1] - x[p]) - (y[p + 1] - y[p]);
        s += std::abs(e);
        if (grad) {
          grad[p + 1] += inv * sign(e);
          grad[p] -= inv * sign(e);
        }
      }
      if (i + 1 < d.h && valid[p + d.w]) {
        const double e = (x[p + d.w] - x[p]) - (y[p + d.w] - y[p]);
        s += std::abs(e);
        if (grad) {
          grad[p + d.w] += inv * sign(e);
          grad[p] -= inv * sign(e);
        }
      }
    }
  }
  return s * inv;
}

struct WindowStats {
  double mu_x, mu_y, var_x, var_y, cov;
};

// Statistics over the pixel list `idx`; x is the prediction, y the label.
WindowStats window_stats(const Tensor& y, const Tensor& x, const std::vector<std::size_t>& idx) {
  const double inv = 1.0 / static_cast<double>(idx.size());
  WindowStats s{0, 0, 0, 0, 0};
  for (auto p : idx) {
    s.mu_x += x[p];
    s.mu_y += y[p];
  }
  s.mu_x *= inv;
  s.mu_y *= inv;
  for (auto p : idx) {
    const double dx = x[p] - s.mu_x;
    const double dy = y[p] - s.mu_y;
    s.var_x += dx * dx;
    s.var_y += dy * dy;
    s.cov += dx * dy;
  }
  s.var_x *= inv;
  s.var_y *= inv;
  s.cov *= inv;
  return s;
}

// SSIM of one window; adds scale * dSSIM/dx into grad.
double window_ssim(const Tensor& y, const Tensor& x, const std::vector<std::size_t>& idx,
                   const SsimOptions& o, double* grad, double scale) {
  const WindowStats s = window_stats(y, x, idx);
  const double c1 = o.c1(), c2 = o.c2();
  const double a1 = 2.0 * s.mu_x * s.mu_y + c1;
  const double a2 = 2.0 * s.cov + c2;
  const double b1 = s.mu_x * s.mu_x + s.mu_y * s.mu_y + c1;
  const double b2 = s.var_x + s.var_y + c2;
  const double value = (a1 * a2) / (b1 * b2);
  if (grad) {
    const double inv_n = 1.0 / static_cast<double>(idx.size());
    const double den = b1 * b2;
    for (auto p : idx) {
      const double da1 = 2.0 * s.mu_y * inv_n;
      const double da2 = 2.0 * (y[p] - s.mu_y) * inv_n;
      const double db1 = 2.0 * s.mu_x * inv_n;
      const double db2 = 2.0 * (x[p] - s.mu_x) * inv_n;
      const double g = (da1 * a2 + a1 * da2) / den - value * (db1 * b2 + b1 * db2) / den;
      grad[p] += scale * g;
    }
  }
  return value;
}

std::size_t window_side(const SsimOptions& o, std::size_t h, std::size_t w) {
  return std::max<std::size_t>(1, std::min({o.window, h, w}));
}

// Top-left corners of the win x win windows free of invalid pixels.
std::vector<std::pair<std::size_t, std::size_t>> valid_windows(const PixelMask& valid,
                                                               std::size_t win) {
  const MapDims d{valid.height(), valid.width()};
  // Integral image of invalid pixels to test windows in O(1).
  std::vector<std::size_t> bad((d.h + 1) * (d.w + 1), 0);
  for (std::size_t i = 0; i < d.h; ++i)
    for (std::size_t j = 0; j < d.w; ++j)
      bad[(i + 1) * (d.w + 1) + j + 1] = bad[i * (d.w + 1) + j + 1] +
                                         bad[(i + 1) * (d.w + 1) + j] -
                                         bad[i * (d.w + 1) + j] + (valid.at(i, j) ? 0 : 1);
  auto window_ok = [&](std::size_t i, std::size_t j) {
    const std::size_t W = d.w + 1;
    return bad[(i + win) * W + j + win] - bad[i * W + j + win] - bad[(i + win) * W + j] +
               bad[i * W + j] ==
           0;
  };
  std::vector<std::pair<std::size_t, std::size_t>> windows;
  for (std::size_t i = 0; i + win <= d.h; ++i)
    for (std::size_t j = 0; j + win <= d.w; ++j)
      if (window_ok(i, j)) windows.emplace_back(i, j);
  return windows;
}

double ssim_term(const Tensor& y, const Tensor& x, const SsimOptions& o, const PixelMask& valid,
                 double* grad, double scale) {
  const MapDims d = check_pair(y, x, valid, "ssim");
  if (o.global) {
    std::vector<std::size_t> idx;
    for (std::size_t p = 0; p < d.n(); ++p)
      if (valid[p]) idx.push_back(p);
    if (idx.empty()) throw DataError("ssim: empty valid mask");
    return window_ssim(y, x, idx, o, grad, scale);
  }
  const std::size_t win = window_side(o, d.h, d.w);
  const auto windows = valid_windows(valid, win);
  if (windows.empty()) throw DataError("ssim: no window lies entirely on valid pixels");

  const double inv_k = 1.0 / static_cast<double>(windows.size());
  std::vector<std::size_t> idx(win * win);
  double total = 0.0;
  for (auto [i, j] : windows) {
    for (std::size_t a = 0; a < win; ++a)
      for (std::size_t b = 0; b < win; ++b) idx[a * win + b] = (i + a) * d.w + j + b;
    total += window_ssim(y, x, idx, o, grad, scale * inv_k);
  }
  return total / static_cast<double>(windows.size());
}

// Records a scalar loss whose gradient w.r.t. `prediction` was computed
// alongside its value.
template <typename Term>
Var record_term(Var prediction, Term&& term) {
  Tape& tape = prediction.tape();
  const bool want_grad = tape.recording() && tape.requires_grad(prediction);
  Tensor grad;
  if (want_grad) grad = Tensor(prediction.value().shape());
  const double value = term(prediction.value(), want_grad ? grad.data() : nullptr);
  return tape.record(Tensor::scalar(value), {prediction},
                     [prediction, g = std::move(grad)](Tape& t, const Tensor& dy) {
    Tensor& dx = t.grad_buffer(prediction);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[0] * g[i];
  });
}

}  // namespace

double l_depth(const Tensor& y, const Tensor& yhat, const PixelMask& valid) {
  return depth_term(y, yhat, valid, nullptr);
}

std::pair<Tensor, Tensor> image_gradients(const Tensor& d) {
  if (d.rank() != 2) throw ShapeError("image_gradients: expected H x W, got " + to_string(d.shape()));
  const std::size_t h = d.dim(0), w = d.dim(1);
  if (h < 2 || w < 2) {
    throw ShapeError("image_gradients: map must be at least 2 x 2, got " + to_string(d.shape()));
  }
  Tensor gx({h, w}), gy({h, w});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      if (j + 1 < w) gx.at(i, j) = d.at(i, j + 1) - d.at(i, j);
      if (i + 1 < h) gy.at(i, j) = d.at(i + 1, j) - d.at(i, j);
    }
  return {gx, gy};
}

double l_grad(const Tensor& y, const Tensor& yhat, const PixelMask& valid) {
  return grad_term(y, yhat, valid, nullptr);
}

bool has_ssim_window(const PixelMask& valid, const SsimOptions& opts) {
  if (valid.count() == 0) return false;
  if (opts.global) return true;
  return !valid_windows(valid, window_side(opts, valid.height(), valid.width())).empty();
}

double ssim(const Tensor& y, const Tensor& yhat, const SsimOptions& opts, const PixelMask& valid) {
  return ssim_term(y, yhat, opts, valid, nullptr, 1.0);
}

double l_ssim(const Tensor& y, const Tensor& yhat, const SsimOptions& opts,
              const PixelMask& valid) {
  return (1.0 - ssim(y, yhat, opts, valid)) / 2.0;
}

double total_loss(const Tensor& y, const Tensor& yhat, const LossWeights& w,
                  const SsimOptions& opts, const PixelMask& valid) {
  const double base = w.lambda1 * l_depth(y, yhat, valid) + w.lambda2 * l_grad(y, yhat, valid);
  if (!has_ssim_window(valid, opts)) return base;
  return base + w.lambda3 * l_ssim(y, yhat, opts, valid);
}

double abs_rel(const Tensor& y, const Tensor& yhat, const PixelMask& valid,
               AbsRelDenominator denom) {
  const MapDims d = check_pair(y, yhat, valid, "abs_rel");
  const std::size_t n = require_valid_pixels(valid, "abs_rel");
  double s = 0.0;
  for (std::size_t p = 0; p < d.n(); ++p) {
    if (!valid[p]) continue;
    const double q = denom == AbsRelDenominator::prediction ? yhat[p] : y[p];
    if (!(q > 0.0)) {
      throw NumericError("abs_rel: non-positive denominator " + std::to_string(q) +
                         " at pixel " + std::to_string(p));
    }
    s += std::abs(y[p] - yhat[p]) / q;
  }
  return s / static_cast<double>(n);
}

double si_rmse(const Tensor& y, const Tensor& yhat, const PixelMask& valid) {
  const MapDims d = check_pair(y, yhat, valid, "si_rmse");
  const double inv = 1.0 / static_cast<double>(require_valid_pixels(valid, "si_rmse"));
  double m = 0.0;
  for (std::size_t p = 0; p < d.n(); ++p)
    if (valid[p]) m += yhat[p] - y[p];
  m *= inv;
  double v = 0.0;
  for (std::size_t p = 0; p < d.n(); ++p) {
    if (!valid[p]) continue;
    const double e = (yhat[p] - y[p]) - m;
    v += e * e;
  }
  return std::sqrt(v * inv);
}

MetricReport evaluate_metrics(const Tensor& y, const Tensor& yhat, const PixelMask& valid,
                              const SsimOptions& opts, AbsRelDenominator denom) {
  MetricReport r;
  r.abs_rel = abs_rel(y, yhat, valid, denom);
  r.ssim = has_ssim_window(valid, opts) ? ssim(y, yhat, opts, valid)
                                        : std::numeric_limits<double>::quiet_NaN();
  r.si_rmse = si_rmse(y, yhat, valid);
  r.pixel_count = valid.count();
  return r;
}

std::pair<Var, Var> image_gradients(Var depth) {
  if (depth.value().rank() == 3 && depth.value().dim(0) == 1) {
    const Shape s = depth.value().shape();
    depth = reshape(depth, {s[1], s[2]});
  }
  const Tensor& d = depth.value();
  auto [gx, gy] = image_gradients(d);
  const std::size_t h = d.dim(0), w = d.dim(1);
  Tape& tape = depth.tape();
  Var vx = tape.record(std::move(gx), {depth}, [depth, h, w](Tape& t, const Tensor& g) {
    Tensor& dd = t.grad_buffer(depth);
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j + 1 < w; ++j) {
        dd.at(i, j + 1) += g.at(i, j);
        dd.at(i, j) -= g.at(i, j);
      }
  });
  Var vy = tape.record(std::move(gy), {depth}, [depth, h, w](Tape& t, const Tensor& g) {
    Tensor& dd = t.grad_buffer(depth);
    for (std::size_t i = 0; i + 1 < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        dd.at(i + 1, j) += g.at(i, j);
        dd.at(i, j) -= g.at(i, j);
      }
  });
  return {vx, vy};
}

Var depth_loss(Var prediction, const Tensor& label, const PixelMask& valid) {
  return record_term(prediction, [&](const Tensor& x, double* g) {
    return depth_term(label, x, valid, g);
  });
}

Var gradient_loss(Var prediction, const Tensor& label, const PixelMask& valid) {
  return record_term(prediction, [&](const Tensor& x, double* g) {
    return grad_term(label, x, valid, g);
  });
}

Var ssim_index(Var prediction, const Tensor& label, const SsimOptions& opts,
               const PixelMask& valid) {
  return record_term(prediction, [&](const Tensor& x, double* g) {
    return ssim_term(label, x, opts, valid, g, 1.0);
  });
}

Var ssim_loss(Var prediction, const Tensor& label, const SsimOptions& opts,
              const PixelMask& valid) {
  return affine(ssim_index(prediction, label, opts, valid), -0.5, 0.5);
}

Var total_loss(Var prediction, const Tensor& label, const LossWeights& w,
               const SsimOptions& opts, const PixelMask& valid) {
  Var a = affine(depth_loss(prediction, label, valid), w.lambda1);
  Var b = affine(gradient_loss(prediction, label, valid), w.lambda2);
  if (!has_ssim_window(valid, opts)) return add(a, b);
  Var c = affine(ssim_loss(prediction, label, opts, valid), w.lambda3);
  return add(add(a, b), c);
}

}  // namespace anuw
