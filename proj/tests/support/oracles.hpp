#pragma once

// Direct, loop-by-loop reference implementations used to check the library.
// Nothing here calls into anuw numerics; only the container types are shared.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "anuw/tensor.hpp"

namespace oracle {

using anuw::PixelMask;
using anuw::Tensor;

inline Tensor random_tensor(anuw::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = u(rng);
  return t;
}

inline PixelMask random_mask(std::size_t h, std::size_t w, double p_valid, std::mt19937_64& rng) {
  std::bernoulli_distribution b(p_valid);
  PixelMask m(h, w);
  for (std::size_t i = 0; i < m.size(); ++i) m.set(i, b(rng));
  return m;
}

// out[o][i][j] = b[o] + sum_c sum_u sum_v w[o][c][u][v] * x[c][i*s+u-p][j*s+v-p]
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
                     std::size_t pad) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t O = w.dim(0), K = w.dim(2);
  const std::size_t OH = (H + 2 * pad - K) / stride + 1, OW = (W + 2 * pad - K) / stride + 1;
  Tensor out({O, OH, OW});
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t i = 0; i < OH; ++i)
      for (std::size_t j = 0; j < OW; ++j) {
        double s = b[o];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t u = 0; u < K; ++u)
            for (std::size_t v = 0; v < K; ++v) {
              const long r = static_cast<long>(i * stride + u) - static_cast<long>(pad);
              const long q = static_cast<long>(j * stride + v) - static_cast<long>(pad);
              if (r < 0 || q < 0 || r >= static_cast<long>(H) || q >= static_cast<long>(W)) continue;
              s += w[((o * C + c) * K + u) * K + v] * x.at(c, r, q);
            }
        out.at(o, i, j) = s;
      }
  return out;
}

inline Tensor maxpool2(const Tensor& x) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  Tensor out({C, H / 2, W / 2});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < H / 2; ++i)
      for (std::size_t j = 0; j < W / 2; ++j)
        out.at(c, i, j) = std::max({x.at(c, 2 * i, 2 * j), x.at(c, 2 * i, 2 * j + 1),
                                    x.at(c, 2 * i + 1, 2 * j), x.at(c, 2 * i + 1, 2 * j + 1)});
  return out;
}

// Half-pixel bilinear: source coordinate (o + 0.5) / 2 - 0.5, clamped to the
// image.
inline Tensor upsample2(const Tensor& x) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  Tensor out({C, 2 * H, 2 * W});
  auto sample = [&](std::size_t c, double r, double q) {
    r = std::clamp(r, 0.0, static_cast<double>(H - 1));
    q = std::clamp(q, 0.0, static_cast<double>(W - 1));
    const auto r0 = static_cast<std::size_t>(std::floor(r)), q0 = static_cast<std::size_t>(std::floor(q));
    const std::size_t r1 = std::min(r0 + 1, H - 1), q1 = std::min(q0 + 1, W - 1);
    const double fr = r - r0, fq = q - q0;
    return (1 - fr) * ((1 - fq) * x.at(c, r0, q0) + fq * x.at(c, r0, q1)) +
           fr * ((1 - fq) * x.at(c, r1, q0) + fq * x.at(c, r1, q1));
  };
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < 2 * H; ++i)
      for (std::size_t j = 0; j < 2 * W; ++j)
        out.at(c, i, j) = sample(c, (i + 0.5) / 2.0 - 0.5, (j + 0.5) / 2.0 - 0.5);
  return out;
}

inline std::vector<double> softmax(const std::vector<double>& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  std::vector<double> e(v.size());
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += (e[i] = std::exp(v[i] - mx));
  for (auto& x : e) x /= s;
  return e;
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.dim(0), b.dim(1)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < b.dim(1); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.dim(1); ++k) s += a.at(i, k) * b.at(k, j);
      c.at(i, j) = s;
    }
  return c;
}

inline Tensor transpose(const Tensor& a) {
  Tensor t({a.dim(1), a.dim(0)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < a.dim(1); ++j) t.at(j, i) = a.at(i, j);
  return t;
}

// 1x1 convolution as an explicit per-pixel channel mix.
inline Tensor pointwise(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2), O = w.dim(0);
  Tensor out({O, H, W});
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t p = 0; p < H * W; ++p) {
      double s = b[o];
      for (std::size_t c = 0; c < C; ++c) s += w[o * C + c] * x[c * H * W + p];
      out[o * H * W + p] = s;
    }
  return out;
}

struct AwcaWeights {
  Tensor pool_w, pool_b, w1, b1, w2, b2;
};

inline std::vector<double> weighted_pool(const Tensor& f, const Tensor& pool_w, const Tensor& pool_b) {
  const std::size_t C = f.dim(0), n = f.dim(1) * f.dim(2);
  const Tensor y = pointwise(f, pool_w, pool_b);
  const std::vector<double> s = softmax(std::vector<double>(y.values().begin(), y.values().end()));
  std::vector<double> z(C, 0.0);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t p = 0; p < n; ++p) z[c] += s[p] * f[c * n + p];
  return z;
}

inline Tensor awca(const Tensor& f, const AwcaWeights& p) {
  const std::size_t C = f.dim(0), n = f.dim(1) * f.dim(2), R = p.w1.dim(0);
  const std::vector<double> z = weighted_pool(f, p.pool_w, p.pool_b);
  std::vector<double> hidden(R);
  for (std::size_t r = 0; r < R; ++r) {
    double s = p.b1[r];
    for (std::size_t c = 0; c < C; ++c) s += p.w1[r * C + c] * z[c];
    hidden[r] = std::max(0.0, s);
  }
  Tensor out(f.shape());
  for (std::size_t c = 0; c < C; ++c) {
    double s = p.b2[c];
    for (std::size_t r = 0; r < R; ++r) s += p.w2[c * R + r] * hidden[r];
    const double v = 1.0 / (1.0 + std::exp(-s));
    for (std::size_t q = 0; q < n; ++q) out[c * n + q] = v * f[c * n + q];
  }
  return out;
}

inline Tensor centering(std::size_t m) {
  Tensor t({m, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      t.at(i, j) = (1.0 / m) * ((i == j ? 1.0 : 0.0) - 1.0 / m);
  return t;
}

struct PsnlWeights {
  Tensor b_w, b_b, d_w, d_b, phi_w, phi_b;
};

// n x m matrix with one row per position.
inline Tensor positions(const Tensor& f) {
  const std::size_t C = f.dim(0), n = f.dim(1) * f.dim(2);
  Tensor t({n, C});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t p = 0; p < n; ++p) t.at(p, c) = f[c * n + p];
  return t;
}

inline Tensor psnl_scores(const Tensor& f, const PsnlWeights& p, bool spatial) {
  const Tensor B = positions(pointwise(f, p.b_w, p.b_b));
  if (spatial) {
    const Tensor cb = matmul(centering(B.dim(0)), B);
    return matmul(cb, transpose(cb));
  }
  return matmul(matmul(B, centering(B.dim(1))), transpose(B));
}

inline Tensor psnl_patch(const Tensor& f, const PsnlWeights& p, bool spatial = false) {
  const std::size_t h = f.dim(1), w = f.dim(2), n = h * w;
  const Tensor X = psnl_scores(f, p, spatial);
  const Tensor D = positions(pointwise(f, p.d_w, p.d_b));
  const std::size_t m = D.dim(1);
  Tensor S({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(n);
    for (std::size_t j = 0; j < n; ++j) row[j] = X.at(i, j);
    const auto s = softmax(row);
    for (std::size_t j = 0; j < n; ++j) S.at(i, j) = s[j];
  }
  const Tensor U = matmul(S, D);  // n x m
  Tensor umap({m, h, w});
  for (std::size_t c = 0; c < m; ++c)
    for (std::size_t q = 0; q < n; ++q) umap[c * n + q] = U.at(q, c);
  Tensor out = pointwise(umap, p.phi_w, p.phi_b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += f[i];
  return out;
}

inline Tensor psnl(const Tensor& f, const PsnlWeights& p, bool spatial = false) {
  const std::size_t C = f.dim(0), h = f.dim(1) / 2, w = f.dim(2) / 2;
  Tensor out(f.shape());
  for (std::size_t qr = 0; qr < 2; ++qr)
    for (std::size_t qc = 0; qc < 2; ++qc) {
      Tensor patch({C, h, w});
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < h; ++i)
          for (std::size_t j = 0; j < w; ++j) patch.at(c, i, j) = f.at(c, qr * h + i, qc * w + j);
      const Tensor s = psnl_patch(patch, p, spatial);
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < h; ++i)
          for (std::size_t j = 0; j < w; ++j) out.at(c, qr * h + i, qc * w + j) = s.at(c, i, j);
    }
  return out;
}

// ---- losses and metrics, written straight from their definitions ----

inline double l_depth(const Tensor& y, const Tensor& x, const PixelMask& valid) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < y.size(); ++p)
    if (valid[p]) {
      s += std::abs(y[p] - x[p]);
      ++n;
    }
  return s / n;
}

inline double l_grad(const Tensor& y, const Tensor& x, const PixelMask& valid) {
  const std::size_t H = y.dim(0), W = y.dim(1);
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      if (!valid.at(i, j)) continue;
      ++n;
      if (j + 1 < W && valid.at(i, j + 1))
        s += std::abs((y.at(i, j + 1) - y.at(i, j)) - (x.at(i, j + 1) - x.at(i, j)));
      if (i + 1 < H && valid.at(i + 1, j))
        s += std::abs((y.at(i + 1, j) - y.at(i, j)) - (x.at(i + 1, j) - x.at(i, j)));
    }
  return s / n;
}

inline double ssim_of(const std::vector<double>& a, const std::vector<double>& b, double c1,
                      double c2) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ma += a[k];
    mb += b[k];
  }
  ma /= n;
  mb /= n;
  double va = 0, vb = 0, cov = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    va += (a[k] - ma) * (a[k] - ma);
    vb += (b[k] - mb) * (b[k] - mb);
    cov += (a[k] - ma) * (b[k] - mb);
  }
  va /= n;
  vb /= n;
  cov /= n;
  return ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

// Mean SSIM over all win x win windows (clamped to the map) made of valid
// pixels only; global = one window of all valid pixels.
inline double ssim(const Tensor& y, const Tensor& x, const PixelMask& valid, std::size_t win = 7,
                   bool global = false, double range = 1.0) {
  const double c1 = (0.01 * range) * (0.01 * range), c2 = (0.03 * range) * (0.03 * range);
  const std::size_t H = y.dim(0), W = y.dim(1);
  if (global) {
    std::vector<double> a, b;
    for (std::size_t p = 0; p < y.size(); ++p)
      if (valid[p]) {
        a.push_back(y[p]);
        b.push_back(x[p]);
      }
    return ssim_of(a, b, c1, c2);
  }
  win = std::min({win, H, W});
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i + win <= H; ++i)
    for (std::size_t j = 0; j + win <= W; ++j) {
      std::vector<double> a, b;
      bool ok = true;
      for (std::size_t u = 0; u < win && ok; ++u)
        for (std::size_t v = 0; v < win; ++v) {
          if (!valid.at(i + u, j + v)) {
            ok = false;
            break;
          }
          a.push_back(y.at(i + u, j + v));
          b.push_back(x.at(i + u, j + v));
        }
      if (!ok) continue;
      total += ssim_of(a, b, c1, c2);
      ++count;
    }
  return total / count;
}

inline double abs_rel(const Tensor& y, const Tensor& x, const PixelMask& valid, bool gt_denominator = false) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < y.size(); ++p)
    if (valid[p]) {
      s += std::abs((y[p] - x[p]) / (gt_denominator ? y[p] : x[p]));
      ++n;
    }
  return s / n;
}

// The textbook one-pass formula: sqrt(sum d^2 / N - (sum d)^2 / N^2).
inline double si_rmse(const Tensor& y, const Tensor& x, const PixelMask& valid) {
  double s = 0.0, s2 = 0.0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < y.size(); ++p)
    if (valid[p]) {
      const double d = x[p] - y[p];
      s += d;
      s2 += d * d;
      ++n;
    }
  const double N = static_cast<double>(n);
  return std::sqrt(std::max(0.0, s2 / N - (s * s) / (N * N)));
}

// Adam written as the textbook recurrence for one scalar.
struct AdamScalar {
  double m = 0.0, v = 0.0;
  int t = 0;
  double step(double param, double g, double lr, double b1 = 0.9, double b2 = 0.99, double eps = 1e-8) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    return param - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

}  // namespace oracle
