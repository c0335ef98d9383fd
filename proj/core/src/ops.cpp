#include "anuw/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace anuw {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got shape " + to_string(t.shape()));
  }
}

void require_same_tape(Var a, Var b, const char* op) {
  if (&a.tape() != &b.tape()) {
    throw std::logic_error(std::string(op) + ": operands live on different tapes");
  }
}

void add_into(Tensor& dst, std::span<const double> src) {
  auto d = dst.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += src[i];
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t out_channels, k, stride, padding;
  std::size_t out_h, out_w;

  std::size_t patch() const { return channels * k * k; }
  std::size_t pixels() const { return out_h * out_w; }
  bool pointwise() const { return k == 1 && stride == 1 && padding == 0; }
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& w, const Tensor& b,
                           std::size_t stride, std::size_t padding) {
  require_rank(x, 3, "conv2d input");
  require_rank(w, 4, "conv2d kernel");
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  ConvGeometry g{};
  g.channels = x.dim(0);
  g.height = x.dim(1);
  g.width = x.dim(2);
  g.out_channels = w.dim(0);
  g.k = w.dim(2);
  g.stride = stride;
  g.padding = padding;
  if (w.dim(1) != g.channels) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(w.dim(1)) +
                     " input channels but input has " + std::to_string(g.channels));
  }
  if (w.dim(3) != g.k) {
    throw ShapeError("conv2d: kernel must be square, got " + to_string(w.shape()));
  }
  if (b.size() != g.out_channels) {
    throw ShapeError("conv2d: bias has " + std::to_string(b.size()) +
                     " elements, kernel has " + std::to_string(g.out_channels) +
                     " output channels");
  }
  if (g.height + 2 * padding < g.k || g.width + 2 * padding < g.k) {
    throw ShapeError("conv2d: kernel " + std::to_string(g.k) + "x" +
                     std::to_string(g.k) + " does not fit padded input " +
                     to_string(x.shape()));
  }
  g.out_h = (g.height + 2 * padding - g.k) / stride + 1;
  g.out_w = (g.width + 2 * padding - g.k) / stride + 1;
  return g;
}

// cols is (C*k*k) x (out_h*out_w).
void im2col(const ConvGeometry& g, const double* x, double* cols) {
  const std::size_t pixels = g.pixels();
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* plane = x + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = cols + ((c * g.k + ky) * g.k + kx) * pixels;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.padding);
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.padding);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width))
                          ? 0.0
                          : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* cols, double* x) {
  const std::size_t pixels = g.pixels();
  for (std::size_t c = 0; c < g.channels; ++c) {
    double* plane = x + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = cols + ((c * g.k + ky) * g.k + kx) * pixels;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          double* dst = plane + static_cast<std::size_t>(iy) * g.width;
          const double* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.padding);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

std::vector<double> transpose_matrix(const double* a, std::size_t rows,
                                     std::size_t cols) {
  std::vector<double> t(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = a[r * cols + c];
  return t;
}

}  // namespace

namespace kernels {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = a[i * k + p];
      if (s == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

void gemm_tn_acc(std::size_t m, std::size_t n, std::size_t k, const double* a,
                 const double* b, double* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double s = arow[i];
      if (s == 0.0) continue;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                      std::size_t stride, std::size_t padding) {
  const ConvGeometry g = conv_geometry(x, w, b, stride, padding);
  Tensor out({g.out_channels, g.out_h, g.out_w});
  const std::size_t pixels = g.pixels();
  if (g.pointwise()) {
    gemm_nn(g.out_channels, pixels, g.patch(), w.data(), x.data(), out.data(), false);
  } else {
    std::vector<double> cols(g.patch() * pixels);
    im2col(g, x.data(), cols.data());
    gemm_nn(g.out_channels, pixels, g.patch(), w.data(), cols.data(), out.data(), false);
  }
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    double* row = out.data() + o * pixels;
    for (std::size_t p = 0; p < pixels; ++p) row[p] += b[o];
  }
  return out;
}

}  // namespace kernels

Var conv2d(Var input, Var kernel, Var bias, std::size_t stride, std::size_t padding) {
  require_same_tape(input, kernel, "conv2d");
  require_same_tape(input, bias, "conv2d");
  Tape& tape = input.tape();
  Tensor out = kernels::conv2d_forward(input.value(), kernel.value(), bias.value(),
                                       stride, padding);
  return tape.record(std::move(out), {input, kernel, bias},
                     [input, kernel, bias, stride, padding](Tape& t, const Tensor& dy) {
    const Tensor& x = t.value(input);
    const Tensor& w = t.value(kernel);
    const ConvGeometry g = conv_geometry(x, w, t.value(bias), stride, padding);
    const std::size_t pixels = g.pixels();
    const std::size_t patch = g.patch();

    if (t.requires_grad(bias)) {
      Tensor& db = t.grad_buffer(bias);
      for (std::size_t o = 0; o < g.out_channels; ++o) {
        const double* row = dy.data() + o * pixels;
        double s = 0.0;
        for (std::size_t p = 0; p < pixels; ++p) s += row[p];
        db[o] += s;
      }
    }
    if (t.requires_grad(kernel)) {
      std::vector<double> cols_t;
      if (g.pointwise()) {
        cols_t = transpose_matrix(x.data(), patch, pixels);
      } else {
        std::vector<double> cols(patch * pixels);
        im2col(g, x.data(), cols.data());
        cols_t = transpose_matrix(cols.data(), patch, pixels);
      }
      kernels::gemm_nn(g.out_channels, patch, pixels, dy.data(), cols_t.data(),
              t.grad_buffer(kernel).data(), true);
    }
    if (t.requires_grad(input)) {
      Tensor& dx = t.grad_buffer(input);
      if (g.pointwise()) {
        kernels::gemm_tn_acc(patch, pixels, g.out_channels, w.data(), dy.data(), dx.data());
      } else {
        std::vector<double> dcols(patch * pixels, 0.0);
        kernels::gemm_tn_acc(patch, pixels, g.out_channels, w.data(), dy.data(),
                             dcols.data());
        col2im_add(g, dcols.data(), dx.data());
      }
    }
  });
}

Var maxpool2(Var input) {
  const Tensor& x = input.value();
  require_rank(x, 3, "maxpool2");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("maxpool2: height and width must be even, got " +
                     to_string(x.shape()));
  }
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor out({c, oh, ow});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = (ch * h + 2 * i) * w + 2 * j;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (ch * h + 2 * i + dy) * w + 2 * j + dx;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t o = (ch * oh + i) * ow + j;
        out[o] = x[best];
        argmax[o] = best;
      }
    }
  }
  return input.tape().record(std::move(out), {input},
                             [input, argmax = std::move(argmax)](Tape& t, const Tensor& dy) {
    Tensor& dx = t.grad_buffer(input);
    for (std::size_t o = 0; o < argmax.size(); ++o) dx[argmax[o]] += dy[o];
  });
}

namespace {

struct LinearTap {
  std::size_t lo, hi;
  double frac;  // weight of `hi`
};

std::vector<LinearTap> upsample_taps(std::size_t in) {
  std::vector<LinearTap> taps(2 * in);
  for (std::size_t o = 0; o < 2 * in; ++o) {
    double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
    if (src < 0.0) src = 0.0;
    auto lo = static_cast<std::size_t>(src);
    if (lo > in - 1) lo = in - 1;
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[o] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

Var upsample2(Var input) {
  const Tensor& x = input.value();
  require_rank(x, 3, "upsample2");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const auto ty = upsample_taps(h);
  const auto tx = upsample_taps(w);
  Tensor out({c, 2 * h, 2 * w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < 2 * h; ++i) {
      const auto& a = ty[i];
      for (std::size_t j = 0; j < 2 * w; ++j) {
        const auto& b = tx[j];
        const double top = (1.0 - b.frac) * x.at(ch, a.lo, b.lo) + b.frac * x.at(ch, a.lo, b.hi);
        const double bot = (1.0 - b.frac) * x.at(ch, a.hi, b.lo) + b.frac * x.at(ch, a.hi, b.hi);
        out.at(ch, i, j) = (1.0 - a.frac) * top + a.frac * bot;
      }
    }
  }
  return input.tape().record(std::move(out), {input},
                             [input, ty, tx, c, h, w](Tape& t, const Tensor& dy) {
    Tensor& dx = t.grad_buffer(input);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < 2 * h; ++i) {
        const auto& a = ty[i];
        for (std::size_t j = 0; j < 2 * w; ++j) {
          const auto& b = tx[j];
          const double g = dy.at(ch, i, j);
          dx.at(ch, a.lo, b.lo) += (1.0 - a.frac) * (1.0 - b.frac) * g;
          dx.at(ch, a.lo, b.hi) += (1.0 - a.frac) * b.frac * g;
          dx.at(ch, a.hi, b.lo) += a.frac * (1.0 - b.frac) * g;
          dx.at(ch, a.hi, b.hi) += a.frac * b.frac * g;
        }
      }
    }
  });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Tensor& dy) {
    const Tensor& xv = t.value(x);
    Tensor& dx = t.grad_buffer(x);
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (xv[i] > 0.0) dx[i] += dy[i];
  });
}

Var sigmoid(Var x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = stable_sigmoid(v);
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Tensor& dy) {
    const Tensor& xv = t.value(x);
    Tensor& dx = t.grad_buffer(x);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const double s = stable_sigmoid(xv[i]);
      dx[i] += dy[i] * s * (1.0 - s);
    }
  });
}

Var softplus(Var x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Tensor& dy) {
    const Tensor& xv = t.value(x);
    Tensor& dx = t.grad_buffer(x);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * stable_sigmoid(xv[i]);
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  add_into(out, b.value().values());
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& dy) {
    if (t.requires_grad(a)) add_into(t.grad_buffer(a), dy.values());
    if (t.requires_grad(b)) add_into(t.grad_buffer(b), dy.values());
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& dy) {
    if (t.requires_grad(a)) add_into(t.grad_buffer(a), dy.values());
    if (t.requires_grad(b)) {
      Tensor& db = t.grad_buffer(b);
      for (std::size_t i = 0; i < db.size(); ++i) db[i] -= dy[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& dy) {
    const Tensor& av = t.value(a);
    const Tensor& bv2 = t.value(b);
    if (t.requires_grad(a)) {
      Tensor& da = t.grad_buffer(a);
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i] * bv2[i];
    }
    if (t.requires_grad(b)) {
      Tensor& db = t.grad_buffer(b);
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[i] * av[i];
    }
  });
}

Var affine(Var x, double scale, double shift) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = scale * v + shift;
  return x.tape().record(std::move(out), {x}, [x, scale](Tape& t, const Tensor& dy) {
    Tensor& dx = t.grad_buffer(x);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += scale * dy[i];
  });
}

namespace {

void softmax_inplace(double* v, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, v[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = std::exp(v[i] - mx);
    s += v[i];
  }
  for (std::size_t i = 0; i < n; ++i) v[i] /= s;
}

Var softmax_blocks(Var x, std::size_t rows, std::size_t cols) {
  Tensor out = x.value();
  for (std::size_t r = 0; r < rows; ++r) softmax_inplace(out.data() + r * cols, cols);
  Tape& tape = x.tape();
  Tensor saved = tape.recording() ? out : Tensor();
  return tape.record(std::move(out), {x}, [x, rows, cols, sv = std::move(saved)](Tape& t, const Tensor& dy) {
    Tensor& dx = t.grad_buffer(x);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* srow = sv.data() + r * cols;
      const double* grow = dy.data() + r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += srow[c] * grow[c];
      double* drow = dx.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) drow[c] += srow[c] * (grow[c] - dot);
    }
  });
}

}  // namespace

Var softmax(Var x) { return softmax_blocks(x, 1, x.value().size()); }

Var softmax_rows(Var x) {
  require_rank(x.value(), 2, "softmax_rows");
  return softmax_blocks(x, x.value().dim(0), x.value().dim(1));
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 2, "matmul lhs");
  require_rank(bv, 2, "matmul rhs");
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  if (bv.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ, " + to_string(av.shape()) +
                     " * " + to_string(bv.shape()));
  }
  Tensor out({m, n});
  kernels::gemm_nn(m, n, k, av.data(), bv.data(), out.data(), false);
  return a.tape().record(std::move(out), {a, b}, [a, b, m, n, k](Tape& t, const Tensor& dy) {
    const Tensor& av2 = t.value(a);
    const Tensor& bv2 = t.value(b);
    if (t.requires_grad(a)) {
      // dA = dY * B^T
      const auto bt = transpose_matrix(bv2.data(), k, n);
      kernels::gemm_nn(m, k, n, dy.data(), bt.data(), t.grad_buffer(a).data(), true);
    }
    if (t.requires_grad(b)) {
      // dB = A^T * dY
      kernels::gemm_tn_acc(k, n, m, av2.data(), dy.data(), t.grad_buffer(b).data());
    }
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  require_rank(av, 2, "transpose");
  const std::size_t r = av.dim(0), c = av.dim(1);
  Tensor out({c, r}, transpose_matrix(av.data(), r, c));
  return a.tape().record(std::move(out), {a}, [a, r, c](Tape& t, const Tensor& dy) {
    Tensor& da = t.grad_buffer(a);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) da[i * c + j] += dy[j * r + i];
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& dy) {
    add_into(t.grad_buffer(a), dy.values());
  });
}

Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Tensor& first = parts.front().value();
  require_rank(first, 3, "concat_channels");
  const std::size_t h = first.dim(1), w = first.dim(2);
  std::size_t channels = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    require_rank(v, 3, "concat_channels");
    require_same_tape(parts.front(), p, "concat_channels");
    if (v.dim(1) != h || v.dim(2) != w) {
      throw ShapeError("concat_channels: spatial size " + to_string(v.shape()) +
                       " does not match " + to_string(first.shape()));
    }
    channels += v.dim(0);
  }
  Tensor out({channels, h, w});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const auto v = p.value().values();
    std::copy(v.begin(), v.end(), out.data() + offset);
    offset += v.size();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts.front().tape().record(std::move(out), inputs,
                                     [inputs](Tape& t, const Tensor& dy) {
    std::size_t off = 0;
    for (const Var& p : inputs) {
      const std::size_t n = t.value(p).size();
      if (t.requires_grad(p)) {
        add_into(t.grad_buffer(p), std::span<const double>(dy.data() + off, n));
      }
      off += n;
    }
  });
}

Var scale_channels(Var features, Var weights) {
  require_same_tape(features, weights, "scale_channels");
  const Tensor& f = features.value();
  const Tensor& v = weights.value();
  require_rank(f, 3, "scale_channels");
  const std::size_t c = f.dim(0), plane = f.dim(1) * f.dim(2);
  if (v.size() != c) {
    throw ShapeError("scale_channels: " + std::to_string(v.size()) +
                     " weights for " + std::to_string(c) + " channels");
  }
  Tensor out = f;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < plane; ++p) out[ch * plane + p] *= v[ch];
  return features.tape().record(std::move(out), {features, weights},
                                [features, weights, c, plane](Tape& t, const Tensor& dy) {
    const Tensor& fv = t.value(features);
    const Tensor& wv = t.value(weights);
    if (t.requires_grad(features)) {
      Tensor& df = t.grad_buffer(features);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < plane; ++p) df[ch * plane + p] += wv[ch] * dy[ch * plane + p];
    }
    if (t.requires_grad(weights)) {
      Tensor& dw = t.grad_buffer(weights);
      for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::size_t p = 0; p < plane; ++p) s += fv[ch * plane + p] * dy[ch * plane + p];
        dw[ch] += s;
      }
    }
  });
}

Var crop(Var features, std::size_t top, std::size_t left, std::size_t height,
         std::size_t width) {
  const Tensor& f = features.value();
  require_rank(f, 3, "crop");
  const std::size_t c = f.dim(0), h = f.dim(1), w = f.dim(2);
  if (top + height > h || left + width > w || height == 0 || width == 0) {
    throw ShapeError("crop: window " + std::to_string(height) + "x" +
                     std::to_string(width) + " at (" + std::to_string(top) + ", " +
                     std::to_string(left) + ") exceeds " + to_string(f.shape()));
  }
  Tensor out({c, height, width});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < height; ++i)
      for (std::size_t j = 0; j < width; ++j) out.at(ch, i, j) = f.at(ch, top + i, left + j);
  return features.tape().record(std::move(out), {features},
                                [features, top, left, c, height, width](Tape& t, const Tensor& dy) {
    Tensor& df = t.grad_buffer(features);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < height; ++i)
        for (std::size_t j = 0; j < width; ++j) df.at(ch, top + i, left + j) += dy.at(ch, i, j);
  });
}

Var join_quadrants(Var tl, Var tr, Var bl, Var br) {
  const Var parts[4] = {tl, tr, bl, br};
  const Tensor& ref = tl.value();
  require_rank(ref, 3, "join_quadrants");
  for (const Var& p : parts) {
    require_same_tape(tl, p, "join_quadrants");
    if (p.value().shape() != ref.shape()) {
      throw ShapeError("join_quadrants: quadrant shape " + to_string(p.value().shape()) +
                       " differs from " + to_string(ref.shape()));
    }
  }
  const std::size_t c = ref.dim(0), h = ref.dim(1), w = ref.dim(2);
  Tensor out({c, 2 * h, 2 * w});
  for (std::size_t q = 0; q < 4; ++q) {
    const Tensor& v = parts[q].value();
    const std::size_t oy = (q / 2) * h, ox = (q % 2) * w;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) out.at(ch, oy + i, ox + j) = v.at(ch, i, j);
  }
  return tl.tape().record(std::move(out), {tl, tr, bl, br},
                          [tl, tr, bl, br, c, h, w](Tape& t, const Tensor& dy) {
    const Var ps[4] = {tl, tr, bl, br};
    for (std::size_t q = 0; q < 4; ++q) {
      if (!t.requires_grad(ps[q])) continue;
      Tensor& d = t.grad_buffer(ps[q]);
      const std::size_t oy = (q / 2) * h, ox = (q % 2) * w;
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < h; ++i)
          for (std::size_t j = 0; j < w; ++j) d.at(ch, i, j) += dy.at(ch, oy + i, ox + j);
    }
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return x.tape().record(Tensor::scalar(s), {x}, [x](Tape& t, const Tensor& dy) {
    Tensor& dx = t.grad_buffer(x);
    for (auto& v : dx.values()) v += dy[0];
  });
}

Var mean(Var x) {
  const auto n = static_cast<double>(x.value().size());
  return affine(sum(x), 1.0 / n);
}

Var center_rows(Var b) {
  const Tensor& bv = b.value();
  require_rank(bv, 2, "center_rows");
  const std::size_t n = bv.dim(0), m = bv.dim(1);
  const double inv_n = 1.0 / static_cast<double>(n);
  auto centered = [n, m, inv_n](const Tensor& src, double* dst, bool accumulate) {
    std::vector<double> colmean(m, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) colmean[j] += src[i * m + j];
    for (auto& v : colmean) v *= inv_n;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double v = inv_n * (src[i * m + j] - colmean[j]);
        dst[i * m + j] = accumulate ? dst[i * m + j] + v : v;
      }
  };
  Tensor out({n, m});
  centered(bv, out.data(), false);
  return b.tape().record(std::move(out), {b}, [b, centered](Tape& t, const Tensor& dy) {
    centered(dy, t.grad_buffer(b).data(), true);
  });
}

Var attention(Var queries, Var keys, Var values) {
  require_same_tape(queries, keys, "attention");
  require_same_tape(queries, values, "attention");
  const Tensor& q = queries.value();
  const Tensor& k = keys.value();
  const Tensor& v = values.value();
  require_rank(q, 2, "attention queries");
  require_rank(k, 2, "attention keys");
  require_rank(v, 2, "attention values");
  const std::size_t n = q.dim(0), m = q.dim(1), d = v.dim(1);
  if (k.dim(0) != n || k.dim(1) != m || v.dim(0) != n) {
    throw ShapeError("attention: incompatible shapes q" + to_string(q.shape()) + " k" +
                     to_string(k.shape()) + " v" + to_string(v.shape()));
  }

  auto scores = [n, m](const Tensor& qv, const Tensor& kv, std::size_t i, double* row) {
    const double* qi = qv.data() + i * m;
    for (std::size_t j = 0; j < n; ++j) {
      const double* kj = kv.data() + j * m;
      double s = 0.0;
      for (std::size_t c = 0; c < m; ++c) s += qi[c] * kj[c];
      row[j] = s;
    }
  };

  Tensor out({n, d});
  std::vector<double> log_norm(n);
  std::vector<double> row(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores(q, k, i, row.data());
    double mx = -std::numeric_limits<double>::infinity();
    for (double s : row) mx = std::max(mx, s);
    double z = 0.0;
    for (auto& s : row) {
      s = std::exp(s - mx);
      z += s;
    }
    log_norm[i] = mx + std::log(z);
    double* ui = out.data() + i * d;
    for (std::size_t j = 0; j < n; ++j) {
      const double p = row[j] / z;
      const double* vj = v.data() + j * d;
      for (std::size_t c = 0; c < d; ++c) ui[c] += p * vj[c];
    }
  }

  Tape& tape = queries.tape();
  if (!tape.recording()) return tape.record(std::move(out), {queries, keys, values}, nullptr);
  Tensor u_copy = out;
  return tape.record(std::move(out), {queries, keys, values},
                     [queries, keys, values, n, m, d, scores, log_norm = std::move(log_norm),
                      u = std::move(u_copy)](Tape& t, const Tensor& du) {
    const Tensor& qv = t.value(queries);
    const Tensor& kv = t.value(keys);
    const Tensor& vv = t.value(values);
    const bool gq = t.requires_grad(queries);
    const bool gk = t.requires_grad(keys);
    const bool gv = t.requires_grad(values);
    double* dq = gq ? t.grad_buffer(queries).data() : nullptr;
    double* dk = gk ? t.grad_buffer(keys).data() : nullptr;
    double* dv = gv ? t.grad_buffer(values).data() : nullptr;
    std::vector<double> p(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores(qv, kv, i, p.data());
      for (auto& s : p) s = std::exp(s - log_norm[i]);
      const double* dui = du.data() + i * d;
      const double* ui = u.data() + i * d;
      double delta = 0.0;
      for (std::size_t c = 0; c < d; ++c) delta += dui[c] * ui[c];
      const double* qi = qv.data() + i * m;
      for (std::size_t j = 0; j < n; ++j) {
        const double* vj = vv.data() + j * d;
        if (gv) {
          double* dvj = dv + j * d;
          for (std::size_t c = 0; c < d; ++c) dvj[c] += p[j] * dui[c];
        }
        if (!gq && !gk) continue;
        double ds = 0.0;
        for (std::size_t c = 0; c < d; ++c) ds += dui[c] * vj[c];
        const double dx = p[j] * (ds - delta);
        const double* kj = kv.data() + j * m;
        if (gq) {
          double* dqi = dq + i * m;
          for (std::size_t c = 0; c < m; ++c) dqi[c] += dx * kj[c];
        }
        if (gk) {
          double* dkj = dk + j * m;
          for (std::size_t c = 0; c < m; ++c) dkj[c] += dx * qi[c];
        }
      }
    }
  });
}

}  // namespace anuw
