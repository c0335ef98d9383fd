#include "anuw/attention.hpp"

#include <string>

#include "anuw/ops.hpp"

namespace anuw {

std::size_t reduced_channels(std::size_t channels, std::size_t ratio) {
  if (channels == 0 || ratio == 0) {
    throw ConfigError("reduction ratio and channel count must be positive");
  }
  if (channels < ratio) return 1;
  if (channels % ratio != 0) {
    throw ConfigError(std::to_string(channels) + " channels are not divisible by reduction ratio " +
                      std::to_string(ratio));
  }
  return channels / ratio;
}

AwcaParams::AwcaParams(const std::string& prefix, std::size_t c, std::size_t t)
    : channels(c),
      ratio(t),
      pool(prefix + "/pool", c, 1, 1),
      squeeze(prefix + "/squeeze", c, reduced_channels(c, t), 1),
      excite(prefix + "/excite", reduced_channels(c, t), c, 1) {}

void AwcaParams::init(std::uint64_t seed) {
  pool.init_he(seed);
  squeeze.init_he(seed);
  excite.init_he(seed);
}

void AwcaParams::collect(std::vector<Parameter*>& out) {
  pool.collect(out);
  squeeze.collect(out);
  excite.collect(out);
}

PsnlParams::PsnlParams(const std::string& prefix, std::size_t c, std::size_t r,
                       CenterDim center_dim)
    : channels(c),
      ratio(r),
      center(center_dim),
      b_proj(prefix + "/b", c, reduced_channels(c, r), 1),
      d_proj(prefix + "/d", c, reduced_channels(c, r), 1),
      phi(prefix + "/phi", reduced_channels(c, r), c, 1) {}

void PsnlParams::init(std::uint64_t seed) {
  b_proj.init_he(seed);
  d_proj.init_he(seed);
  phi.init_he(seed);
}

void PsnlParams::collect(std::vector<Parameter*>& out) {
  b_proj.collect(out);
  d_proj.collect(out);
  phi.collect(out);
}

namespace {

void require_channels(const Var& f, std::size_t expected, const char* op) {
  const Tensor& v = f.value();
  if (v.rank() != 3 || v.dim(0) != expected) {
    throw ShapeError(std::string(op) + ": expected " + std::to_string(expected) +
                     "-channel feature map, got " + to_string(v.shape()));
  }
}

// C x h x w -> n x C (one row per position).
Var positions_by_channels(Var f) {
  const Shape s = f.value().shape();
  return transpose(reshape(f, {s[0], s[1] * s[2]}));
}

}  // namespace

Var adaptive_weighted_pool(Var features, AwcaParams& p) {
  require_channels(features, p.channels, "adaptive_weighted_pool");
  const Shape s = features.value().shape();
  const std::size_t n = s[1] * s[2];
  Var logits = reshape(p.pool(features), {n, 1});
  Var weights = softmax(logits);
  Var flat = reshape(features, {s[0], n});
  return reshape(matmul(flat, weights), {s[0]});
}

Var awca_forward(Var features, AwcaParams& p) {
  const std::size_t c = p.channels;
  Var z = reshape(adaptive_weighted_pool(features, p), {c, 1, 1});
  Var v = sigmoid(p.excite(relu(p.squeeze(z))));
  return scale_channels(features, v);
}

Tensor centering_matrix(std::size_t m) {
  if (m == 0) throw ShapeError("centering_matrix: size must be positive");
  const double inv = 1.0 / static_cast<double>(m);
  Tensor out = Tensor::matrix(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) out.at(i, j) = inv * ((i == j ? 1.0 : 0.0) - inv);
  return out;
}

Var psnl_scores(Var patch, PsnlParams& p) {
  require_channels(patch, p.channels, "psnl_scores");
  Var b = positions_by_channels(p.b_proj(patch));
  if (p.center == CenterDim::spatial) {
    Var bc = center_rows(b);
    return matmul(bc, transpose(bc));
  }
  Var ibar = patch.tape().constant(centering_matrix(p.reduced()));
  return matmul(matmul(b, ibar), transpose(b));
}

Var psnl_patch_forward(Var patch, PsnlParams& p) {
  require_channels(patch, p.channels, "psnl_patch_forward");
  const Shape s = patch.value().shape();
  const std::size_t m = p.reduced();
  Var b = positions_by_channels(p.b_proj(patch));
  Var d = positions_by_channels(p.d_proj(patch));
  Var u;
  if (p.center == CenterDim::spatial) {
    Var bc = center_rows(b);
    u = attention(bc, bc, d);
  } else {
    Var ibar = patch.tape().constant(centering_matrix(m));
    u = attention(matmul(b, ibar), b, d);
  }
  Var u_map = reshape(transpose(u), {m, s[1], s[2]});
  return add(p.phi(u_map), patch);
}

Var psnl_forward(Var features, PsnlParams& p) {
  require_channels(features, p.channels, "psnl_forward");
  const Shape s = features.value().shape();
  if (s[1] % 2 != 0 || s[2] % 2 != 0) {
    throw ShapeError("psnl_forward: height and width must be even, got " + to_string(s));
  }
  const std::size_t h = s[1] / 2, w = s[2] / 2;
  Var q[4];
  for (std::size_t k = 0; k < 4; ++k) {
    q[k] = psnl_patch_forward(crop(features, (k / 2) * h, (k % 2) * w, h, w), p);
  }
  return join_quadrants(q[0], q[1], q[2], q[3]);
}

}  // namespace anuw
