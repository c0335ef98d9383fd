#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "anuw/layers.hpp"

namespace anuw {

/// Which axis the second-order centering matrix acts on in PSNL.
///  - channel: B (n x C/r) is multiplied by a (C/r) x (C/r) centering
///    matrix, X = B * Ibar * B^T. Default.
///  - spatial: B is centered over the n positions with the n x n centering
///    matrix applied on both sides, X = (Ibar B)(Ibar B)^T.
enum class CenterDim { channel, spatial };

/// Bottleneck width for a reduction ratio. Channel counts below the ratio
/// clamp to one channel; otherwise `channels` must be divisible by `ratio`.
std::size_t reduced_channels(std::size_t channels, std::size_t ratio);

/// Adaptive weight channel attention.
struct AwcaParams {
  std::size_t channels = 0;
  std::size_t ratio = 16;
  Conv2d pool;     // C -> 1, produces the spatial weighting logits
  Conv2d squeeze;  // C -> C/t
  Conv2d excite;   // C/t -> C

  AwcaParams() = default;
  AwcaParams(const std::string& prefix, std::size_t channels, std::size_t ratio = 16);

  void init(std::uint64_t seed);
  void collect(std::vector<Parameter*>& out);
};

/// Patch second-order non-local attention (parameters shared by the four
/// quadrants).
struct PsnlParams {
  std::size_t channels = 0;
  std::size_t ratio = 8;
  CenterDim center = CenterDim::channel;
  Conv2d b_proj;  // C -> C/r
  Conv2d d_proj;  // C -> C/r
  Conv2d phi;     // C/r -> C

  PsnlParams() = default;
  PsnlParams(const std::string& prefix, std::size_t channels, std::size_t ratio = 8,
             CenterDim center = CenterDim::channel);

  std::size_t reduced() const { return b_proj.out_channels(); }
  void init(std::uint64_t seed);
  void collect(std::vector<Parameter*>& out);
};

/// Softmax-weighted spatial pooling: Z_c = sum_p softmax(pool(F))_p F_{c,p}.
/// Returns a length-C vector.
Var adaptive_weighted_pool(Var features, AwcaParams& p);

/// E_c = v_c * F_c with V = sigmoid(excite(relu(squeeze(Z)))).
Var awca_forward(Var features, AwcaParams& p);

/// (1/m)(I - (1/m) J) for the m x m all-ones matrix J.
Tensor centering_matrix(std::size_t m);

/// The n x n second-order score matrix X_k of one patch (before softmax).
Var psnl_scores(Var patch, PsnlParams& p);

/// S_k = phi(softmax_rows(X_k) D_k) + F_k for one C x h x w patch.
Var psnl_patch_forward(Var patch, PsnlParams& p);

/// Splits F into its 2x2 quadrants, applies psnl_patch_forward to each with
/// shared parameters and reassembles. H and W must be even.
Var psnl_forward(Var features, PsnlParams& p);

}  // namespace anuw
