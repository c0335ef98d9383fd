#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "anuw/tape.hpp"

// Differentiable primitives. Every function records its result on the tape
// owning its first argument; all arguments must live on the same tape.
//
// Feature maps are rank-3 (C x H x W). Unless stated otherwise, binary
// elementwise ops require identical shapes; there is no broadcasting.

namespace anuw {

/// Cross-correlation with zero padding. `kernel` is (C_out, C_in, k, k),
/// `bias` has C_out elements.
Var conv2d(Var input, Var kernel, Var bias, std::size_t stride = 1,
           std::size_t padding = 0);

/// 2x2 max pooling with stride 2. Gradient is routed to the first
/// (row-major) maximal element of each window.
Var maxpool2(Var input);

/// Bilinear 2x upsampling, half-pixel centers (align_corners = false).
Var upsample2(Var input);

Var relu(Var x);
Var sigmoid(Var x);
/// log(1 + exp(x)), evaluated without overflow.
Var softplus(Var x);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// scale * x + shift, elementwise.
Var affine(Var x, double scale, double shift = 0.0);

/// Softmax over all elements (the input is treated as a flat vector).
Var softmax(Var x);
/// Softmax over the last axis of a rank-2 input.
Var softmax_rows(Var x);

Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, Shape shape);

/// Concatenates feature maps with equal H and W along the channel axis.
Var concat_channels(std::span<const Var> parts);

/// out[c, :, :] = weights[c] * features[c, :, :]; `weights` has C elements.
Var scale_channels(Var features, Var weights);

/// Spatial window [top, top+height) x [left, left+width) of a feature map.
Var crop(Var features, std::size_t top, std::size_t left, std::size_t height,
         std::size_t width);

/// Inverse of cropping a feature map into its four equal quadrants.
Var join_quadrants(Var top_left, Var top_right, Var bottom_left,
                   Var bottom_right);

Var sum(Var x);
Var mean(Var x);

/// (1/n)(B - 1 * colmean(B)) for an n x m matrix B, i.e. the n x n centering
/// matrix applied from the left without materializing it.
Var center_rows(Var b);

/// softmax_rows(queries * keys^T) * values, computed one row at a time so the
/// n x n score matrix is never stored. queries/keys are n x m, values n x d.
Var attention(Var queries, Var keys, Var values);

namespace kernels {

// Plain (non-recorded) building blocks, exposed for benchmarks.

/// C(MxN) (+)= A(MxK) * B(KxN), fixed summation order.
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             const double* b, double* c, bool accumulate);
/// C(MxN) += A^T * B with A stored KxM and B stored KxN.
void gemm_tn_acc(std::size_t m, std::size_t n, std::size_t k, const double* a,
                 const double* b, double* c);

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel,
                      const Tensor& bias, std::size_t stride,
                      std::size_t padding);

}  // namespace kernels

}  // namespace anuw
