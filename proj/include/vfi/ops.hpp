#pragma once

#include <memory>
#include <vector>

#include "vfi/tensor.hpp"

namespace vfi {

// All operations are pure: inputs are never written, outputs are fresh
// buffers. Each differentiable op records a tape node when recording is on.

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
Tensor add_scalar(const Tensor& a, float s);
Tensor abs(const Tensor& a);
Tensor leaky_relu(const Tensor& a, float negative_slope = 0.1f);
Tensor gelu(const Tensor& a);  // exact erf form
Tensor sigmoid(const Tensor& a);

// ---- reductions ----
Tensor sum_all(const Tensor& a);        // -> (1,1,1,1)
Tensor mean_all(const Tensor& a);       // -> (1,1,1,1)
Tensor sum_lastdim(const Tensor& a);    // (n,c,h,w) -> (n,c,h,1)
Tensor mean_channels(const Tensor& a);  // (n,c,h,w) -> (n,1,h,w)

// ---- linear algebra ----

// Cross-correlation convolution. weight (c_out, c_in/groups, k, k); output
// spatial size floor((h + 2p - d(k-1) - 1)/s) + 1; bias (c_out) optional.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor* bias,
              int stride = 1, int padding = 0, int dilation = 1, int groups = 1);
inline Tensor conv2d(const Tensor& x, const Parameter& w, const Parameter& b,
                     int stride = 1, int padding = 0, int dilation = 1, int groups = 1) {
  return conv2d(x, w.value, &b.value, stride, padding, dilation, groups);
}

// Per-position channel map: weight (c_out, c_in, 1, 1), bias (c_out) optional.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor* bias);
inline Tensor linear(const Tensor& x, const Parameter& w, const Parameter& b) {
  return linear(x, w.value, &b.value);
}
inline Tensor linear(const Tensor& x, const Parameter& w) {
  return linear(x, w.value, nullptr);
}

// Batched matmul over (B,1,M,K) x (B,1,K,N) -> (B,1,M,N). With
// transpose_b the second operand is (B,1,N,K).
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

// ---- normalization ----

// Softmax over the last (w) axis, max-stabilized.
Tensor softmax_lastdim(const Tensor& x);

// Softmax over the last axis restricted to positions where mask != 0.
// Masked outputs are exactly zero; an all-masked row yields all zeros.
// The mask must not require gradients.
Tensor masked_softmax_lastdim(const Tensor& x, const Tensor& mask);

// Normalizes over the channel dimension per (n, y, x) position, then applies
// the channelwise affine gamma/beta of shape (1, c, 1, 1).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = 1e-5f);
inline Tensor layer_norm(const Tensor& x, const Parameter& g, const Parameter& b, float eps = 1e-5f) {
  return layer_norm(x, g.value, b.value, eps);
}

// ---- shape and data movement ----
Tensor concat_channels(const std::vector<Tensor>& xs);
Tensor slice_channels(const Tensor& x, int c0, int c1);  // [c0, c1)
Tensor reshape(const Tensor& x, Shape s);                // numel-preserving view
Tensor pad_replicate(const Tensor& x, int top, int bottom, int left, int right);
Tensor crop(const Tensor& x, int y0, int x0, int h, int w);
Tensor pixel_shuffle(const Tensor& x, int r);
Tensor pixel_unshuffle(const Tensor& x, int r);
// out[i] = x[idx[i]] over flat buffers; adjoint scatter-adds. Indices must
// lie in [0, x.numel()).
Tensor gather_linear(const Tensor& x, Shape out_shape,
                     std::shared_ptr<const std::vector<std::int64_t>> idx);
Tensor scale_channels(const Tensor& x, std::vector<float> per_channel);

// ---- resampling ----

// Bilinear resize; align_corners=false uses half-pixel centers and
// replicate borders. Same-size resize is the bit-exact identity.
Tensor bilinear_resize(const Tensor& x, int out_h, int out_w, bool align_corners = false);

// out(p) = bilinear sample of image at p + flow(p); flow channels are
// (dx, dy) in pixels; samples outside the image read as zero.
Tensor backward_warp(const Tensor& image, const Tensor& flow);

// ---- pyramid primitives ----

// Separable 5-tap binomial blur (1,4,6,4,1)/16 with reflect-101 borders.
Tensor gauss_blur5(const Tensor& x);
// Even-index decimation by 2 per axis; output ceil(h/2) x ceil(w/2).
Tensor downsample2(const Tensor& x);
// Zero insertion to the given size: out[2y,2x] = in[y,x].
Tensor upsample_zero2(const Tensor& x, int out_h, int out_w);

// ---- non-differentiable helpers ----
bool all_finite(const Tensor& x);

}  // namespace vfi
