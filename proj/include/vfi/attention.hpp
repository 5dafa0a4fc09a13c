#pragma once

#include <vector>

#include "vfi/ops.hpp"
#include "vfi/tensor.hpp"

namespace vfi {

struct AttentionConfig {
  int window_size = 7;  // odd, >= 3
  int num_heads = 1;
  int channels = 0;  // per-frame feature channels at this stage
  bool shifted = false;

  int head_dim() const { return channels / num_heads; }
  void validate() const;
};

// Normalized position grid (1, 2, h, w): channel 0 is x, channel 1 is y.
// Top-left pixel holds (-1, -1), bottom-right (1, 1); a singleton axis maps
// to coordinate 0.
Tensor build_coordinate_map(int h, int w);

// Shifted-window geometry over an (h, w) grid padded on the right/bottom to
// multiples of N. Windows are read from the grid cyclically rolled up-left
// by `shift`; each window cell remembers its true (pre-clamp) padded source
// coordinate, whether that lies in-frame, and its roll-region id. Cells may
// attend only to in-frame cells of the same region, which keeps every
// attended pair within one contiguous N x N neighborhood.
struct WindowPlan {
  int h = 0, w = 0, hp = 0, wp = 0;
  int nwy = 0, nwx = 0;
  int N = 0, shift = 0;
  std::vector<std::int32_t> src_y, src_x;  // per window cell, padded coords
  std::vector<std::uint8_t> valid;
  std::vector<std::int32_t> region;

  int num_windows() const { return nwy * nwx; }
  int cells() const { return N * N; }
};

WindowPlan make_window_plan(int h, int w, int N, int shift);

// Public windowed view: (n, c, h, w) -> windows (n*nW, c, N, N) with
// replicate padding, plus a validity mask (nW, 1, N, N) marking in-frame
// cells. window_reverse inverts it exactly on the valid region.
struct WindowPartitionResult {
  Tensor windows;
  Tensor validity;
  WindowPlan plan;
  int batch = 0, channels = 0;
};
WindowPartitionResult window_partition(const Tensor& x, int N, int shift);
Tensor window_reverse(const Tensor& windows, const WindowPlan& plan, int batch, int channels);

struct IfaWeights {
  // Query/key/value projections (C, C, 1, 1), bias-free like the plain
  // projection matrices they implement; output projection carries a bias.
  Tensor wq, wk, wv;
  Tensor wo, wo_bias;
};

struct IfaDirectionResult {
  Tensor delta;      // (n, C, h, w) appearance increment, pre-residual
  Tensor motion;     // (n, 2, h, w) expected displacement, normalized coords
  Tensor attention;  // (n*nW*heads, 1, N^2, N^2) softmax map
  Tensor mask;       // same shape, 1 on attendable pairs
};

// One direction of inter-frame attention: queries from query_frame, keys
// and values from the window neighborhoods of kv_frame. The attention map
// is computed once and reused for both the appearance aggregation and the
// attention-weighted displacement.
IfaDirectionResult ifa_direction(const Tensor& query_frame, const Tensor& kv_frame,
                                 const AttentionConfig& cfg, const IfaWeights& w);

struct InterFrameAttentionResult {
  Tensor enhanced0, enhanced1;  // A + attention increment
  Tensor motion01, motion10;    // (n, 2, h, w)
};

// Both directions with shared weights; swapping the inputs swaps the
// outputs bit-exactly.
InterFrameAttentionResult inter_frame_attention(const Tensor& a0, const Tensor& a1,
                                                const AttentionConfig& cfg, const IfaWeights& w);

// Linear time scaling of a motion field, t in [0, 1].
Tensor scale_motion(const Tensor& motion, float t);

struct TransformerBlockWeights {
  Tensor norm1_gamma, norm1_beta;
  IfaWeights ifa;
  Tensor norm2_gamma, norm2_beta;
  Tensor mlp_fc1_w, mlp_fc1_b;
  Tensor mlp_dw_w, mlp_dw_b;  // depthwise 3x3 between the two MLP linears
  Tensor mlp_fc2_w, mlp_fc2_b;
  Tensor motion_w, motion_b;  // maps the 2-vector displacement to features
};

struct TransformerBlockResult {
  Tensor a0, a1;
  Tensor motion_feat01, motion_feat10;
  Tensor motion01, motion10;  // raw displacement fields
};

// Pre-norm residual block around inter-frame attention:
//   x + IFA(norm(x)), then x + MLP(norm(x)),
// with MLP = linear -> depthwise 3x3 conv -> gelu -> linear. Motion
// vectors bypass the MLP and exit through the motion linear layer.
TransformerBlockResult transformer_block(const Tensor& a0, const Tensor& a1,
                                         const AttentionConfig& cfg,
                                         const TransformerBlockWeights& w);

}  // namespace vfi
