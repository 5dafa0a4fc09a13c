#pragma once

#include <vector>

#include "vfi/backbone.hpp"
#include "vfi/tensor.hpp"

namespace vfi {

struct Model;

// Bidirectional flow and fusion-mask state at full input resolution.
// F channels: (F_{t->0}.x, F_{t->0}.y, F_{t->1}.x, F_{t->1}.y) in pixels.
struct FlowState {
  Tensor F;         // (n, 4, H, W)
  Tensor O_logits;  // (n, 1, H, W); fusion mask O = sigmoid(O_logits)
};

FlowState zero_flow_state(int n, int h, int w);

// Bilinear resize of a flow field with the displacement values rescaled to
// the new pixel grid (x channels by ow/w, y channels by oh/h). Channels
// alternate x, y.
Tensor flow_resize(const Tensor& flow, int oh, int ow);

struct HeadWeights {
  // three 3x3 convs: in -> 2*in/3 -> in/3 -> 5 (four flow deltas + mask logit)
  ConvWeights c1, c2, c3;
};

// One coarse-to-fine estimation step. Motion features are time-scaled
// (t forward, 1-t backward), concatenated with the stage appearance, pushed
// to 4x the stage resolution by two pixel shuffles, joined with the warped
// downscaled inputs and the previous state, and refined into a residual
// that updates the previous state at full resolution.
FlowState estimate_motion_stage(const Tensor& a0, const Tensor& a1, const Tensor& mf01,
                                const Tensor& mf10, float t, const FlowState& prev,
                                const Tensor& I0, const Tensor& I1, const HeadWeights& w,
                                int up_factor);

struct WarpResult {
  Tensor warped0, warped1;
  Tensor fused;  // O ⊙ warped0 + (1-O) ⊙ warped1
};

WarpResult fuse_warped(const Tensor& I0, const Tensor& I1, const FlowState& state);

struct RefineWeights {
  // 3-down/3-up U-Net, widths (2C, 4C, 8C); encoder stages consume the
  // low-level pyramids of both frames, the two deepest points additionally
  // consume the stage-1 appearance features
  ConvWeights enc1a, enc1b, enc2a, enc2b, enc3a, enc3b;
  ConvWeights bott;
  ConvWeights dec3, dec2, dec1, out;
};

Tensor refine(const Tensor& fused, const LowLevelPyramid& p0, const LowLevelPyramid& p1,
              const Tensor& a0_s1, const Tensor& a1_s1, const RefineWeights& w);

// Extractor outputs for one frame pair; everything here is independent of
// the requested timestep and can be reused across t values.
struct FeatureCache {
  bool filled = false;
  LowLevelPyramid p0, p1;
  Tensor emb0, emb1;
  StageFeatures feats;
};

struct PipelineResult {
  Tensor image;  // refined output
  Tensor fused;  // pre-refine warped blend
  FlowState state;
  std::vector<FlowState> stage_states;  // coarse first
  std::vector<WarpResult> stage_warps;
  StageFeatures feats;
};

// Full synthesis on sizes divisible by 16.
PipelineResult run_pipeline(const Model& m, const Tensor& I0, const Tensor& I1, float t,
                            FeatureCache* cache = nullptr);

struct InterpolateResult {
  Tensor image;
  Tensor flow;   // (n, 4, H, W) diagnostics
  Tensor mask;   // (n, 1, H, W) fusion mask in (0, 1)
  Tensor fused;  // pre-refine blend
};

// Arbitrary sizes: replicate-pads to multiples of 16, synthesizes, crops
// back. t must lie strictly inside (0, 1).
InterpolateResult interpolate(const Model& m, const Tensor& I0, const Tensor& I1, float t,
                              FeatureCache* cache = nullptr);

}  // namespace vfi
