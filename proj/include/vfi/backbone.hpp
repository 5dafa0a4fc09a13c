#pragma once

#include <string>
#include <vector>

#include "vfi/attention.hpp"
#include "vfi/tensor.hpp"

namespace vfi {

struct ModelConfig {
  enum class Variant { tiny, small, large };

  Variant variant = Variant::small;
  int C = 16;  // initial channel count; doubles at each pyramid level
  int N1 = 2;  // Transformer blocks in stage 1 (H/8)
  int N2 = 2;  // Transformer blocks in stage 2 (H/16)
  int window_size = 7;

  static ModelConfig preset(Variant v);
  static ModelConfig preset(const std::string& name);
  std::string name() const;

  int stage1_channels() const { return 8 * C; }
  int stage2_channels() const { return 16 * C; }
  AttentionConfig attention_config(int stage) const;
};

struct ConvWeights {
  Tensor w, b;
};

// ---- low-level extractor (three conv scales) ----

struct LowLevelWeights {
  // scale 0: two stride-1 convs; scales 1 and 2: stride-2 then stride-1,
  // channels doubling per scale
  ConvWeights k0a, k0b, k1a, k1b, k2a, k2b;
};

struct LowLevelPyramid {
  Tensor L0;  // (n,  C,   H,   W)
  Tensor L1;  // (n, 2C, H/2, W/2)
  Tensor L2;  // (n, 4C, H/4, W/4)
};

LowLevelPyramid low_level_extract(const Tensor& image, const LowLevelWeights& w);

// ---- cross-scale dilated embedding ----

struct CrossScaleWeights {
  // Finer scales feed more branches: three dilated convs on L0 (dilation
  // 1/2/4, stride 8), two on L1 (1/2, stride 4), one on L2 (1, stride 2).
  // Every branch emits C channels; the 6C concat is fused to 8C.
  ConvWeights b0d1, b0d2, b0d4, b1d1, b1d2, b2d1;
  Tensor fuse_w, fuse_b;
};

Tensor cross_scale_embed(const LowLevelPyramid& pyr, const CrossScaleWeights& w);

// ---- two-stage motion/appearance extractor ----

struct ExtractorWeights {
  std::vector<TransformerBlockWeights> stage1;
  ConvWeights down;  // stride-2 conv, 8C -> 16C
  std::vector<TransformerBlockWeights> stage2;
  AttentionConfig cfg1, cfg2;
};

struct StageFeatures {
  // per stage: appearance per frame, motion features per direction, and the
  // raw displacement fields of the stage's last block
  Tensor a0_s1, a1_s1, mf01_s1, mf10_s1, m01_s1, m10_s1;
  Tensor a0_s2, a1_s2, mf01_s2, mf10_s2, m01_s2, m10_s2;
};

StageFeatures motion_appearance_extract(const Tensor& c0, const Tensor& c1,
                                        const ExtractorWeights& w);

}  // namespace vfi
