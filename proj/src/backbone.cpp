#include "vfi/backbone.hpp"

#include <stdexcept>

#include "vfi/ops.hpp"

namespace vfi {

ModelConfig ModelConfig::preset(Variant v) {
  ModelConfig c;
  c.variant = v;
  switch (v) {
    case Variant::tiny:
      c.C = 8;
      c.N1 = c.N2 = 1;
      break;
    case Variant::small:
      c.C = 16;
      c.N1 = c.N2 = 2;
      break;
    case Variant::large:
      c.C = 32;
      c.N1 = c.N2 = 4;
      break;
  }
  return c;
}

ModelConfig ModelConfig::preset(const std::string& name) {
  if (name == "tiny") return preset(Variant::tiny);
  if (name == "small") return preset(Variant::small);
  if (name == "large") return preset(Variant::large);
  throw std::invalid_argument("unknown model variant '" + name + "' (tiny|small|large)");
}

std::string ModelConfig::name() const {
  switch (variant) {
    case Variant::tiny:
      return "tiny";
    case Variant::small:
      return "small";
    case Variant::large:
      return "large";
  }
  return "?";
}

AttentionConfig ModelConfig::attention_config(int stage) const {
  const int channels = stage == 1 ? stage1_channels() : stage2_channels();
  if (channels % 16 != 0) {
    throw std::invalid_argument("stage channels must be a multiple of the head width 16");
  }
  AttentionConfig a;
  a.window_size = window_size;
  a.channels = channels;
  a.num_heads = channels / 16;  // fixed head width of 16
  return a;
}

LowLevelPyramid low_level_extract(const Tensor& image, const LowLevelWeights& w) {
  if (image.shape.h % 16 != 0 || image.shape.w % 16 != 0) {
    throw std::invalid_argument("low_level_extract: input " + image.shape.str() +
                                " must have sides divisible by 16; pad the input first");
  }
  auto act = [](const Tensor& t) { return leaky_relu(t, 0.1f); };
  LowLevelPyramid p;
  Tensor x = act(conv2d(image, w.k0a.w, &w.k0a.b, 1, 1));
  p.L0 = act(conv2d(x, w.k0b.w, &w.k0b.b, 1, 1));
  x = act(conv2d(p.L0, w.k1a.w, &w.k1a.b, 2, 1));
  p.L1 = act(conv2d(x, w.k1b.w, &w.k1b.b, 1, 1));
  x = act(conv2d(p.L1, w.k2a.w, &w.k2a.b, 2, 1));
  p.L2 = act(conv2d(x, w.k2b.w, &w.k2b.b, 1, 1));
  return p;
}

Tensor cross_scale_embed(const LowLevelPyramid& pyr, const CrossScaleWeights& w) {
  auto act = [](const Tensor& t) { return leaky_relu(t, 0.1f); };
  // kernel 3, padding = dilation keeps every branch aligned at H/8 x W/8
  std::vector<Tensor> branches;
  branches.push_back(act(conv2d(pyr.L0, w.b0d1.w, &w.b0d1.b, 8, 1, 1)));
  branches.push_back(act(conv2d(pyr.L0, w.b0d2.w, &w.b0d2.b, 8, 2, 2)));
  branches.push_back(act(conv2d(pyr.L0, w.b0d4.w, &w.b0d4.b, 8, 4, 4)));
  branches.push_back(act(conv2d(pyr.L1, w.b1d1.w, &w.b1d1.b, 4, 1, 1)));
  branches.push_back(act(conv2d(pyr.L1, w.b1d2.w, &w.b1d2.b, 4, 2, 2)));
  branches.push_back(act(conv2d(pyr.L2, w.b2d1.w, &w.b2d1.b, 2, 1, 1)));
  for (const auto& b : branches) {
    if (!(b.shape.h == branches[0].shape.h && b.shape.w == branches[0].shape.w)) {
      throw std::runtime_error("cross_scale_embed: branch scales disagree");
    }
  }
  return linear(concat_channels(branches), w.fuse_w, &w.fuse_b);
}

StageFeatures motion_appearance_extract(const Tensor& c0, const Tensor& c1,
                                        const ExtractorWeights& w) {
  StageFeatures f;
  Tensor a0 = c0, a1 = c1;
  AttentionConfig cfg = w.cfg1;
  for (std::size_t i = 0; i < w.stage1.size(); ++i) {
    cfg.shifted = (i % 2) == 1;  // blocks alternate shift 0 / N/2
    auto r = transformer_block(a0, a1, cfg, w.stage1[i]);
    a0 = r.a0;
    a1 = r.a1;
    f.mf01_s1 = r.motion_feat01;
    f.mf10_s1 = r.motion_feat10;
    f.m01_s1 = r.motion01;
    f.m10_s1 = r.motion10;
  }
  f.a0_s1 = a0;
  f.a1_s1 = a1;

  auto act = [](const Tensor& t) { return leaky_relu(t, 0.1f); };
  Tensor d0 = act(conv2d(a0, w.down.w, &w.down.b, 2, 1));
  Tensor d1 = act(conv2d(a1, w.down.w, &w.down.b, 2, 1));

  cfg = w.cfg2;
  const std::size_t offset = w.stage1.size();
  for (std::size_t i = 0; i < w.stage2.size(); ++i) {
    cfg.shifted = ((offset + i) % 2) == 1;  // parity continues across stages
    auto r = transformer_block(d0, d1, cfg, w.stage2[i]);
    d0 = r.a0;
    d1 = r.a1;
    f.mf01_s2 = r.motion_feat01;
    f.mf10_s2 = r.motion_feat10;
    f.m01_s2 = r.motion01;
    f.m10_s2 = r.motion10;
  }
  f.a0_s2 = d0;
  f.a1_s2 = d1;
  return f;
}

}  // namespace vfi
