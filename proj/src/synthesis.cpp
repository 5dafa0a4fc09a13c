#include "vfi/synthesis.hpp"

#include <stdexcept>

#include "vfi/model.hpp"
#include "vfi/ops.hpp"

namespace vfi {

FlowState zero_flow_state(int n, int h, int w) {
  return {Tensor::zeros({n, 4, h, w}), Tensor::zeros({n, 1, h, w})};
}

Tensor flow_resize(const Tensor& flow, int oh, int ow) {
  if (flow.shape.c % 2 != 0) {
    throw std::invalid_argument("flow_resize: expected x/y channel pairs, got " +
                                flow.shape.str());
  }
  const float fx = float(ow) / float(flow.shape.w);
  const float fy = float(oh) / float(flow.shape.h);
  std::vector<float> factors(std::size_t(flow.shape.c));
  for (int c = 0; c < flow.shape.c; ++c) factors[std::size_t(c)] = (c % 2 == 0) ? fx : fy;
  return scale_channels(bilinear_resize(flow, oh, ow), std::move(factors));
}

FlowState estimate_motion_stage(const Tensor& a0, const Tensor& a1, const Tensor& mf01,
                                const Tensor& mf10, float t, const FlowState& prev,
                                const Tensor& I0, const Tensor& I1, const HeadWeights& w,
                                int up_factor) {
  auto act = [](const Tensor& x) { return leaky_relu(x, 0.1f); };
  // forward motion scales with t, backward with 1-t
  Tensor m0t = scale(mf01, t);
  Tensor m1t = scale(mf10, 1.0f - t);
  Tensor x0 = pixel_shuffle(pixel_shuffle(concat_channels({m0t, a0}), 2), 2);
  Tensor x1 = pixel_shuffle(pixel_shuffle(concat_channels({m1t, a1}), 2), 2);

  const int wh = x0.shape.h, ww = x0.shape.w;
  const int H = prev.F.shape.h, W = prev.F.shape.w;
  if (H != wh * up_factor || W != ww * up_factor) {
    throw std::invalid_argument("estimate_motion_stage: working scale mismatch");
  }
  Tensor i0d = bilinear_resize(I0, wh, ww);
  Tensor i1d = bilinear_resize(I1, wh, ww);
  Tensor fd = flow_resize(prev.F, wh, ww);
  Tensor od = bilinear_resize(prev.O_logits, wh, ww);
  Tensor w0 = backward_warp(i0d, slice_channels(fd, 0, 2));
  Tensor w1 = backward_warp(i1d, slice_channels(fd, 2, 4));

  Tensor h = concat_channels({x0, x1, w0, w1, fd, od});
  h = act(conv2d(h, w.c1.w, &w.c1.b, 1, 1));
  h = act(conv2d(h, w.c2.w, &w.c2.b, 1, 1));
  Tensor residual = conv2d(h, w.c3.w, &w.c3.b, 1, 1);

  Tensor up = bilinear_resize(residual, H, W);
  const float f = float(up_factor);
  Tensor dF = scale_channels(slice_channels(up, 0, 4), {f, f, f, f});
  Tensor dO = slice_channels(up, 4, 5);
  return {add(prev.F, dF), add(prev.O_logits, dO)};
}

WarpResult fuse_warped(const Tensor& I0, const Tensor& I1, const FlowState& state) {
  WarpResult r;
  r.warped0 = backward_warp(I0, slice_channels(state.F, 0, 2));
  r.warped1 = backward_warp(I1, slice_channels(state.F, 2, 4));
  Tensor o = sigmoid(state.O_logits);
  // broadcast the single-channel mask over color channels
  std::vector<Tensor> reps(std::size_t(I0.shape.c), o);
  Tensor ofull = I0.shape.c == 1 ? o : concat_channels(reps);
  Tensor one = Tensor::full(ofull.shape, 1.0f);
  r.fused = add(mul(ofull, r.warped0), mul(sub(one, ofull), r.warped1));
  return r;
}

Tensor refine(const Tensor& fused, const LowLevelPyramid& p0, const LowLevelPyramid& p1,
              const Tensor& a0_s1, const Tensor& a1_s1, const RefineWeights& w) {
  auto act = [](const Tensor& x) { return leaky_relu(x, 0.1f); };
  const int H = fused.shape.h, W = fused.shape.w;

  Tensor e1 = act(conv2d(concat_channels({fused, p0.L0, p1.L0}), w.enc1a.w, &w.enc1a.b, 2, 1));
  e1 = act(conv2d(e1, w.enc1b.w, &w.enc1b.b, 1, 1));

  Tensor e2 = act(conv2d(concat_channels({e1, p0.L1, p1.L1}), w.enc2a.w, &w.enc2a.b, 2, 1));
  e2 = act(conv2d(e2, w.enc2b.w, &w.enc2b.b, 1, 1));

  Tensor a0q = bilinear_resize(a0_s1, H / 4, W / 4);
  Tensor a1q = bilinear_resize(a1_s1, H / 4, W / 4);
  Tensor e3 =
      act(conv2d(concat_channels({e2, p0.L2, p1.L2, a0q, a1q}), w.enc3a.w, &w.enc3a.b, 2, 1));
  e3 = act(conv2d(e3, w.enc3b.w, &w.enc3b.b, 1, 1));

  Tensor b = act(conv2d(concat_channels({e3, a0_s1, a1_s1}), w.bott.w, &w.bott.b, 1, 1));

  Tensor d3 = act(conv2d(concat_channels({bilinear_resize(b, H / 4, W / 4), e2}), w.dec3.w,
                         &w.dec3.b, 1, 1));
  Tensor d2 = act(conv2d(concat_channels({bilinear_resize(d3, H / 2, W / 2), e1}), w.dec2.w,
                         &w.dec2.b, 1, 1));
  Tensor d1 = act(conv2d(bilinear_resize(d2, H, W), w.dec1.w, &w.dec1.b, 1, 1));
  Tensor residual = conv2d(d1, w.out.w, &w.out.b, 1, 1);
  return add(fused, residual);
}

PipelineResult run_pipeline(const Model& m, const Tensor& I0, const Tensor& I1, float t,
                            FeatureCache* cache) {
  if (!(I0.shape == I1.shape)) {
    throw std::invalid_argument("run_pipeline: frame shapes differ, " + I0.shape.str() + " vs " +
                                I1.shape.str());
  }
  if (I0.shape.h % 16 != 0 || I0.shape.w % 16 != 0) {
    throw std::invalid_argument("run_pipeline: sides must be divisible by 16, got " +
                                I0.shape.str());
  }
  if (!(t > 0.0f && t < 1.0f)) {
    throw std::invalid_argument("run_pipeline: t must lie in (0, 1), got " + std::to_string(t));
  }

  PipelineResult res;
  LowLevelPyramid p0, p1;
  if (cache && cache->filled) {
    p0 = cache->p0;
    p1 = cache->p1;
    res.feats = cache->feats;
  } else {
    p0 = low_level_extract(I0, m.low);
    p1 = low_level_extract(I1, m.low);
    Tensor emb0 = cross_scale_embed(p0, m.embed);
    Tensor emb1 = cross_scale_embed(p1, m.embed);
    res.feats = motion_appearance_extract(emb0, emb1, m.extractor);
    if (cache) {
      cache->p0 = p0;
      cache->p1 = p1;
      cache->emb0 = emb0;
      cache->emb1 = emb1;
      cache->feats = res.feats;
      cache->filled = true;
    }
  }
  const StageFeatures& f = res.feats;

  FlowState st = zero_flow_state(I0.shape.n, I0.shape.h, I0.shape.w);
  // coarse (H/16) first, then fine (H/8)
  st = estimate_motion_stage(f.a0_s2, f.a1_s2, f.mf01_s2, f.mf10_s2, t, st, I0, I1,
                             m.head_coarse, 4);
  res.stage_states.push_back(st);
  res.stage_warps.push_back(fuse_warped(I0, I1, st));
  st = estimate_motion_stage(f.a0_s1, f.a1_s1, f.mf01_s1, f.mf10_s1, t, st, I0, I1, m.head_fine,
                             2);
  res.stage_states.push_back(st);
  res.stage_warps.push_back(fuse_warped(I0, I1, st));

  res.state = st;
  res.fused = res.stage_warps.back().fused;
  res.image = refine(res.fused, p0, p1, f.a0_s1, f.a1_s1, m.refine_net);
  return res;
}

InterpolateResult interpolate(const Model& m, const Tensor& I0, const Tensor& I1, float t,
                              FeatureCache* cache) {
  if (!(I0.shape == I1.shape)) {
    throw std::invalid_argument("interpolate: frame shapes differ, " + I0.shape.str() + " vs " +
                                I1.shape.str());
  }
  if (!(t > 0.0f && t < 1.0f)) {
    throw std::invalid_argument("interpolate: t must lie in (0, 1), got " + std::to_string(t));
  }
  const int H = I0.shape.h, W = I0.shape.w;
  const int padb = (16 - H % 16) % 16;
  const int padr = (16 - W % 16) % 16;
  Tensor a = padb || padr ? pad_replicate(I0, 0, padb, 0, padr) : I0;
  Tensor b = padb || padr ? pad_replicate(I1, 0, padb, 0, padr) : I1;

  PipelineResult pr = run_pipeline(m, a, b, t, cache);

  InterpolateResult out;
  auto trim = [&](const Tensor& x) {
    return (padb || padr) ? crop(x, 0, 0, H, W) : x;
  };
  out.image = trim(pr.image);
  out.flow = trim(pr.state.F);
  out.mask = trim(sigmoid(pr.state.O_logits));
  out.fused = trim(pr.fused);
  return out;
}

}  // namespace vfi
