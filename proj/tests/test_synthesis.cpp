#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "vfi/model.hpp"
#include "vfi/ops.hpp"
#include "vfi/synthesis.hpp"

using namespace vfi;

namespace {

HeadWeights random_head(int cin, std::uint64_t seed) {
  SeededRng rng(seed);
  const int c1 = 2 * cin / 3, c2 = cin / 3;
  auto mk = [&rng](int ci, int co) {
    const float b = 1.0f / std::sqrt(float(ci) * 9.0f);
    return ConvWeights{Tensor::uniform({co, ci, 3, 3}, rng, -b, b),
                       Tensor::uniform({1, co, 1, 1}, rng, -0.05f, 0.05f)};
  };
  return {mk(cin, c1), mk(c1, c2), mk(c2, 5)};
}

}  // namespace

TEST_CASE("fuse_warped saturation, midpoint and scalar evaluation") {
  Tensor i0 = oracle::random_tensor({1, 3, 6, 6}, 1, 0.0f, 1.0f);
  Tensor i1 = oracle::random_tensor({1, 3, 6, 6}, 2, 0.0f, 1.0f);
  FlowState st = zero_flow_state(1, 6, 6);

  // strongly positive logits: mask saturates at 1
  std::fill(st.O_logits.data->begin(), st.O_logits.data->end(), 40.0f);
  WarpResult sat = fuse_warped(i0, i1, st);
  CHECK(oracle::bit_equal(sat.fused, i0));

  // zero logits: exact average
  std::fill(st.O_logits.data->begin(), st.O_logits.data->end(), 0.0f);
  WarpResult mid = fuse_warped(i0, i1, st);
  for (std::int64_t i = 0; i < mid.fused.numel(); ++i) {
    CHECK(mid.fused.ptr()[i] ==
          doctest::Approx(0.5f * (i0.ptr()[i] + i1.ptr()[i])).epsilon(1e-6));
  }

  // I0 = 0, I1 = 1, O = 0.25: fused = 0.75 everywhere
  Tensor zeros = Tensor::zeros({1, 3, 6, 6});
  Tensor ones = Tensor::full({1, 3, 6, 6}, 1.0f);
  std::fill(st.O_logits.data->begin(), st.O_logits.data->end(), -std::log(3.0f));
  WarpResult q = fuse_warped(zeros, ones, st);
  for (std::int64_t i = 0; i < q.fused.numel(); ++i) {
    CHECK(q.fused.ptr()[i] == doctest::Approx(0.75f).epsilon(1e-6));
  }
}

TEST_CASE("fusion is a convex combination of the warped frames") {
  SeededRng rng(3);
  Tensor i0 = oracle::random_tensor({1, 3, 8, 8}, 4, 0.0f, 1.0f);
  Tensor i1 = oracle::random_tensor({1, 3, 8, 8}, 5, 0.0f, 1.0f);
  FlowState st = zero_flow_state(1, 8, 8);
  for (auto& v : *st.O_logits.data) v = rng.uniform(-4.0f, 4.0f);
  for (auto& v : *st.F.data) v = rng.uniform(-1.5f, 1.5f);
  WarpResult r = fuse_warped(i0, i1, st);
  for (std::int64_t i = 0; i < r.fused.numel(); ++i) {
    const float lo = std::min(r.warped0.ptr()[i], r.warped1.ptr()[i]);
    const float hi = std::max(r.warped0.ptr()[i], r.warped1.ptr()[i]);
    CHECK(r.fused.ptr()[i] >= lo - 1e-6f);
    CHECK(r.fused.ptr()[i] <= hi + 1e-6f);
  }
}

TEST_CASE("zero residual head leaves the flow state untouched") {
  // stage features 4x4 with 16 channels -> working scale 16x16, full 32x32
  const int cs = 16;
  Tensor a0 = oracle::random_tensor({1, cs, 4, 4}, 6);
  Tensor a1 = oracle::random_tensor({1, cs, 4, 4}, 7);
  Tensor mf01 = oracle::random_tensor({1, cs, 4, 4}, 8);
  Tensor mf10 = oracle::random_tensor({1, cs, 4, 4}, 9);
  Tensor i0 = oracle::random_tensor({1, 3, 32, 32}, 10, 0.0f, 1.0f);
  Tensor i1 = oracle::random_tensor({1, 3, 32, 32}, 11, 0.0f, 1.0f);
  FlowState prev = zero_flow_state(1, 32, 32);
  SeededRng rng(12);
  for (auto& v : *prev.F.data) v = rng.uniform(-2.0f, 2.0f);
  for (auto& v : *prev.O_logits.data) v = rng.uniform(-1.0f, 1.0f);

  HeadWeights hw = random_head(2 * (2 * cs / 16) + 11, 13);
  std::fill(hw.c3.w.data->begin(), hw.c3.w.data->end(), 0.0f);
  std::fill(hw.c3.b.data->begin(), hw.c3.b.data->end(), 0.0f);
  FlowState out = estimate_motion_stage(a0, a1, mf01, mf10, 0.5f, prev, i0, i1, hw, 2);
  CHECK(oracle::bit_equal(out.F, prev.F));
  CHECK(oracle::bit_equal(out.O_logits, prev.O_logits));
}

TEST_CASE("constant one-pixel residual at H/4 becomes exactly four pixels at H") {
  const int cs = 16;
  Tensor a0 = oracle::random_tensor({1, cs, 2, 2}, 14);
  Tensor a1 = oracle::random_tensor({1, cs, 2, 2}, 15);
  Tensor mf01 = oracle::random_tensor({1, cs, 2, 2}, 16);
  Tensor mf10 = oracle::random_tensor({1, cs, 2, 2}, 17);
  Tensor i0 = oracle::random_tensor({1, 3, 32, 32}, 18, 0.0f, 1.0f);
  Tensor i1 = oracle::random_tensor({1, 3, 32, 32}, 19, 0.0f, 1.0f);
  FlowState prev = zero_flow_state(1, 32, 32);

  HeadWeights hw = random_head(2 * (2 * cs / 16) + 11, 20);
  std::fill(hw.c3.w.data->begin(), hw.c3.w.data->end(), 0.0f);
  // bias (1,1,1,1,0): every flow channel gets a constant 1-pixel delta
  hw.c3.b = Tensor::from_values({1, 5, 1, 1}, {1, 1, 1, 1, 0});
  FlowState out = estimate_motion_stage(a0, a1, mf01, mf10, 0.5f, prev, i0, i1, hw, 4);
  for (std::int64_t i = 0; i < out.F.numel(); ++i) CHECK(out.F.ptr()[i] == 4.0f);
  for (std::int64_t i = 0; i < out.O_logits.numel(); ++i) CHECK(out.O_logits.ptr()[i] == 0.0f);
}

TEST_CASE("flow_resize rescales displacement values with the grid") {
  Tensor f = Tensor::zeros({1, 2, 4, 4});
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      f.at(0, 0, y, x) = 2.0f;  // two pixels right at 4x4
      f.at(0, 1, y, x) = -1.0f;
    }
  }
  Tensor up = flow_resize(f, 8, 8);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      CHECK(up.at(0, 0, y, x) == doctest::Approx(4.0f));
      CHECK(up.at(0, 1, y, x) == doctest::Approx(-2.0f));
    }
  }
}

TEST_CASE("zeroed refine output conv makes the network emit the fused frame") {
  Model m(ModelConfig::preset("tiny"), 21);
  std::fill(m.refine_net.out.w.data->begin(), m.refine_net.out.w.data->end(), 0.0f);
  std::fill(m.refine_net.out.b.data->begin(), m.refine_net.out.b.data->end(), 0.0f);
  Tensor i0 = oracle::random_tensor({1, 3, 32, 32}, 22, 0.0f, 1.0f);
  Tensor i1 = oracle::random_tensor({1, 3, 32, 32}, 23, 0.0f, 1.0f);
  PipelineResult r = run_pipeline(m, i0, i1, 0.5f);
  CHECK(oracle::bit_equal(r.image, r.fused));
}

TEST_CASE("refine matches a recomposition from tensor primitives") {
  Model m(ModelConfig::preset("tiny"), 24);
  const int C = m.cfg.C;
  Tensor i0 = oracle::random_tensor({1, 3, 32, 32}, 25, 0.0f, 1.0f);
  Tensor i1 = oracle::random_tensor({1, 3, 32, 32}, 26, 0.0f, 1.0f);
  PipelineResult r = run_pipeline(m, i0, i1, 0.5f);

  LowLevelPyramid p0 = low_level_extract(i0, m.low);
  LowLevelPyramid p1 = low_level_extract(i1, m.low);
  const RefineWeights& w = m.refine_net;
  auto act = [](const Tensor& x) { return leaky_relu(x, 0.1f); };
  const int H = 32, W = 32;
  Tensor e1 = act(conv2d(concat_channels({r.fused, p0.L0, p1.L0}), w.enc1a.w, &w.enc1a.b, 2, 1));
  e1 = act(conv2d(e1, w.enc1b.w, &w.enc1b.b, 1, 1));
  Tensor e2 = act(conv2d(concat_channels({e1, p0.L1, p1.L1}), w.enc2a.w, &w.enc2a.b, 2, 1));
  e2 = act(conv2d(e2, w.enc2b.w, &w.enc2b.b, 1, 1));
  Tensor a0q = bilinear_resize(r.feats.a0_s1, H / 4, W / 4);
  Tensor a1q = bilinear_resize(r.feats.a1_s1, H / 4, W / 4);
  Tensor e3 = act(conv2d(concat_channels({e2, p0.L2, p1.L2, a0q, a1q}), w.enc3a.w, &w.enc3a.b, 2, 1));
  e3 = act(conv2d(e3, w.enc3b.w, &w.enc3b.b, 1, 1));
  Tensor bt = act(conv2d(concat_channels({e3, r.feats.a0_s1, r.feats.a1_s1}), w.bott.w, &w.bott.b, 1, 1));
  Tensor d3 = act(conv2d(concat_channels({bilinear_resize(bt, H / 4, W / 4), e2}), w.dec3.w, &w.dec3.b, 1, 1));
  Tensor d2 = act(conv2d(concat_channels({bilinear_resize(d3, H / 2, W / 2), e1}), w.dec2.w, &w.dec2.b, 1, 1));
  Tensor d1 = act(conv2d(bilinear_resize(d2, H, W), w.dec1.w, &w.dec1.b, 1, 1));
  Tensor expect = add(r.fused, conv2d(d1, w.out.w, &w.out.b, 1, 1));
  CHECK(oracle::max_rel_diff(r.image, expect, 1.0) < 1e-6);
  CHECK(m.cfg.C == C);
}

TEST_CASE("flow state accumulates the per-stage residuals") {
  Model m(ModelConfig::preset("tiny"), 27);
  Tensor i0 = oracle::random_tensor({1, 3, 32, 32}, 28, 0.0f, 1.0f);
  Tensor i1 = oracle::random_tensor({1, 3, 32, 32}, 29, 0.0f, 1.0f);
  PipelineResult r = run_pipeline(m, i0, i1, 0.5f);
  REQUIRE(r.stage_states.size() == 2);

  const StageFeatures& f = r.feats;
  FlowState st = zero_flow_state(1, 32, 32);
  st = estimate_motion_stage(f.a0_s2, f.a1_s2, f.mf01_s2, f.mf10_s2, 0.5f, st, i0, i1,
                             m.head_coarse, 4);
  CHECK(oracle::bit_equal(st.F, r.stage_states[0].F));
  st = estimate_motion_stage(f.a0_s1, f.a1_s1, f.mf01_s1, f.mf10_s1, 0.5f, st, i0, i1, m.head_fine,
                             2);
  CHECK(oracle::bit_equal(st.F, r.stage_states[1].F));
  CHECK(oracle::bit_equal(st.O_logits, r.state.O_logits));
}

TEST_CASE("cached and uncached interpolation agree bit-exactly across timesteps") {
  Model m(ModelConfig::preset("tiny"), 30);
  Tensor i0 = oracle::random_tensor({1, 3, 64, 64}, 31, 0.0f, 1.0f);
  Tensor i1 = oracle::random_tensor({1, 3, 64, 64}, 32, 0.0f, 1.0f);

  FeatureCache cache;
  for (float t : {0.25f, 0.5f, 0.75f}) {
    CAPTURE(t);
    InterpolateResult cached = interpolate(m, i0, i1, t, &cache);
    InterpolateResult plain = interpolate(m, i0, i1, t, nullptr);
    CHECK(oracle::bit_equal(cached.image, plain.image));
    CHECK(oracle::bit_equal(cached.flow, plain.flow));
    CHECK(all_finite(cached.image));
  }
}

TEST_CASE("interpolate validates t and shapes, pads arbitrary sizes") {
  Model m(ModelConfig::preset("tiny"), 33);
  Tensor i0 = oracle::random_tensor({1, 3, 30, 41}, 34, 0.0f, 1.0f);
  Tensor i1 = oracle::random_tensor({1, 3, 30, 41}, 35, 0.0f, 1.0f);
  CHECK_THROWS_AS(interpolate(m, i0, i1, 0.0f), std::invalid_argument);
  CHECK_THROWS_AS(interpolate(m, i0, i1, 1.0f), std::invalid_argument);
  CHECK_THROWS_AS(interpolate(m, i0, oracle::random_tensor({1, 3, 30, 40}, 36), 0.5f),
                  std::invalid_argument);
  InterpolateResult r = interpolate(m, i0, i1, 0.5f);
  CHECK(r.image.shape == i0.shape);
  CHECK(r.mask.shape == Shape{1, 1, 30, 41});
  CHECK(all_finite(r.image));
  // mask lies strictly inside (0, 1)
  for (std::int64_t i = 0; i < r.mask.numel(); ++i) {
    CHECK(r.mask.ptr()[i] > 0.0f);
    CHECK(r.mask.ptr()[i] < 1.0f);
  }
}

TEST_CASE("identical frames with random weights stay finite") {
  Model m(ModelConfig::preset("tiny"), 37);
  Tensor i = oracle::random_tensor({1, 3, 32, 32}, 38, 0.0f, 1.0f);
  InterpolateResult r = interpolate(m, i, i, 0.5f);
  CHECK(all_finite(r.image));
  CHECK(all_finite(r.flow));
}
