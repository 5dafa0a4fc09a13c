#include "vfi/selftest.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "vfi/attention.hpp"
#include "vfi/gradcheck.hpp"
#include "vfi/loss.hpp"
#include "vfi/metrics.hpp"
#include "vfi/model.hpp"
#include "vfi/ops.hpp"
#include "vfi/synthesis.hpp"
#include "vfi/weights_io.hpp"

namespace vfi {

namespace {

struct Checker {
  bool ok = true;
  std::ostringstream why;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      why << what;
    }
  }
  void expect_near(double got, double want, double tol, const std::string& what) {
    if (!(std::fabs(got - want) <= tol)) {
      expect(false, what + " (got " + std::to_string(got) + ", want " + std::to_string(want) + ")");
    }
  }
};

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (!(a.shape == b.shape)) return false;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    if (a.ptr()[i] != b.ptr()[i]) return false;
  }
  return true;
}

Tensor random_tensor(Shape s, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  SeededRng rng(seed);
  return Tensor::uniform(s, rng, lo, hi);
}

IfaWeights random_ifa(int C, std::uint64_t seed) {
  SeededRng rng(seed);
  const float b = 1.0f / std::sqrt(float(C));
  IfaWeights w;
  w.wq = Tensor::uniform({C, C, 1, 1}, rng, -b, b);
  w.wk = Tensor::uniform({C, C, 1, 1}, rng, -b, b);
  w.wv = Tensor::uniform({C, C, 1, 1}, rng, -b, b);
  w.wo = Tensor::uniform({C, C, 1, 1}, rng, -b, b);
  w.wo_bias = Tensor::zeros({1, C, 1, 1});
  return w;
}

// ---- groups ----

void group_tensor_ops(Checker& c, bool inject_softmax_fault) {
  // conv identity kernel
  Tensor x = random_tensor({1, 1, 5, 5}, 1);
  Tensor eye = Tensor::full({1, 1, 1, 1}, 1.0f);
  c.expect(bit_equal(conv2d(x, eye, nullptr, 1, 0), x), "conv identity kernel broke");

  // conv constant field
  Tensor cf = Tensor::full({1, 1, 5, 5}, 2.0f);
  Tensor ones = Tensor::full({1, 1, 3, 3}, 1.0f);
  Tensor y = conv2d(cf, ones, nullptr, 1, 1);
  c.expect_near(y.at(0, 0, 2, 2), 18.0, 1e-5, "conv constant interior");

  // softmax rows sum to one and shift invariance
  Tensor logits = random_tensor({1, 2, 8, 9}, 2, -6.0f, 6.0f);
  Tensor sm = softmax_lastdim(logits);
  if (inject_softmax_fault) sm.ptr()[0] += 1e-3f;
  for (int r = 0; r < 16 && c.ok; ++r) {
    double sum = 0.0;
    for (int i = 0; i < 9; ++i) sum += sm.ptr()[r * 9 + i];
    c.expect(std::fabs(sum - 1.0) < 1e-6, "softmax row does not sum to 1");
  }
  Tensor sm2 = softmax_lastdim(add_scalar(logits, 5.0f));
  double maxd = 0.0;
  for (std::int64_t i = 0; i < sm.numel(); ++i) {
    maxd = std::max(maxd, std::fabs(double(sm.ptr()[i]) - double(sm2.ptr()[i])));
  }
  if (inject_softmax_fault) maxd += 1e-3;
  c.expect(maxd < 1e-6, "softmax shift invariance broke");

  // pixel shuffle round trip
  Tensor ps = random_tensor({1, 8, 3, 4}, 3);
  c.expect(bit_equal(pixel_unshuffle(pixel_shuffle(ps, 2), 2), ps), "pixel shuffle round trip");

  // bilinear resize constants
  Tensor cimg = Tensor::full({1, 1, 5, 7}, 0.37f);
  Tensor up = bilinear_resize(cimg, 11, 4);
  for (std::int64_t i = 0; i < up.numel() && c.ok; ++i) {
    c.expect(up.ptr()[i] == 0.37f, "bilinear resize of a constant drifted");
  }
}

void group_autograd(Checker& c) {
  SeededRng rng(4);
  Parameter w("w", Tensor::uniform({1, 2, 3, 3}, rng, 0.3f, 1.0f));
  std::vector<Parameter*> ps = {&w};
  GradCheckOptions poly{0.1f, 32, 0xfeed};
  const double quad = grad_check([&] { return sum_all(mul(w.value, w.value)); }, ps, poly);
  c.expect(quad < 1e-4, "quadratic gradcheck " + std::to_string(quad));
  Tensor fixed = Tensor::uniform({1, 2, 3, 3}, rng, 0.5f, 1.5f);
  const double lin = grad_check([&] { return sum_all(mul(w.value, fixed)); }, ps, poly);
  c.expect(lin < 1e-5, "linear gradcheck " + std::to_string(lin));

  // unused parameter keeps a zero gradient
  Parameter unused("u", Tensor::uniform({1, 1, 2, 2}, rng, -1.0f, 1.0f));
  w.zero_grad();
  backward(sum_all(w.value));
  for (float g : unused.grad()) c.expect(g == 0.0f, "unused parameter gradient moved");
}

void group_attention_basics(Checker& c) {
  // constant features: uniform rows, zero motion at window centers
  AttentionConfig cfg{7, 2, 8, false};
  IfaWeights w = random_ifa(8, 5);
  Tensor a = Tensor::full({1, 8, 14, 14}, 0.5f);
  IfaDirectionResult r = ifa_direction(a, a, cfg, w);
  for (int k = 0; k < 49 && c.ok; ++k) {
    c.expect_near(r.attention.ptr()[3 * 49 + k], 1.0 / 49, 1e-5, "uniform attention row");
  }
  for (int wy = 0; wy < 2 && c.ok; ++wy) {
    for (int wx = 0; wx < 2; ++wx) {
      c.expect(std::fabs(r.motion.at(0, 0, wy * 7 + 3, wx * 7 + 3)) < 1e-6,
               "window-center motion not zero");
    }
  }

  // direction symmetry
  Tensor a0 = random_tensor({1, 8, 9, 11}, 6);
  Tensor a1 = random_tensor({1, 8, 9, 11}, 7);
  AttentionConfig scfg{7, 2, 8, true};
  auto fwd = inter_frame_attention(a0, a1, scfg, w);
  auto swp = inter_frame_attention(a1, a0, scfg, w);
  c.expect(bit_equal(fwd.enhanced0, swp.enhanced1) && bit_equal(fwd.motion01, swp.motion10),
           "direction symmetry broke");
}

void group_attention_masking(Checker& c, int seeds) {
  for (int seed = 0; seed < seeds && c.ok; ++seed) {
    SeededRng rng(100 + std::uint64_t(seed));
    const int h = 2 + rng.uniform_int(7);
    const int w = 2 + rng.uniform_int(7);
    AttentionConfig cfg{5, 1, 4, seed % 2 == 1};
    IfaWeights wt = random_ifa(4, 200 + std::uint64_t(seed));
    IfaDirectionResult r = ifa_direction(random_tensor({1, 4, h, w}, 300 + std::uint64_t(seed)),
                                         random_tensor({1, 4, h, w}, 400 + std::uint64_t(seed)),
                                         cfg, wt);
    const int cells = 25;
    for (std::int64_t row = 0; row < r.attention.shape.n * cells && c.ok; ++row) {
      double sum = 0.0;
      bool any = false;
      for (int k = 0; k < cells; ++k) {
        const float m = r.mask.ptr()[row * cells + k];
        const float v = r.attention.ptr()[row * cells + k];
        if (m == 0.0f) {
          c.expect(v == 0.0f, "masked attention entry is nonzero");
        } else {
          any = true;
        }
        sum += v;
      }
      if (any) c.expect(std::fabs(sum - 1.0) < 1e-6, "attention row sum off");
    }
  }
}

void group_motion_bound(Checker& c, int seeds) {
  for (int seed = 0; seed < seeds && c.ok; ++seed) {
    SeededRng rng(500 + std::uint64_t(seed));
    const int h = 2 + rng.uniform_int(7);
    const int w = 2 + rng.uniform_int(7);
    const int N = rng.uniform_int(2) ? 3 : 5;
    AttentionConfig cfg{N, 1, 4, seed % 2 == 0};
    IfaWeights wt = random_ifa(4, 600 + std::uint64_t(seed));
    IfaDirectionResult r = ifa_direction(random_tensor({1, 4, h, w}, 700 + std::uint64_t(seed),
                                                       -3.0f, 3.0f),
                                         random_tensor({1, 4, h, w}, 800 + std::uint64_t(seed),
                                                       -3.0f, 3.0f),
                                         cfg, wt);
    const float bx = w > 1 ? float(N - 1) * 2.0f / float(w - 1) : 0.0f;
    const float by = h > 1 ? float(N - 1) * 2.0f / float(h - 1) : 0.0f;
    for (int y = 0; y < h && c.ok; ++y) {
      for (int x = 0; x < w; ++x) {
        c.expect(std::fabs(r.motion.at(0, 0, y, x)) <= bx * 1.00001f + 1e-7f &&
                     std::fabs(r.motion.at(0, 1, y, x)) <= by * 1.00001f + 1e-7f,
                 "motion exceeded the window reach bound");
      }
    }
  }
}

void group_time_scaling(Checker& c) {
  Tensor m = random_tensor({1, 2, 5, 5}, 9);
  Tensor z = scale_motion(m, 0.0f);
  for (std::int64_t i = 0; i < z.numel() && c.ok; ++i) {
    c.expect(z.ptr()[i] == 0.0f, "scale_motion(0) not zero");
  }
  c.expect(bit_equal(scale_motion(m, 1.0f), m), "scale_motion(1) not identity");

  // cached extractor reuse is byte-identical across timesteps
  Model model(ModelConfig::preset("tiny"), 10);
  Tensor i0 = random_tensor({1, 3, 48, 48}, 11, 0.0f, 1.0f);
  Tensor i1 = random_tensor({1, 3, 48, 48}, 12, 0.0f, 1.0f);
  FeatureCache cache;
  for (float t : {0.25f, 0.5f, 0.75f}) {
    InterpolateResult with_cache = interpolate(model, i0, i1, t, &cache);
    InterpolateResult without = interpolate(model, i0, i1, t, nullptr);
    c.expect(bit_equal(with_cache.image, without.image), "cached interpolation diverged");
  }
}

void group_warp(Checker& c) {
  Tensor img = random_tensor({1, 3, 7, 9}, 13);
  c.expect(bit_equal(backward_warp(img, Tensor::zeros({1, 2, 7, 9})), img),
           "zero-flow warp is not the identity");

  // integer shift recovery on the interior
  Tensor shifted = Tensor::zeros({1, 3, 7, 9});
  for (int ch = 0; ch < 3; ++ch) {
    for (int y = 0; y < 7; ++y) {
      for (int x = 0; x + 1 < 9; ++x) shifted.at(0, ch, y, x) = img.at(0, ch, y, x + 1);
    }
  }
  Tensor back = Tensor::zeros({1, 2, 7, 9});
  for (std::int64_t i = 0; i < 63; ++i) back.ptr()[i] = -1.0f;
  Tensor rec = backward_warp(shifted, back);
  for (int ch = 0; ch < 3 && c.ok; ++ch) {
    for (int y = 0; y < 7; ++y) {
      for (int x = 1; x + 1 < 9; ++x) {
        c.expect(rec.at(0, ch, y, x) == img.at(0, ch, y, x), "integer shift recovery failed");
      }
    }
  }

  // fractional flow on a ramp gives midpoints
  Tensor ramp = Tensor::zeros({1, 1, 3, 8});
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 8; ++x) ramp.at(0, 0, y, x) = float(x);
  }
  Tensor half = Tensor::zeros({1, 2, 3, 8});
  for (std::int64_t i = 0; i < 24; ++i) half.ptr()[i] = 0.5f;
  Tensor mid = backward_warp(ramp, half);
  for (int y = 0; y < 3 && c.ok; ++y) {
    for (int x = 0; x + 1 < 8; ++x) {
      c.expect_near(mid.at(0, 0, y, x), x + 0.5, 1e-6, "fractional warp midpoint");
    }
  }
}

void group_pyramid_loss(Checker& c) {
  Tensor img = random_tensor({1, 3, 24, 24}, 14, 0.0f, 1.0f);
  auto pyr = laplacian_pyramid(img, 4);
  Tensor back = collapse_pyramid(pyr);
  double mae = 0.0;
  for (std::int64_t i = 0; i < img.numel(); ++i) {
    mae += std::fabs(double(back.ptr()[i]) - double(img.ptr()[i]));
  }
  mae /= double(img.numel());
  c.expect(mae <= 1e-5, "pyramid collapse MAE " + std::to_string(mae));

  c.expect(laplacian_loss(img, img, 4).ptr()[0] == 0.0f, "self loss nonzero");

  Tensor gt = random_tensor({1, 3, 16, 16}, 15, 0.0f, 1.0f);
  Tensor off = random_tensor({1, 3, 16, 16}, 16, 0.0f, 1.0f);
  LossComputation lc = total_loss({off, gt}, gt, gt);
  c.expect(lc.report.total ==
               LossReport::combine(lc.report.rec_loss, lc.report.warp_losses, lc.report.lambda),
           "loss report recomposition");
  c.expect_near(lc.report.total, 0.5 * double(lc.report.warp_losses[0]), 1e-9,
                "lambda weighting");
}

void group_metrics(Checker& c) {
  Tensor a = random_tensor({1, 3, 8, 8}, 17, 0.0f, 1.0f);
  c.expect(std::isinf(psnr(a, a)), "psnr sentinel");
  Tensor b = add_scalar(a, 0.1f);
  c.expect_near(psnr(a, b), 20.0, 1e-6, "psnr closed form");
  c.expect_near(ssim(a, a), 1.0, 1e-6, "ssim identity");
  c.expect(interpolation_error(a, a) == 0.0, "ie identity");
  c.expect_near(interpolation_error(a, add_scalar(a, 2.0f / 255.0f)), 2.0, 1e-5,
                "ie closed form");
}

void group_serialization(Checker& c) {
  const std::string path = "/tmp/vfi_selftest_weights.emav";
  Model m(ModelConfig::preset("tiny"), 18);
  save_weights(m, path);
  Model m2(ModelConfig::preset("tiny"), 99);
  load_weights(m2, path);
  auto pa = m.parameters();
  auto pb = m2.parameters();
  c.expect(pa.size() == pb.size(), "parameter count after reload");
  for (std::size_t i = 0; i < pa.size() && c.ok; ++i) {
    c.expect(bit_equal(pa[i]->value, pb[i]->value), "weights round trip not bit-exact");
  }

  // truncated file reports an offset
  std::FILE* in = std::fopen(path.c_str(), "rb");
  std::FILE* out = std::fopen("/tmp/vfi_selftest_trunc.emav", "wb");
  for (int i = 0; i < 100; ++i) {
    int ch = std::fgetc(in);
    if (ch == EOF) break;
    std::fputc(ch, out);
  }
  std::fclose(in);
  std::fclose(out);
  bool threw = false;
  try {
    Model m3(ModelConfig::preset("tiny"), 1);
    load_weights(m3, "/tmp/vfi_selftest_trunc.emav");
  } catch (const std::exception& e) {
    threw = std::string(e.what()).find("byte offset") != std::string::npos;
  }
  c.expect(threw, "truncated load did not report an offset");
  std::remove(path.c_str());
  std::remove("/tmp/vfi_selftest_trunc.emav");
}

void group_determinism(Checker& c) {
  Model a(ModelConfig::preset("tiny"), 21);
  Model b(ModelConfig::preset("tiny"), 21);
  Tensor i0 = random_tensor({1, 3, 32, 32}, 22, 0.0f, 1.0f);
  Tensor i1 = random_tensor({1, 3, 32, 32}, 23, 0.0f, 1.0f);
  InterpolateResult ra = interpolate(a, i0, i1, 0.5f);
  InterpolateResult rb = interpolate(b, i0, i1, 0.5f);
  c.expect(bit_equal(ra.image, rb.image), "same-seed models disagree");
}

void group_gradient_fidelity(Checker& c) {
  Model m(ModelConfig::preset("tiny"), 24);
  Triplet tr = make_translation_triplet(32, 2, 25);
  auto params = m.parameters();
  auto f = [&] {
    PipelineResult fwd = run_pipeline(m, tr.i0, tr.i1, tr.t);
    std::vector<Tensor> fused;
    for (const auto& w : fwd.stage_warps) fused.push_back(w.fused);
    return total_loss(fused, fwd.image, tr.gt).total;
  };
  GradCheckOptions opts;
  opts.eps = 2e-2f;
  opts.coords_per_param = 32;
  const double err = grad_check(f, params, opts);
  c.expect(err < 5e-3, "model gradient fidelity " + std::to_string(err));
}

void group_overfit(Checker& c, const std::string& curve_path) {
  Model m(ModelConfig::preset("tiny"), 26);
  Triplet tr = make_translation_triplet(64, 4, 27);
  InterpolateResult before = interpolate(m, tr.i0, tr.i1, 0.5f);
  const double psnr_before = psnr(before.image, tr.gt);

  AdamWConfig cfg;  // 20-step warmup to 2e-4, cosine to 2e-5 over 200 steps
  auto curve = train_overfit(m, tr, 200, cfg);
  c.expect(curve.size() == 200, "unexpected curve length");
  c.expect(std::isfinite(curve.back().total), "training diverged");
  c.expect(curve.back().total <= 0.5f * curve.front().total,
           "final loss " + std::to_string(curve.back().total) + " vs initial " +
               std::to_string(curve.front().total));

  InterpolateResult after = interpolate(m, tr.i0, tr.i1, 0.5f);
  const double psnr_after = psnr(after.image, tr.gt);
  c.expect(psnr_after >= psnr_before + 5.0,
           "PSNR gain " + std::to_string(psnr_after - psnr_before) + " dB");

  // region-averaged stage-1 motion must point along the imposed +x shift
  PipelineResult pr = run_pipeline(m, tr.i0, tr.i1, 0.5f);
  double mx = 0.0;
  const Tensor& m01 = pr.feats.m01_s1;
  for (int y = 0; y < m01.shape.h; ++y) {
    for (int x = 0; x < m01.shape.w; ++x) mx += m01.at(0, 0, y, x);
  }
  c.expect(mx > 0.0, "motion sign disagrees with the imposed shift");

  if (!curve_path.empty()) {
    std::FILE* f = std::fopen(curve_path.c_str(), "wb");
    if (f) {
      std::fprintf(f, "step,total,rec,warp1,warp2\n");
      for (std::size_t i = 0; i < curve.size(); ++i) {
        std::fprintf(f, "%zu,%.9g,%.9g,%.9g,%.9g\n", i, double(curve[i].total),
                     double(curve[i].rec_loss), double(curve[i].warp_losses[0]),
                     double(curve[i].warp_losses[1]));
      }
      std::fclose(f);
    }
  }
}

}  // namespace

std::vector<GroupResult> run_selftest(const SelftestOptions& opts) {
  NoGradGuard no_grad_default;  // groups that need the tape re-enable it

  struct Entry {
    std::string name;
    std::function<void(Checker&)> fn;
    bool full_only = false;
  };
  std::vector<Entry> entries = {
      {"tensor_ops", [&](Checker& c) { group_tensor_ops(c, opts.inject_softmax_fault); }, false},
      {"autograd",
       [](Checker& c) {
         GradGuard rec(true);
         group_autograd(c);
       },
       false},
      {"attention_basics", group_attention_basics, false},
      {"attention_masking", [](Checker& c) { group_attention_masking(c, 20); }, false},
      {"motion_bound", [](Checker& c) { group_motion_bound(c, 30); }, false},
      {"time_scaling", group_time_scaling, false},
      {"warp", group_warp, false},
      {"pyramid_loss", group_pyramid_loss, false},
      {"metrics", group_metrics, false},
      {"serialization", group_serialization, false},
      {"determinism", group_determinism, false},
      {"gradient_fidelity",
       [](Checker& c) {
         GradGuard rec(true);
         group_gradient_fidelity(c);
       },
       true},
      {"overfit",
       [&](Checker& c) {
         GradGuard rec(true);
         group_overfit(c, opts.loss_curve_path);
       },
       true},
  };

  std::vector<GroupResult> results;
  for (auto& e : entries) {
    if (e.full_only && opts.level != SelftestLevel::full) continue;
    Checker c;
    const auto start = std::chrono::steady_clock::now();
    try {
      e.fn(c);
    } catch (const std::exception& ex) {
      c.expect(false, std::string("exception: ") + ex.what());
    }
    const auto stop = std::chrono::steady_clock::now();
    GroupResult r;
    r.name = e.name;
    r.pass = c.ok;
    r.detail = c.why.str();
    r.seconds = std::chrono::duration<double>(stop - start).count();
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace vfi
