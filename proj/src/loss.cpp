#include "vfi/loss.hpp"

#include <cmath>
#include <stdexcept>

#include "vfi/ops.hpp"
#include "vfi/synthesis.hpp"

namespace vfi {

std::vector<Tensor> laplacian_pyramid(const Tensor& image, int levels) {
  if (levels < 1) throw std::invalid_argument("laplacian_pyramid: levels must be >= 1");
  const int need = 1 << (levels - 1);
  if (image.shape.h < need || image.shape.w < need) {
    throw std::invalid_argument("laplacian_pyramid: image " + image.shape.str() +
                                " too small for " + std::to_string(levels) + " levels");
  }
  std::vector<Tensor> out;
  Tensor x = image;
  for (int l = 0; l < levels - 1; ++l) {
    Tensor down = downsample2(gauss_blur5(x));
    Tensor up = scale(gauss_blur5(upsample_zero2(down, x.shape.h, x.shape.w)), 4.0f);
    out.push_back(sub(x, up));
    x = down;
  }
  out.push_back(x);
  return out;
}

Tensor collapse_pyramid(const std::vector<Tensor>& pyr) {
  if (pyr.empty()) throw std::invalid_argument("collapse_pyramid: empty pyramid");
  Tensor x = pyr.back();
  for (int l = int(pyr.size()) - 2; l >= 0; --l) {
    Tensor up = scale(gauss_blur5(upsample_zero2(x, pyr[std::size_t(l)].shape.h,
                                                 pyr[std::size_t(l)].shape.w)),
                      4.0f);
    x = add(pyr[std::size_t(l)], up);
  }
  return x;
}

Tensor laplacian_loss(const Tensor& a, const Tensor& b, int levels) {
  if (!(a.shape == b.shape)) {
    throw std::invalid_argument("laplacian_loss: shape mismatch " + a.shape.str() + " vs " +
                                b.shape.str());
  }
  std::vector<Tensor> pa = laplacian_pyramid(a, levels);
  std::vector<Tensor> pb = laplacian_pyramid(b, levels);
  Tensor acc;
  for (int l = 0; l < levels; ++l) {
    Tensor term = scale(mean_all(abs(sub(pa[std::size_t(l)], pb[std::size_t(l)]))),
                        float(1 << l));
    acc = l == 0 ? term : add(acc, term);
  }
  return acc;
}

LossComputation total_loss(const std::vector<Tensor>& stage_fused, const Tensor& final_image,
                           const Tensor& ground_truth, float lambda) {
  Tensor rec = laplacian_loss(final_image, ground_truth);
  std::vector<Tensor> warps;
  warps.reserve(stage_fused.size());
  for (const Tensor& w : stage_fused) warps.push_back(laplacian_loss(w, ground_truth));

  LossComputation out;
  out.report.lambda = lambda;
  out.report.rec_loss = rec.ptr()[0];
  for (const Tensor& w : warps) out.report.warp_losses.push_back(w.ptr()[0]);
  out.report.total = LossReport::combine(out.report.rec_loss, out.report.warp_losses, lambda);

  Tensor wsum;
  for (std::size_t i = 0; i < warps.size(); ++i) wsum = i == 0 ? warps[i] : add(wsum, warps[i]);
  out.total = warps.empty() ? rec : add(rec, scale(wsum, lambda));
  return out;
}

float lr_at(const AdamWConfig& cfg, std::int64_t step) {
  if (cfg.warmup_steps > 0 && step < cfg.warmup_steps) {
    return cfg.peak_lr * float(step) / float(cfg.warmup_steps);
  }
  if (step >= cfg.total_steps) return cfg.min_lr;
  const float span = float(cfg.total_steps - cfg.warmup_steps);
  const float pos = span > 0.0f ? float(step - cfg.warmup_steps) / span : 1.0f;
  return cfg.min_lr +
         0.5f * (cfg.peak_lr - cfg.min_lr) * (1.0f + std::cos(float(M_PI) * pos));
}

OptimizerState::OptimizerState(const AdamWConfig& c, const std::vector<Parameter*>& params)
    : cfg(c) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const auto* p : params) {
    m.emplace_back(std::size_t(p->value.numel()), 0.0f);
    v.emplace_back(std::size_t(p->value.numel()), 0.0f);
  }
}

void optimizer_step(std::vector<Parameter*>& params, OptimizerState& state) {
  if (params.size() != state.m.size()) {
    throw std::invalid_argument("optimizer_step: state built for a different parameter list");
  }
  const AdamWConfig& c = state.cfg;
  const float lr = lr_at(c, state.step);
  state.step += 1;
  const double t = double(state.step);
  const float bc1 = 1.0f / float(1.0 - std::pow(double(c.beta1), t));
  const float bc2 = 1.0f / float(1.0 - std::pow(double(c.beta2), t));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    float* w = p.value.ptr();
    const std::vector<float>& g = p.grad();
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    const std::int64_t n = p.value.numel();
    for (std::int64_t i = 0; i < n; ++i) {
      w[i] -= lr * c.weight_decay * w[i];  // decoupled decay
      const float gi = i < std::int64_t(g.size()) ? g[std::size_t(i)] : 0.0f;
      m[std::size_t(i)] = c.beta1 * m[std::size_t(i)] + (1.0f - c.beta1) * gi;
      v[std::size_t(i)] = c.beta2 * v[std::size_t(i)] + (1.0f - c.beta2) * gi * gi;
      const float mhat = m[std::size_t(i)] * bc1;
      const float vhat = v[std::size_t(i)] * bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

Triplet make_translation_triplet(int size, int shift_px, std::uint64_t seed) {
  if (shift_px % 2 != 0) throw std::invalid_argument("make_translation_triplet: shift must be even");
  SeededRng rng(seed);
  const int bw = size + shift_px;
  Tensor lowres = Tensor::uniform({1, 3, size / 8, bw / 8 + 1}, rng, 0.0f, 1.0f);
  Tensor base = bilinear_resize(lowres, size, bw);
  Triplet tr;
  tr.i0 = crop(base, 0, shift_px, size, size);
  tr.gt = crop(base, 0, shift_px / 2, size, size);
  tr.i1 = crop(base, 0, 0, size, size);
  tr.t = 0.5f;
  return tr;
}

std::vector<LossReport> train_overfit(Model& model, const Triplet& triplet, int steps,
                                      const AdamWConfig& cfg) {
  auto params = model.parameters();
  OptimizerState state(cfg, params);
  std::vector<LossReport> curve;
  curve.reserve(std::size_t(std::max(steps, 0)));
  for (int s = 0; s < steps; ++s) {
    model.zero_grad();
    GradGuard rec(true);
    PipelineResult fwd = run_pipeline(model, triplet.i0, triplet.i1, triplet.t);
    std::vector<Tensor> stage_fused;
    for (const auto& w : fwd.stage_warps) stage_fused.push_back(w.fused);
    LossComputation loss = total_loss(stage_fused, fwd.image, triplet.gt);
    if (!std::isfinite(loss.report.total)) {
      throw std::runtime_error("train_overfit: non-finite loss at step " + std::to_string(s));
    }
    backward(loss.total);
    optimizer_step(params, state);
    curve.push_back(loss.report);
  }
  return curve;
}

}  // namespace vfi
