#pragma once

#include <cstdint>
#include <vector>

#include "vfi/model.hpp"
#include "vfi/tensor.hpp"

namespace vfi {

// Burt-Adelson style pyramid with the binomial (1,4,6,4,1)/16 kernel and
// reflect-101 borders: levels-1 band-pass images followed by the low-pass
// root. collapse_pyramid inverts it.
std::vector<Tensor> laplacian_pyramid(const Tensor& image, int levels = 5);
Tensor collapse_pyramid(const std::vector<Tensor>& pyr);

// L1 distance between Laplacian pyramids, level l weighted 2^l (finest
// carries weight 1). Differentiable.
Tensor laplacian_loss(const Tensor& a, const Tensor& b, int levels = 5);

struct LossReport {
  std::vector<float> warp_losses;  // one per estimation stage
  float rec_loss = 0.0f;
  float lambda = 0.5f;
  float total = 0.0f;

  // The one expression the `total` field is allowed to come from.
  static float combine(float rec, const std::vector<float>& warps, float lambda) {
    float acc = 0.0f;
    for (float w : warps) acc += w;
    return rec + lambda * acc;
  }
};

struct LossComputation {
  Tensor total;  // scalar, differentiable
  LossReport report;
};

// total = rec + lambda * sum(warp), all terms Laplacian losses against the
// ground truth; lambda = 0.5.
LossComputation total_loss(const std::vector<Tensor>& stage_fused, const Tensor& final_image,
                           const Tensor& ground_truth, float lambda = 0.5f);

// ---- optimizer ----

struct AdamWConfig {
  float peak_lr = 2e-4f;
  float min_lr = 2e-5f;
  int warmup_steps = 20;
  int total_steps = 200;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 1e-4f;
};

// Linear warmup from 0 to peak over warmup_steps, then cosine annealing
// from peak to min over the remaining steps.
float lr_at(const AdamWConfig& cfg, std::int64_t step);

struct OptimizerState {
  AdamWConfig cfg;
  std::int64_t step = 0;  // strictly increasing
  std::vector<std::vector<float>> m, v;

  OptimizerState(const AdamWConfig& cfg, const std::vector<Parameter*>& params);
};

// One decoupled-weight-decay Adam step with bias-corrected moments; the
// learning rate follows the state's schedule position.
void optimizer_step(std::vector<Parameter*>& params, OptimizerState& state);

// ---- desk-scale training ----

struct Triplet {
  Tensor i0, gt, i1;
  float t = 0.5f;
};

// Smooth random scene translated uniformly along x: i0 -> i1 moves content
// by +shift_px, the ground truth sits at t = 0.5 (shift_px must be even).
Triplet make_translation_triplet(int size, int shift_px, std::uint64_t seed);

// Repeated forward/backward/step on a single triplet; returns the loss
// curve. Aborts with the step index if the loss leaves the finite range.
std::vector<LossReport> train_overfit(Model& model, const Triplet& triplet, int steps,
                                      const AdamWConfig& cfg);

}  // namespace vfi
