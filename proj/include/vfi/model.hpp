#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

#include "vfi/backbone.hpp"
#include "vfi/synthesis.hpp"
#include "vfi/tensor.hpp"

namespace vfi {

// Ordered, name-indexed parameter collection. Declaration order doubles as
// initialization and serialization order.
class ParamSet {
 public:
  Parameter& add(const std::string& name, Tensor value);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  std::vector<Parameter*> all();
  std::size_t size() const { return params_.size(); }
  std::int64_t scalar_count() const;

 private:
  std::deque<Parameter> params_;  // deque: stable addresses under growth
  std::unordered_map<std::string, Parameter*> index_;
};

// The complete interpolation network: low-level extractor, cross-scale
// embedding, two Transformer stages, two motion-estimation heads and the
// refinement U-Net. A fixed seed yields a bit-reproducible model: weights
// draw from uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) in declaration order,
// biases start at zero, norm affines at identity.
struct Model {
  ModelConfig cfg;
  ParamSet params;

  LowLevelWeights low;
  CrossScaleWeights embed;
  ExtractorWeights extractor;
  HeadWeights head_coarse;  // stage 2, H/16
  HeadWeights head_fine;    // stage 1, H/8
  RefineWeights refine_net;

  Model(const ModelConfig& cfg, std::uint64_t seed);

  std::vector<Parameter*> parameters() { return params.all(); }
  void zero_grad();
};

}  // namespace vfi
