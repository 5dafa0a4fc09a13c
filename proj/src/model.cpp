#include "vfi/model.hpp"

#include <cmath>
#include <stdexcept>

namespace vfi {

Parameter& ParamSet::add(const std::string& name, Tensor value) {
  if (index_.count(name)) {
    throw std::invalid_argument("parameter name '" + name + "' already registered");
  }
  params_.emplace_back(name, std::move(value));
  index_[name] = &params_.back();
  return params_.back();
}

Parameter* ParamSet::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : it->second;
}

const Parameter* ParamSet::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : it->second;
}

std::vector<Parameter*> ParamSet::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::int64_t ParamSet::scalar_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

namespace {

struct Registrar {
  ParamSet& set;
  SeededRng& rng;

  Tensor weight(const std::string& name, int cout, int cin_per_group, int k) {
    const float b = 1.0f / std::sqrt(float(cin_per_group) * float(k) * float(k));
    return set.add(name, Tensor::uniform({cout, cin_per_group, k, k}, rng, -b, b)).value;
  }
  Tensor bias(const std::string& name, int c) { return set.add(name, Tensor::zeros({1, c, 1, 1})).value; }

  ConvWeights conv(const std::string& name, int cin, int cout, int k) {
    ConvWeights w;
    w.w = weight(name + ".weight", cout, cin, k);
    w.b = bias(name + ".bias", cout);
    return w;
  }
  // pointwise channel map, fan-in = cin
  void linear(const std::string& name, int cin, int cout, Tensor& w, Tensor& b) {
    w = weight(name + ".weight", cout, cin, 1);
    b = bias(name + ".bias", cout);
  }
  Tensor linear_nobias(const std::string& name, int cin, int cout) {
    return weight(name + ".weight", cout, cin, 1);
  }
  void norm(const std::string& name, int c, Tensor& gamma, Tensor& beta) {
    gamma = set.add(name + ".gamma", Tensor::full({1, c, 1, 1}, 1.0f)).value;
    beta = set.add(name + ".beta", Tensor::zeros({1, c, 1, 1})).value;
  }

  TransformerBlockWeights block(const std::string& name, int C) {
    TransformerBlockWeights w;
    const int hidden = 4 * C;
    norm(name + ".norm1", C, w.norm1_gamma, w.norm1_beta);
    w.ifa.wq = linear_nobias(name + ".attn.wq", C, C);
    w.ifa.wk = linear_nobias(name + ".attn.wk", C, C);
    w.ifa.wv = linear_nobias(name + ".attn.wv", C, C);
    linear(name + ".attn.wo", C, C, w.ifa.wo, w.ifa.wo_bias);
    norm(name + ".norm2", C, w.norm2_gamma, w.norm2_beta);
    linear(name + ".mlp.fc1", C, hidden, w.mlp_fc1_w, w.mlp_fc1_b);
    w.mlp_dw_w = weight(name + ".mlp.dw.weight", hidden, 1, 3);  // depthwise
    w.mlp_dw_b = bias(name + ".mlp.dw.bias", hidden);
    linear(name + ".mlp.fc2", hidden, C, w.mlp_fc2_w, w.mlp_fc2_b);
    linear(name + ".motion", 2, C, w.motion_w, w.motion_b);
    return w;
  }

  HeadWeights head(const std::string& name, int cin) {
    HeadWeights w;
    const int c1 = 2 * cin / 3;
    const int c2 = cin / 3;
    w.c1 = conv(name + ".c1", cin, c1, 3);
    w.c2 = conv(name + ".c2", c1, c2, 3);
    w.c3 = conv(name + ".c3", c2, 5, 3);
    return w;
  }
};

}  // namespace

Model::Model(const ModelConfig& config, std::uint64_t seed) : cfg(config) {
  SeededRng rng(seed);
  Registrar r{params, rng};
  const int C = cfg.C;

  low.k0a = r.conv("low_level.k0a", 3, C, 3);
  low.k0b = r.conv("low_level.k0b", C, C, 3);
  low.k1a = r.conv("low_level.k1a", C, 2 * C, 3);
  low.k1b = r.conv("low_level.k1b", 2 * C, 2 * C, 3);
  low.k2a = r.conv("low_level.k2a", 2 * C, 4 * C, 3);
  low.k2b = r.conv("low_level.k2b", 4 * C, 4 * C, 3);

  embed.b0d1 = r.conv("embed.b0d1", C, C, 3);
  embed.b0d2 = r.conv("embed.b0d2", C, C, 3);
  embed.b0d4 = r.conv("embed.b0d4", C, C, 3);
  embed.b1d1 = r.conv("embed.b1d1", 2 * C, C, 3);
  embed.b1d2 = r.conv("embed.b1d2", 2 * C, C, 3);
  embed.b2d1 = r.conv("embed.b2d1", 4 * C, C, 3);
  r.linear("embed.fuse", 6 * C, 8 * C, embed.fuse_w, embed.fuse_b);

  const int c1 = cfg.stage1_channels();
  const int c2 = cfg.stage2_channels();
  extractor.cfg1 = cfg.attention_config(1);
  extractor.cfg2 = cfg.attention_config(2);
  for (int i = 0; i < cfg.N1; ++i) {
    extractor.stage1.push_back(r.block("stage1.block" + std::to_string(i), c1));
  }
  extractor.down = r.conv("down", c1, c2, 3);
  for (int i = 0; i < cfg.N2; ++i) {
    extractor.stage2.push_back(r.block("stage2.block" + std::to_string(i), c2));
  }

  // head input: two pixel-shuffled motion+appearance streams (channels
  // 2*Cs/16 each) plus warped frames (6), previous flow (4) and mask (1)
  head_coarse = r.head("head_coarse", 2 * (2 * c2 / 16) + 11);
  head_fine = r.head("head_fine", 2 * (2 * c1 / 16) + 11);

  refine_net.enc1a = r.conv("refine.enc1a", 3 + 2 * C, 2 * C, 3);
  refine_net.enc1b = r.conv("refine.enc1b", 2 * C, 2 * C, 3);
  refine_net.enc2a = r.conv("refine.enc2a", 2 * C + 4 * C, 4 * C, 3);
  refine_net.enc2b = r.conv("refine.enc2b", 4 * C, 4 * C, 3);
  refine_net.enc3a = r.conv("refine.enc3a", 4 * C + 8 * C + 2 * c1, 8 * C, 3);
  refine_net.enc3b = r.conv("refine.enc3b", 8 * C, 8 * C, 3);
  refine_net.bott = r.conv("refine.bott", 8 * C + 2 * c1, 8 * C, 3);
  refine_net.dec3 = r.conv("refine.dec3", 8 * C + 4 * C, 4 * C, 3);
  refine_net.dec2 = r.conv("refine.dec2", 4 * C + 2 * C, 2 * C, 3);
  refine_net.dec1 = r.conv("refine.dec1", 2 * C, C, 3);
  refine_net.out = r.conv("refine.out", C, 3, 3);
}

void Model::zero_grad() {
  for (auto* p : params.all()) p->zero_grad();
}

}  // namespace vfi
