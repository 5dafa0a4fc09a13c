#include "vfi/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace vfi {

void AttentionConfig::validate() const {
  if (channels <= 0 || num_heads <= 0 || channels % num_heads != 0) {
    throw std::invalid_argument("attention config: channels " + std::to_string(channels) +
                                " must be a positive multiple of num_heads " +
                                std::to_string(num_heads));
  }
  if (window_size < 3 || window_size % 2 == 0) {
    throw std::invalid_argument("attention config: window_size must be odd and >= 3, got " +
                                std::to_string(window_size));
  }
}

Tensor build_coordinate_map(int h, int w) {
  if (h < 1 || w < 1) throw std::invalid_argument("build_coordinate_map: size must be >= 1");
  Tensor out = Tensor::zeros({1, 2, h, w});
  const float dx = w > 1 ? 2.0f / float(w - 1) : 0.0f;
  const float dy = h > 1 ? 2.0f / float(h - 1) : 0.0f;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      out.at(0, 0, y, x) = w > 1 ? -1.0f + float(x) * dx : 0.0f;
      out.at(0, 1, y, x) = h > 1 ? -1.0f + float(y) * dy : 0.0f;
    }
  }
  return out;
}

WindowPlan make_window_plan(int h, int w, int N, int shift) {
  if (N < 1) throw std::invalid_argument("make_window_plan: N must be >= 1");
  if (shift < 0 || shift >= N) throw std::invalid_argument("make_window_plan: shift out of range");
  WindowPlan p;
  p.h = h;
  p.w = w;
  p.N = N;
  p.shift = shift;
  p.hp = (h + N - 1) / N * N;
  p.wp = (w + N - 1) / N * N;
  p.nwy = p.hp / N;
  p.nwx = p.wp / N;
  const int cells = p.num_windows() * N * N;
  p.src_y.resize(std::size_t(cells));
  p.src_x.resize(std::size_t(cells));
  p.valid.resize(std::size_t(cells));
  p.region.resize(std::size_t(cells));
  auto region_of = [N, shift](int r, int extent) {
    if (r < extent - N) return 0;
    if (r < extent - shift) return 1;
    return 2;
  };
  std::size_t i = 0;
  for (int wy = 0; wy < p.nwy; ++wy) {
    for (int wx = 0; wx < p.nwx; ++wx) {
      for (int py = 0; py < N; ++py) {
        for (int px = 0; px < N; ++px, ++i) {
          const int ry = wy * N + py;
          const int rx = wx * N + px;
          const int sy = (ry + shift) % p.hp;
          const int sx = (rx + shift) % p.wp;
          p.src_y[i] = sy;
          p.src_x[i] = sx;
          p.valid[i] = (sy < h && sx < w) ? 1 : 0;
          p.region[i] = region_of(ry, p.hp) * 3 + region_of(rx, p.wp);
        }
      }
    }
  }
  return p;
}

namespace {

using IndexVec = std::vector<std::int64_t>;

// (n, C, h, w) -> (n*nW*heads, 1, N^2, hd); replicate reads for padded cells.
std::shared_ptr<IndexVec> head_split_indices(const WindowPlan& p, int n, int C, int heads) {
  const int hd = C / heads;
  const int nW = p.num_windows();
  const int cells = p.cells();
  auto idx = std::make_shared<IndexVec>();
  idx->reserve(std::size_t(n) * nW * heads * cells * hd);
  for (int bn = 0; bn < n; ++bn) {
    for (int win = 0; win < nW; ++win) {
      for (int hh = 0; hh < heads; ++hh) {
        for (int q = 0; q < cells; ++q) {
          const std::size_t cell = std::size_t(win) * cells + q;
          const int sy = std::min<int>(p.src_y[cell], p.h - 1);
          const int sx = std::min<int>(p.src_x[cell], p.w - 1);
          for (int d = 0; d < hd; ++d) {
            const int c = hh * hd + d;
            idx->push_back(((std::int64_t(bn) * C + c) * p.h + sy) * p.w + sx);
          }
        }
      }
    }
  }
  return idx;
}

// (n*nW*heads, 1, N^2, hd) -> (n, C, h, w); padded cells are dropped.
std::shared_ptr<IndexVec> head_merge_indices(const WindowPlan& p, int n, int C, int heads) {
  const int hd = C / heads;
  const int nW = p.num_windows();
  const int cells = p.cells();
  auto idx = std::make_shared<IndexVec>();
  idx->reserve(std::size_t(n) * C * p.h * p.w);
  for (int bn = 0; bn < n; ++bn) {
    for (int c = 0; c < C; ++c) {
      const int hh = c / hd;
      const int d = c % hd;
      for (int y = 0; y < p.h; ++y) {
        const int ry = (y - p.shift + p.hp) % p.hp;
        for (int x = 0; x < p.w; ++x) {
          const int rx = (x - p.shift + p.wp) % p.wp;
          const int win = (ry / p.N) * p.nwx + rx / p.N;
          const int q = (ry % p.N) * p.N + rx % p.N;
          idx->push_back(((std::int64_t(bn) * nW + win) * std::int64_t(heads) + hh) *
                             std::int64_t(cells) * hd +
                         std::int64_t(q) * hd + d);
        }
      }
    }
  }
  return idx;
}

// (n*nW, 1, N^2, 1) -> (n, 1, h, w)
std::shared_ptr<IndexVec> window_scalar_indices(const WindowPlan& p, int n) {
  const int nW = p.num_windows();
  const int cells = p.cells();
  auto idx = std::make_shared<IndexVec>();
  idx->reserve(std::size_t(n) * p.h * p.w);
  for (int bn = 0; bn < n; ++bn) {
    for (int y = 0; y < p.h; ++y) {
      const int ry = (y - p.shift + p.hp) % p.hp;
      for (int x = 0; x < p.w; ++x) {
        const int rx = (x - p.shift + p.wp) % p.wp;
        const int win = (ry / p.N) * p.nwx + rx / p.N;
        const int q = (ry % p.N) * p.N + rx % p.N;
        idx->push_back((std::int64_t(bn) * nW + win) * cells + q);
      }
    }
  }
  return idx;
}

Tensor attention_mask(const WindowPlan& p, int n, int heads) {
  const int nW = p.num_windows();
  const int cells = p.cells();
  Tensor mask = Tensor::zeros({n * nW * heads, 1, cells, cells});
  // pair admissibility per window, replicated over batch and heads
  std::vector<float> proto(std::size_t(nW) * cells * cells);
  for (int win = 0; win < nW; ++win) {
    const std::size_t base = std::size_t(win) * cells;
    for (int q = 0; q < cells; ++q) {
      for (int k = 0; k < cells; ++k) {
        const bool ok = p.valid[base + k] != 0 && p.region[base + q] == p.region[base + k];
        proto[(base + q) * cells + k] = ok ? 1.0f : 0.0f;
      }
    }
  }
  float* md = mask.ptr();
  for (int bn = 0; bn < n; ++bn) {
    for (int win = 0; win < nW; ++win) {
      const float* src = proto.data() + std::size_t(win) * cells * cells;
      for (int hh = 0; hh < heads; ++hh) {
        std::copy(src, src + std::size_t(cells) * cells, md);
        md += std::size_t(cells) * cells;
      }
    }
  }
  return mask;
}

// Relative coordinate tensors (n*nW, 1, N^2, N^2): entry [q][k] holds the
// normalized offset of cell k from cell q along one axis.
std::pair<Tensor, Tensor> relative_coords(const WindowPlan& p, int n) {
  const int nW = p.num_windows();
  const int cells = p.cells();
  const float dx = p.w > 1 ? 2.0f / float(p.w - 1) : 0.0f;
  const float dy = p.h > 1 ? 2.0f / float(p.h - 1) : 0.0f;
  Tensor rx = Tensor::zeros({n * nW, 1, cells, cells});
  Tensor ry = Tensor::zeros({n * nW, 1, cells, cells});
  std::vector<float> px(std::size_t(nW) * cells * cells), py(px.size());
  for (int win = 0; win < nW; ++win) {
    const std::size_t base = std::size_t(win) * cells;
    for (int q = 0; q < cells; ++q) {
      for (int k = 0; k < cells; ++k) {
        px[(base + q) * cells + k] = float(p.src_x[base + k] - p.src_x[base + q]) * dx;
        py[(base + q) * cells + k] = float(p.src_y[base + k] - p.src_y[base + q]) * dy;
      }
    }
  }
  for (int bn = 0; bn < n; ++bn) {
    std::copy(px.begin(), px.end(), rx.ptr() + std::size_t(bn) * px.size());
    std::copy(py.begin(), py.end(), ry.ptr() + std::size_t(bn) * py.size());
  }
  return {rx, ry};
}

}  // namespace

WindowPartitionResult window_partition(const Tensor& x, int N, int shift) {
  WindowPartitionResult res;
  res.plan = make_window_plan(x.shape.h, x.shape.w, N, shift);
  res.batch = x.shape.n;
  res.channels = x.shape.c;
  const WindowPlan& p = res.plan;
  const int nW = p.num_windows();
  auto idx = std::make_shared<IndexVec>();
  idx->reserve(std::size_t(x.shape.n) * nW * x.shape.c * p.cells());
  for (int bn = 0; bn < x.shape.n; ++bn) {
    for (int win = 0; win < nW; ++win) {
      for (int c = 0; c < x.shape.c; ++c) {
        for (int cell = 0; cell < p.cells(); ++cell) {
          const std::size_t ci = std::size_t(win) * p.cells() + cell;
          const int sy = std::min<int>(p.src_y[ci], p.h - 1);
          const int sx = std::min<int>(p.src_x[ci], p.w - 1);
          idx->push_back(((std::int64_t(bn) * x.shape.c + c) * p.h + sy) * p.w + sx);
        }
      }
    }
  }
  res.windows = gather_linear(x, {x.shape.n * nW, x.shape.c, N, N}, idx);
  res.validity = Tensor::zeros({nW, 1, N, N});
  for (std::size_t i = 0; i < p.valid.size(); ++i) {
    res.validity.ptr()[i] = p.valid[i] ? 1.0f : 0.0f;
  }
  return res;
}

Tensor window_reverse(const Tensor& windows, const WindowPlan& p, int batch, int channels) {
  const int nW = p.num_windows();
  if (windows.shape.n != batch * nW || windows.shape.c != channels || windows.shape.h != p.N ||
      windows.shape.w != p.N) {
    throw std::invalid_argument("window_reverse: windows " + windows.shape.str() +
                                " do not match the plan");
  }
  auto idx = std::make_shared<IndexVec>();
  idx->reserve(std::size_t(batch) * channels * p.h * p.w);
  for (int bn = 0; bn < batch; ++bn) {
    for (int c = 0; c < channels; ++c) {
      for (int y = 0; y < p.h; ++y) {
        const int ry = (y - p.shift + p.hp) % p.hp;
        for (int x = 0; x < p.w; ++x) {
          const int rx = (x - p.shift + p.wp) % p.wp;
          const int win = (ry / p.N) * p.nwx + rx / p.N;
          const int cell = (ry % p.N) * p.N + rx % p.N;
          idx->push_back(((std::int64_t(bn) * nW + win) * channels + c) * p.cells() + cell);
        }
      }
    }
  }
  return gather_linear(windows, {batch, channels, p.h, p.w}, idx);
}

IfaDirectionResult ifa_direction(const Tensor& query_frame, const Tensor& kv_frame,
                                 const AttentionConfig& cfg, const IfaWeights& w) {
  cfg.validate();
  if (!(query_frame.shape == kv_frame.shape)) {
    throw std::invalid_argument("ifa: frame shapes differ, " + query_frame.shape.str() + " vs " +
                                kv_frame.shape.str());
  }
  if (query_frame.shape.c != cfg.channels) {
    throw std::invalid_argument("ifa: input channels " + query_frame.shape.str() +
                                " do not match config channels " + std::to_string(cfg.channels));
  }
  const int n = query_frame.shape.n;
  const int C = cfg.channels;
  const int heads = cfg.num_heads;
  const int hd = cfg.head_dim();
  const int N = cfg.window_size;
  const int shift = cfg.shifted ? N / 2 : 0;

  Tensor q = linear(query_frame, w.wq, nullptr);
  Tensor k = linear(kv_frame, w.wk, nullptr);
  Tensor v = linear(kv_frame, w.wv, nullptr);

  const WindowPlan plan = make_window_plan(query_frame.shape.h, query_frame.shape.w, N, shift);
  const int nW = plan.num_windows();
  const int cells = plan.cells();

  auto split_idx = head_split_indices(plan, n, C, heads);
  const Shape win_shape{n * nW * heads, 1, cells, hd};
  Tensor qw = gather_linear(q, win_shape, split_idx);
  Tensor kw = gather_linear(k, win_shape, split_idx);
  Tensor vw = gather_linear(v, win_shape, split_idx);

  Tensor logits = scale(bmm(qw, kw, /*transpose_b=*/true), 1.0f / std::sqrt(float(hd)));
  Tensor mask = attention_mask(plan, n, heads);
  Tensor attn = masked_softmax_lastdim(logits, mask);

  Tensor ctx = bmm(attn, vw, /*transpose_b=*/false);
  Tensor merged = gather_linear(ctx, query_frame.shape, head_merge_indices(plan, n, C, heads));
  Tensor delta = linear(merged, w.wo, &w.wo_bias);

  // Per-head displacements are averaged; averaging the maps first is the
  // same linear operation.
  Tensor attn_mean = mean_channels(reshape(attn, {n * nW, heads, cells, cells}));
  auto [rx, ry] = relative_coords(plan, n);
  Tensor mx = sum_lastdim(mul(attn_mean, rx));
  Tensor my = sum_lastdim(mul(attn_mean, ry));
  auto scatter_idx = window_scalar_indices(plan, n);
  const Shape map_shape{n, 1, plan.h, plan.w};
  Tensor motion = concat_channels(
      {gather_linear(mx, map_shape, scatter_idx), gather_linear(my, map_shape, scatter_idx)});

  IfaDirectionResult res;
  res.delta = delta;
  res.motion = motion;
  res.attention = attn;
  res.mask = mask;
  return res;
}

InterFrameAttentionResult inter_frame_attention(const Tensor& a0, const Tensor& a1,
                                                const AttentionConfig& cfg, const IfaWeights& w) {
  IfaDirectionResult d01 = ifa_direction(a0, a1, cfg, w);
  IfaDirectionResult d10 = ifa_direction(a1, a0, cfg, w);
  InterFrameAttentionResult res;
  res.enhanced0 = add(a0, d01.delta);
  res.enhanced1 = add(a1, d10.delta);
  res.motion01 = d01.motion;
  res.motion10 = d10.motion;
  return res;
}

Tensor scale_motion(const Tensor& motion, float t) {
  if (motion.shape.c != 2) {
    throw std::invalid_argument("scale_motion: expected a (n,2,h,w) field, got " +
                                motion.shape.str());
  }
  if (t < 0.0f || t > 1.0f) {
    throw std::invalid_argument("scale_motion: t must lie in [0, 1], got " + std::to_string(t));
  }
  return scale(motion, t);
}

TransformerBlockResult transformer_block(const Tensor& a0, const Tensor& a1,
                                         const AttentionConfig& cfg,
                                         const TransformerBlockWeights& w) {
  if (w.motion_w.shape.c != 2) {
    throw std::invalid_argument("transformer_block: motion linear must take 2 input channels");
  }
  Tensor n0 = layer_norm(a0, w.norm1_gamma, w.norm1_beta);
  Tensor n1 = layer_norm(a1, w.norm1_gamma, w.norm1_beta);
  IfaDirectionResult d01 = ifa_direction(n0, n1, cfg, w.ifa);
  IfaDirectionResult d10 = ifa_direction(n1, n0, cfg, w.ifa);
  Tensor a0p = add(a0, d01.delta);
  Tensor a1p = add(a1, d10.delta);

  const int hidden = w.mlp_fc1_w.shape.n;
  auto mlp = [&](const Tensor& x) {
    Tensor h = linear(layer_norm(x, w.norm2_gamma, w.norm2_beta), w.mlp_fc1_w, &w.mlp_fc1_b);
    h = conv2d(h, w.mlp_dw_w, &w.mlp_dw_b, 1, 1, 1, hidden);
    h = gelu(h);
    return linear(h, w.mlp_fc2_w, &w.mlp_fc2_b);
  };

  TransformerBlockResult res;
  res.a0 = add(a0p, mlp(a0p));
  res.a1 = add(a1p, mlp(a1p));
  res.motion_feat01 = linear(d01.motion, w.motion_w, &w.motion_b);
  res.motion_feat10 = linear(d10.motion, w.motion_w, &w.motion_b);
  res.motion01 = d01.motion;
  res.motion10 = d10.motion;
  return res;
}

}  // namespace vfi
