#include "vfi/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace vfi {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!(a.shape == b.shape)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape.str() +
                                " vs " + b.shape.str());
  }
}

Tensor make_out(Shape s) { return Tensor::zeros(s); }

// Shared pattern for unary elementwise ops: fn fills out, dfn maps
// (x, y, gout) -> gin contribution.
template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd dfn) {
  Tensor out = make_out(a.shape);
  const float* x = a.ptr();
  float* y = out.ptr();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) y[i] = fwd(x[i]);
  attach_node(out, {a}, [dfn](const Tensor& o) {
    const Tensor& pa = o.node->parents[0];
    if (!pa.requires_grad) return;
    auto& g = grad_ref(pa);
    const float* go = grad_ref(o).data();
    const float* x = pa.ptr();
    const float* y = o.ptr();
    const std::int64_t n = o.numel();
    for (std::int64_t i = 0; i < n; ++i) g[i] += dfn(x[i], y[i]) * go[i];
  });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = make_out(a.shape);
  const std::int64_t n = a.numel();
  const float* pa = a.ptr();
  const float* pb = b.ptr();
  float* po = out.ptr();
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  attach_node(out, {a, b}, [](const Tensor& o) {
    const float* go = grad_ref(o).data();
    const std::int64_t n = o.numel();
    for (int k = 0; k < 2; ++k) {
      const Tensor& p = o.node->parents[k];
      if (!p.requires_grad) continue;
      auto& g = grad_ref(p);
      for (std::int64_t i = 0; i < n; ++i) g[i] += go[i];
    }
  });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = make_out(a.shape);
  const std::int64_t n = a.numel();
  const float* pa = a.ptr();
  const float* pb = b.ptr();
  float* po = out.ptr();
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
  attach_node(out, {a, b}, [](const Tensor& o) {
    const float* go = grad_ref(o).data();
    const std::int64_t n = o.numel();
    const Tensor& pa = o.node->parents[0];
    const Tensor& pb = o.node->parents[1];
    if (pa.requires_grad) {
      auto& g = grad_ref(pa);
      for (std::int64_t i = 0; i < n; ++i) g[i] += go[i];
    }
    if (pb.requires_grad) {
      auto& g = grad_ref(pb);
      for (std::int64_t i = 0; i < n; ++i) g[i] -= go[i];
    }
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = make_out(a.shape);
  const std::int64_t n = a.numel();
  const float* pa = a.ptr();
  const float* pb = b.ptr();
  float* po = out.ptr();
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  attach_node(out, {a, b}, [](const Tensor& o) {
    const float* go = grad_ref(o).data();
    const std::int64_t n = o.numel();
    const Tensor& pa = o.node->parents[0];
    const Tensor& pb = o.node->parents[1];
    if (pa.requires_grad) {
      auto& g = grad_ref(pa);
      const float* xb = pb.ptr();
      for (std::int64_t i = 0; i < n; ++i) g[i] += go[i] * xb[i];
    }
    if (pb.requires_grad) {
      auto& g = grad_ref(pb);
      const float* xa = pa.ptr();
      for (std::int64_t i = 0; i < n; ++i) g[i] += go[i] * xa[i];
    }
  });
  return out;
}

Tensor scale(const Tensor& a, float s) {
  return unary_op(
      a, [s](float x) { return x * s; }, [s](float, float) { return s; });
}

Tensor add_scalar(const Tensor& a, float s) {
  return unary_op(
      a, [s](float x) { return x + s; }, [](float, float) { return 1.0f; });
}

Tensor abs(const Tensor& a) {
  return unary_op(
      a, [](float x) { return std::fabs(x); },
      [](float x, float) { return x > 0.0f ? 1.0f : (x < 0.0f ? -1.0f : 0.0f); });
}

Tensor leaky_relu(const Tensor& a, float negative_slope) {
  return unary_op(
      a, [negative_slope](float x) { return x > 0.0f ? x : negative_slope * x; },
      [negative_slope](float x, float) { return x > 0.0f ? 1.0f : negative_slope; });
}

Tensor gelu(const Tensor& a) {
  constexpr float kInvSqrt2 = 0.70710678118654752440f;
  constexpr float kInvSqrt2Pi = 0.39894228040143267794f;
  return unary_op(
      a,
      [](float x) { return 0.5f * x * (1.0f + std::erf(x * kInvSqrt2)); },
      [](float x, float) {
        float cdf = 0.5f * (1.0f + std::erf(x * kInvSqrt2));
        float pdf = kInvSqrt2Pi * std::exp(-0.5f * x * x);
        return cdf + x * pdf;
      });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a,
      [](float x) {
        return x >= 0.0f ? 1.0f / (1.0f + std::exp(-x))
                         : std::exp(x) / (1.0f + std::exp(x));
      },
      [](float, float y) { return y * (1.0f - y); });
}

Tensor sum_all(const Tensor& a) {
  Tensor out = make_out({1, 1, 1, 1});
  double acc = 0.0;
  const float* x = a.ptr();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) acc += x[i];
  out.ptr()[0] = float(acc);
  attach_node(out, {a}, [](const Tensor& o) {
    const Tensor& p = o.node->parents[0];
    if (!p.requires_grad) return;
    const float g0 = grad_ref(o)[0];
    auto& g = grad_ref(p);
    for (auto& v : g) v += g0;
  });
  return out;
}

Tensor mean_all(const Tensor& a) {
  if (a.numel() == 0) throw std::invalid_argument("mean_all: empty tensor");
  Tensor out = make_out({1, 1, 1, 1});
  double acc = 0.0;
  const float* x = a.ptr();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) acc += x[i];
  out.ptr()[0] = float(acc / double(n));
  attach_node(out, {a}, [n](const Tensor& o) {
    const Tensor& p = o.node->parents[0];
    if (!p.requires_grad) return;
    const float g0 = grad_ref(o)[0] / float(n);
    auto& g = grad_ref(p);
    for (auto& v : g) v += g0;
  });
  return out;
}

Tensor sum_lastdim(const Tensor& a) {
  Tensor out = make_out({a.shape.n, a.shape.c, a.shape.h, 1});
  const std::int64_t rows = std::int64_t(a.shape.n) * a.shape.c * a.shape.h;
  const int w = a.shape.w;
  const float* x = a.ptr();
  float* y = out.ptr();
  for (std::int64_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    const float* row = x + r * w;
    for (int i = 0; i < w; ++i) acc += row[i];
    y[r] = float(acc);
  }
  attach_node(out, {a}, [rows, w](const Tensor& o) {
    const Tensor& p = o.node->parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_ref(p);
    const float* go = grad_ref(o).data();
    for (std::int64_t r = 0; r < rows; ++r) {
      float gr = go[r];
      float* grow = g.data() + r * w;
      for (int i = 0; i < w; ++i) grow[i] += gr;
    }
  });
  return out;
}

Tensor mean_channels(const Tensor& a) {
  const int c = a.shape.c;
  if (c == 0) throw std::invalid_argument("mean_channels: zero channels");
  Tensor out = make_out({a.shape.n, 1, a.shape.h, a.shape.w});
  const std::int64_t hw = std::int64_t(a.shape.h) * a.shape.w;
  const float* x = a.ptr();
  float* y = out.ptr();
  for (int in = 0; in < a.shape.n; ++in) {
    const float* xb = x + in * c * hw;
    float* yb = y + in * hw;
    for (std::int64_t i = 0; i < hw; ++i) {
      double acc = 0.0;
      for (int ic = 0; ic < c; ++ic) acc += xb[ic * hw + i];
      yb[i] = float(acc / c);
    }
  }
  attach_node(out, {a}, [c, hw](const Tensor& o) {
    const Tensor& p = o.node->parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_ref(p);
    const float* go = grad_ref(o).data();
    const float inv = 1.0f / float(c);
    for (int in = 0; in < p.shape.n; ++in) {
      float* gb = g.data() + in * c * hw;
      const float* gob = go + in * hw;
      for (std::int64_t i = 0; i < hw; ++i) {
        float gv = gob[i] * inv;
        for (int ic = 0; ic < c; ++ic) gb[ic * hw + i] += gv;
      }
    }
  });
  return out;
}

// ---- conv2d ----

static int conv_out_size(int in, int pad, int dilation, int k, int stride) {
  return (in + 2 * pad - dilation * (k - 1) - 1) / stride + 1;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor* bias,
              int stride, int padding, int dilation, int groups) {
  if (stride < 1 || dilation < 1 || groups < 1) {
    throw std::invalid_argument("conv2d: stride, dilation and groups must be >= 1");
  }
  const int cin = x.shape.c;
  const int cout = weight.shape.n;
  const int k = weight.shape.h;
  if (weight.shape.h != weight.shape.w) {
    throw std::invalid_argument("conv2d: only square kernels supported, got " + weight.shape.str());
  }
  if (cin % groups != 0 || cout % groups != 0 || weight.shape.c != cin / groups) {
    throw std::invalid_argument("conv2d: input channels " + x.shape.str() +
                                " incompatible with weight " + weight.shape.str() +
                                " and groups " + std::to_string(groups));
  }
  if (bias && (bias->numel() != cout)) {
    throw std::invalid_argument("conv2d: bias size " + bias->shape.str() +
                                " does not match output channels " + std::to_string(cout));
  }
  const int oh = conv_out_size(x.shape.h, padding, dilation, k, stride);
  const int ow = conv_out_size(x.shape.w, padding, dilation, k, stride);
  if (oh < 1 || ow < 1) {
    throw std::invalid_argument("conv2d: empty output for input " + x.shape.str() +
                                " weight " + weight.shape.str());
  }
  Tensor out = make_out({x.shape.n, cout, oh, ow});

  const int h = x.shape.h, w = x.shape.w;
  const int cin_g = cin / groups, cout_g = cout / groups;
  const float* xd = x.ptr();
  const float* wd = weight.ptr();
  const float* bd = bias ? bias->ptr() : nullptr;
  float* od = out.ptr();

  for (int in = 0; in < x.shape.n; ++in) {
    for (int g = 0; g < groups; ++g) {
      for (int ocg = 0; ocg < cout_g; ++ocg) {
        const int oc = g * cout_g + ocg;
        const float b0 = bd ? bd[oc] : 0.0f;
        float* orow = od + ((std::int64_t(in) * cout + oc) * oh) * ow;
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox) {
            double acc = 0.0;
            for (int icg = 0; icg < cin_g; ++icg) {
              const int ic = g * cin_g + icg;
              const float* xc = xd + ((std::int64_t(in) * cin + ic) * h) * w;
              const float* wc = wd + ((std::int64_t(oc) * cin_g + icg) * k) * k;
              for (int ky = 0; ky < k; ++ky) {
                const int iy = oy * stride - padding + ky * dilation;
                if (iy < 0 || iy >= h) continue;
                const float* xrow = xc + std::int64_t(iy) * w;
                const float* wrow = wc + ky * k;
                for (int kx = 0; kx < k; ++kx) {
                  const int ix = ox * stride - padding + kx * dilation;
                  if (ix < 0 || ix >= w) continue;
                  acc += double(xrow[ix]) * double(wrow[kx]);
                }
              }
            }
            orow[std::int64_t(oy) * ow + ox] = float(acc) + b0;
          }
        }
      }
    }
  }

  std::vector<Tensor> parents = {x, weight};
  if (bias) parents.push_back(*bias);
  const bool has_bias = bias != nullptr;
  attach_node(out, std::move(parents),
              [stride, padding, dilation, groups, has_bias](const Tensor& o) {
                const Tensor& x = o.node->parents[0];
                const Tensor& wt = o.node->parents[1];
                const float* go = grad_ref(o).data();
                const int cin = x.shape.c, cout = wt.shape.n, k = wt.shape.h;
                const int h = x.shape.h, w = x.shape.w;
                const int oh = o.shape.h, ow = o.shape.w;
                const int cin_g = cin / groups, cout_g = cout / groups;
                float* gx = x.requires_grad ? grad_ref(x).data() : nullptr;
                float* gw = wt.requires_grad ? grad_ref(wt).data() : nullptr;
                float* gb = nullptr;
                if (has_bias && o.node->parents[2].requires_grad) {
                  gb = grad_ref(o.node->parents[2]).data();
                }
                const float* xd = x.ptr();
                const float* wd = wt.ptr();
                for (int in = 0; in < x.shape.n; ++in) {
                  for (int g = 0; g < groups; ++g) {
                    for (int ocg = 0; ocg < cout_g; ++ocg) {
                      const int oc = g * cout_g + ocg;
                      const float* gorow = go + ((std::int64_t(in) * cout + oc) * oh) * ow;
                      for (int oy = 0; oy < oh; ++oy) {
                        for (int ox = 0; ox < ow; ++ox) {
                          const float gv = gorow[std::int64_t(oy) * ow + ox];
                          if (gb) gb[oc] += gv;
                          if (gv == 0.0f || (!gx && !gw)) continue;
                          for (int icg = 0; icg < cin_g; ++icg) {
                            const int ic = g * cin_g + icg;
                            const std::int64_t xoff = ((std::int64_t(in) * cin + ic) * h) * w;
                            const std::int64_t woff = ((std::int64_t(oc) * cin_g + icg) * k) * k;
                            for (int ky = 0; ky < k; ++ky) {
                              const int iy = oy * stride - padding + ky * dilation;
                              if (iy < 0 || iy >= h) continue;
                              for (int kx = 0; kx < k; ++kx) {
                                const int ix = ox * stride - padding + kx * dilation;
                                if (ix < 0 || ix >= w) continue;
                                const std::int64_t xi = xoff + std::int64_t(iy) * w + ix;
                                const std::int64_t wi = woff + ky * k + kx;
                                if (gx) gx[xi] += gv * wd[wi];
                                if (gw) gw[wi] += gv * xd[xi];
                              }
                            }
                          }
                        }
                      }
                    }
                  }
                }
              });
  return out;
}

// ---- linear ----

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor* bias) {
  const int cin = x.shape.c;
  const int cout = weight.shape.n;
  if (weight.shape.c != cin || weight.shape.h != 1 || weight.shape.w != 1) {
    throw std::invalid_argument("linear: weight " + weight.shape.str() +
                                " does not match input channels " + x.shape.str());
  }
  if (bias && bias->numel() != cout) {
    throw std::invalid_argument("linear: bias " + bias->shape.str() +
                                " does not match output channels " + std::to_string(cout));
  }
  Tensor out = make_out({x.shape.n, cout, x.shape.h, x.shape.w});
  const std::int64_t hw = std::int64_t(x.shape.h) * x.shape.w;
  const float* xd = x.ptr();
  const float* wd = weight.ptr();
  const float* bd = bias ? bias->ptr() : nullptr;
  float* od = out.ptr();
  for (int in = 0; in < x.shape.n; ++in) {
    const float* xb = xd + std::int64_t(in) * cin * hw;
    float* ob = od + std::int64_t(in) * cout * hw;
    for (int oc = 0; oc < cout; ++oc) {
      float* orow = ob + std::int64_t(oc) * hw;
      const float b0 = bd ? bd[oc] : 0.0f;
      for (std::int64_t i = 0; i < hw; ++i) orow[i] = b0;
      for (int ic = 0; ic < cin; ++ic) {
        const float wv = wd[std::int64_t(oc) * cin + ic];
        if (wv == 0.0f) continue;
        const float* xrow = xb + std::int64_t(ic) * hw;
        for (std::int64_t i = 0; i < hw; ++i) orow[i] += wv * xrow[i];
      }
    }
  }
  std::vector<Tensor> parents = {x, weight};
  if (bias) parents.push_back(*bias);
  const bool has_bias = bias != nullptr;
  attach_node(out, std::move(parents), [has_bias](const Tensor& o) {
    const Tensor& x = o.node->parents[0];
    const Tensor& wt = o.node->parents[1];
    const float* go = grad_ref(o).data();
    const int cin = x.shape.c, cout = wt.shape.n;
    const std::int64_t hw = std::int64_t(x.shape.h) * x.shape.w;
    float* gx = x.requires_grad ? grad_ref(x).data() : nullptr;
    float* gw = wt.requires_grad ? grad_ref(wt).data() : nullptr;
    float* gb = nullptr;
    if (has_bias && o.node->parents[2].requires_grad) gb = grad_ref(o.node->parents[2]).data();
    const float* xd = x.ptr();
    const float* wd = wt.ptr();
    for (int in = 0; in < x.shape.n; ++in) {
      const float* xb = xd + std::int64_t(in) * cin * hw;
      const float* gob = go + std::int64_t(in) * cout * hw;
      float* gxb = gx ? gx + std::int64_t(in) * cin * hw : nullptr;
      for (int oc = 0; oc < cout; ++oc) {
        const float* gorow = gob + std::int64_t(oc) * hw;
        if (gb) {
          double acc = 0.0;
          for (std::int64_t i = 0; i < hw; ++i) acc += gorow[i];
          gb[oc] += float(acc);
        }
        for (int ic = 0; ic < cin; ++ic) {
          const float wv = wd[std::int64_t(oc) * cin + ic];
          const float* xrow = xb + std::int64_t(ic) * hw;
          if (gw) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < hw; ++i) acc += double(gorow[i]) * double(xrow[i]);
            gw[std::int64_t(oc) * cin + ic] += float(acc);
          }
          if (gxb) {
            float* gxrow = gxb + std::int64_t(ic) * hw;
            for (std::int64_t i = 0; i < hw; ++i) gxrow[i] += wv * gorow[i];
          }
        }
      }
    }
  });
  return out;
}

// ---- bmm ----

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  if (a.shape.n != b.shape.n || a.shape.c != 1 || b.shape.c != 1) {
    throw std::invalid_argument("bmm: expects matching (B,1,·,·) operands, got " +
                                a.shape.str() + " and " + b.shape.str());
  }
  const int B = a.shape.n, M = a.shape.h, K = a.shape.w;
  const int N = transpose_b ? b.shape.h : b.shape.w;
  const int Kb = transpose_b ? b.shape.w : b.shape.h;
  if (Kb != K) {
    throw std::invalid_argument("bmm: inner dimensions disagree, " + a.shape.str() + " vs " +
                                b.shape.str());
  }
  Tensor out = make_out({B, 1, M, N});
  const float* ad = a.ptr();
  const float* bd = b.ptr();
  float* od = out.ptr();
  for (int ib = 0; ib < B; ++ib) {
    const float* am = ad + std::int64_t(ib) * M * K;
    const float* bm = bd + std::int64_t(ib) * (transpose_b ? N * K : K * N);
    float* om = od + std::int64_t(ib) * M * N;
    for (int m = 0; m < M; ++m) {
      for (int nn = 0; nn < N; ++nn) {
        double acc = 0.0;
        if (transpose_b) {
          const float* arow = am + std::int64_t(m) * K;
          const float* brow = bm + std::int64_t(nn) * K;
          for (int kk = 0; kk < K; ++kk) acc += double(arow[kk]) * double(brow[kk]);
        } else {
          const float* arow = am + std::int64_t(m) * K;
          for (int kk = 0; kk < K; ++kk) acc += double(arow[kk]) * double(bm[std::int64_t(kk) * N + nn]);
        }
        om[std::int64_t(m) * N + nn] = float(acc);
      }
    }
  }
  attach_node(out, {a, b}, [transpose_b](const Tensor& o) {
    const Tensor& a = o.node->parents[0];
    const Tensor& b = o.node->parents[1];
    const int B = a.shape.n, M = a.shape.h, K = a.shape.w;
    const int N = o.shape.w;
    const float* go = grad_ref(o).data();
    const float* ad = a.ptr();
    const float* bd = b.ptr();
    float* ga = a.requires_grad ? grad_ref(a).data() : nullptr;
    float* gb = b.requires_grad ? grad_ref(b).data() : nullptr;
    for (int ib = 0; ib < B; ++ib) {
      const float* gom = go + std::int64_t(ib) * M * N;
      const float* am = ad + std::int64_t(ib) * M * K;
      const float* bm = bd + std::int64_t(ib) * (transpose_b ? N * K : K * N);
      float* gam = ga ? ga + std::int64_t(ib) * M * K : nullptr;
      float* gbm = gb ? gb + std::int64_t(ib) * (transpose_b ? N * K : K * N) : nullptr;
      for (int m = 0; m < M; ++m) {
        for (int nn = 0; nn < N; ++nn) {
          const float gv = gom[std::int64_t(m) * N + nn];
          if (gv == 0.0f) continue;
          for (int kk = 0; kk < K; ++kk) {
            const std::int64_t bi = transpose_b ? std::int64_t(nn) * K + kk : std::int64_t(kk) * N + nn;
            if (gam) gam[std::int64_t(m) * K + kk] += gv * bm[bi];
            if (gbm) gbm[bi] += gv * am[std::int64_t(m) * K + kk];
          }
        }
      }
    }
  });
  return out;
}

// ---- softmax ----

Tensor softmax_lastdim(const Tensor& x) {
  if (x.shape.w < 1) throw std::invalid_argument("softmax_lastdim: needs at least one column");
  Tensor out = make_out(x.shape);
  const std::int64_t rows = std::int64_t(x.shape.n) * x.shape.c * x.shape.h;
  const int w = x.shape.w;
  const float* xd = x.ptr();
  float* od = out.ptr();
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* row = xd + r * w;
    float* orow = od + r * w;
    float mx = row[0];
    for (int i = 1; i < w; ++i) mx = std::max(mx, row[i]);
    double denom = 0.0;
    for (int i = 0; i < w; ++i) {
      const float e = std::exp(row[i] - mx);
      orow[i] = e;
      denom += e;
    }
    const float inv = float(1.0 / denom);
    for (int i = 0; i < w; ++i) orow[i] *= inv;
  }
  attach_node(out, {x}, [rows, w](const Tensor& o) {
    const Tensor& p = o.node->parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_ref(p);
    const float* go = grad_ref(o).data();
    const float* y = o.ptr();
    for (std::int64_t r = 0; r < rows; ++r) {
      const float* yr = y + r * w;
      const float* gr = go + r * w;
      double dot = 0.0;
      for (int i = 0; i < w; ++i) dot += double(gr[i]) * double(yr[i]);
      float* gp = g.data() + r * w;
      for (int i = 0; i < w; ++i) gp[i] += yr[i] * (gr[i] - float(dot));
    }
  });
  return out;
}

Tensor masked_softmax_lastdim(const Tensor& x, const Tensor& mask) {
  check_same_shape(x, mask, "masked_softmax_lastdim");
  if (mask.requires_grad) {
    throw std::invalid_argument("masked_softmax_lastdim: mask must not require gradients");
  }
  Tensor out = make_out(x.shape);
  const std::int64_t rows = std::int64_t(x.shape.n) * x.shape.c * x.shape.h;
  const int w = x.shape.w;
  const float* xd = x.ptr();
  const float* md = mask.ptr();
  float* od = out.ptr();
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* row = xd + r * w;
    const float* mrow = md + r * w;
    float* orow = od + r * w;
    float mx = -std::numeric_limits<float>::infinity();
    for (int i = 0; i < w; ++i) {
      if (mrow[i] != 0.0f) mx = std::max(mx, row[i]);
    }
    if (mx == -std::numeric_limits<float>::infinity()) {
      for (int i = 0; i < w; ++i) orow[i] = 0.0f;
      continue;
    }
    double denom = 0.0;
    for (int i = 0; i < w; ++i) {
      if (mrow[i] != 0.0f) {
        const float e = std::exp(row[i] - mx);
        orow[i] = e;
        denom += e;
      } else {
        orow[i] = 0.0f;
      }
    }
    const float inv = float(1.0 / denom);
    for (int i = 0; i < w; ++i) {
      if (mrow[i] != 0.0f) orow[i] *= inv;
    }
  }
  attach_node(out, {x, mask}, [rows, w](const Tensor& o) {
    const Tensor& p = o.node->parents[0];
    const Tensor& mask = o.node->parents[1];
    if (!p.requires_grad) return;
    auto& g = grad_ref(p);
    const float* go = grad_ref(o).data();
    const float* y = o.ptr();
    const float* md = mask.ptr();
    for (std::int64_t r = 0; r < rows; ++r) {
      const float* yr = y + r * w;
      const float* gr = go + r * w;
      const float* mr = md + r * w;
      double dot = 0.0;
      for (int i = 0; i < w; ++i) {
        if (mr[i] != 0.0f) dot += double(gr[i]) * double(yr[i]);
      }
      float* gp = g.data() + r * w;
      for (int i = 0; i < w; ++i) {
        if (mr[i] != 0.0f) gp[i] += yr[i] * (gr[i] - float(dot));
      }
    }
  });
  return out;
}

// ---- layer norm ----

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  const int c = x.shape.c;
  if (gamma.numel() != c || beta.numel() != c) {
    throw std::invalid_argument("layer_norm: affine shapes " + gamma.shape.str() + "/" +
                                beta.shape.str() + " do not match channels of " + x.shape.str());
  }
  if (eps <= 0.0f) throw std::invalid_argument("layer_norm: eps must be positive");
  Tensor out = make_out(x.shape);
  const std::int64_t hw = std::int64_t(x.shape.h) * x.shape.w;
  const float* xd = x.ptr();
  const float* gd = gamma.ptr();
  const float* bd = beta.ptr();
  float* od = out.ptr();
  for (int in = 0; in < x.shape.n; ++in) {
    const float* xb = xd + std::int64_t(in) * c * hw;
    float* ob = od + std::int64_t(in) * c * hw;
    for (std::int64_t i = 0; i < hw; ++i) {
      double mean = 0.0;
      for (int ic = 0; ic < c; ++ic) mean += xb[ic * hw + i];
      mean /= c;
      double var = 0.0;
      for (int ic = 0; ic < c; ++ic) {
        const double d = xb[ic * hw + i] - mean;
        var += d * d;
      }
      var /= c;
      const float inv = float(1.0 / std::sqrt(var + eps));
      const float mu = float(mean);
      for (int ic = 0; ic < c; ++ic) {
        const float xhat = (xb[ic * hw + i] - mu) * inv;
        ob[ic * hw + i] = gd[ic] * xhat + bd[ic];
      }
    }
  }
  attach_node(out, {x, gamma, beta}, [eps](const Tensor& o) {
    const Tensor& x = o.node->parents[0];
    const Tensor& gamma = o.node->parents[1];
    const Tensor& beta = o.node->parents[2];
    const int c = x.shape.c;
    const std::int64_t hw = std::int64_t(x.shape.h) * x.shape.w;
    const float* xd = x.ptr();
    const float* gd = gamma.ptr();
    const float* go = grad_ref(o).data();
    float* gx = x.requires_grad ? grad_ref(x).data() : nullptr;
    float* gg = gamma.requires_grad ? grad_ref(gamma).data() : nullptr;
    float* gb = beta.requires_grad ? grad_ref(beta).data() : nullptr;
    std::vector<float> xhat(static_cast<std::size_t>(c));
    for (int in = 0; in < x.shape.n; ++in) {
      const float* xb = xd + std::int64_t(in) * c * hw;
      const float* gob = go + std::int64_t(in) * c * hw;
      float* gxb = gx ? gx + std::int64_t(in) * c * hw : nullptr;
      for (std::int64_t i = 0; i < hw; ++i) {
        double mean = 0.0;
        for (int ic = 0; ic < c; ++ic) mean += xb[ic * hw + i];
        mean /= c;
        double var = 0.0;
        for (int ic = 0; ic < c; ++ic) {
          const double d = xb[ic * hw + i] - mean;
          var += d * d;
        }
        var /= c;
        const double inv = 1.0 / std::sqrt(var + eps);
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (int ic = 0; ic < c; ++ic) {
          const float xh = float((xb[ic * hw + i] - mean) * inv);
          xhat[ic] = xh;
          const double dxh = double(gob[ic * hw + i]) * gd[ic];
          mean_dxhat += dxh;
          mean_dxhat_xhat += dxh * xh;
        }
        mean_dxhat /= c;
        mean_dxhat_xhat /= c;
        for (int ic = 0; ic < c; ++ic) {
          const float gv = gob[ic * hw + i];
          if (gg) gg[ic] += gv * xhat[ic];
          if (gb) gb[ic] += gv;
          if (gxb) {
            const double dxh = double(gv) * gd[ic];
            gxb[ic * hw + i] += float(inv * (dxh - mean_dxhat - double(xhat[ic]) * mean_dxhat_xhat));
          }
        }
      }
    }
  });
  return out;
}

// ---- shape & data movement ----

Tensor concat_channels(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_channels: empty input list");
  const Shape s0 = xs[0].shape;
  int ctot = 0;
  for (const auto& t : xs) {
    if (t.shape.n != s0.n || t.shape.h != s0.h || t.shape.w != s0.w) {
      throw std::invalid_argument("concat_channels: spatial/batch mismatch " + t.shape.str() +
                                  " vs " + s0.str());
    }
    ctot += t.shape.c;
  }
  Tensor out = make_out({s0.n, ctot, s0.h, s0.w});
  const std::int64_t hw = std::int64_t(s0.h) * s0.w;
  float* od = out.ptr();
  for (int in = 0; in < s0.n; ++in) {
    std::int64_t coff = 0;
    for (const auto& t : xs) {
      const float* src = t.ptr() + std::int64_t(in) * t.shape.c * hw;
      float* dst = od + (std::int64_t(in) * ctot + coff) * hw;
      std::copy(src, src + std::int64_t(t.shape.c) * hw, dst);
      coff += t.shape.c;
    }
  }
  attach_node(out, xs, [hw, ctot](const Tensor& o) {
    const float* go = grad_ref(o).data();
    for (int in = 0; in < o.shape.n; ++in) {
      std::int64_t coff = 0;
      for (const auto& p : o.node->parents) {
        if (p.requires_grad) {
          float* gp = grad_ref(p).data() + std::int64_t(in) * p.shape.c * hw;
          const float* src = go + (std::int64_t(in) * ctot + coff) * hw;
          const std::int64_t len = std::int64_t(p.shape.c) * hw;
          for (std::int64_t i = 0; i < len; ++i) gp[i] += src[i];
        }
        coff += p.shape.c;
      }
    }
  });
  return out;
}

Tensor slice_channels(const Tensor& x, int c0, int c1) {
  if (c0 < 0 || c1 > x.shape.c || c0 >= c1) {
    throw std::invalid_argument("slice_channels: invalid range [" + std::to_string(c0) + ", " +
                                std::to_string(c1) + ") for " + x.shape.str());
  }
  const int c = c1 - c0;
  Tensor out = make_out({x.shape.n, c, x.shape.h, x.shape.w});
  const std::int64_t hw = std::int64_t(x.shape.h) * x.shape.w;
  for (int in = 0; in < x.shape.n; ++in) {
    const float* src = x.ptr() + (std::int64_t(in) * x.shape.c + c0) * hw;
    float* dst = out.ptr() + std::int64_t(in) * c * hw;
    std::copy(src, src + std::int64_t(c) * hw, dst);
  }
  attach_node(out, {x}, [c0, c, hw](const Tensor& o) {
    const Tensor& p = o.node->parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_ref(p);
    const float* go = grad_ref(o).data();
    for (int in = 0; in < o.shape.n; ++in) {
      float* gp = g.data() + (std::int64_t(in) * p.shape.c + c0) * hw;
      const float* src = go + std::int64_t(in) * c * hw;
      const std::int64_t len = std::int64_t(c) * hw;
      for (std::int64_t i = 0; i < len; ++i) gp[i] += src[i];
    }
  });
  return out;
}

Tensor reshape(const Tensor& x, Shape s) {
  if (s.numel() != x.numel()) {
    throw std::invalid_argument("reshape: numel mismatch " + x.shape.str() + " -> " + s.str());
  }
  Tensor out;
  out.shape = s;
  out.data = x.data;  // shared; tensors are immutable once produced
  attach_node(out, {x}, [](const Tensor& o) {
    const Tensor& p = o.node->parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_ref(p);
    const float* go = grad_ref(o).data();
    const std::int64_t n = o.numel();
    for (std::int64_t i = 0; i < n; ++i) g[i] += go[i];
  });
  return out;
}

Tensor pad_replicate(const Tensor& x, int top, int bottom, int left, int right) {
  if (top < 0 || bottom < 0 || left < 0 || right < 0) {
    throw std::invalid_argument("pad_replicate: negative padding");
  }
  const int h = x.shape.h, w = x.shape.w;
  const int oh = h + top + bottom, ow = w + left + right;
  Tensor out = make_out({x.shape.n, x.shape.c, oh, ow});
  const std::int64_t planes = std::int64_t(x.shape.n) * x.shape.c;
  for (std::int64_t p = 0; p < planes; ++p) {
    const float* src = x.ptr() + p * h * w;
    float* dst = out.ptr() + p * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      const int iy = std::clamp(oy - top, 0, h - 1);
      for (int ox = 0; ox < ow; ++ox) {
        const int ix = std::clamp(ox - left, 0, w - 1);
        dst[std::int64_t(oy) * ow + ox] = src[std::int64_t(iy) * w + ix];
      }
    }
  }
  attach_node(out, {x}, [top, left, h, w, oh, ow](const Tensor& o) {
    const Tensor& p0 = o.node->parents[0];
    if (!p0.requires_grad) return;
    auto& g = grad_ref(p0);
    const float* go = grad_ref(o).data();
    const std::int64_t planes = std::int64_t(p0.shape.n) * p0.shape.c;
    for (std::int64_t p = 0; p < planes; ++p) {
      float* gp = g.data() + p * h * w;
      const float* gop = go + p * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        const int iy = std::clamp(oy - top, 0, h - 1);
        for (int ox = 0; ox < ow; ++ox) {
          const int ix = std::clamp(ox - left, 0, w - 1);
          gp[std::int64_t(iy) * w + ix] += gop[std::int64_t(oy) * ow + ox];
        }
      }
    }
  });
  return out;
}

Tensor crop(const Tensor& x, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || h < 1 || w < 1 || y0 + h > x.shape.h || x0 + w > x.shape.w) {
    throw std::invalid_argument("crop: window out of range for " + x.shape.str());
  }
  Tensor out = make_out({x.shape.n, x.shape.c, h, w});
  const std::int64_t planes = std::int64_t(x.shape.n) * x.shape.c;
  const int ih = x.shape.h, iw = x.shape.w;
  for (std::int64_t p = 0; p < planes; ++p) {
    const float* src = x.ptr() + p * ih * iw;
    float* dst = out.ptr() + p * h * w;
    for (int oy = 0; oy < h; ++oy) {
      std::copy(src + std::int64_t(y0 + oy) * iw + x0, src + std::int64_t(y0 + oy) * iw + x0 + w,
                dst + std::int64_t(oy) * w);
    }
  }
  attach_node(out, {x}, [y0, x0, h, w, ih, iw](const Tensor& o) {
    const Tensor& p0 = o.node->parents[0];
    if (!p0.requires_grad) return;
    auto& g = grad_ref(p0);
    const float* go = grad_ref(o).data();
    const std::int64_t planes = std::int64_t(p0.shape.n) * p0.shape.c;
    for (std::int64_t p = 0; p < planes; ++p) {
      float* gp = g.data() + p * ih * iw;
      const float* gop = go + p * h * w;
      for (int oy = 0; oy < h; ++oy) {
        for (int ox = 0; ox < w; ++ox) {
          gp[std::int64_t(y0 + oy) * iw + x0 + ox] += gop[std::int64_t(oy) * w + ox];
        }
      }
    }
  });
  return out;
}

Tensor pixel_shuffle(const Tensor& x, int r) {
  if (r < 1) throw std::invalid_argument("pixel_shuffle: r must be >= 1");
  if (x.shape.c % (r * r) != 0) {
    throw std::invalid_argument("pixel_shuffle: channels " + std::to_string(x.shape.c) +
                                " not divisible by r^2 = " + std::to_string(r * r));
  }
  const int co = x.shape.c / (r * r);
  const int oh = x.shape.h * r, ow = x.shape.w * r;
  Tensor out = make_out({x.shape.n, co, oh, ow});
  for (int in = 0; in < x.shape.n; ++in) {
    for (int oc = 0; oc < co; ++oc) {
      for (int dy = 0; dy < r; ++dy) {
        for (int dx = 0; dx < r; ++dx) {
          const int ic = oc * r * r + dy * r + dx;
          for (int y = 0; y < x.shape.h; ++y) {
            for (int xx = 0; xx < x.shape.w; ++xx) {
              out.at(in, oc, y * r + dy, xx * r + dx) = x.at(in, ic, y, xx);
            }
          }
        }
      }
    }
  }
  attach_node(out, {x}, [r, co](const Tensor& o) {
    const Tensor& p = o.node->parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_ref(p);
    const float* go = grad_ref(o).data();
    const int h = p.shape.h, w = p.shape.w;
    const int ow = o.shape.w;
    for (int in = 0; in < p.shape.n; ++in) {
      for (int oc = 0; oc < co; ++oc) {
        for (int dy = 0; dy < r; ++dy) {
          for (int dx = 0; dx < r; ++dx) {
            const int ic = oc * r * r + dy * r + dx;
            for (int y = 0; y < h; ++y) {
              for (int xx = 0; xx < w; ++xx) {
                const std::int64_t oi =
                    ((std::int64_t(in) * co + oc) * o.shape.h + (y * r + dy)) * ow + (xx * r + dx);
                g[((std::int64_t(in) * p.shape.c + ic) * h + y) * w + xx] += go[oi];
              }
            }
          }
        }
      }
    }
  });
  return out;
}

Tensor pixel_unshuffle(const Tensor& x, int r) {
  if (r < 1) throw std::invalid_argument("pixel_unshuffle: r must be >= 1");
  if (x.shape.h % r != 0 || x.shape.w % r != 0) {
    throw std::invalid_argument("pixel_unshuffle: spatial size " + x.shape.str() +
                                " not divisible by " + std::to_string(r));
  }
  const int co = x.shape.c * r * r;
  const int oh = x.shape.h / r, ow = x.shape.w / r;
  Tensor out = make_out({x.shape.n, co, oh, ow});
  for (int in = 0; in < x.shape.n; ++in) {
    for (int ic = 0; ic < x.shape.c; ++ic) {
      for (int dy = 0; dy < r; ++dy) {
        for (int dx = 0; dx < r; ++dx) {
          const int oc = ic * r * r + dy * r + dx;
          for (int y = 0; y < oh; ++y) {
            for (int xx = 0; xx < ow; ++xx) {
              out.at(in, oc, y, xx) = x.at(in, ic, y * r + dy, xx * r + dx);
            }
          }
        }
      }
    }
  }
  attach_node(out, {x}, [r, oh, ow](const Tensor& o) {
    const Tensor& p = o.node->parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_ref(p);
    const float* go = grad_ref(o).data();
    for (int in = 0; in < p.shape.n; ++in) {
      for (int ic = 0; ic < p.shape.c; ++ic) {
        for (int dy = 0; dy < r; ++dy) {
          for (int dx = 0; dx < r; ++dx) {
            const int oc = ic * r * r + dy * r + dx;
            for (int y = 0; y < oh; ++y) {
              for (int xx = 0; xx < ow; ++xx) {
                const std::int64_t oi = ((std::int64_t(in) * o.shape.c + oc) * oh + y) * ow + xx;
                g[((std::int64_t(in) * p.shape.c + ic) * p.shape.h + (y * r + dy)) * p.shape.w +
                  (xx * r + dx)] += go[oi];
              }
            }
          }
        }
      }
    }
  });
  return out;
}

Tensor gather_linear(const Tensor& x, Shape out_shape,
                     std::shared_ptr<const std::vector<std::int64_t>> idx) {
  if (std::int64_t(idx->size()) != out_shape.numel()) {
    throw std::invalid_argument("gather_linear: index count does not match output shape");
  }
  Tensor out = make_out(out_shape);
  const float* xd = x.ptr();
  float* od = out.ptr();
  const std::int64_t n = out_shape.numel();
  const std::int64_t* ix = idx->data();
  for (std::int64_t i = 0; i < n; ++i) od[i] = xd[ix[i]];
  attach_node(out, {x}, [idx](const Tensor& o) {
    const Tensor& p = o.node->parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_ref(p);
    const float* go = grad_ref(o).data();
    const std::int64_t n = o.numel();
    const std::int64_t* ix = idx->data();
    for (std::int64_t i = 0; i < n; ++i) g[ix[i]] += go[i];
  });
  return out;
}

Tensor scale_channels(const Tensor& x, std::vector<float> per_channel) {
  if (int(per_channel.size()) != x.shape.c) {
    throw std::invalid_argument("scale_channels: got " + std::to_string(per_channel.size()) +
                                " factors for " + x.shape.str());
  }
  Tensor out = make_out(x.shape);
  const std::int64_t hw = std::int64_t(x.shape.h) * x.shape.w;
  for (int in = 0; in < x.shape.n; ++in) {
    for (int ic = 0; ic < x.shape.c; ++ic) {
      const float s = per_channel[std::size_t(ic)];
      const float* src = x.ptr() + (std::int64_t(in) * x.shape.c + ic) * hw;
      float* dst = out.ptr() + (std::int64_t(in) * x.shape.c + ic) * hw;
      for (std::int64_t i = 0; i < hw; ++i) dst[i] = src[i] * s;
    }
  }
  attach_node(out, {x}, [per_channel = std::move(per_channel), hw](const Tensor& o) {
    const Tensor& p = o.node->parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_ref(p);
    const float* go = grad_ref(o).data();
    for (int in = 0; in < p.shape.n; ++in) {
      for (int ic = 0; ic < p.shape.c; ++ic) {
        const float s = per_channel[std::size_t(ic)];
        const std::int64_t off = (std::int64_t(in) * p.shape.c + ic) * hw;
        for (std::int64_t i = 0; i < hw; ++i) g[off + i] += go[off + i] * s;
      }
    }
  });
  return out;
}

// ---- resampling ----

Tensor bilinear_resize(const Tensor& x, int out_h, int out_w, bool align_corners) {
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("bilinear_resize: output must be >= 1x1");
  const int h = x.shape.h, w = x.shape.w;
  Tensor out = make_out({x.shape.n, x.shape.c, out_h, out_w});

  // Per-axis source positions and weights, shared across planes.
  struct Tap {
    int i0, i1;
    float f;  // weight of i1
  };
  auto make_taps = [align_corners](int in, int on) {
    std::vector<Tap> taps(static_cast<std::size_t>(on));
    for (int o = 0; o < on; ++o) {
      float s;
      if (align_corners) {
        s = (on > 1) ? float(o) * float(in - 1) / float(on - 1) : 0.0f;
      } else {
        s = (float(o) + 0.5f) * float(in) / float(on) - 0.5f;
      }
      float fl = std::floor(s);
      int i0 = int(fl);
      float f = s - fl;
      int i1 = i0 + 1;
      i0 = std::clamp(i0, 0, in - 1);
      i1 = std::clamp(i1, 0, in - 1);
      taps[std::size_t(o)] = {i0, i1, f};
    }
    return taps;
  };
  const auto ty = make_taps(h, out_h);
  const auto tx = make_taps(w, out_w);

  const std::int64_t planes = std::int64_t(x.shape.n) * x.shape.c;
  for (std::int64_t p = 0; p < planes; ++p) {
    const float* src = x.ptr() + p * h * w;
    float* dst = out.ptr() + p * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
      const Tap& a = ty[std::size_t(oy)];
      const float* r0 = src + std::int64_t(a.i0) * w;
      const float* r1 = src + std::int64_t(a.i1) * w;
      for (int ox = 0; ox < out_w; ++ox) {
        const Tap& b = tx[std::size_t(ox)];
        const float top = r0[b.i0] + (r0[b.i1] - r0[b.i0]) * b.f;
        const float bot = r1[b.i0] + (r1[b.i1] - r1[b.i0]) * b.f;
        dst[std::int64_t(oy) * out_w + ox] = top + (bot - top) * a.f;
      }
    }
  }
  attach_node(out, {x}, [ty, tx, h, w, out_h, out_w](const Tensor& o) {
    const Tensor& p0 = o.node->parents[0];
    if (!p0.requires_grad) return;
    auto& g = grad_ref(p0);
    const float* go = grad_ref(o).data();
    const std::int64_t planes = std::int64_t(p0.shape.n) * p0.shape.c;
    for (std::int64_t p = 0; p < planes; ++p) {
      float* gp = g.data() + p * h * w;
      const float* gop = go + p * out_h * out_w;
      for (int oy = 0; oy < out_h; ++oy) {
        const Tap& a = ty[std::size_t(oy)];
        for (int ox = 0; ox < out_w; ++ox) {
          const Tap& b = tx[std::size_t(ox)];
          const float gv = gop[std::int64_t(oy) * out_w + ox];
          gp[std::int64_t(a.i0) * w + b.i0] += gv * (1.0f - a.f) * (1.0f - b.f);
          gp[std::int64_t(a.i0) * w + b.i1] += gv * (1.0f - a.f) * b.f;
          gp[std::int64_t(a.i1) * w + b.i0] += gv * a.f * (1.0f - b.f);
          gp[std::int64_t(a.i1) * w + b.i1] += gv * a.f * b.f;
        }
      }
    }
  });
  return out;
}

Tensor backward_warp(const Tensor& image, const Tensor& flow) {
  if (flow.shape.c != 2 || flow.shape.n != image.shape.n || flow.shape.h != image.shape.h ||
      flow.shape.w != image.shape.w) {
    throw std::invalid_argument("backward_warp: flow " + flow.shape.str() +
                                " does not match image " + image.shape.str());
  }
  const int h = image.shape.h, w = image.shape.w, c = image.shape.c;
  Tensor out = make_out(image.shape);
  const std::int64_t hw = std::int64_t(h) * w;
  for (int in = 0; in < image.shape.n; ++in) {
    const float* fx = flow.ptr() + (std::int64_t(in) * 2 + 0) * hw;
    const float* fy = flow.ptr() + (std::int64_t(in) * 2 + 1) * hw;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::int64_t pi = std::int64_t(y) * w + x;
        const float sx = float(x) + fx[pi];
        const float sy = float(y) + fy[pi];
        const float flx = std::floor(sx), fly = std::floor(sy);
        const int x0 = int(flx), y0 = int(fly);
        const float ax = sx - flx, ay = sy - fly;
        for (int ic = 0; ic < c; ++ic) {
          const float* src = image.ptr() + (std::int64_t(in) * c + ic) * hw;
          auto tap = [&](int yy, int xx) -> float {
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0f;
            return src[std::int64_t(yy) * w + xx];
          };
          const float v00 = tap(y0, x0), v01 = tap(y0, x0 + 1);
          const float v10 = tap(y0 + 1, x0), v11 = tap(y0 + 1, x0 + 1);
          const float top = v00 + (v01 - v00) * ax;
          const float bot = v10 + (v11 - v10) * ax;
          out.ptr()[(std::int64_t(in) * c + ic) * hw + pi] = top + (bot - top) * ay;
        }
      }
    }
  }
  attach_node(out, {image, flow}, [h, w, c, hw](const Tensor& o) {
    const Tensor& image = o.node->parents[0];
    const Tensor& flow = o.node->parents[1];
    const float* go = grad_ref(o).data();
    float* gi = image.requires_grad ? grad_ref(image).data() : nullptr;
    float* gf = flow.requires_grad ? grad_ref(flow).data() : nullptr;
    for (int in = 0; in < image.shape.n; ++in) {
      const float* fx = flow.ptr() + (std::int64_t(in) * 2 + 0) * hw;
      const float* fy = flow.ptr() + (std::int64_t(in) * 2 + 1) * hw;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const std::int64_t pi = std::int64_t(y) * w + x;
          const float sx = float(x) + fx[pi];
          const float sy = float(y) + fy[pi];
          const float flx = std::floor(sx), fly = std::floor(sy);
          const int x0 = int(flx), y0 = int(fly);
          const float ax = sx - flx, ay = sy - fly;
          double dsx = 0.0, dsy = 0.0;
          for (int ic = 0; ic < c; ++ic) {
            const float gv = go[(std::int64_t(in) * c + ic) * hw + pi];
            if (gv == 0.0f && !gf) continue;
            const float* src = image.ptr() + (std::int64_t(in) * c + ic) * hw;
            auto in_bounds = [&](int yy, int xx) { return yy >= 0 && yy < h && xx >= 0 && xx < w; };
            auto tap = [&](int yy, int xx) -> float {
              return in_bounds(yy, xx) ? src[std::int64_t(yy) * w + xx] : 0.0f;
            };
            const float v00 = tap(y0, x0), v01 = tap(y0, x0 + 1);
            const float v10 = tap(y0 + 1, x0), v11 = tap(y0 + 1, x0 + 1);
            if (gi) {
              float* gsrc = gi + (std::int64_t(in) * c + ic) * hw;
              if (in_bounds(y0, x0)) gsrc[std::int64_t(y0) * w + x0] += gv * (1 - ay) * (1 - ax);
              if (in_bounds(y0, x0 + 1)) gsrc[std::int64_t(y0) * w + x0 + 1] += gv * (1 - ay) * ax;
              if (in_bounds(y0 + 1, x0)) gsrc[std::int64_t(y0 + 1) * w + x0] += gv * ay * (1 - ax);
              if (in_bounds(y0 + 1, x0 + 1)) gsrc[std::int64_t(y0 + 1) * w + x0 + 1] += gv * ay * ax;
            }
            if (gf) {
              dsx += double(gv) * ((1 - ay) * (v01 - v00) + ay * (v11 - v10));
              dsy += double(gv) * ((1 - ax) * (v10 - v00) + ax * (v11 - v01));
            }
          }
          if (gf) {
            gf[(std::int64_t(in) * 2 + 0) * hw + pi] += float(dsx);
            gf[(std::int64_t(in) * 2 + 1) * hw + pi] += float(dsy);
          }
        }
      }
    }
  });
  return out;
}

// ---- pyramid primitives ----

namespace {
// reflect-101 index: ..., 2, 1, | 0, 1, ..., n-1, | n-2, n-3, ...
int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}
constexpr float kBinomial5[5] = {0.0625f, 0.25f, 0.375f, 0.25f, 0.0625f};
}  // namespace

Tensor gauss_blur5(const Tensor& x) {
  const int h = x.shape.h, w = x.shape.w;
  Tensor out = make_out(x.shape);
  const std::int64_t planes = std::int64_t(x.shape.n) * x.shape.c;
  std::vector<float> tmp(std::size_t(h) * w);
  for (std::int64_t p = 0; p < planes; ++p) {
    const float* src = x.ptr() + p * h * w;
    float* dst = out.ptr() + p * h * w;
    // horizontal
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        double acc = 0.0;
        for (int t = 0; t < 5; ++t) acc += double(kBinomial5[t]) * src[std::int64_t(y) * w + reflect101(xx + t - 2, w)];
        tmp[std::size_t(y) * w + xx] = float(acc);
      }
    }
    // vertical
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        double acc = 0.0;
        for (int t = 0; t < 5; ++t) acc += double(kBinomial5[t]) * tmp[std::size_t(reflect101(y + t - 2, h)) * w + xx];
        dst[std::int64_t(y) * w + xx] = float(acc);
      }
    }
  }
  attach_node(out, {x}, [h, w](const Tensor& o) {
    const Tensor& p0 = o.node->parents[0];
    if (!p0.requires_grad) return;
    auto& g = grad_ref(p0);
    const float* go = grad_ref(o).data();
    const std::int64_t planes = std::int64_t(p0.shape.n) * p0.shape.c;
    std::vector<float> tmp(std::size_t(h) * w);
    for (std::int64_t p = 0; p < planes; ++p) {
      const float* gop = go + p * h * w;
      float* gp = g.data() + p * h * w;
      // adjoint of vertical pass: scatter with the same reflect mapping
      std::fill(tmp.begin(), tmp.end(), 0.0f);
      for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) {
          const float gv = gop[std::int64_t(y) * w + xx];
          for (int t = 0; t < 5; ++t) {
            tmp[std::size_t(reflect101(y + t - 2, h)) * w + xx] += kBinomial5[t] * gv;
          }
        }
      }
      // adjoint of horizontal pass
      for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) {
          const float gv = tmp[std::size_t(y) * w + xx];
          if (gv == 0.0f) continue;
          for (int t = 0; t < 5; ++t) {
            gp[std::int64_t(y) * w + reflect101(xx + t - 2, w)] += kBinomial5[t] * gv;
          }
        }
      }
    }
  });
  return out;
}

Tensor downsample2(const Tensor& x) {
  const int h = x.shape.h, w = x.shape.w;
  const int oh = (h + 1) / 2, ow = (w + 1) / 2;
  Tensor out = make_out({x.shape.n, x.shape.c, oh, ow});
  const std::int64_t planes = std::int64_t(x.shape.n) * x.shape.c;
  for (std::int64_t p = 0; p < planes; ++p) {
    const float* src = x.ptr() + p * h * w;
    float* dst = out.ptr() + p * oh * ow;
    for (int y = 0; y < oh; ++y) {
      for (int xx = 0; xx < ow; ++xx) {
        dst[std::int64_t(y) * ow + xx] = src[std::int64_t(2 * y) * w + 2 * xx];
      }
    }
  }
  attach_node(out, {x}, [h, w, oh, ow](const Tensor& o) {
    const Tensor& p0 = o.node->parents[0];
    if (!p0.requires_grad) return;
    auto& g = grad_ref(p0);
    const float* go = grad_ref(o).data();
    const std::int64_t planes = std::int64_t(p0.shape.n) * p0.shape.c;
    for (std::int64_t p = 0; p < planes; ++p) {
      float* gp = g.data() + p * h * w;
      const float* gop = go + p * oh * ow;
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx) {
          gp[std::int64_t(2 * y) * w + 2 * xx] += gop[std::int64_t(y) * ow + xx];
        }
      }
    }
  });
  return out;
}

Tensor upsample_zero2(const Tensor& x, int out_h, int out_w) {
  const int h = x.shape.h, w = x.shape.w;
  if (out_h < 2 * h - 1 || out_w < 2 * w - 1 || out_h > 2 * h || out_w > 2 * w) {
    throw std::invalid_argument("upsample_zero2: target size incompatible with input " +
                                x.shape.str());
  }
  Tensor out = make_out({x.shape.n, x.shape.c, out_h, out_w});
  const std::int64_t planes = std::int64_t(x.shape.n) * x.shape.c;
  for (std::int64_t p = 0; p < planes; ++p) {
    const float* src = x.ptr() + p * h * w;
    float* dst = out.ptr() + p * out_h * out_w;
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        dst[std::int64_t(2 * y) * out_w + 2 * xx] = src[std::int64_t(y) * w + xx];
      }
    }
  }
  attach_node(out, {x}, [h, w, out_w](const Tensor& o) {
    const Tensor& p0 = o.node->parents[0];
    if (!p0.requires_grad) return;
    auto& g = grad_ref(p0);
    const float* go = grad_ref(o).data();
    const std::int64_t planes = std::int64_t(p0.shape.n) * p0.shape.c;
    const std::int64_t ohw = std::int64_t(o.shape.h) * o.shape.w;
    for (std::int64_t p = 0; p < planes; ++p) {
      float* gp = g.data() + p * h * w;
      const float* gop = go + p * ohw;
      for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) {
          gp[std::int64_t(y) * w + xx] += gop[std::int64_t(2 * y) * out_w + 2 * xx];
        }
      }
    }
  });
  return out;
}

bool all_finite(const Tensor& x) {
  const float* d = x.ptr();
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    if (!std::isfinite(d[i])) return false;
  }
  return true;
}

}  // namespace vfi
