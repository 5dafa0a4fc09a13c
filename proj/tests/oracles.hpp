// Independent reference implementations used by the test suites. These are
// deliberately written as plain scalar loops, separate from the library's
// kernels, so the two sides can disagree.
#pragma once

#include <cmath>
#include <vector>

#include "vfi/rng.hpp"
#include "vfi/tensor.hpp"

namespace oracle {

// Direct six-nested-loop cross-correlation.
inline vfi::Tensor naive_conv2d(const vfi::Tensor& x, const vfi::Tensor& w,
                                const vfi::Tensor* bias, int stride, int padding, int dilation,
                                int groups) {
  const int cin = x.shape.c, cout = w.shape.n, k = w.shape.h;
  const int cin_g = cin / groups, cout_g = cout / groups;
  const int oh = (x.shape.h + 2 * padding - dilation * (k - 1) - 1) / stride + 1;
  const int ow = (x.shape.w + 2 * padding - dilation * (k - 1) - 1) / stride + 1;
  vfi::Tensor out = vfi::Tensor::zeros({x.shape.n, cout, oh, ow});
  for (int n = 0; n < x.shape.n; ++n) {
    for (int oc = 0; oc < cout; ++oc) {
      const int g = oc / cout_g;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          double acc = 0.0;
          for (int icg = 0; icg < cin_g; ++icg) {
            for (int ky = 0; ky < k; ++ky) {
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * stride - padding + ky * dilation;
                const int ix = ox * stride - padding + kx * dilation;
                if (iy < 0 || iy >= x.shape.h || ix < 0 || ix >= x.shape.w) continue;
                acc += double(x.at(n, g * cin_g + icg, iy, ix)) * double(w.at(oc, icg, ky, kx));
              }
            }
          }
          out.at(n, oc, oy, ox) = float(acc) + (bias ? bias->ptr()[oc] : 0.0f);
        }
      }
    }
  }
  return out;
}

// Scalar bilinear sample with half-pixel centers and replicate borders
// (align_corners = false convention).
inline float bilinear_sample_halfpixel(const vfi::Tensor& img, int n, int c, double sy, double sx) {
  const int h = img.shape.h, w = img.shape.w;
  const double fy = std::floor(sy), fx = std::floor(sx);
  int y0 = int(fy), x0 = int(fx);
  const double ay = sy - fy, ax = sx - fx;
  auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
  const int y0c = clampi(y0, 0, h - 1), y1c = clampi(y0 + 1, 0, h - 1);
  const int x0c = clampi(x0, 0, w - 1), x1c = clampi(x0 + 1, 0, w - 1);
  const double v00 = img.at(n, c, y0c, x0c), v01 = img.at(n, c, y0c, x1c);
  const double v10 = img.at(n, c, y1c, x0c), v11 = img.at(n, c, y1c, x1c);
  return float((v00 * (1 - ax) + v01 * ax) * (1 - ay) + (v10 * (1 - ax) + v11 * ax) * ay);
}

// Scalar bilinear sample with zero padding outside the image, used for
// checking backward warping.
inline float bilinear_sample_zeropad(const vfi::Tensor& img, int n, int c, double sy, double sx) {
  const int h = img.shape.h, w = img.shape.w;
  const double fy = std::floor(sy), fx = std::floor(sx);
  const int y0 = int(fy), x0 = int(fx);
  const double ay = sy - fy, ax = sx - fx;
  auto tap = [&](int yy, int xx) -> double {
    if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
    return img.at(n, c, yy, xx);
  };
  return float((tap(y0, x0) * (1 - ax) + tap(y0, x0 + 1) * ax) * (1 - ay) +
               (tap(y0 + 1, x0) * (1 - ax) + tap(y0 + 1, x0 + 1) * ax) * ay);
}

inline vfi::Tensor random_tensor(vfi::Shape s, std::uint64_t seed, float lo = -1.0f,
                                 float hi = 1.0f) {
  vfi::SeededRng rng(seed);
  return vfi::Tensor::uniform(s, rng, lo, hi);
}

inline double max_abs_diff(const vfi::Tensor& a, const vfi::Tensor& b) {
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::fabs(double(a.ptr()[i]) - double(b.ptr()[i])));
  }
  return m;
}

inline double max_rel_diff(const vfi::Tensor& a, const vfi::Tensor& b, double floor = 1e-6) {
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double x = a.ptr()[i], y = b.ptr()[i];
    const double denom = std::max({std::fabs(x), std::fabs(y), floor});
    m = std::max(m, std::fabs(x - y) / denom);
  }
  return m;
}

inline bool bit_equal(const vfi::Tensor& a, const vfi::Tensor& b) {
  if (!(a.shape == b.shape)) return false;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    if (a.ptr()[i] != b.ptr()[i]) return false;
  }
  return true;
}

}  // namespace oracle
