#include "vfi/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace vfi {

namespace {
void check_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!(a.shape == b.shape)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape.str() + " vs " +
                                b.shape.str());
  }
}
}  // namespace

double psnr(const Tensor& a, const Tensor& b, double peak) {
  check_same(a, b, "psnr");
  double mse = 0.0;
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = double(a.ptr()[i]) - double(b.ptr()[i]);
    mse += d * d;
  }
  mse /= double(n);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Tensor& a, const Tensor& b) {
  check_same(a, b, "ssim");
  const int h = a.shape.h, w = a.shape.w;
  const int half = 5;
  const double sigma = 1.5;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;

  double g[11];
  for (int i = 0; i < 11; ++i) g[i] = std::exp(-double((i - half) * (i - half)) / (2.0 * sigma * sigma));

  double total = 0.0;
  std::int64_t count = 0;
  std::vector<double> ga(std::size_t(h) * w), gb(ga.size());
  for (int bn = 0; bn < a.shape.n; ++bn) {
    // grayscale by channel mean
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double sa = 0.0, sb = 0.0;
        for (int c = 0; c < a.shape.c; ++c) {
          sa += a.at(bn, c, y, x);
          sb += b.at(bn, c, y, x);
        }
        ga[std::size_t(y) * w + x] = sa / a.shape.c;
        gb[std::size_t(y) * w + x] = sb / a.shape.c;
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double wsum = 0.0, mua = 0.0, mub = 0.0;
        for (int dy = -half; dy <= half; ++dy) {
          const int yy = y + dy;
          if (yy < 0 || yy >= h) continue;
          for (int dx = -half; dx <= half; ++dx) {
            const int xx = x + dx;
            if (xx < 0 || xx >= w) continue;
            const double wv = g[dy + half] * g[dx + half];
            wsum += wv;
            mua += wv * ga[std::size_t(yy) * w + xx];
            mub += wv * gb[std::size_t(yy) * w + xx];
          }
        }
        mua /= wsum;
        mub /= wsum;
        double va = 0.0, vb = 0.0, cov = 0.0;
        for (int dy = -half; dy <= half; ++dy) {
          const int yy = y + dy;
          if (yy < 0 || yy >= h) continue;
          for (int dx = -half; dx <= half; ++dx) {
            const int xx = x + dx;
            if (xx < 0 || xx >= w) continue;
            const double wv = g[dy + half] * g[dx + half] / wsum;
            const double da = ga[std::size_t(yy) * w + xx] - mua;
            const double db = gb[std::size_t(yy) * w + xx] - mub;
            va += wv * da * da;
            vb += wv * db * db;
            cov += wv * da * db;
          }
        }
        const double num = (2.0 * mua * mub + c1) * (2.0 * cov + c2);
        const double den = (mua * mua + mub * mub + c1) * (va + vb + c2);
        total += num / den;
        ++count;
      }
    }
  }
  return total / double(count);
}

double interpolation_error(const Tensor& a, const Tensor& b) {
  check_same(a, b, "interpolation_error");
  double acc = 0.0;
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = 255.0 * (double(a.ptr()[i]) - double(b.ptr()[i]));
    acc += d * d;
  }
  return std::sqrt(acc / double(n));
}

}  // namespace vfi
