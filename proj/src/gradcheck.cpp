#include "vfi/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "vfi/rng.hpp"

namespace vfi {

double grad_check(const std::function<Tensor()>& f, const std::vector<Parameter*>& params,
                  const GradCheckOptions& opts) {
  if (opts.eps <= 0.0f) throw std::invalid_argument("grad_check: eps must be positive");

  for (auto* p : params) p->zero_grad();
  {
    GradGuard rec(true);
    Tensor loss = f();
    backward(loss);
  }
  std::vector<std::vector<float>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad());

  NoGradGuard no_grad;
  SeededRng rng(opts.seed);
  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    const std::int64_t n = p.value.numel();
    std::vector<std::int64_t> coords;
    if (n <= opts.coords_per_param) {
      for (std::int64_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      std::unordered_set<std::int64_t> seen;
      while (std::int64_t(coords.size()) < opts.coords_per_param) {
        std::int64_t i = rng.next_u64() % std::uint64_t(n);
        if (seen.insert(i).second) coords.push_back(i);
      }
    }
    float* v = p.value.ptr();
    for (std::int64_t ci : coords) {
      const float saved = v[ci];
      const float hi = saved + opts.eps;
      const float lo = saved - opts.eps;
      v[ci] = hi;
      const double fp = double(f().ptr()[0]);
      v[ci] = lo;
      const double fm = double(f().ptr()[0]);
      v[ci] = saved;
      const double numeric = (fp - fm) / (double(hi) - double(lo));
      const double a = double(analytic[pi][std::size_t(ci)]);
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-6});
      max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
    }
  }
  return max_rel;
}

}  // namespace vfi
