#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "vfi/gradcheck.hpp"
#include "vfi/ops.hpp"

using namespace vfi;

namespace {

Parameter make_param(const std::string& name, Shape s, std::uint64_t seed, float lo = -1.0f,
                     float hi = 1.0f) {
  SeededRng rng(seed);
  return Parameter(name, Tensor::uniform(s, rng, lo, hi));
}

// Values in +-[lo, hi]: magnitudes bounded away from zero so finite
// differences stay well conditioned.
Tensor signed_band(Shape s, std::uint64_t seed, float lo, float hi) {
  SeededRng rng(seed);
  Tensor t = Tensor::zeros(s);
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    float v = rng.uniform(lo, hi);
    t.ptr()[i] = rng.uniform() < 0.5f ? -v : v;
  }
  return t;
}

// Scalar readout sum(weights ⊙ x) with weight magnitudes in [0.5, 1.5].
Tensor readout(const Tensor& x, std::uint64_t seed) {
  return sum_all(mul(x, signed_band(x.shape, seed, 0.5f, 1.5f)));
}

Tensor readout_pos(const Tensor& x, std::uint64_t seed) {
  SeededRng rng(seed);
  return sum_all(mul(x, Tensor::uniform(x.shape, rng, 0.5f, 1.5f)));
}

// eps choices: float32 losses resolve to about 1 ulp of |f|, so the step
// must be large enough that the true signal dominates the cast noise.
// Polynomial losses have zero truncation error and take a wide step.
const GradCheckOptions kSmooth{0.02f, 64, 0x600dcafe};
const GradCheckOptions kPolynomial{0.1f, 64, 0x600dcafe};

}  // namespace

TEST_CASE("backward on linear form: grad(w) = x") {
  Parameter w = make_param("w", {1, 1, 2, 3}, 1);
  Tensor x = oracle::random_tensor({1, 1, 2, 3}, 2);
  Tensor loss = sum_all(mul(w.value, x));
  backward(loss);
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    CHECK(w.grad()[i] == doctest::Approx(x.ptr()[i]).epsilon(1e-6));
  }
}

TEST_CASE("backward on quadratic: d/dw sum(w^2) = 2w at w=3") {
  Parameter w("w", Tensor::full({1, 1, 1, 1}, 3.0f));
  Tensor loss = sum_all(mul(w.value, w.value));
  backward(loss);
  CHECK(w.grad()[0] == doctest::Approx(6.0f));
}

TEST_CASE("unused parameter keeps zero gradient") {
  Parameter used = make_param("used", {1, 1, 1, 4}, 3);
  Parameter unused = make_param("unused", {1, 1, 1, 4}, 4);
  Tensor loss = sum_all(used.value);
  backward(loss);
  for (float g : unused.grad()) CHECK(g == 0.0f);
}

TEST_CASE("backward requires a recorded scalar") {
  Tensor plain = Tensor::full({1, 1, 1, 1}, 2.0f);
  CHECK_THROWS_AS(backward(plain), std::runtime_error);

  Parameter w = make_param("w", {1, 1, 2, 2}, 5);
  Tensor vec = scale(w.value, 2.0f);
  CHECK_THROWS_AS(backward(vec), std::invalid_argument);

  NoGradGuard no_grad;
  Tensor y = scale(w.value, 2.0f);
  CHECK(!y.node);
}

TEST_CASE("gradients accumulate until cleared") {
  Parameter w = make_param("w", {1, 1, 1, 1}, 6);
  backward(scale(w.value, 3.0f));
  backward(scale(w.value, 3.0f));
  CHECK(w.grad()[0] == doctest::Approx(6.0f));
  w.zero_grad();
  CHECK(w.grad()[0] == 0.0f);
}

TEST_CASE("grad_check on quadratic and linear losses") {
  Parameter w("w", signed_band({1, 2, 3, 3}, 7, 0.3f, 1.0f));
  std::vector<Parameter*> params = {&w};
  double err_quad =
      grad_check([&] { return sum_all(mul(w.value, w.value)); }, params, kPolynomial);
  CHECK(err_quad < 1e-4);
  Tensor fixed = signed_band({1, 2, 3, 3}, 8, 0.5f, 1.5f);
  double err_lin = grad_check([&] { return sum_all(mul(w.value, fixed)); }, params, kPolynomial);
  CHECK(err_lin < 1e-5);
}

TEST_CASE("per-op gradient fidelity over seeded trials") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    Parameter a("a", signed_band({1, 2, 4, 4}, 10 + seed, 0.3f, 1.0f));
    Parameter b("b", signed_band({1, 2, 4, 4}, 20 + seed, 0.3f, 1.0f));
    std::vector<Parameter*> ab = {&a, &b};

    CHECK(grad_check([&] { return readout(add(a.value, b.value), 1 + seed); }, ab, kPolynomial) < 5e-3);
    CHECK(grad_check([&] { return readout(sub(a.value, b.value), 2 + seed); }, ab, kPolynomial) < 5e-3);
    CHECK(grad_check([&] { return readout(mul(a.value, b.value), 3 + seed); }, ab, kPolynomial) < 5e-3);
    CHECK(grad_check([&] { return readout(scale(a.value, 1.7f), 4 + seed); }, ab, kPolynomial) < 5e-3);
    CHECK(grad_check([&] { return readout(add_scalar(a.value, 0.3f), 5 + seed); }, ab, kPolynomial) < 5e-3);
    CHECK(grad_check([&] { return readout(concat_channels({a.value, b.value}), 10 + seed); }, ab,
                     kPolynomial) < 5e-3);
    CHECK(grad_check([&] { return readout(slice_channels(a.value, 0, 1), 11 + seed); }, ab,
                     kPolynomial) < 5e-3);
    CHECK(grad_check([&] { return readout(pad_replicate(a.value, 1, 0, 2, 1), 12 + seed); }, ab,
                     kPolynomial) < 5e-3);
    CHECK(grad_check([&] { return readout(crop(a.value, 1, 1, 2, 2), 13 + seed); }, ab,
                     kPolynomial) < 5e-3);
    CHECK(grad_check([&] { return readout_pos(gauss_blur5(a.value), 14 + seed); }, ab,
                     kPolynomial) < 5e-3);
    CHECK(grad_check([&] { return readout(downsample2(a.value), 15 + seed); }, ab, kPolynomial) < 5e-3);
    CHECK(grad_check([&] { return readout(upsample_zero2(a.value, 8, 8), 16 + seed); }, ab,
                     kPolynomial) < 5e-3);
    CHECK(grad_check([&] { return readout(mean_channels(a.value), 17 + seed); }, ab, kPolynomial) < 5e-3);
    CHECK(grad_check([&] { return readout(sum_lastdim(a.value), 18 + seed); }, ab, kPolynomial) < 5e-3);
    CHECK(grad_check([&] { return mean_all(mul(a.value, b.value)); }, ab, kPolynomial) < 5e-3);
    CHECK(grad_check([&] { return readout(reshape(a.value, {1, 4, 2, 4}), 19 + seed); }, ab,
                     kPolynomial) < 5e-3);
    CHECK(grad_check([&] { return readout(scale_channels(a.value, {0.5f, -2.0f}), 20 + seed); },
                     ab, kPolynomial) < 5e-3);
    CHECK(grad_check([&] { return readout_pos(bilinear_resize(a.value, 7, 3), 8 + seed); }, ab,
                     kPolynomial) < 5e-3);
    CHECK(grad_check([&] { return readout(pixel_shuffle(a.value, 1), 9 + seed); }, ab,
                     kPolynomial) < 5e-3);
  }
}

TEST_CASE("smooth nonlinear ops away from their flat spots") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    // positive band keeps gelu'/sigmoid' bounded below
    SeededRng rng(30 + seed);
    Parameter a("a", Tensor::uniform({1, 2, 4, 4}, rng, 0.2f, 1.5f));
    std::vector<Parameter*> pa = {&a};
    CHECK(grad_check([&] { return readout_pos(gelu(a.value), 31 + seed); }, pa, kSmooth) < 5e-3);
    CHECK(grad_check([&] { return readout_pos(sigmoid(a.value), 32 + seed); }, pa, kSmooth) < 5e-3);
  }
}

TEST_CASE("kinked ops checked away from their kinks") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    Parameter a("a", signed_band({1, 2, 4, 4}, 100 + seed, 0.3f, 1.2f));
    std::vector<Parameter*> pa = {&a};
    CHECK(grad_check([&] { return readout(abs(a.value), 30 + seed); }, pa, kSmooth) < 5e-3);
    CHECK(grad_check([&] { return readout(leaky_relu(a.value, 0.1f), 31 + seed); }, pa, kSmooth) < 5e-3);
  }
}

TEST_CASE("softmax gradient on a two-column row with unit weight gap") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    SeededRng rng(200 + seed);
    Parameter a("a", Tensor::uniform({1, 1, 4, 2}, rng, -1.0f, 1.0f));
    Tensor w = Tensor::zeros({1, 1, 4, 2});
    for (int r = 0; r < 4; ++r) {
      w.at(0, 0, r, 0) = 1.0f;
      w.at(0, 0, r, 1) = 2.0f;  // unit gap keeps row gradients bounded below
    }
    std::vector<Parameter*> pa = {&a};
    CHECK(grad_check([&] { return sum_all(mul(softmax_lastdim(a.value), w)); }, pa, kSmooth) < 5e-3);
  }
}

TEST_CASE("masked softmax gradient flows only through valid entries") {
  SeededRng rng(300);
  Parameter x("x", Tensor::uniform({1, 1, 2, 3}, rng, -1.0f, 1.0f));
  Tensor mask = Tensor::from_values({1, 1, 2, 3}, {1, 1, 0, 1, 1, 1});
  Tensor w = Tensor::from_values({1, 1, 2, 3}, {1, 2, 5, 1, 2, 3});
  std::vector<Parameter*> ps = {&x};
  CHECK(grad_check([&] { return sum_all(mul(masked_softmax_lastdim(x.value, mask), w)); }, ps,
                   kSmooth) < 5e-3);
  // the masked column never influences the loss
  backward(sum_all(mul(masked_softmax_lastdim(x.value, mask), w)));
  CHECK(x.grad()[2] == 0.0f);
}

TEST_CASE("conv2d, linear, bmm gradients (loss linear in each argument)") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    // positive factors: every gradient entry is a sum of positive terms
    SeededRng rng(400 + seed);
    Parameter x("x", Tensor::uniform({1, 2, 5, 5}, rng, 0.3f, 1.0f));
    Parameter w("w", Tensor::uniform({3, 2, 3, 3}, rng, 0.3f, 1.0f));
    Parameter b("b", Tensor::uniform({1, 3, 1, 1}, rng, 0.3f, 1.0f));
    std::vector<Parameter*> ps = {&x, &w, &b};
    CHECK(grad_check(
              [&] {
                return readout_pos(conv2d(x.value, w.value, &b.value, 2, 1, 1, 1), 70 + seed);
              },
              ps, kPolynomial) < 5e-3);

    Parameter lw("lw", Tensor::uniform({4, 2, 1, 1}, rng, 0.3f, 1.0f));
    std::vector<Parameter*> lp = {&x, &lw, &b};
    CHECK(grad_check([&] { return readout_pos(linear(x.value, lw.value, nullptr), 81 + seed); },
                     lp, kPolynomial) < 5e-3);

    Parameter ma("ma", Tensor::uniform({2, 1, 3, 4}, rng, 0.3f, 1.0f));
    Parameter mb("mb", Tensor::uniform({2, 1, 4, 2}, rng, 0.3f, 1.0f));
    Parameter mc("mc", Tensor::uniform({2, 1, 2, 4}, rng, 0.3f, 1.0f));
    std::vector<Parameter*> mp = {&ma, &mb, &mc};
    CHECK(grad_check([&] { return readout_pos(bmm(ma.value, mb.value, false), 93 + seed); }, mp,
                     kPolynomial) < 5e-3);
    CHECK(grad_check([&] { return readout_pos(bmm(ma.value, mc.value, true), 94 + seed); }, mp,
                     kPolynomial) < 5e-3);
  }
}

TEST_CASE("depthwise conv gradients (groups = channels)") {
  SeededRng rng(500);
  Parameter x("x", Tensor::uniform({1, 4, 5, 5}, rng, 0.3f, 1.0f));
  Parameter w("w", Tensor::uniform({4, 1, 3, 3}, rng, 0.3f, 1.0f));
  Parameter b("b", Tensor::uniform({1, 4, 1, 1}, rng, 0.3f, 1.0f));
  std::vector<Parameter*> ps = {&x, &w, &b};
  CHECK(grad_check([&] { return readout_pos(conv2d(x.value, w.value, &b.value, 1, 1, 1, 4), 501); },
                   ps, kPolynomial) < 5e-3);
}

TEST_CASE("layer_norm gradients") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    // well separated channel values keep the normalized coordinates stable
    Tensor base = Tensor::zeros({1, 4, 2, 2});
    SeededRng rng(600 + seed);
    for (int i = 0; i < 4; ++i) {
      for (int p = 0; p < 4; ++p) {
        base.ptr()[i * 4 + p] = float(i) + rng.uniform(-0.2f, 0.2f);
      }
    }
    Parameter x("x", base);
    Parameter g("g", Tensor::uniform({1, 4, 1, 1}, rng, 0.5f, 1.5f));
    Parameter be("be", Tensor::uniform({1, 4, 1, 1}, rng, -0.5f, 0.5f));
    std::vector<Parameter*> ps = {&x, &g, &be};
    const GradCheckOptions ln_opts{0.01f, 64, 0x600dcafe};
    CHECK(grad_check([&] { return readout_pos(layer_norm(x.value, g.value, be.value), 601 + seed); },
                     ps, ln_opts) < 5e-3);
  }
}

TEST_CASE("backward_warp gradients away from integer crossings") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    SeededRng rng(700 + seed);
    Parameter flow("flow", Tensor::uniform({1, 2, 5, 5}, rng, 0.25f, 0.65f));
    // smooth ramp image: flow gradients proportional to the slope
    Tensor img0 = Tensor::zeros({1, 2, 5, 5});
    for (int c = 0; c < 2; ++c) {
      for (int y = 0; y < 5; ++y) {
        for (int x = 0; x < 5; ++x) img0.at(0, c, y, x) = 0.5f * x + 0.3f * y + 0.2f * c + 1.0f;
      }
    }
    Parameter img("img", img0);
    std::vector<Parameter*> wp = {&flow, &img};
    CHECK(grad_check([&] { return readout_pos(backward_warp(img.value, flow.value), 720 + seed); },
                     wp, kSmooth) < 5e-3);
  }
}
