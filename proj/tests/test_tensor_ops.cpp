#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "vfi/ops.hpp"

using namespace vfi;

TEST_CASE("conv2d identity kernel") {
  Tensor x = oracle::random_tensor({1, 1, 3, 3}, 1);
  Tensor w = Tensor::full({1, 1, 1, 1}, 1.0f);
  Tensor b = Tensor::zeros({1, 1, 1, 1});
  Tensor y = conv2d(x, w, &b, 1, 0, 1, 1);
  CHECK(oracle::bit_equal(x, y));
}

TEST_CASE("conv2d constant field interior") {
  Tensor x = Tensor::full({1, 1, 5, 5}, 2.0f);
  Tensor w = Tensor::full({1, 1, 3, 3}, 1.0f);
  Tensor y = conv2d(x, w, nullptr, 1, 1, 1, 1);
  CHECK(y.at(0, 0, 2, 2) == doctest::Approx(18.0f).epsilon(1e-6));
}

TEST_CASE("conv2d matches naive loop oracle") {
  Tensor x = oracle::random_tensor({1, 2, 5, 5}, 7);
  Tensor w = oracle::random_tensor({3, 2, 3, 3}, 8);
  Tensor b = oracle::random_tensor({1, 3, 1, 1}, 9);
  Tensor y = conv2d(x, w, &b, 1, 0, 1, 1);
  Tensor ref = oracle::naive_conv2d(x, w, &b, 1, 0, 1, 1);
  CHECK(oracle::max_rel_diff(y, ref) < 1e-6);
}

TEST_CASE("conv2d oracle sweep over shapes, strides, dilations, groups") {
  SeededRng rng(42);
  int cases = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + rng.uniform_int(2);
    const int groups = 1 + rng.uniform_int(2);
    const int cin = groups * (1 + rng.uniform_int(2));
    const int cout = groups * (1 + rng.uniform_int(2));
    const int k = rng.uniform_int(2) ? 3 : 1;
    const int stride = 1 + rng.uniform_int(2);
    const int dils[3] = {1, 2, 4};
    const int dilation = dils[rng.uniform_int(3)];
    const int pad = rng.uniform_int(3);
    const int h = 1 + rng.uniform_int(9);
    const int w = 1 + rng.uniform_int(9);
    if ((h + 2 * pad - dilation * (k - 1) - 1) < 0) continue;
    if ((w + 2 * pad - dilation * (k - 1) - 1) < 0) continue;
    Tensor x = oracle::random_tensor({n, cin, h, w}, 1000 + trial);
    Tensor wt = oracle::random_tensor({cout, cin / groups, k, k}, 2000 + trial);
    Tensor b = oracle::random_tensor({1, cout, 1, 1}, 3000 + trial);
    Tensor y = conv2d(x, wt, &b, stride, pad, dilation, groups);
    Tensor ref = oracle::naive_conv2d(x, wt, &b, stride, pad, dilation, groups);
    CHECK(oracle::max_rel_diff(y, ref) < 1e-6);
    CHECK(all_finite(y));
    ++cases;
  }
  CHECK(cases > 100);
}

TEST_CASE("conv2d rejects channel mismatch with both shapes in message") {
  Tensor x = Tensor::zeros({1, 3, 4, 4});
  Tensor w = Tensor::zeros({2, 4, 3, 3});
  try {
    conv2d(x, w, nullptr, 1, 1, 1, 1);
    FAIL("expected exception");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(1, 3, 4, 4)") != std::string::npos);
    CHECK(msg.find("(2, 4, 3, 3)") != std::string::npos);
  }
}

TEST_CASE("linear identity and hand matrix multiply") {
  Tensor x = oracle::random_tensor({1, 2, 2, 2}, 3);
  Tensor eye = Tensor::from_values({2, 2, 1, 1}, {1, 0, 0, 1});
  CHECK(oracle::bit_equal(linear(x, eye, nullptr), x));

  Tensor v = Tensor::from_values({1, 2, 1, 1}, {1, 2});
  Tensor w = Tensor::from_values({3, 2, 1, 1}, {1, 0, 0, 1, 1, 1});
  Tensor y = linear(v, w, nullptr);
  CHECK(y.ptr()[0] == doctest::Approx(1));
  CHECK(y.ptr()[1] == doctest::Approx(2));
  CHECK(y.ptr()[2] == doctest::Approx(3));
}

TEST_CASE("linear broadcasts bias over zero input") {
  Tensor x = Tensor::zeros({1, 3, 2, 2});
  Tensor w = oracle::random_tensor({4, 3, 1, 1}, 5);
  Tensor b = Tensor::from_values({1, 4, 1, 1}, {0.5f, -1.0f, 2.0f, 0.0f});
  Tensor y = linear(x, w, &b);
  for (int c = 0; c < 4; ++c) {
    for (int i = 0; i < 4; ++i) {
      CHECK(y.ptr()[c * 4 + i] == b.ptr()[c]);
    }
  }
}

TEST_CASE("linear rejects dimension mismatch") {
  Tensor x = Tensor::zeros({1, 3, 2, 2});
  Tensor w = Tensor::zeros({4, 2, 1, 1});
  CHECK_THROWS_AS(linear(x, w, nullptr), std::invalid_argument);
}

TEST_CASE("softmax rows: uniform, closed form, shift invariance") {
  Tensor row = Tensor::full({1, 1, 1, 5}, 3.25f);
  Tensor y = softmax_lastdim(row);
  for (int i = 0; i < 5; ++i) CHECK(y.ptr()[i] == doctest::Approx(0.2).epsilon(1e-6));

  Tensor two = Tensor::from_values({1, 1, 1, 2}, {0.0f, std::log(3.0f)});
  Tensor s = softmax_lastdim(two);
  CHECK(s.ptr()[0] == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(s.ptr()[1] == doctest::Approx(0.75).epsilon(1e-6));

  Tensor x = oracle::random_tensor({2, 3, 4, 7}, 11);
  Tensor shifted = add_scalar(x, 10.0f);
  CHECK(oracle::max_abs_diff(softmax_lastdim(x), softmax_lastdim(shifted)) < 1e-6);
}

TEST_CASE("softmax rows sum to one") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Tensor x = oracle::random_tensor({1, 2, 5, 9}, seed, -8.0f, 8.0f);
    Tensor y = softmax_lastdim(x);
    for (int r = 0; r < 2 * 5; ++r) {
      double s = 0.0;
      for (int i = 0; i < 9; ++i) s += y.ptr()[r * 9 + i];
      CHECK(std::fabs(s - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("masked softmax zeroes masked entries exactly") {
  Tensor x = oracle::random_tensor({1, 1, 2, 6}, 21, -5.0f, 5.0f);
  Tensor m = Tensor::from_values({1, 1, 2, 6}, {1, 1, 0, 1, 0, 1,
                                                0, 0, 0, 0, 0, 0});
  Tensor y = masked_softmax_lastdim(x, m);
  double s = 0.0;
  for (int i = 0; i < 6; ++i) {
    if (m.ptr()[i] == 0.0f) CHECK(y.ptr()[i] == 0.0f);
    s += y.ptr()[i];
  }
  CHECK(std::fabs(s - 1.0) < 1e-6);
  // fully masked row yields zeros, not NaNs
  for (int i = 6; i < 12; ++i) CHECK(y.ptr()[i] == 0.0f);
}

TEST_CASE("layer_norm constant, two-channel, gamma zero") {
  Tensor c = Tensor::full({1, 4, 2, 2}, 5.0f);
  Tensor g1 = Tensor::full({1, 4, 1, 1}, 1.0f);
  Tensor b0 = Tensor::zeros({1, 4, 1, 1});
  Tensor y = layer_norm(c, g1, b0);
  for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(std::fabs(y.ptr()[i]) < 1e-3);

  Tensor v = Tensor::from_values({1, 2, 1, 1}, {1.0f, 3.0f});
  Tensor g2 = Tensor::full({1, 2, 1, 1}, 1.0f);
  Tensor b2 = Tensor::zeros({1, 2, 1, 1});
  Tensor z = layer_norm(v, g2, b2);
  CHECK(z.ptr()[0] == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK(z.ptr()[1] == doctest::Approx(1.0).epsilon(1e-4));

  Tensor g0 = Tensor::zeros({1, 2, 1, 1});
  Tensor b5 = Tensor::full({1, 2, 1, 1}, 5.0f);
  Tensor q = layer_norm(v, g0, b5);
  CHECK(q.ptr()[0] == 5.0f);
  CHECK(q.ptr()[1] == 5.0f);
}

TEST_CASE("activations: leaky_relu slope and gelu zero") {
  Tensor x = Tensor::from_values({1, 1, 1, 3}, {-1.0f, 2.0f, 0.0f});
  Tensor y = leaky_relu(x, 0.1f);
  CHECK(y.ptr()[0] == doctest::Approx(-0.1f));
  CHECK(y.ptr()[1] == 2.0f);
  Tensor g = gelu(x);
  CHECK(g.ptr()[2] == 0.0f);
}

TEST_CASE("bilinear_resize identity and constant preservation") {
  Tensor x = oracle::random_tensor({1, 3, 6, 5}, 31);
  CHECK(oracle::bit_equal(bilinear_resize(x, 6, 5), x));

  Tensor c = Tensor::full({1, 1, 4, 4}, 0.7f);
  Tensor up = bilinear_resize(c, 9, 13);
  for (std::int64_t i = 0; i < up.numel(); ++i) CHECK(up.ptr()[i] == 0.7f);
}

TEST_CASE("bilinear_resize 2x2 to 4x4 matches scalar oracle") {
  Tensor x = Tensor::from_values({1, 1, 2, 2}, {0, 1, 2, 3});
  Tensor y = bilinear_resize(x, 4, 4);
  for (int oy = 0; oy < 4; ++oy) {
    for (int ox = 0; ox < 4; ++ox) {
      const double sy = (oy + 0.5) * 2.0 / 4.0 - 0.5;
      const double sx = (ox + 0.5) * 2.0 / 4.0 - 0.5;
      const float ref = oracle::bilinear_sample_halfpixel(x, 0, 0, sy, sx);
      CHECK(y.at(0, 0, oy, ox) == doctest::Approx(ref).epsilon(1e-6));
    }
  }
}

TEST_CASE("pixel_shuffle identity, index mapping, composition") {
  Tensor x = oracle::random_tensor({1, 4, 3, 3}, 41);
  CHECK(oracle::bit_equal(pixel_shuffle(x, 1), x));

  Tensor v = Tensor::from_values({1, 4, 1, 1}, {1, 2, 3, 4});
  Tensor y = pixel_shuffle(v, 2);
  CHECK(y.shape == Shape{1, 1, 2, 2});
  CHECK(y.at(0, 0, 0, 0) == 1);
  CHECK(y.at(0, 0, 0, 1) == 2);
  CHECK(y.at(0, 0, 1, 0) == 3);
  CHECK(y.at(0, 0, 1, 1) == 4);

  Tensor big = oracle::random_tensor({2, 16, 2, 3}, 43);
  Tensor two = pixel_shuffle(pixel_shuffle(big, 2), 2);
  CHECK(two.shape == Shape{2, 1, 8, 12});
}

TEST_CASE("pixel_shuffle then unshuffle is the bit-exact identity") {
  Tensor x = oracle::random_tensor({2, 8, 3, 5}, 47);
  CHECK(oracle::bit_equal(pixel_unshuffle(pixel_shuffle(x, 2), 2), x));
  CHECK_THROWS_AS(pixel_shuffle(Tensor::zeros({1, 3, 2, 2}), 2), std::invalid_argument);
}

TEST_CASE("concat_channels ordering and errors") {
  Tensor a = Tensor::full({1, 1, 2, 2}, 0.0f);
  Tensor b = Tensor::full({1, 1, 2, 2}, 1.0f);
  Tensor y = concat_channels({a, b});
  CHECK(y.shape.c == 2);
  CHECK(y.at(0, 0, 0, 0) == 0.0f);
  CHECK(y.at(0, 1, 0, 0) == 1.0f);
  CHECK(oracle::bit_equal(concat_channels({a}), a));
  CHECK_THROWS_AS(concat_channels({a, Tensor::zeros({1, 1, 3, 2})}), std::invalid_argument);
}

TEST_CASE("backward_warp zero flow is bit-exact identity") {
  Tensor img = oracle::random_tensor({1, 3, 7, 9}, 53);
  Tensor flow = Tensor::zeros({1, 2, 7, 9});
  CHECK(oracle::bit_equal(backward_warp(img, flow), img));
}

TEST_CASE("backward_warp integer shift recovers interior") {
  // shifted(x) = img(x+1): warping shifted with flow (+1, 0)... the other way:
  // build shifted-left image, then flow (+1,0) on it samples img again.
  Tensor img = oracle::random_tensor({1, 1, 5, 8}, 59);
  Tensor shifted = Tensor::zeros({1, 1, 5, 8});
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 7; ++x) shifted.at(0, 0, y, x) = img.at(0, 0, y, x + 1);
  }
  Tensor flow = Tensor::zeros({1, 2, 5, 8});
  for (std::int64_t i = 0; i < 5 * 8; ++i) flow.ptr()[i] = -1.0f;
  Tensor rec = backward_warp(shifted, flow);
  for (int y = 0; y < 5; ++y) {
    for (int x = 1; x < 7; ++x) {
      CHECK(rec.at(0, 0, y, x) == img.at(0, 0, y, x));
    }
  }
}

TEST_CASE("backward_warp fractional flow matches scalar oracle") {
  Tensor img = oracle::random_tensor({1, 2, 6, 6}, 61);
  Tensor flow = Tensor::zeros({1, 2, 6, 6});
  for (std::int64_t i = 0; i < 36; ++i) flow.ptr()[i] = 0.5f;
  Tensor out = backward_warp(img, flow);
  for (int c = 0; c < 2; ++c) {
    for (int y = 0; y < 6; ++y) {
      for (int x = 0; x < 6; ++x) {
        const float ref = oracle::bilinear_sample_zeropad(img, 0, c, y, x + 0.5);
        CHECK(out.at(0, c, y, x) == doctest::Approx(ref).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("ramp warp by half pixel gives midpoints") {
  Tensor img = Tensor::zeros({1, 1, 3, 8});
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 8; ++x) img.at(0, 0, y, x) = float(x);
  }
  Tensor flow = Tensor::zeros({1, 2, 3, 8});
  for (std::int64_t i = 0; i < 24; ++i) flow.ptr()[i] = 0.5f;
  Tensor out = backward_warp(img, flow);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 7; ++x) {
      CHECK(out.at(0, 0, y, x) == doctest::Approx(x + 0.5).epsilon(1e-6));
    }
  }
}

TEST_CASE("pad_replicate and crop round trip") {
  Tensor x = oracle::random_tensor({1, 2, 4, 5}, 67);
  Tensor padded = pad_replicate(x, 1, 2, 3, 0);
  CHECK(padded.shape == Shape{1, 2, 7, 8});
  CHECK(oracle::bit_equal(crop(padded, 1, 3, 4, 5), x));
  // corners replicate
  CHECK(padded.at(0, 0, 0, 0) == x.at(0, 0, 0, 0));
  CHECK(padded.at(0, 0, 6, 0) == x.at(0, 0, 3, 0));
}

TEST_CASE("reshape shares values and keeps count") {
  Tensor x = oracle::random_tensor({1, 4, 2, 3}, 71);
  Tensor y = reshape(x, {2, 2, 3, 2});
  CHECK(y.numel() == x.numel());
  for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(x.ptr()[i] == y.ptr()[i]);
  CHECK_THROWS_AS(reshape(x, {1, 1, 1, 5}), std::invalid_argument);
}

TEST_CASE("gauss_blur5 preserves constants and mass") {
  Tensor c = Tensor::full({1, 1, 6, 7}, 0.4f);
  Tensor y = gauss_blur5(c);
  for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y.ptr()[i] == doctest::Approx(0.4f).epsilon(1e-6));
}

TEST_CASE("downsample2 and upsample_zero2 shapes and adjoint structure") {
  Tensor x = oracle::random_tensor({1, 1, 5, 7}, 73);
  Tensor d = downsample2(x);
  CHECK(d.shape == Shape{1, 1, 3, 4});
  for (int y = 0; y < 3; ++y) {
    for (int xx = 0; xx < 4; ++xx) CHECK(d.at(0, 0, y, xx) == x.at(0, 0, 2 * y, 2 * xx));
  }
  Tensor u = upsample_zero2(d, 5, 7);
  CHECK(u.at(0, 0, 2, 2) == d.at(0, 0, 1, 1));
  CHECK(u.at(0, 0, 1, 1) == 0.0f);
}

TEST_CASE("finite outputs on random finite inputs") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Tensor x = oracle::random_tensor({1, 4, 6, 6}, 100 + seed, -30.0f, 30.0f);
    CHECK(all_finite(softmax_lastdim(x)));
    CHECK(all_finite(gelu(x)));
    CHECK(all_finite(sigmoid(x)));
    Tensor g = Tensor::full({1, 4, 1, 1}, 1.0f);
    Tensor b = Tensor::zeros({1, 4, 1, 1});
    CHECK(all_finite(layer_norm(x, g, b)));
    CHECK(all_finite(bilinear_resize(x, 11, 3)));
  }
}
