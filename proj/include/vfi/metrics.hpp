#pragma once

#include "vfi/tensor.hpp"

namespace vfi {

// 10*log10(peak^2 / MSE) in dB; identical images return +infinity.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

// Mean structural similarity on the channel-mean grayscale image with an
// 11x11 Gaussian window (sigma 1.5), k1 = 0.01, k2 = 0.03, dynamic range 1.
// Windows are truncated and renormalized at the borders so every pixel
// centers a valid window.
double ssim(const Tensor& a, const Tensor& b);

// Root-mean-square difference on the 0-255 scale.
double interpolation_error(const Tensor& a, const Tensor& b);

}  // namespace vfi
