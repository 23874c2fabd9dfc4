#pragma once
// Image metrics over [C,H,W] tensors in [0,1]: mean absolute error and
// Gaussian-windowed SSIM (11x11, sigma 1.5, K1 0.01, K2 0.03, dynamic range
// 1), channel-averaged, windows fully inside the image.

#include "draw/tensor.hpp"

namespace draw {

double metric_l1(const Tensor<float>& a, const Tensor<float>& b);

// Requires H and W >= 11.
double metric_ssim(const Tensor<float>& a, const Tensor<float>& b);

}  // namespace draw
