#include "draw/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace draw {

double metric_l1(const Tensor<float>& a, const Tensor<float>& b) {
  if (a.shape != b.shape) throw std::invalid_argument("metric_l1: shape mismatch");
  double s = 0;
  for (long i = 0; i < a.size(); ++i) s += std::abs(static_cast<double>(a[i]) - b[i]);
  return s / static_cast<double>(a.size());
}

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;  // (K1 * L)^2, L = 1
constexpr double kC2 = 0.03 * 0.03;

const std::vector<double>& gaussian_taps() {
  static const std::vector<double> taps = [] {
    std::vector<double> t(kWin);
    double sum = 0;
    for (int i = 0; i < kWin; ++i) {
      const double d = i - (kWin - 1) / 2.0;
      t[static_cast<size_t>(i)] = std::exp(-d * d / (2 * kSigma * kSigma));
      sum += t[static_cast<size_t>(i)];
    }
    for (double& v : t) v /= sum;
    return t;
  }();
  return taps;
}

// Separable valid-mode blur: [h,w] -> [h-10, w-10].
void blur_valid(const std::vector<double>& img, int h, int w, std::vector<double>& tmp,
                std::vector<double>& out) {
  const auto& k = gaussian_taps();
  const int wo = w - kWin + 1, ho = h - kWin + 1;
  tmp.assign(static_cast<size_t>(h) * wo, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < wo; ++x) {
      double s = 0;
      for (int t = 0; t < kWin; ++t) s += k[static_cast<size_t>(t)] * img[static_cast<size_t>(y) * w + x + t];
      tmp[static_cast<size_t>(y) * wo + x] = s;
    }
  out.assign(static_cast<size_t>(ho) * wo, 0.0);
  for (int y = 0; y < ho; ++y)
    for (int x = 0; x < wo; ++x) {
      double s = 0;
      for (int t = 0; t < kWin; ++t) s += k[static_cast<size_t>(t)] * tmp[static_cast<size_t>(y + t) * wo + x];
      out[static_cast<size_t>(y) * wo + x] = s;
    }
}

}  // namespace

double metric_ssim(const Tensor<float>& a, const Tensor<float>& b) {
  if (a.shape != b.shape) throw std::invalid_argument("metric_ssim: shape mismatch");
  if (a.shape.rank != 3) throw std::invalid_argument("metric_ssim: want [C,H,W]");
  const int c = a.shape[0], h = a.shape[1], w = a.shape[2];
  if (h < kWin || w < kWin) throw std::invalid_argument("metric_ssim: image smaller than window");

  const long hw = static_cast<long>(h) * w;
  std::vector<double> xa(static_cast<size_t>(hw)), xb(static_cast<size_t>(hw)),
      xaa(static_cast<size_t>(hw)), xbb(static_cast<size_t>(hw)), xab(static_cast<size_t>(hw));
  std::vector<double> tmp, mu_a, mu_b, m_aa, m_bb, m_ab;

  double total = 0;
  for (int ch = 0; ch < c; ++ch) {
    const float* pa = a.data() + static_cast<long>(ch) * hw;
    const float* pb = b.data() + static_cast<long>(ch) * hw;
    for (long i = 0; i < hw; ++i) {
      const double va = pa[i], vb = pb[i];
      xa[static_cast<size_t>(i)] = va;
      xb[static_cast<size_t>(i)] = vb;
      xaa[static_cast<size_t>(i)] = va * va;
      xbb[static_cast<size_t>(i)] = vb * vb;
      xab[static_cast<size_t>(i)] = va * vb;
    }
    blur_valid(xa, h, w, tmp, mu_a);
    blur_valid(xb, h, w, tmp, mu_b);
    blur_valid(xaa, h, w, tmp, m_aa);
    blur_valid(xbb, h, w, tmp, m_bb);
    blur_valid(xab, h, w, tmp, m_ab);

    double acc = 0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
      const double ma = mu_a[i], mb = mu_b[i];
      const double va = m_aa[i] - ma * ma;
      const double vb = m_bb[i] - mb * mb;
      const double cov = m_ab[i] - ma * mb;
      acc += ((2 * ma * mb + kC1) * (2 * cov + kC2)) /
             ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
    }
    total += acc / static_cast<double>(mu_a.size());
  }
  return total / c;
}

}  // namespace draw
