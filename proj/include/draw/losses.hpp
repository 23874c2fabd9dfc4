#pragma once
// Loss definitions, in two forms: tensor/scalar reference functions used by
// evaluation and the oracle tests, and Graph builders used by training.  The
// critics are least-squares (target 1 = real, 0 = fake); every expectation is
// an arithmetic mean, and batch means are applied by the caller.

#include <stdexcept>
#include <type_traits>
#include <vector>

#include "draw/graph.hpp"
#include "draw/tensor.hpp"

namespace draw {

// --- tensor helpers --------------------------------------------------------

// [1,H,W] -> [3,H,W]
template <typename T>
Tensor<T> tile3(const Tensor<T>& d) {
  if (d.shape.rank != 3 || d.shape[0] != 1) throw std::invalid_argument("tile3: want [1,H,W]");
  Tensor<T> out(Shape{3, d.shape[1], d.shape[2]});
  for (int c = 0; c < 3; ++c)
    for (long i = 0; i < d.size(); ++i) out[c * d.size() + i] = d[i];
  return out;
}

// [3,H,W] -> [1,H,W]
template <typename T>
Tensor<T> channel_mean(const Tensor<T>& x) {
  if (x.shape.rank != 3 || x.shape[0] != 3)
    throw std::invalid_argument("channel_mean: want [3,H,W]");
  const long hw = x.size() / 3;
  Tensor<T> out(Shape{1, x.shape[1], x.shape[2]});
  for (long i = 0; i < hw; ++i)
    out[i] = (x[i] + x[hw + i] + x[2 * hw + i]) / T(3);
  return out;
}

template <typename T>
T mean_abs(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape != b.shape) throw std::invalid_argument("mean_abs: shape mismatch");
  double s = 0;
  for (long i = 0; i < a.size(); ++i) s += std::abs(static_cast<double>(a[i]) - b[i]);
  return static_cast<T>(s / a.size());
}

// --- reference forms -------------------------------------------------------

template <typename T>
T lsgan_to_one(T score) {
  const T d = T(1) - score;
  return d * d;
}

template <typename T>
T loss_dt_critic(T d_real, T d_fake) {
  return lsgan_to_one(d_real) + d_fake * d_fake;
}

template <typename T>
T loss_dt_gen(const Tensor<T>& s0, const Tensor<T>& f_x0, T d_fake, T lambda_f) {
  return mean_abs(s0, f_x0) + lambda_f * lsgan_to_one(d_fake);
}

// Sum over aligned views of per-view mean L1.
template <typename T>
T loss_recgen(const std::vector<Tensor<T>>& targets, const std::vector<Tensor<T>>& preds) {
  if (targets.size() != preds.size())
    throw std::invalid_argument("loss_recgen: view count mismatch");
  T total = 0;
  for (size_t p = 0; p < targets.size(); ++p) total += mean_abs(targets[p], preds[p]);
  return total;
}

// targets are N maps [1,H,W]; refined is the volume [1,N,H,W].
template <typename T>
T loss_3d(const std::vector<Tensor<T>>& targets, const Tensor<T>& refined) {
  if (refined.shape.rank != 4 || refined.shape[0] != 1 ||
      refined.shape[1] != static_cast<int>(targets.size()))
    throw std::invalid_argument("loss_3d: view count mismatch");
  const long hw = static_cast<long>(refined.shape[2]) * refined.shape[3];
  T total = 0;
  for (size_t p = 0; p < targets.size(); ++p) {
    if (targets[p].size() != hw) throw std::invalid_argument("loss_3d: map size mismatch");
    double s = 0;
    for (long i = 0; i < hw; ++i)
      s += std::abs(static_cast<double>(targets[p][i]) - refined[static_cast<long>(p) * hw + i]);
    total += static_cast<T>(s / hw);
  }
  return total;
}

template <typename T>
T loss_dv_critic(T dv_real, T dv_fake) {
  return lsgan_to_one(dv_real) + dv_fake * dv_fake;
}

template <typename T>
T loss_dr_gen(T recgen, T l3d, T dv_fake, T lambda_3d, T lambda_g) {
  return recgen + lambda_3d * l3d + lambda_g * lsgan_to_one(dv_fake);
}

template <typename T>
struct IrTensors {
  Tensor<T> x0_hat, s0_hat, xp_hat, sp_hat;  // all [3,H,W]
};

// Depth targets arrive tiled to 3 channels so outputs and targets share arity.
// x_p-supervision is only legal for the standalone-IR ablation.
template <typename T>
T loss_ir_supervised(const Tensor<T>& x0, const Tensor<T>& s0_t3, const Tensor<T>& sp_t3,
                     const IrTensors<T>& out, bool include_xp,
                     const std::type_identity_t<Tensor<T>>* xp) {
  if (include_xp && xp == nullptr)
    throw std::invalid_argument("loss_ir_supervised: include_xp requires x_p");
  T total = mean_abs(x0, out.x0_hat) + mean_abs(s0_t3, out.s0_hat) +
            mean_abs(sp_t3, out.sp_hat);
  if (include_xp) total += mean_abs(*xp, out.xp_hat);
  return total;
}

template <typename T>
T loss_ir_critic(T d_real, T d_fake_s0, T d_fake_x0, T d_fake_xp) {
  return lsgan_to_one(d_real) + d_fake_s0 * d_fake_s0 + d_fake_x0 * d_fake_x0 +
         d_fake_xp * d_fake_xp;
}

template <typename T>
T loss_ir_gen(T d_fake_s0, T d_fake_x0, T d_fake_xp, T supervised) {
  return lsgan_to_one(d_fake_s0) + lsgan_to_one(d_fake_x0) + lsgan_to_one(d_fake_xp) +
         supervised;
}

template <typename T>
T loss_stage2_critic(T dt_critic, T ir_critic, T lambda_2) {
  return dt_critic + lambda_2 * ir_critic;
}

template <typename T>
T loss_stage2_gen(T dt_gen, T ir_gen, T lambda_1) {
  return dt_gen + lambda_1 * ir_gen;
}

// --- graph builders --------------------------------------------------------

template <typename T>
NodeP<T> nto_one(Graph<T>& g, NodeP<T> score) {  // (1 - score)^2
  return g.sq(g.affine(score, T(-1), T(1)));
}

template <typename T>
NodeP<T> nscale(Graph<T>& g, NodeP<T> x, T c) {
  return g.affine(x, c, T(0));
}

template <typename T>
NodeP<T> nsum(Graph<T>& g, const std::vector<NodeP<T>>& xs) {
  if (xs.empty()) throw std::invalid_argument("nsum: empty");
  NodeP<T> acc = xs[0];
  for (size_t i = 1; i < xs.size(); ++i) acc = g.add(acc, xs[i]);
  return acc;
}

// Sum over views of per-view mean L1 (targets as graph inputs).
template <typename T>
NodeP<T> nviews_l1(Graph<T>& g, const std::vector<NodeP<T>>& targets,
                   const std::vector<NodeP<T>>& preds) {
  if (targets.size() != preds.size())
    throw std::invalid_argument("nviews_l1: view count mismatch");
  std::vector<NodeP<T>> terms;
  terms.reserve(targets.size());
  for (size_t p = 0; p < targets.size(); ++p)
    terms.push_back(g.mean_abs_diff(targets[p], preds[p]));
  return nsum(g, terms);
}

// Per-view mean L1 between a target volume and a predicted volume [1,N,H,W].
template <typename T>
NodeP<T> nvolume_l1(Graph<T>& g, NodeP<T> target_vol, NodeP<T> pred_vol) {
  const Shape& s = target_vol->v().shape;
  if (s.rank != 4) throw std::invalid_argument("nvolume_l1: want volumes");
  std::vector<NodeP<T>> terms;
  terms.reserve(static_cast<size_t>(s[1]));
  for (int p = 0; p < s[1]; ++p)
    terms.push_back(g.mean_abs_diff(g.slice_view(target_vol, p), g.slice_view(pred_vol, p)));
  return nsum(g, terms);
}

struct LossWeights {
  float lambda_f = 0.05f;
  float lambda_3d = 1.0f;
  float lambda_g = 0.05f;
  float lambda_1 = 1.0f;
  float lambda_2 = 1.0f;
};

}  // namespace draw
