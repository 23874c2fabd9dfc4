#pragma once
// Reverse-mode autodiff over dense tensors.  A Graph is a tape of nodes built
// per sample; backward() walks the tape in reverse creation order, which is a
// valid topological order because ops only reference earlier nodes.  Grads are
// allocated lazily, so subgraphs cut off by stop() cost nothing on the way
// back.  Convolutions lower to im2col + Eigen GEMM with thread_local scratch.
//
// Feature layouts: 2D maps are [C,H,W], volumes are [C,N,H,W] with N the view
// axis, vectors are [C], losses are rank-0 scalars.  Templated on T so the
// same ops run in float for training and double for finite-difference checks.

#include <Eigen/Core>
#include <cmath>
#include <cstring>
#include <deque>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "draw/params.hpp"
#include "draw/tensor.hpp"

namespace draw {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

// Grow-only per-thread scratch; `which` separates buffers live at once.
template <typename T>
inline std::vector<T>& scratch(int which) {
  thread_local std::vector<T> bufs[3];
  return bufs[which];
}

inline int conv_out_dim(int in, int k, int s, int p) {
  return (in + 2 * p - k) / s + 1;
}

// col is row-major [Ci*kh*kw, Ho*Wo].
template <typename T>
void im2col_2d(const T* in, int ci, int h, int w, int kh, int kw, int s, int p,
               int ho, int wo, T* col) {
  const long l = static_cast<long>(ho) * wo;
  for (int c = 0; c < ci; ++c)
    for (int ki = 0; ki < kh; ++ki)
      for (int kj = 0; kj < kw; ++kj) {
        T* row = col + (static_cast<long>((c * kh + ki) * kw + kj)) * l;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s - p + ki;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s - p + kj;
            row[oy * wo + ox] = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                    ? in[(static_cast<long>(c) * h + iy) * w + ix]
                                    : T(0);
          }
        }
      }
}

template <typename T>
void col2im_2d(const T* col, int ci, int h, int w, int kh, int kw, int s, int p,
               int ho, int wo, T* din) {
  const long l = static_cast<long>(ho) * wo;
  for (int c = 0; c < ci; ++c)
    for (int ki = 0; ki < kh; ++ki)
      for (int kj = 0; kj < kw; ++kj) {
        const T* row = col + (static_cast<long>((c * kh + ki) * kw + kj)) * l;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s - p + ki;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s - p + kj;
            if (ix < 0 || ix >= w) continue;
            din[(static_cast<long>(c) * h + iy) * w + ix] += row[oy * wo + ox];
          }
        }
      }
}

// col is row-major [Ci*kd*kh*kw, Do*Ho*Wo]; zero padding on every axis.
template <typename T>
void im2col_3d(const T* in, int ci, int d, int h, int w, int kd, int kh, int kw,
               int sd, int sh, int sw, int pd, int ph, int pw, int dout, int ho,
               int wo, T* col) {
  const long l = static_cast<long>(dout) * ho * wo;
  for (int c = 0; c < ci; ++c)
    for (int kz = 0; kz < kd; ++kz)
      for (int ki = 0; ki < kh; ++ki)
        for (int kj = 0; kj < kw; ++kj) {
          T* row = col + (static_cast<long>(((c * kd + kz) * kh + ki) * kw + kj)) * l;
          for (int od = 0; od < dout; ++od) {
            const int iz = od * sd - pd + kz;
            for (int oy = 0; oy < ho; ++oy) {
              const int iy = oy * sh - ph + ki;
              for (int ox = 0; ox < wo; ++ox) {
                const int ix = ox * sw - pw + kj;
                const bool ok = iz >= 0 && iz < d && iy >= 0 && iy < h && ix >= 0 && ix < w;
                row[(static_cast<long>(od) * ho + oy) * wo + ox] =
                    ok ? in[((static_cast<long>(c) * d + iz) * h + iy) * w + ix] : T(0);
              }
            }
          }
        }
}

template <typename T>
void col2im_3d(const T* col, int ci, int d, int h, int w, int kd, int kh, int kw,
               int sd, int sh, int sw, int pd, int ph, int pw, int dout, int ho,
               int wo, T* din) {
  const long l = static_cast<long>(dout) * ho * wo;
  for (int c = 0; c < ci; ++c)
    for (int kz = 0; kz < kd; ++kz)
      for (int ki = 0; ki < kh; ++ki)
        for (int kj = 0; kj < kw; ++kj) {
          const T* row = col + (static_cast<long>(((c * kd + kz) * kh + ki) * kw + kj)) * l;
          for (int od = 0; od < dout; ++od) {
            const int iz = od * sd - pd + kz;
            if (iz < 0 || iz >= d) continue;
            for (int oy = 0; oy < ho; ++oy) {
              const int iy = oy * sh - ph + ki;
              if (iy < 0 || iy >= h) continue;
              for (int ox = 0; ox < wo; ++ox) {
                const int ix = ox * sw - pw + kj;
                if (ix < 0 || ix >= w) continue;
                din[((static_cast<long>(c) * d + iz) * h + iy) * w + ix] +=
                    row[(static_cast<long>(od) * ho + oy) * wo + ox];
              }
            }
          }
        }
}

}  // namespace detail

template <typename T>
class Graph {
 public:
  struct Node {
    Tensor<T> val;                  // owned value (computed nodes / constants)
    const Tensor<T>* ext = nullptr; // external value (leaves)
    Tensor<T> grad;                 // lazily allocated, same shape as v()
    std::function<void()> backfn;
    bool needs_grad = false;

    const Tensor<T>& v() const { return ext ? *ext : val; }
  };

  // --- leaves ----------------------------------------------------------

  Node* input(const Tensor<T>* x) {
    Node* n = make();
    n->ext = x;
    return n;
  }

  Node* constant(Tensor<T> x) {
    Node* n = make();
    n->val = std::move(x);
    return n;
  }

  Node* make_scalar(T x) {
    Tensor<T> t((Shape()));
    t[0] = x;
    return constant(std::move(t));
  }

  Node* param(ParameterT<T>* p) {
    Node* n = make();
    n->ext = &p->value;
    n->needs_grad = true;
    params_.push_back({p, n});
    return n;
  }

  Node* frozen(const ParameterT<T>* p) {
    Node* n = make();
    n->ext = &p->value;
    return n;
  }

  // Value passthrough that blocks gradient flow.
  Node* stop(Node* x) {
    Node* n = make();
    n->val = x->v();
    return n;
  }

  // --- elementwise -----------------------------------------------------

  Node* add(Node* a, Node* b) { return binary(a, b, [](T x, T y) { return x + y; }, BinKind::Add); }
  Node* sub(Node* a, Node* b) { return binary(a, b, [](T x, T y) { return x - y; }, BinKind::Sub); }
  Node* mul(Node* a, Node* b) { return binary(a, b, [](T x, T y) { return x * y; }, BinKind::Mul); }

  // out = a + c*b, same shapes (scalars included).
  Node* add_scaled(Node* a, Node* b, T c) {
    check_same(a, b, "add_scaled");
    Node* n = make();
    n->needs_grad = a->needs_grad || b->needs_grad;
    n->val = Tensor<T>(a->v().shape);
    const Tensor<T>&av = a->v(), &bv = b->v();
    for (long i = 0; i < av.size(); ++i) n->val[i] = av[i] + c * bv[i];
    if (n->needs_grad)
      n->backfn = [this, n, a, b, c] {
        const long nn = n->grad.size();
        if (a->needs_grad) {
          Tensor<T>& ga = grad_of(a);
          for (long i = 0; i < nn; ++i) ga[i] += n->grad[i];
        }
        if (b->needs_grad) {
          Tensor<T>& gb = grad_of(b);
          for (long i = 0; i < nn; ++i) gb[i] += c * n->grad[i];
        }
      };
    return n;
  }

  Node* affine(Node* x, T a, T b) {
    Node* n = make_like(x);
    const Tensor<T>& xv = x->v();
    for (long i = 0; i < xv.size(); ++i) n->val[i] = a * xv[i] + b;
    if (n->needs_grad)
      n->backfn = [this, n, x, a] {
        Tensor<T>& gx = grad_of(x);
        for (long i = 0; i < gx.size(); ++i) gx[i] += a * n->grad[i];
      };
    return n;
  }

  Node* sq(Node* x) {
    Node* n = make_like(x);
    const Tensor<T>& xv = x->v();
    for (long i = 0; i < xv.size(); ++i) n->val[i] = xv[i] * xv[i];
    if (n->needs_grad)
      n->backfn = [this, n, x] {
        const Tensor<T>& xv = x->v();
        Tensor<T>& gx = grad_of(x);
        for (long i = 0; i < gx.size(); ++i) gx[i] += T(2) * xv[i] * n->grad[i];
      };
    return n;
  }

  Node* sigmoid(Node* x) {
    Node* n = make_like(x);
    const Tensor<T>& xv = x->v();
    for (long i = 0; i < xv.size(); ++i) n->val[i] = T(1) / (T(1) + std::exp(-xv[i]));
    if (n->needs_grad)
      n->backfn = [this, n, x] {
        Tensor<T>& gx = grad_of(x);
        for (long i = 0; i < gx.size(); ++i) {
          const T s = n->val[i];
          gx[i] += s * (T(1) - s) * n->grad[i];
        }
      };
    return n;
  }

  Node* tanh_(Node* x) {
    Node* n = make_like(x);
    const Tensor<T>& xv = x->v();
    for (long i = 0; i < xv.size(); ++i) n->val[i] = std::tanh(xv[i]);
    if (n->needs_grad)
      n->backfn = [this, n, x] {
        Tensor<T>& gx = grad_of(x);
        for (long i = 0; i < gx.size(); ++i) {
          const T t = n->val[i];
          gx[i] += (T(1) - t * t) * n->grad[i];
        }
      };
    return n;
  }

  Node* relu(Node* x) {
    Node* n = make_like(x);
    const Tensor<T>& xv = x->v();
    for (long i = 0; i < xv.size(); ++i) n->val[i] = xv[i] > T(0) ? xv[i] : T(0);
    if (n->needs_grad)
      n->backfn = [this, n, x] {
        const Tensor<T>& xv = x->v();
        Tensor<T>& gx = grad_of(x);
        for (long i = 0; i < gx.size(); ++i)
          if (xv[i] > T(0)) gx[i] += n->grad[i];
      };
    return n;
  }

  Node* lrelu(Node* x, T alpha = T(0.2)) {
    Node* n = make_like(x);
    const Tensor<T>& xv = x->v();
    for (long i = 0; i < xv.size(); ++i) n->val[i] = xv[i] > T(0) ? xv[i] : alpha * xv[i];
    if (n->needs_grad)
      n->backfn = [this, n, x, alpha] {
        const Tensor<T>& xv = x->v();
        Tensor<T>& gx = grad_of(x);
        for (long i = 0; i < gx.size(); ++i)
          gx[i] += (xv[i] > T(0) ? T(1) : alpha) * n->grad[i];
      };
    return n;
  }

  // --- linear algebra --------------------------------------------------

  // x [Ci,H,W], w [Co,Ci,kh,kw], b [Co] or nullptr.
  Node* conv2d(Node* x, Node* w, Node* b, int stride, int pad) {
    const Shape& xs = x->v().shape;
    const Shape& ws = w->v().shape;
    if (xs.rank != 3 || ws.rank != 4 || xs[0] != ws[1])
      throw std::invalid_argument("conv2d: bad shapes " + xs.str() + " " + ws.str());
    const int ci = xs[0], h = xs[1], wd = xs[2];
    const int co = ws[0], kh = ws[2], kw = ws[3];
    const int ho = detail::conv_out_dim(h, kh, stride, pad);
    const int wo = detail::conv_out_dim(wd, kw, stride, pad);
    const long m = static_cast<long>(ci) * kh * kw;
    const long l = static_cast<long>(ho) * wo;

    Node* n = make();
    n->needs_grad = x->needs_grad || w->needs_grad || (b && b->needs_grad);
    n->val = Tensor<T>(Shape{co, ho, wo});

    auto& col = detail::scratch<T>(0);
    col.resize(static_cast<size_t>(m * l));
    detail::im2col_2d(x->v().data(), ci, h, wd, kh, kw, stride, pad, ho, wo, col.data());
    Eigen::Map<const MatRM<T>> wm(w->v().data(), co, m);
    Eigen::Map<const MatRM<T>> cm(col.data(), m, l);
    Eigen::Map<MatRM<T>> om(n->val.data(), co, l);
    om.noalias() = wm * cm;
    if (b) {
      const Tensor<T>& bv = b->v();
      for (int c = 0; c < co; ++c) {
        const T bc = bv[c];
        T* row = n->val.data() + static_cast<long>(c) * l;
        for (long i = 0; i < l; ++i) row[i] += bc;
      }
    }

    if (n->needs_grad)
      n->backfn = [this, n, x, w, b, stride, pad, ci, h, wd, co, kh, kw, ho, wo, m, l] {
        Eigen::Map<const MatRM<T>> gm(n->grad.data(), co, l);
        if (w->needs_grad) {
          auto& col = detail::scratch<T>(0);
          col.resize(static_cast<size_t>(m * l));
          detail::im2col_2d(x->v().data(), ci, h, wd, kh, kw, stride, pad, ho, wo, col.data());
          Eigen::Map<const MatRM<T>> cm(col.data(), m, l);
          Eigen::Map<MatRM<T>> gw(grad_of(w).data(), co, m);
          gw.noalias() += gm * cm.transpose();
        }
        if (b && b->needs_grad) {
          Tensor<T>& gb = grad_of(b);
          for (int c = 0; c < co; ++c) {
            double s = 0;
            const T* row = n->grad.data() + static_cast<long>(c) * l;
            for (long i = 0; i < l; ++i) s += row[i];
            gb[c] += static_cast<T>(s);
          }
        }
        if (x->needs_grad) {
          auto& dcol = detail::scratch<T>(1);
          dcol.resize(static_cast<size_t>(m * l));
          Eigen::Map<const MatRM<T>> wm(w->v().data(), co, m);
          Eigen::Map<MatRM<T>> dm(dcol.data(), m, l);
          dm.noalias() = wm.transpose() * gm;
          detail::col2im_2d(dcol.data(), ci, h, wd, kh, kw, stride, pad, ho, wo,
                            grad_of(x).data());
        }
      };
    return n;
  }

  // x [Ci,D,H,W], w [Co,Ci,kd,kh,kw]; zero padding (view padding is applied
  // beforehand by cyclic_pad_views, with pd = 0 here).
  Node* conv3d(Node* x, Node* w, Node* b, int sd, int sh, int sw, int pd, int ph, int pw) {
    const Shape& xs = x->v().shape;
    const Shape& ws = w->v().shape;
    if (xs.rank != 4 || ws.rank != 5 || xs[0] != ws[1])
      throw std::invalid_argument("conv3d: bad shapes " + xs.str() + " " + ws.str());
    const int ci = xs[0], d = xs[1], h = xs[2], wd = xs[3];
    const int co = ws[0], kd = ws[2], kh = ws[3], kw = ws[4];
    const int dout = detail::conv_out_dim(d, kd, sd, pd);
    const int ho = detail::conv_out_dim(h, kh, sh, ph);
    const int wo = detail::conv_out_dim(wd, kw, sw, pw);
    const long m = static_cast<long>(ci) * kd * kh * kw;
    const long l = static_cast<long>(dout) * ho * wo;

    Node* n = make();
    n->needs_grad = x->needs_grad || w->needs_grad || (b && b->needs_grad);
    n->val = Tensor<T>(Shape{co, dout, ho, wo});

    auto& col = detail::scratch<T>(0);
    col.resize(static_cast<size_t>(m * l));
    detail::im2col_3d(x->v().data(), ci, d, h, wd, kd, kh, kw, sd, sh, sw, pd, ph, pw,
                      dout, ho, wo, col.data());
    Eigen::Map<const MatRM<T>> wm(w->v().data(), co, m);
    Eigen::Map<const MatRM<T>> cm(col.data(), m, l);
    Eigen::Map<MatRM<T>> om(n->val.data(), co, l);
    om.noalias() = wm * cm;
    if (b) {
      const Tensor<T>& bv = b->v();
      for (int c = 0; c < co; ++c) {
        const T bc = bv[c];
        T* row = n->val.data() + static_cast<long>(c) * l;
        for (long i = 0; i < l; ++i) row[i] += bc;
      }
    }

    if (n->needs_grad)
      n->backfn = [this, n, x, w, b, sd, sh, sw, pd, ph, pw, ci, d, h, wd, co, kd, kh,
                   kw, dout, ho, wo, m, l] {
        Eigen::Map<const MatRM<T>> gm(n->grad.data(), co, l);
        if (w->needs_grad) {
          auto& col = detail::scratch<T>(0);
          col.resize(static_cast<size_t>(m * l));
          detail::im2col_3d(x->v().data(), ci, d, h, wd, kd, kh, kw, sd, sh, sw, pd,
                            ph, pw, dout, ho, wo, col.data());
          Eigen::Map<const MatRM<T>> cm(col.data(), m, l);
          Eigen::Map<MatRM<T>> gw(grad_of(w).data(), co, m);
          gw.noalias() += gm * cm.transpose();
        }
        if (b && b->needs_grad) {
          Tensor<T>& gb = grad_of(b);
          for (int c = 0; c < co; ++c) {
            double s = 0;
            const T* row = n->grad.data() + static_cast<long>(c) * l;
            for (long i = 0; i < l; ++i) s += row[i];
            gb[c] += static_cast<T>(s);
          }
        }
        if (x->needs_grad) {
          auto& dcol = detail::scratch<T>(1);
          dcol.resize(static_cast<size_t>(m * l));
          Eigen::Map<const MatRM<T>> wm(w->v().data(), co, m);
          Eigen::Map<MatRM<T>> dm(dcol.data(), m, l);
          dm.noalias() = wm.transpose() * gm;
          detail::col2im_3d(dcol.data(), ci, d, h, wd, kd, kh, kw, sd, sh, sw, pd, ph,
                            pw, dout, ho, wo, grad_of(x).data());
        }
      };
    return n;
  }

  // x [Ci], w [Co,Ci], b [Co] or nullptr.
  Node* fc(Node* x, Node* w, Node* b) {
    const Shape& xs = x->v().shape;
    const Shape& ws = w->v().shape;
    if (xs.rank != 1 || ws.rank != 2 || ws[1] != xs[0])
      throw std::invalid_argument("fc: bad shapes " + xs.str() + " " + ws.str());
    const int ci = xs[0], co = ws[0];
    Node* n = make();
    n->needs_grad = x->needs_grad || w->needs_grad || (b && b->needs_grad);
    n->val = Tensor<T>(Shape{co});
    const Tensor<T>& xv = x->v();
    const Tensor<T>& wv = w->v();
    for (int o = 0; o < co; ++o) {
      double s = b ? static_cast<double>(b->v()[o]) : 0.0;
      const T* row = wv.data() + static_cast<long>(o) * ci;
      for (int i = 0; i < ci; ++i) s += static_cast<double>(row[i]) * xv[i];
      n->val[o] = static_cast<T>(s);
    }
    if (n->needs_grad)
      n->backfn = [this, n, x, w, b, ci, co] {
        const Tensor<T>& xv = x->v();
        const Tensor<T>& wv = w->v();
        if (w->needs_grad) {
          Tensor<T>& gw = grad_of(w);
          for (int o = 0; o < co; ++o) {
            const T g = n->grad[o];
            T* row = gw.data() + static_cast<long>(o) * ci;
            for (int i = 0; i < ci; ++i) row[i] += g * xv[i];
          }
        }
        if (b && b->needs_grad) {
          Tensor<T>& gb = grad_of(b);
          for (int o = 0; o < co; ++o) gb[o] += n->grad[o];
        }
        if (x->needs_grad) {
          Tensor<T>& gx = grad_of(x);
          for (int o = 0; o < co; ++o) {
            const T g = n->grad[o];
            const T* row = wv.data() + static_cast<long>(o) * ci;
            for (int i = 0; i < ci; ++i) gx[i] += g * row[i];
          }
        }
      };
    return n;
  }

  // Per-channel normalization over all non-channel dims (dim 0 is C), then
  // gamma/beta [C].  Biased variance, eps 1e-5.
  Node* instance_norm(Node* x, Node* gamma, Node* beta) {
    const Shape& xs = x->v().shape;
    if (xs.rank < 2) throw std::invalid_argument("instance_norm: rank < 2");
    const int c = xs[0];
    const long nn = x->v().size() / c;
    const T eps = T(1e-5);

    Node* n = make();
    n->needs_grad = x->needs_grad || gamma->needs_grad || beta->needs_grad;
    n->val = Tensor<T>(xs);

    auto mu = std::make_shared<std::vector<T>>(static_cast<size_t>(c));
    auto istd = std::make_shared<std::vector<T>>(static_cast<size_t>(c));
    const Tensor<T>& xv = x->v();
    const Tensor<T>& gv = gamma->v();
    const Tensor<T>& bv = beta->v();
    for (int ch = 0; ch < c; ++ch) {
      const T* px = xv.data() + static_cast<long>(ch) * nn;
      double s = 0;
      for (long i = 0; i < nn; ++i) s += px[i];
      const T m = static_cast<T>(s / nn);
      double v = 0;
      for (long i = 0; i < nn; ++i) {
        const double d = px[i] - m;
        v += d * d;
      }
      const T is = T(1) / std::sqrt(static_cast<T>(v / nn) + eps);
      (*mu)[ch] = m;
      (*istd)[ch] = is;
      T* po = n->val.data() + static_cast<long>(ch) * nn;
      const T g = gv[ch], bb = bv[ch];
      for (long i = 0; i < nn; ++i) po[i] = g * (px[i] - m) * is + bb;
    }

    if (n->needs_grad)
      n->backfn = [this, n, x, gamma, beta, c, nn, mu, istd] {
        const Tensor<T>& xv = x->v();
        const Tensor<T>& gv = gamma->v();
        for (int ch = 0; ch < c; ++ch) {
          const T m = (*mu)[ch], is = (*istd)[ch];
          const T* px = xv.data() + static_cast<long>(ch) * nn;
          const T* pg = n->grad.data() + static_cast<long>(ch) * nn;
          if (gamma->needs_grad || beta->needs_grad) {
            double dg = 0, db = 0;
            for (long i = 0; i < nn; ++i) {
              dg += static_cast<double>(pg[i]) * ((px[i] - m) * is);
              db += pg[i];
            }
            if (gamma->needs_grad) grad_of(gamma)[ch] += static_cast<T>(dg);
            if (beta->needs_grad) grad_of(beta)[ch] += static_cast<T>(db);
          }
          if (x->needs_grad) {
            const T g = gv[ch];
            double s1 = 0, s2 = 0;
            for (long i = 0; i < nn; ++i) {
              const double dxh = static_cast<double>(pg[i]) * g;
              s1 += dxh;
              s2 += dxh * ((px[i] - m) * is);
            }
            T* gx = grad_of(x).data() + static_cast<long>(ch) * nn;
            const T inv_n = T(1) / static_cast<T>(nn);
            for (long i = 0; i < nn; ++i) {
              const T dxh = pg[i] * g;
              const T xh = (px[i] - m) * is;
              gx[i] += is * inv_n *
                       (static_cast<T>(nn) * dxh - static_cast<T>(s1) - xh * static_cast<T>(s2));
            }
          }
        }
      };
    return n;
  }

  // --- shape ops -------------------------------------------------------

  // Nearest-neighbor 2x on [C,H,W].
  Node* upsample2x(Node* x) {
    const Shape& xs = x->v().shape;
    if (xs.rank != 3) throw std::invalid_argument("upsample2x: rank != 3");
    const int c = xs[0], h = xs[1], w = xs[2];
    Node* n = make();
    n->needs_grad = x->needs_grad;
    n->val = Tensor<T>(Shape{c, 2 * h, 2 * w});
    const Tensor<T>& xv = x->v();
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < 2 * h; ++y)
        for (int xx = 0; xx < 2 * w; ++xx)
          n->val[(static_cast<long>(ch) * 2 * h + y) * 2 * w + xx] =
              xv[(static_cast<long>(ch) * h + y / 2) * w + xx / 2];
    if (n->needs_grad)
      n->backfn = [this, n, x, c, h, w] {
        Tensor<T>& gx = grad_of(x);
        for (int ch = 0; ch < c; ++ch)
          for (int y = 0; y < 2 * h; ++y)
            for (int xx = 0; xx < 2 * w; ++xx)
              gx[(static_cast<long>(ch) * h + y / 2) * w + xx / 2] +=
                  n->grad[(static_cast<long>(ch) * 2 * h + y) * 2 * w + xx];
      };
    return n;
  }

  // [C,H,W] -> [C], mean over spatial dims.
  Node* gap(Node* x) {
    const Shape& xs = x->v().shape;
    if (xs.rank != 3) throw std::invalid_argument("gap: rank != 3");
    const int c = xs[0];
    const long nn = static_cast<long>(xs[1]) * xs[2];
    Node* n = make();
    n->needs_grad = x->needs_grad;
    n->val = Tensor<T>(Shape{c});
    const Tensor<T>& xv = x->v();
    for (int ch = 0; ch < c; ++ch) {
      double s = 0;
      const T* p = xv.data() + static_cast<long>(ch) * nn;
      for (long i = 0; i < nn; ++i) s += p[i];
      n->val[ch] = static_cast<T>(s / nn);
    }
    if (n->needs_grad)
      n->backfn = [this, n, x, c, nn] {
        Tensor<T>& gx = grad_of(x);
        for (int ch = 0; ch < c; ++ch) {
          const T g = n->grad[ch] / static_cast<T>(nn);
          T* p = gx.data() + static_cast<long>(ch) * nn;
          for (long i = 0; i < nn; ++i) p[i] += g;
        }
      };
    return n;
  }

  // [C] -> [C,H,W].
  Node* broadcast_hw(Node* x, int h, int w) {
    const Shape& xs = x->v().shape;
    if (xs.rank != 1) throw std::invalid_argument("broadcast_hw: rank != 1");
    const int c = xs[0];
    const long nn = static_cast<long>(h) * w;
    Node* n = make();
    n->needs_grad = x->needs_grad;
    n->val = Tensor<T>(Shape{c, h, w});
    const Tensor<T>& xv = x->v();
    for (int ch = 0; ch < c; ++ch) {
      T* p = n->val.data() + static_cast<long>(ch) * nn;
      for (long i = 0; i < nn; ++i) p[i] = xv[ch];
    }
    if (n->needs_grad)
      n->backfn = [this, n, x, c, nn] {
        Tensor<T>& gx = grad_of(x);
        for (int ch = 0; ch < c; ++ch) {
          double s = 0;
          const T* p = n->grad.data() + static_cast<long>(ch) * nn;
          for (long i = 0; i < nn; ++i) s += p[i];
          gx[ch] += static_cast<T>(s);
        }
      };
    return n;
  }

  // Concatenate along dim 0; all inputs share the remaining dims.
  Node* concat_ch(const std::vector<Node*>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_ch: empty");
    Shape s0 = xs[0]->v().shape;
    int ctot = 0;
    for (Node* x : xs) {
      const Shape& s = x->v().shape;
      if (s.rank != s0.rank) throw std::invalid_argument("concat_ch: rank mismatch");
      for (int i = 1; i < s.rank; ++i)
        if (s[i] != s0[i]) throw std::invalid_argument("concat_ch: dim mismatch");
      ctot += s[0];
    }
    Shape os = s0;
    os[0] = ctot;
    Node* n = make();
    for (Node* x : xs) n->needs_grad = n->needs_grad || x->needs_grad;
    n->val = Tensor<T>(os);
    // Inputs are contiguous channel blocks, so this is a straight copy.
    long off = 0;
    for (Node* x : xs) {
      std::memcpy(n->val.data() + off, x->v().data(),
                  static_cast<size_t>(x->v().size()) * sizeof(T));
      off += x->v().size();
    }
    if (n->needs_grad) {
      auto list = std::make_shared<std::vector<Node*>>(xs);
      n->backfn = [this, n, list] {
        long off = 0;
        for (Node* x : *list) {
          const long sz = x->v().size();
          if (x->needs_grad) {
            Tensor<T>& gx = grad_of(x);
            for (long i = 0; i < sz; ++i) gx[i] += n->grad[off + i];
          }
          off += sz;
        }
      };
    }
    return n;
  }

  Node* concat_ch(Node* a, Node* b) { return concat_ch(std::vector<Node*>{a, b}); }

  // Channels [c0,c1) of dim 0.
  Node* slice_ch(Node* x, int c0, int c1) {
    const Shape& xs = x->v().shape;
    if (c0 < 0 || c1 > xs[0] || c0 >= c1) throw std::invalid_argument("slice_ch: bad range");
    Shape os = xs;
    os[0] = c1 - c0;
    const long nn = x->v().size() / xs[0];
    Node* n = make();
    n->needs_grad = x->needs_grad;
    n->val = Tensor<T>(os);
    std::memcpy(n->val.data(), x->v().data() + static_cast<long>(c0) * nn,
                static_cast<size_t>(n->val.size()) * sizeof(T));
    if (n->needs_grad)
      n->backfn = [this, n, x, c0, nn] {
        Tensor<T>& gx = grad_of(x);
        const long sz = n->grad.size();
        T* dst = gx.data() + static_cast<long>(c0) * nn;
        for (long i = 0; i < sz; ++i) dst[i] += n->grad[i];
      };
    return n;
  }

  // Tile the channel dim `times` over; out[c] = in[c % Cin].
  Node* repeat_ch(Node* x, int times) {
    const Shape& xs = x->v().shape;
    Shape os = xs;
    os[0] = xs[0] * times;
    const long nn = x->v().size() / xs[0];
    Node* n = make();
    n->needs_grad = x->needs_grad;
    n->val = Tensor<T>(os);
    for (int r = 0; r < times; ++r)
      std::memcpy(n->val.data() + static_cast<long>(r) * x->v().size(), x->v().data(),
                  static_cast<size_t>(x->v().size()) * sizeof(T));
    if (n->needs_grad)
      n->backfn = [this, n, x, times] {
        Tensor<T>& gx = grad_of(x);
        const long sz = gx.size();
        for (int r = 0; r < times; ++r) {
          const T* src = n->grad.data() + static_cast<long>(r) * sz;
          for (long i = 0; i < sz; ++i) gx[i] += src[i];
        }
      };
    return n;
  }

  // [C,H,W] -> [1,H,W], mean over channels.
  Node* mean_ch(Node* x) {
    const Shape& xs = x->v().shape;
    if (xs.rank != 3) throw std::invalid_argument("mean_ch: rank != 3");
    const int c = xs[0];
    const long nn = x->v().size() / c;
    Node* n = make();
    n->needs_grad = x->needs_grad;
    n->val = Tensor<T>(Shape{1, xs[1], xs[2]});
    const Tensor<T>& xv = x->v();
    for (long i = 0; i < nn; ++i) {
      double s = 0;
      for (int ch = 0; ch < c; ++ch) s += xv[static_cast<long>(ch) * nn + i];
      n->val[i] = static_cast<T>(s / c);
    }
    if (n->needs_grad)
      n->backfn = [this, n, x, c, nn] {
        Tensor<T>& gx = grad_of(x);
        const T inv = T(1) / static_cast<T>(c);
        for (long i = 0; i < nn; ++i) {
          const T g = n->grad[i] * inv;
          for (int ch = 0; ch < c; ++ch) gx[static_cast<long>(ch) * nn + i] += g;
        }
      };
    return n;
  }

  // N maps [C,H,W] -> volume [C,N,H,W].
  Node* stack_views(const std::vector<Node*>& xs) {
    if (xs.empty()) throw std::invalid_argument("stack_views: empty");
    const Shape& s0 = xs[0]->v().shape;
    if (s0.rank != 3) throw std::invalid_argument("stack_views: inputs must be rank 3");
    for (Node* x : xs)
      if (x->v().shape != s0) throw std::invalid_argument("stack_views: shape mismatch");
    const int c = s0[0], h = s0[1], w = s0[2];
    const int nviews = static_cast<int>(xs.size());
    const long hw = static_cast<long>(h) * w;
    Node* n = make();
    for (Node* x : xs) n->needs_grad = n->needs_grad || x->needs_grad;
    n->val = Tensor<T>(Shape{c, nviews, h, w});
    for (int j = 0; j < nviews; ++j) {
      const Tensor<T>& xv = xs[static_cast<size_t>(j)]->v();
      for (int ch = 0; ch < c; ++ch)
        std::memcpy(n->val.data() + (static_cast<long>(ch) * nviews + j) * hw,
                    xv.data() + static_cast<long>(ch) * hw,
                    static_cast<size_t>(hw) * sizeof(T));
    }
    if (n->needs_grad) {
      auto list = std::make_shared<std::vector<Node*>>(xs);
      n->backfn = [this, n, list, c, nviews, hw] {
        for (int j = 0; j < nviews; ++j) {
          Node* x = (*list)[static_cast<size_t>(j)];
          if (!x->needs_grad) continue;
          Tensor<T>& gx = grad_of(x);
          for (int ch = 0; ch < c; ++ch) {
            const T* src = n->grad.data() + (static_cast<long>(ch) * nviews + j) * hw;
            T* dst = gx.data() + static_cast<long>(ch) * hw;
            for (long i = 0; i < hw; ++i) dst[i] += src[i];
          }
        }
      };
    }
    return n;
  }

  // Volume [C,N,H,W] -> map [C,H,W] at view j.
  Node* slice_view(Node* x, int j) {
    const Shape& xs = x->v().shape;
    if (xs.rank != 4 || j < 0 || j >= xs[1])
      throw std::invalid_argument("slice_view: bad index");
    const int c = xs[0], nviews = xs[1], h = xs[2], w = xs[3];
    const long hw = static_cast<long>(h) * w;
    Node* n = make();
    n->needs_grad = x->needs_grad;
    n->val = Tensor<T>(Shape{c, h, w});
    for (int ch = 0; ch < c; ++ch)
      std::memcpy(n->val.data() + static_cast<long>(ch) * hw,
                  x->v().data() + (static_cast<long>(ch) * nviews + j) * hw,
                  static_cast<size_t>(hw) * sizeof(T));
    if (n->needs_grad)
      n->backfn = [this, n, x, c, nviews, j, hw] {
        Tensor<T>& gx = grad_of(x);
        for (int ch = 0; ch < c; ++ch) {
          const T* src = n->grad.data() + static_cast<long>(ch) * hw;
          T* dst = gx.data() + (static_cast<long>(ch) * nviews + j) * hw;
          for (long i = 0; i < hw; ++i) dst[i] += src[i];
        }
      };
    return n;
  }

  // Pads the view axis cyclically by w on both sides: [C,N,H,W] ->
  // [C,N+2w,H,W], out view j reads source view ((j-w) mod N + N) mod N.
  Node* cyclic_pad_views(Node* x, int w) {
    const Shape& xs = x->v().shape;
    if (xs.rank != 4) throw std::invalid_argument("cyclic_pad_views: rank != 4");
    const int c = xs[0], nviews = xs[1], h = xs[2], wd = xs[3];
    const int no = nviews + 2 * w;
    const long hw = static_cast<long>(h) * wd;
    Node* n = make();
    n->needs_grad = x->needs_grad;
    n->val = Tensor<T>(Shape{c, no, h, wd});
    for (int j = 0; j < no; ++j) {
      const int src = ((j - w) % nviews + nviews) % nviews;
      for (int ch = 0; ch < c; ++ch)
        std::memcpy(n->val.data() + (static_cast<long>(ch) * no + j) * hw,
                    x->v().data() + (static_cast<long>(ch) * nviews + src) * hw,
                    static_cast<size_t>(hw) * sizeof(T));
    }
    if (n->needs_grad)
      n->backfn = [this, n, x, c, nviews, w, no, hw] {
        Tensor<T>& gx = grad_of(x);
        for (int j = 0; j < no; ++j) {
          const int src = ((j - w) % nviews + nviews) % nviews;
          for (int ch = 0; ch < c; ++ch) {
            const T* g = n->grad.data() + (static_cast<long>(ch) * no + j) * hw;
            T* dst = gx.data() + (static_cast<long>(ch) * nviews + src) * hw;
            for (long i = 0; i < hw; ++i) dst[i] += g[i];
          }
        }
      };
    return n;
  }

  // --- reductions ------------------------------------------------------

  // Scalar mean |a - b|; subgradient at 0 is 0.
  Node* mean_abs_diff(Node* a, Node* b) {
    check_same(a, b, "mean_abs_diff");
    const long nn = a->v().size();
    Node* n = make();
    n->needs_grad = a->needs_grad || b->needs_grad;
    n->val = Tensor<T>((Shape()));
    const Tensor<T>&av = a->v(), &bv = b->v();
    double s = 0;
    for (long i = 0; i < nn; ++i) s += std::abs(static_cast<double>(av[i]) - bv[i]);
    n->val[0] = static_cast<T>(s / nn);
    if (n->needs_grad)
      n->backfn = [this, n, a, b, nn] {
        const Tensor<T>&av = a->v(), &bv = b->v();
        const T g = n->grad[0] / static_cast<T>(nn);
        Tensor<T>* ga = a->needs_grad ? &grad_of(a) : nullptr;
        Tensor<T>* gb = b->needs_grad ? &grad_of(b) : nullptr;
        for (long i = 0; i < nn; ++i) {
          const T d = av[i] - bv[i];
          const T sg = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
          if (ga) (*ga)[i] += g * sg;
          if (gb) (*gb)[i] -= g * sg;
        }
      };
    return n;
  }

  // Scalar mean of all elements.
  Node* mean_all(Node* x) {
    const long nn = x->v().size();
    Node* n = make();
    n->needs_grad = x->needs_grad;
    n->val = Tensor<T>((Shape()));
    const Tensor<T>& xv = x->v();
    double s = 0;
    for (long i = 0; i < nn; ++i) s += xv[i];
    n->val[0] = static_cast<T>(s / nn);
    if (n->needs_grad)
      n->backfn = [this, n, x, nn] {
        Tensor<T>& gx = grad_of(x);
        const T g = n->grad[0] / static_cast<T>(nn);
        for (long i = 0; i < nn; ++i) gx[i] += g;
      };
    return n;
  }

  // --- driving ---------------------------------------------------------

  // Seeds d(loss)/d(loss) = seed and sweeps the tape; afterwards adds each
  // trainable leaf's grad into its Parameter.
  void backward(Node* loss, T seed = T(1)) {
    if (loss->v().shape.rank != 0) throw std::invalid_argument("backward: loss not scalar");
    grad_of(loss)[0] += seed;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
      if (!it->grad.empty() && it->backfn) it->backfn();
    for (auto& [p, node] : params_)
      if (!node->grad.empty())
        for (long i = 0; i < p->grad.size(); ++i) p->grad[i] += node->grad[i];
  }

  static T value(Node* n) { return n->v()[0]; }

  size_t node_count() const { return nodes_.size(); }

 private:
  enum class BinKind { Add, Sub, Mul };

  std::deque<Node> nodes_;
  std::vector<std::pair<ParameterT<T>*, Node*>> params_;

  Node* make() {
    nodes_.emplace_back();
    return &nodes_.back();
  }

  Node* make_like(Node* x) {
    Node* n = make();
    n->needs_grad = x->needs_grad;
    n->val = Tensor<T>(x->v().shape);
    return n;
  }

  void check_same(Node* a, Node* b, const char* op) {
    if (a->v().shape != b->v().shape)
      throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                  a->v().shape.str() + " vs " + b->v().shape.str());
  }

  Tensor<T>& grad_of(Node* n) {
    if (n->grad.empty()) n->grad = Tensor<T>(n->v().shape);
    return n->grad;
  }

  template <typename F>
  Node* binary(Node* a, Node* b, F f, BinKind kind) {
    check_same(a, b, "binary");
    Node* n = make();
    n->needs_grad = a->needs_grad || b->needs_grad;
    n->val = Tensor<T>(a->v().shape);
    const Tensor<T>&av = a->v(), &bv = b->v();
    for (long i = 0; i < av.size(); ++i) n->val[i] = f(av[i], bv[i]);
    if (n->needs_grad)
      n->backfn = [this, n, a, b, kind] {
        const long nn = n->grad.size();
        switch (kind) {
          case BinKind::Add: {
            if (a->needs_grad) {
              Tensor<T>& ga = grad_of(a);
              for (long i = 0; i < nn; ++i) ga[i] += n->grad[i];
            }
            if (b->needs_grad) {
              Tensor<T>& gb = grad_of(b);
              for (long i = 0; i < nn; ++i) gb[i] += n->grad[i];
            }
            break;
          }
          case BinKind::Sub: {
            if (a->needs_grad) {
              Tensor<T>& ga = grad_of(a);
              for (long i = 0; i < nn; ++i) ga[i] += n->grad[i];
            }
            if (b->needs_grad) {
              Tensor<T>& gb = grad_of(b);
              for (long i = 0; i < nn; ++i) gb[i] -= n->grad[i];
            }
            break;
          }
          case BinKind::Mul: {
            const Tensor<T>&av = a->v(), &bv = b->v();
            if (a->needs_grad) {
              Tensor<T>& ga = grad_of(a);
              for (long i = 0; i < nn; ++i) ga[i] += bv[i] * n->grad[i];
            }
            if (b->needs_grad) {
              Tensor<T>& gb = grad_of(b);
              for (long i = 0; i < nn; ++i) gb[i] += av[i] * n->grad[i];
            }
            break;
          }
        }
      };
    return n;
  }
};

template <typename T>
using NodeP = typename Graph<T>::Node*;

}  // namespace draw
