#pragma once
// Reusable layers.  Each module owns its parameters, binds them into a Graph
// on forward(), and reports them via collect() under a dotted name prefix.
// Weight init is N(0, 0.02); biases start at zero, norm gains at one.

#include <string>
#include <utility>
#include <vector>

#include "draw/graph.hpp"
#include "draw/params.hpp"
#include "draw/rng.hpp"

namespace draw {

template <typename T>
struct Conv2dT {
  ParameterT<T> w, b;
  int stride, pad;

  Conv2dT(Rng& rng, int ci, int co, int k, int stride_, int pad_)
      : w(Shape{co, ci, k, k}), b(Shape{co}), stride(stride_), pad(pad_) {
    w.init_normal(rng, 0.02);
  }

  NodeP<T> forward(Graph<T>& g, NodeP<T> x) {
    return g.conv2d(x, g.param(&w), g.param(&b), stride, pad);
  }

  void collect(const std::string& prefix, ParamListT<T>& out) {
    out.push_back({prefix + ".w", &w});
    out.push_back({prefix + ".b", &b});
  }
};

template <typename T>
struct Conv3dT {
  ParameterT<T> w, b;
  int sd, sh, sw, pd, ph, pw;

  Conv3dT(Rng& rng, int ci, int co, int k, int sd_, int sh_, int sw_, int pd_, int ph_,
          int pw_)
      : w(Shape{co, ci, k, k, k}), b(Shape{co}), sd(sd_), sh(sh_), sw(sw_), pd(pd_),
        ph(ph_), pw(pw_) {
    w.init_normal(rng, 0.02);
  }

  void zero_init() { w.value.fill(T(0)); }

  NodeP<T> forward(Graph<T>& g, NodeP<T> x) {
    return g.conv3d(x, g.param(&w), g.param(&b), sd, sh, sw, pd, ph, pw);
  }

  void collect(const std::string& prefix, ParamListT<T>& out) {
    out.push_back({prefix + ".w", &w});
    out.push_back({prefix + ".b", &b});
  }
};

template <typename T>
struct InstanceNormT {
  ParameterT<T> gamma, beta;

  explicit InstanceNormT(int c) : gamma(Shape{c}), beta(Shape{c}) {
    gamma.value.fill(T(1));
  }

  NodeP<T> forward(Graph<T>& g, NodeP<T> x) {
    return g.instance_norm(x, g.param(&gamma), g.param(&beta));
  }

  void collect(const std::string& prefix, ParamListT<T>& out) {
    out.push_back({prefix + ".gamma", &gamma});
    out.push_back({prefix + ".beta", &beta});
  }
};

template <typename T>
struct FcT {
  ParameterT<T> w, b;

  FcT(Rng& rng, int ci, int co) : w(Shape{co, ci}), b(Shape{co}) {
    w.init_normal(rng, 0.02);
  }

  NodeP<T> forward(Graph<T>& g, NodeP<T> x) {
    return g.fc(x, g.param(&w), g.param(&b));
  }

  void collect(const std::string& prefix, ParamListT<T>& out) {
    out.push_back({prefix + ".w", &w});
    out.push_back({prefix + ".b", &b});
  }
};

// conv + instance norm + relu, the standard downward unit.
template <typename T>
struct ConvNormReluT {
  Conv2dT<T> conv;
  InstanceNormT<T> norm;

  ConvNormReluT(Rng& rng, int ci, int co, int k, int stride, int pad)
      : conv(rng, ci, co, k, stride, pad), norm(co) {}

  NodeP<T> forward(Graph<T>& g, NodeP<T> x) {
    return g.relu(norm.forward(g, conv.forward(g, x)));
  }

  void collect(const std::string& prefix, ParamListT<T>& out) {
    conv.collect(prefix + ".conv", out);
    norm.collect(prefix + ".norm", out);
  }
};

// Nearest 2x then conv + norm + relu, the upward unit.
template <typename T>
struct UpConvT {
  ConvNormReluT<T> body;

  UpConvT(Rng& rng, int ci, int co) : body(rng, ci, co, 3, 1, 1) {}

  NodeP<T> forward(Graph<T>& g, NodeP<T> x) {
    return body.forward(g, g.upsample2x(x));
  }

  void collect(const std::string& prefix, ParamListT<T>& out) {
    body.collect(prefix, out);
  }
};

template <typename T>
struct ResBlock2dT {
  Conv2dT<T> c1, c2;
  InstanceNormT<T> n1, n2;

  ResBlock2dT(Rng& rng, int c)
      : c1(rng, c, c, 3, 1, 1), c2(rng, c, c, 3, 1, 1), n1(c), n2(c) {}

  NodeP<T> forward(Graph<T>& g, NodeP<T> x) {
    NodeP<T> h = g.relu(n1.forward(g, c1.forward(g, x)));
    h = n2.forward(g, c2.forward(g, h));
    return g.add(x, h);
  }

  void collect(const std::string& prefix, ParamListT<T>& out) {
    c1.collect(prefix + ".c1", out);
    c2.collect(prefix + ".c2", out);
    n1.collect(prefix + ".n1", out);
    n2.collect(prefix + ".n2", out);
  }
};

// 3D conv whose view axis wraps around; spatial padding stays zero-filled.
template <typename T>
struct CyclicConv3dT {
  Conv3dT<T> conv;

  CyclicConv3dT(Rng& rng, int ci, int co) : conv(rng, ci, co, 3, 1, 1, 1, 0, 1, 1) {}

  NodeP<T> forward(Graph<T>& g, NodeP<T> x) {
    return conv.forward(g, g.cyclic_pad_views(x, 1));
  }

  void collect(const std::string& prefix, ParamListT<T>& out) {
    conv.collect(prefix, out);
  }
};

template <typename T>
struct ResBlock3dCyclicT {
  CyclicConv3dT<T> c1, c2;
  InstanceNormT<T> n1, n2;

  ResBlock3dCyclicT(Rng& rng, int c) : c1(rng, c, c), c2(rng, c, c), n1(c), n2(c) {}

  NodeP<T> forward(Graph<T>& g, NodeP<T> x) {
    NodeP<T> h = g.relu(n1.forward(g, c1.forward(g, x)));
    h = n2.forward(g, c2.forward(g, h));
    return g.add(x, h);
  }

  void collect(const std::string& prefix, ParamListT<T>& out) {
    c1.collect(prefix + ".c1", out);
    c2.collect(prefix + ".c2", out);
    n1.collect(prefix + ".n1", out);
    n2.collect(prefix + ".n2", out);
  }
};

// Convolutional LSTM cell with fused gate convolution over [x; h].  Gate
// order is i, f, g, o.  With zero biases, zero state and zero input map to a
// zero next state.
template <typename T>
struct ConvLSTMCellT {
  Conv2dT<T> gates;
  int hidden_ch;

  ConvLSTMCellT(Rng& rng, int in_ch, int hidden_ch_)
      : gates(rng, in_ch + hidden_ch_, 4 * hidden_ch_, 3, 1, 1), hidden_ch(hidden_ch_) {}

  struct State {
    NodeP<T> h;
    NodeP<T> c;
  };

  State zero_state(Graph<T>& g, int h, int w) {
    Tensor<T> z(Shape{hidden_ch, h, w});
    return {g.constant(z), g.constant(std::move(z))};
  }

  State step(Graph<T>& g, NodeP<T> x, State s) {
    NodeP<T> z = gates.forward(g, g.concat_ch(x, s.h));
    const int c = hidden_ch;
    NodeP<T> i = g.sigmoid(g.slice_ch(z, 0, c));
    NodeP<T> f = g.sigmoid(g.slice_ch(z, c, 2 * c));
    NodeP<T> gg = g.tanh_(g.slice_ch(z, 2 * c, 3 * c));
    NodeP<T> o = g.sigmoid(g.slice_ch(z, 3 * c, 4 * c));
    NodeP<T> c2 = g.add(g.mul(f, s.c), g.mul(i, gg));
    NodeP<T> h2 = g.mul(o, g.tanh_(c2));
    return {h2, c2};
  }

  void collect(const std::string& prefix, ParamListT<T>& out) {
    gates.collect(prefix + ".gates", out);
  }
};

}  // namespace draw
