#pragma once
// The networks: domain transfer F, depth rotator G1, 3D refiner G2, shared
// encoder (spatial shape head P + global appearance head A), shared decoder,
// two pairwise patch critics, and the volume critic.  One ModelSet owns a
// single copy of every parameter; construction order is fixed so a seed fully
// determines the initialization.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "draw/graph.hpp"
#include "draw/nnblocks.hpp"
#include "draw/params.hpp"
#include "draw/rng.hpp"

namespace draw {

struct ModelConfig {
  int image_size = 64;
  int n_views = 8;
  // domain transfer
  int f_c1 = 24, f_c2 = 48, f_c3 = 96;
  // shared encoder / decoder
  int enc_c1 = 32, enc_c2 = 64, enc_c3 = 128;
  int shape_ch = 64;  // spatial shape code channels at the bottleneck
  int app_dim = 64;   // appearance vector length
  int dec_c1 = 96, dec_c2 = 48, dec_c3 = 24, dec_c4 = 16;
  // rotator
  int g1_c1 = 32, g1_hidden = 48, g1_d1 = 24, g1_d2 = 16;
  // refiner
  int g2_hidden = 8;
  // critics
  int cr_c1 = 32, cr_c2 = 64, cr_c3 = 96;
  int dv_c1 = 16, dv_c2 = 32, dv_c3 = 48;

  int bottleneck() const { return image_size / 8; }

  void validate() const {
    if (image_size < 8 || image_size % 8 != 0)
      throw std::invalid_argument("model: image_size must be a positive multiple of 8");
    if (n_views < 1) throw std::invalid_argument("model: n_views must be >= 1");
  }
};

// --- F: RGB -> (raw depth, mask); the transfer output is mask * raw --------

template <typename T>
struct DomainTransferT {
  ConvNormReluT<T> stem, down1, down2;
  ResBlock2dT<T> res1, res2;
  UpConvT<T> up1, up2;
  Conv2dT<T> head;

  DomainTransferT(Rng& rng, const ModelConfig& c)
      : stem(rng, 3, c.f_c1, 3, 1, 1),
        down1(rng, c.f_c1, c.f_c2, 3, 2, 1),
        down2(rng, c.f_c2, c.f_c3, 3, 2, 1),
        res1(rng, c.f_c3),
        res2(rng, c.f_c3),
        up1(rng, c.f_c3, c.f_c2),
        up2(rng, c.f_c2, c.f_c1),
        head(rng, c.f_c1, 2, 3, 1, 1) {}

  struct Out {
    NodeP<T> raw;   // [1,H,W] unmasked depth
    NodeP<T> mask;  // [1,H,W]
    NodeP<T> s0;    // mask * raw
  };

  Out forward(Graph<T>& g, NodeP<T> x) {
    NodeP<T> h = stem.forward(g, x);
    h = down1.forward(g, h);
    h = down2.forward(g, h);
    h = res1.forward(g, h);
    h = res2.forward(g, h);
    h = up1.forward(g, h);
    h = up2.forward(g, h);
    NodeP<T> o = g.sigmoid(head.forward(g, h));
    NodeP<T> raw = g.slice_ch(o, 0, 1);
    NodeP<T> mask = g.slice_ch(o, 1, 2);
    return {raw, mask, g.mul(mask, raw)};
  }

  void collect(const std::string& p, ParamListT<T>& out) {
    stem.collect(p + ".stem", out);
    down1.collect(p + ".down1", out);
    down2.collect(p + ".down2", out);
    res1.collect(p + ".res1", out);
    res2.collect(p + ".res2", out);
    up1.collect(p + ".up1", out);
    up2.collect(p + ".up2", out);
    head.collect(p + ".head", out);
  }
};

// --- shared encoder: 3-channel image -> (shape code, appearance vector) ----

template <typename T>
struct SharedEncoderT {
  ConvNormReluT<T> e1, e2, e3;
  ResBlock2dT<T> res;
  Conv2dT<T> p_head;
  FcT<T> a_head;

  SharedEncoderT(Rng& rng, const ModelConfig& c, int in_ch = 3)
      : e1(rng, in_ch, c.enc_c1, 3, 2, 1),
        e2(rng, c.enc_c1, c.enc_c2, 3, 2, 1),
        e3(rng, c.enc_c2, c.enc_c3, 3, 2, 1),
        res(rng, c.enc_c3),
        p_head(rng, c.enc_c3, c.shape_ch, 3, 1, 1),
        a_head(rng, c.enc_c3, c.app_dim) {}

  struct Codes {
    NodeP<T> shape;  // [shape_ch, b, b]
    NodeP<T> app;    // [app_dim]
  };

  Codes forward(Graph<T>& g, NodeP<T> x) {
    NodeP<T> h = e1.forward(g, x);
    h = e2.forward(g, h);
    h = e3.forward(g, h);
    h = res.forward(g, h);
    return {p_head.forward(g, h), a_head.forward(g, g.gap(h))};
  }

  void collect(const std::string& p, ParamListT<T>& out) {
    e1.collect(p + ".e1", out);
    e2.collect(p + ".e2", out);
    e3.collect(p + ".e3", out);
    res.collect(p + ".res", out);
    p_head.collect(p + ".p_head", out);
    a_head.collect(p + ".a_head", out);
  }
};

// --- shared decoder: (shape code, appearance) -> 3-channel image -----------

template <typename T>
struct SharedDecoderT {
  ConvNormReluT<T> fuse;
  ResBlock2dT<T> res;
  UpConvT<T> u1, u2, u3;
  Conv2dT<T> head;

  SharedDecoderT(Rng& rng, const ModelConfig& c)
      : fuse(rng, c.shape_ch + c.app_dim, c.dec_c1, 3, 1, 1),
        res(rng, c.dec_c1),
        u1(rng, c.dec_c1, c.dec_c2),
        u2(rng, c.dec_c2, c.dec_c3),
        u3(rng, c.dec_c3, c.dec_c4),
        head(rng, c.dec_c4, 3, 3, 1, 1) {}

  NodeP<T> forward(Graph<T>& g, NodeP<T> shape_code, NodeP<T> app) {
    const Shape& s = shape_code->v().shape;
    NodeP<T> a = g.broadcast_hw(app, s[1], s[2]);
    NodeP<T> h = fuse.forward(g, g.concat_ch(shape_code, a));
    h = res.forward(g, h);
    h = u1.forward(g, h);
    h = u2.forward(g, h);
    h = u3.forward(g, h);
    return g.sigmoid(head.forward(g, h));
  }

  void collect(const std::string& p, ParamListT<T>& out) {
    fuse.collect(p + ".fuse", out);
    res.collect(p + ".res", out);
    u1.collect(p + ".u1", out);
    u2.collect(p + ".u2", out);
    u3.collect(p + ".u3", out);
    head.collect(p + ".head", out);
  }
};

// --- G1: recurrent depth rotator -------------------------------------------
// View 0 is the input itself (pass-through); each recurrent step emits the
// next view in azimuth order, decoding the ConvLSTM state with a skip from
// the input encoding.

template <typename T>
struct RotatorT {
  ConvNormReluT<T> enc1, enc2;
  ConvLSTMCellT<T> cell;
  UpConvT<T> dec1;
  ConvNormReluT<T> dec_fuse;
  UpConvT<T> dec2;
  Conv2dT<T> head;

  RotatorT(Rng& rng, const ModelConfig& c)
      : enc1(rng, 1, c.g1_c1, 3, 2, 1),
        enc2(rng, c.g1_c1, c.g1_hidden, 3, 2, 1),
        cell(rng, c.g1_hidden, c.g1_hidden),
        dec1(rng, c.g1_hidden, c.g1_c1),
        dec_fuse(rng, 2 * c.g1_c1, c.g1_d1, 3, 1, 1),
        dec2(rng, c.g1_d1, c.g1_d2),
        head(rng, c.g1_d2, 1, 3, 1, 1) {}

  // Returns n views; out[0] is s0 itself.
  std::vector<NodeP<T>> forward(Graph<T>& g, NodeP<T> s0, int n) {
    std::vector<NodeP<T>> out;
    out.reserve(static_cast<size_t>(n));
    out.push_back(s0);
    if (n == 1) return out;
    NodeP<T> skip = enc1.forward(g, s0);
    NodeP<T> feat = enc2.forward(g, skip);
    const Shape& fs = feat->v().shape;
    auto state = cell.zero_state(g, fs[1], fs[2]);
    for (int t = 1; t < n; ++t) {
      state = cell.step(g, feat, state);
      NodeP<T> d = dec1.forward(g, state.h);
      d = dec_fuse.forward(g, g.concat_ch(d, skip));
      d = dec2.forward(g, d);
      out.push_back(g.sigmoid(head.forward(g, d)));
    }
    return out;
  }

  void collect(const std::string& p, ParamListT<T>& out) {
    enc1.collect(p + ".enc1", out);
    enc2.collect(p + ".enc2", out);
    cell.collect(p + ".cell", out);
    dec1.collect(p + ".dec1", out);
    dec_fuse.collect(p + ".dec_fuse", out);
    dec2.collect(p + ".dec2", out);
    head.collect(p + ".head", out);
  }
};

// --- G2: cyclic 3D refiner -------------------------------------------------
// Residual tower over the [1,N,H,W] volume.  The last conv starts at zero so
// the refiner is the identity at init, and every conv pads the view axis
// cyclically, making the whole map equivariant to cyclic view shifts.

template <typename T>
struct RefinerT {
  CyclicConv3dT<T> stem;
  InstanceNormT<T> stem_norm;
  ResBlock3dCyclicT<T> res;
  CyclicConv3dT<T> final_conv;

  RefinerT(Rng& rng, const ModelConfig& c)
      : stem(rng, 1, c.g2_hidden),
        stem_norm(c.g2_hidden),
        res(rng, c.g2_hidden),
        final_conv(rng, c.g2_hidden, 1) {
    final_conv.conv.zero_init();
  }

  NodeP<T> forward(Graph<T>& g, NodeP<T> vol) {
    NodeP<T> h = g.relu(stem_norm.forward(g, stem.forward(g, vol)));
    h = res.forward(g, h);
    h = final_conv.forward(g, h);
    return g.add(vol, h);
  }

  void collect(const std::string& p, ParamListT<T>& out) {
    stem.collect(p + ".stem", out);
    stem_norm.collect(p + ".stem_norm", out);
    res.collect(p + ".res", out);
    final_conv.collect(p + ".final", out);
  }
};

// --- pairwise patch critic -------------------------------------------------
// Scores a channel-concatenated (condition, candidate) pair; patch map is
// averaged to one scalar with no squashing (least-squares targets).

template <typename T>
struct CriticPairT {
  Conv2dT<T> c1;
  Conv2dT<T> c2, c3;
  InstanceNormT<T> n2, n3;
  Conv2dT<T> head;

  CriticPairT(Rng& rng, const ModelConfig& c)
      : c1(rng, 6, c.cr_c1, 3, 2, 1),
        c2(rng, c.cr_c1, c.cr_c2, 3, 2, 1),
        c3(rng, c.cr_c2, c.cr_c3, 3, 2, 1),
        n2(c.cr_c2),
        n3(c.cr_c3),
        head(rng, c.cr_c3, 1, 3, 1, 1) {}

  NodeP<T> forward(Graph<T>& g, NodeP<T> cond, NodeP<T> cand) {
    NodeP<T> h = g.lrelu(c1.forward(g, g.concat_ch(cond, cand)));
    h = g.lrelu(n2.forward(g, c2.forward(g, h)));
    h = g.lrelu(n3.forward(g, c3.forward(g, h)));
    return g.mean_all(head.forward(g, h));
  }

  void collect(const std::string& p, ParamListT<T>& out) {
    c1.collect(p + ".c1", out);
    c2.collect(p + ".c2", out);
    c3.collect(p + ".c3", out);
    n2.collect(p + ".n2", out);
    n3.collect(p + ".n3", out);
    head.collect(p + ".head", out);
  }
};

// --- volume critic ---------------------------------------------------------
// Input is the condition volume and candidate volume stacked on the channel
// axis: [2,N,H,W].  Strides leave the view axis intact.

template <typename T>
struct VolumeCriticT {
  Conv3dT<T> c1, c2, c3;
  InstanceNormT<T> n2, n3;
  Conv3dT<T> head;

  VolumeCriticT(Rng& rng, const ModelConfig& c)
      : c1(rng, 2, c.dv_c1, 3, 1, 2, 2, 1, 1, 1),
        c2(rng, c.dv_c1, c.dv_c2, 3, 1, 2, 2, 1, 1, 1),
        c3(rng, c.dv_c2, c.dv_c3, 3, 1, 2, 2, 1, 1, 1),
        n2(c.dv_c2),
        n3(c.dv_c3),
        head(rng, c.dv_c3, 1, 3, 1, 1, 1, 1, 1, 1) {}

  NodeP<T> forward(Graph<T>& g, NodeP<T> cond_vol, NodeP<T> cand_vol) {
    NodeP<T> h = g.lrelu(c1.forward(g, g.concat_ch(cond_vol, cand_vol)));
    h = g.lrelu(n2.forward(g, c2.forward(g, h)));
    h = g.lrelu(n3.forward(g, c3.forward(g, h)));
    return g.mean_all(head.forward(g, h));
  }

  void collect(const std::string& p, ParamListT<T>& out) {
    c1.collect(p + ".c1", out);
    c2.collect(p + ".c2", out);
    c3.collect(p + ".c3", out);
    n2.collect(p + ".n2", out);
    n3.collect(p + ".n3", out);
    head.collect(p + ".head", out);
  }
};

// --- the full set ----------------------------------------------------------

template <typename T>
struct ModelSetT {
 private:
  Rng rng_;  // declared first: modules below consume it during construction

 public:
  ModelConfig cfg;
  DomainTransferT<T> f;
  SharedEncoderT<T> enc;
  SharedDecoderT<T> dec;
  RotatorT<T> g1;
  RefinerT<T> g2;
  CriticPairT<T> d_dt;
  CriticPairT<T> d_ir;
  VolumeCriticT<T> d_v;

  ModelSetT(const ModelConfig& c, uint64_t seed)
      : rng_((c.validate(), Rng(seed))),
        cfg(c),
        f(rng_, c),
        enc(rng_, c),
        dec(rng_, c),
        g1(rng_, c),
        g2(rng_, c),
        d_dt(rng_, c),
        d_ir(rng_, c),
        d_v(rng_, c) {}

  static const std::vector<std::string>& group_names() {
    static const std::vector<std::string> names{"d_dt", "d_ir", "d_v", "dec",
                                                "enc",  "f",    "g1",  "g2"};
    return names;
  }

  ParamListT<T> params(const std::vector<std::string>& groups) {
    ParamListT<T> out;
    for (const std::string& name : groups) {
      if (name == "f") f.collect("f", out);
      else if (name == "enc") enc.collect("enc", out);
      else if (name == "dec") dec.collect("dec", out);
      else if (name == "g1") g1.collect("g1", out);
      else if (name == "g2") g2.collect("g2", out);
      else if (name == "d_dt") d_dt.collect("d_dt", out);
      else if (name == "d_ir") d_ir.collect("d_ir", out);
      else if (name == "d_v") d_v.collect("d_v", out);
      else throw std::invalid_argument("model: unknown parameter group " + name);
    }
    sort_params(out);
    return out;
  }

  ParamListT<T> all_params() { return params(group_names()); }
};

// --- baseline translators --------------------------------------------------
// Plain hourglass image-to-image nets for the ablation baselines: HAL maps a
// tiled target depth map to RGB (3 input channels), WIR maps the reference
// image stacked with the tiled target depth (6 channels).  Neither carries a
// shape/appearance factorization.

template <typename T>
struct TranslatorT {
  ConvNormReluT<T> stem, down1, down2;
  ResBlock2dT<T> res1, res2;
  UpConvT<T> up1, up2;
  Conv2dT<T> head;

  TranslatorT(Rng& rng, const ModelConfig& c, int in_ch)
      : stem(rng, in_ch, c.f_c1, 3, 1, 1),
        down1(rng, c.f_c1, c.f_c2, 3, 2, 1),
        down2(rng, c.f_c2, c.f_c3, 3, 2, 1),
        res1(rng, c.f_c3),
        res2(rng, c.f_c3),
        up1(rng, c.f_c3, c.f_c2),
        up2(rng, c.f_c2, c.f_c1),
        head(rng, c.f_c1, 3, 3, 1, 1) {}

  NodeP<T> forward(Graph<T>& g, NodeP<T> x) {
    NodeP<T> h = stem.forward(g, x);
    h = down1.forward(g, h);
    h = down2.forward(g, h);
    h = res1.forward(g, h);
    h = res2.forward(g, h);
    h = up1.forward(g, h);
    h = up2.forward(g, h);
    return g.sigmoid(head.forward(g, h));
  }

  void collect(const std::string& p, ParamListT<T>& out) {
    stem.collect(p + ".stem", out);
    down1.collect(p + ".down1", out);
    down2.collect(p + ".down2", out);
    res1.collect(p + ".res1", out);
    res2.collect(p + ".res2", out);
    up1.collect(p + ".up1", out);
    up2.collect(p + ".up2", out);
    head.collect(p + ".head", out);
  }
};

enum class BaselineKind { hal, wir };

inline int baseline_in_ch(BaselineKind k) { return k == BaselineKind::hal ? 3 : 6; }

template <typename T>
struct BaselineSetT {
 private:
  Rng rng_;

 public:
  ModelConfig cfg;
  TranslatorT<T> net;
  CriticPairT<T> critic;

  BaselineSetT(const ModelConfig& c, uint64_t seed, int in_ch)
      : rng_((c.validate(), Rng(seed))), cfg(c), net(rng_, c, in_ch), critic(rng_, c) {}

  ParamListT<T> params(const std::vector<std::string>& groups) {
    ParamListT<T> out;
    for (const std::string& name : groups) {
      if (name == "net") net.collect("net", out);
      else if (name == "critic") critic.collect("critic", out);
      else throw std::invalid_argument("baseline: unknown parameter group " + name);
    }
    sort_params(out);
    return out;
  }

  ParamListT<T> all_params() { return params({"critic", "net"}); }
};

using BaselineSet = BaselineSetT<float>;

// Four-way recombination used by identity recovery.  Both inputs are
// 3-channel (depth arrives tiled); the shape code comes from the first
// argument of Dec, the appearance from the second.
template <typename T>
struct IrOutT {
  NodeP<T> x0_hat;  // Dec(P(x0), A(x0))
  NodeP<T> s0_hat;  // Dec(P(x0), A(sp))
  NodeP<T> xp_hat;  // Dec(P(sp), A(x0))
  NodeP<T> sp_hat;  // Dec(P(sp), A(sp))
};

template <typename T>
IrOutT<T> ir_forward(Graph<T>& g, SharedEncoderT<T>& enc, SharedDecoderT<T>& dec,
                     NodeP<T> x0, NodeP<T> sp_tiled) {
  auto cx = enc.forward(g, x0);
  auto cs = enc.forward(g, sp_tiled);
  return {dec.forward(g, cx.shape, cx.app), dec.forward(g, cx.shape, cs.app),
          dec.forward(g, cs.shape, cx.app), dec.forward(g, cs.shape, cs.app)};
}

using ModelSet = ModelSetT<float>;

}  // namespace draw
