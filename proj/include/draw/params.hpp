#pragma once
// Trainable parameters and the Adam optimizer.  Modules own their parameters
// and expose them through collect(); a ParamList sorted by name is the
// canonical ordering used by the optimizer, checkpoints, and hashes.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "draw/rng.hpp"
#include "draw/tensor.hpp"

namespace draw {

template <typename T>
struct ParameterT {
  Tensor<T> value;
  Tensor<T> grad;

  ParameterT() = default;
  explicit ParameterT(Shape s) : value(s), grad(s) {}

  void zero_grad() { grad.fill(T(0)); }

  void init_normal(Rng& rng, double stddev) {
    for (long i = 0; i < value.size(); ++i)
      value[i] = static_cast<T>(rng.normal(0.0, stddev));
  }
};

template <typename T>
using ParamListT = std::vector<std::pair<std::string, ParameterT<T>*>>;

template <typename T>
void sort_params(ParamListT<T>& list) {
  std::sort(list.begin(), list.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (size_t i = 1; i < list.size(); ++i)
    if (list[i].first == list[i - 1].first)
      throw std::runtime_error("duplicate parameter name: " + list[i].first);
}

template <typename T>
long param_count(const ParamListT<T>& list) {
  long n = 0;
  for (const auto& [name, p] : list) n += p->value.size();
  return n;
}

template <typename T>
void zero_grads(const ParamListT<T>& list) {
  for (const auto& [name, p] : list) p->zero_grad();
}

// Classic Adam (bias-corrected, eps outside the sqrt's argument).
template <typename T>
class AdamT {
 public:
  struct Config {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  AdamT(ParamListT<T> params, Config cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& [name, p] : params_) {
      m_.emplace_back(p->value.shape);
      v_.emplace_back(p->value.shape);
    }
  }

  const ParamListT<T>& params() const { return params_; }

  void zero_grad() { zero_grads(params_); }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (size_t k = 0; k < params_.size(); ++k) {
      ParameterT<T>* p = params_[k].second;
      Tensor<T>& m = m_[k];
      Tensor<T>& v = v_[k];
      for (long i = 0; i < p->value.size(); ++i) {
        const double g = p->grad[i];
        const double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        const double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        p->value[i] -= static_cast<T>(cfg_.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.eps));
      }
    }
  }

 private:
  ParamListT<T> params_;
  Config cfg_;
  std::vector<Tensor<T>> m_, v_;
  long t_ = 0;
};

using Parameter = ParameterT<float>;
using ParamList = ParamListT<float>;
using Adam = AdamT<float>;

}  // namespace draw
