#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "phenom/param.hpp"

namespace phenom {

enum class OptimizerType { LION, ADAMW };

inline OptimizerType optimizer_from_string(const std::string& s) {
  if (s == "lion") return OptimizerType::LION;
  if (s == "adamw") return OptimizerType::ADAMW;
  throw std::invalid_argument("unknown optimizer: " + s);
}

inline const char* to_string(OptimizerType t) {
  return t == OptimizerType::LION ? "lion" : "adamw";
}

template <typename T>
struct OptimizerState {
  OptimizerType type = OptimizerType::LION;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.05;
  double eps = 1e-8;
  long long t = 0;
  std::vector<std::vector<T>> m, v;  // v is used by AdamW only

  void init(const ParamRegistry<T>& reg) {
    m.clear();
    v.clear();
    for (auto* p : reg.all()) {
      m.emplace_back(p->size(), T(0));
      if (type == OptimizerType::ADAMW) v.emplace_back(p->size(), T(0));
    }
    t = 0;
  }
};

// One decoupled-weight-decay update. Lion: sign of the beta1-interpolated
// momentum drives the step; momentum then updates with beta2. sign(0) = 0.
template <typename T>
void optimizer_step(const ParamRegistry<T>& reg, const Grads<T>& grads, OptimizerState<T>& st,
                    double lr) {
  const auto& params = reg.all();
  if (grads.g.size() != params.size() || st.m.size() != params.size())
    throw std::invalid_argument("optimizer_step: state/gradient shape mismatch");
  st.t += 1;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Param<T>& p = *params[pi];
    const std::vector<T>& g = grads.g[pi];
    std::vector<T>& m = st.m[pi];
    if (g.size() != p.size()) throw std::invalid_argument("optimizer_step: size mismatch");
    if (st.type == OptimizerType::LION) {
      for (size_t i = 0; i < p.size(); ++i) {
        double c = st.beta1 * m[i] + (1.0 - st.beta1) * g[i];
        double u = c > 0.0 ? 1.0 : (c < 0.0 ? -1.0 : 0.0);
        p.w[i] = static_cast<T>(p.w[i] * (1.0 - lr * st.weight_decay) - lr * u);
        m[i] = static_cast<T>(st.beta2 * m[i] + (1.0 - st.beta2) * g[i]);
      }
    } else {
      std::vector<T>& vv = st.v[pi];
      double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
      double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
      for (size_t i = 0; i < p.size(); ++i) {
        m[i] = static_cast<T>(st.beta1 * m[i] + (1.0 - st.beta1) * g[i]);
        vv[i] = static_cast<T>(st.beta2 * vv[i] + (1.0 - st.beta2) * g[i] * g[i]);
        double mhat = m[i] / bc1;
        double vhat = vv[i] / bc2;
        p.w[i] = static_cast<T>(p.w[i] * (1.0 - lr * st.weight_decay) -
                                lr * mhat / (std::sqrt(vhat) + st.eps));
      }
    }
  }
}

}  // namespace phenom
