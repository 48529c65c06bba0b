#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "phenom/rng.hpp"

namespace phenom {

// A named parameter tensor. `pid` is the index into the model's parameter
// list; gradient buffers live outside the parameter (see Grads) so that
// several threads can differentiate the same model concurrently.
template <typename T>
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<T> w;
  int pid = -1;

  size_t size() const { return w.size(); }
};

template <typename T>
class ParamRegistry {
 public:
  Param<T>& add(Param<T>& p, const std::string& name, std::vector<int> shape) {
    p.name = name;
    p.shape = std::move(shape);
    size_t n = 1;
    for (int d : p.shape) n *= static_cast<size_t>(d);
    p.w.assign(n, T(0));
    p.pid = static_cast<int>(params_.size());
    params_.push_back(&p);
    return p;
  }
  const std::vector<Param<T>*>& all() const { return params_; }
  size_t total_size() const {
    size_t n = 0;
    for (auto* p : params_) n += p->size();
    return n;
  }

 private:
  std::vector<Param<T>*> params_;
};

// Gradient buffers aligned with a ParamRegistry. One instance per thread
// during batched backward; instances are reduced in fixed order afterwards.
template <typename T>
struct Grads {
  std::vector<std::vector<T>> g;

  void init(const ParamRegistry<T>& reg) {
    g.clear();
    for (auto* p : reg.all()) g.emplace_back(p->size(), T(0));
  }
  void zero() {
    for (auto& v : g) std::fill(v.begin(), v.end(), T(0));
  }
  T* of(const Param<T>& p) { return g[p.pid].data(); }
  const T* of(const Param<T>& p) const { return g[p.pid].data(); }

  void add_scaled(const Grads<T>& other, T scale) {
    for (size_t i = 0; i < g.size(); ++i)
      for (size_t j = 0; j < g[i].size(); ++j) g[i][j] += other.g[i][j] * scale;
  }
};

// Truncated normal init (+-2 sigma), the usual ViT weight init.
template <typename T>
void init_trunc_normal(Param<T>& p, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> d(0.0, stddev);
  for (auto& x : p.w) {
    double v = d(rng);
    while (std::abs(v) > 2.0 * stddev) v = d(rng);
    x = static_cast<T>(v);
  }
}

template <typename T>
void init_constant(Param<T>& p, double v) {
  std::fill(p.w.begin(), p.w.end(), static_cast<T>(v));
}

}  // namespace phenom
