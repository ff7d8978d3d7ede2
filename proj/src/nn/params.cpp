// SPDX-License-Identifier: Apache-2.0

#include "diffcom/nn/params.hpp"

#include <cassert>
#include <cmath>

#include "diffcom/nn/rng.hpp"

namespace diffcom::nn {

Tensor& ParamStore::ensure(const std::string& name, int64_t rows, int64_t cols,
                           Init init, double arg) {
  auto it = values_.find(name);
  if (it != values_.end()) {
    assert(it->second.rows() == rows && it->second.cols() == cols);
    return it->second;
  }
  Tensor t(rows, cols);
  Rng rng(hash_combine(init_seed_, name));
  switch (init) {
    case Init::kXavier: {
      const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
      for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-limit, limit);
      break;
    }
    case Init::kZeros:
      break;
    case Init::kConstant:
      t.fill(arg);
      break;
    case Init::kSmallNormal: {
      const double s = arg == 0.0 ? 0.01 : arg;
      for (int64_t i = 0; i < t.size(); ++i) t[i] = s * rng.normal();
      break;
    }
  }
  return values_.emplace(name, std::move(t)).first->second;
}

void ParamStore::accumulate_grad(const std::string& name, const Tensor& g) {
  auto it = grads_.find(name);
  if (it == grads_.end()) {
    grads_.emplace(name, g);
    return;
  }
  Tensor& acc = it->second;
  assert(acc.same_shape(g));
  for (int64_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

const Tensor* ParamStore::grad(const std::string& name) const {
  auto it = grads_.find(name);
  return it == grads_.end() ? nullptr : &it->second;
}

void ParamStore::zero_grads() { grads_.clear(); }

void ParamStore::adam_step(double lr, double beta1, double beta2, double eps) {
  ++adam_t_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(adam_t_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(adam_t_));
  for (auto& [name, g] : grads_) {
    Tensor& v = values_.at(name);
    Tensor& m = adam_m_.try_emplace(name, v.rows(), v.cols()).first->second;
    Tensor& s = adam_v_.try_emplace(name, v.rows(), v.cols()).first->second;
    for (int64_t i = 0; i < v.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      s[i] = beta2 * s[i] + (1.0 - beta2) * g[i] * g[i];
      const double mh = m[i] / bc1;
      const double sh = s[i] / bc2;
      v[i] -= lr * mh / (std::sqrt(sh) + eps);
    }
  }
}

}  // namespace diffcom::nn
