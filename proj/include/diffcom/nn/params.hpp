// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "diffcom/nn/tensor.hpp"

namespace diffcom::nn {

enum class Init { kXavier, kZeros, kConstant, kSmallNormal };

// Named parameter set with Adam state. Initialization is a pure function
// of (init_seed, name, shape) so creation order never matters.
class ParamStore {
 public:
  explicit ParamStore(uint64_t init_seed = 0x5eedf00d) : init_seed_(init_seed) {}

  Tensor& ensure(const std::string& name, int64_t rows, int64_t cols,
                 Init init = Init::kXavier, double arg = 0.0);

  bool has(const std::string& name) const { return values_.count(name) != 0; }
  Tensor& value(const std::string& name) { return values_.at(name); }
  const Tensor& value(const std::string& name) const { return values_.at(name); }

  void accumulate_grad(const std::string& name, const Tensor& g);
  const Tensor* grad(const std::string& name) const;
  void zero_grads();

  void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8);

  std::map<std::string, Tensor>& values() { return values_; }
  const std::map<std::string, Tensor>& values() const { return values_; }
  std::map<std::string, Tensor>& adam_m() { return adam_m_; }
  std::map<std::string, Tensor>& adam_v() { return adam_v_; }
  int64_t& adam_t() { return adam_t_; }
  uint64_t init_seed() const { return init_seed_; }
  void set_init_seed(uint64_t s) { init_seed_ = s; }

 private:
  uint64_t init_seed_;
  std::map<std::string, Tensor> values_;
  std::map<std::string, Tensor> grads_;
  std::map<std::string, Tensor> adam_m_, adam_v_;
  int64_t adam_t_ = 0;
};

}  // namespace diffcom::nn
