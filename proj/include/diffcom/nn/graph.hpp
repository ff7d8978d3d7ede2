// SPDX-License-Identifier: Apache-2.0
//
// Tape-based reverse-mode autodiff over 2-D tensors. A Graph lives for a
// single forward/backward pass; parameters persist in a ParamStore and are
// bound to leaf nodes by name.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "diffcom/nn/params.hpp"
#include "diffcom/nn/tensor.hpp"

namespace diffcom::nn {

class Graph;

struct Var {
  Graph* g = nullptr;
  int id = -1;
  const Tensor& val() const;
  int64_t rows() const { return val().rows(); }
  int64_t cols() const { return val().cols(); }
};

class Graph {
 public:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    bool grad_alloc = false;
    std::string param_name;  // nonempty for parameter leaves
    std::function<void(Graph&, const Node&)> backward;
  };

  Var input(Tensor v);
  Var param(ParamStore& ps, const std::string& name);

  const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  Tensor& grad(int id);

  // Runs reverse pass from a scalar root and accumulates parameter
  // gradients into the bound ParamStore.
  void backward(Var root);

  size_t num_nodes() const { return nodes_.size(); }

  // --- internals used by op implementations ---
  Var make(Tensor value, std::vector<int> parents,
           std::function<void(Graph&, const Node&)> bwd);
  bool any_needs_grad(const std::vector<int>& ids) const;
  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }

 private:
  std::vector<Node> nodes_;
  std::map<std::string, int> param_nodes_;
  ParamStore* bound_store_ = nullptr;
};

// Elementwise with broadcasting: shapes equal, or b is 1x1, 1xC, or Rx1.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var neg(Var a);
Var scale(Var a, double c);
Var add_const(Var a, double c);

Var matmul(Var a, Var b);
Var transpose(Var a);

Var relu(Var a);
Var silu(Var a);
Var sigmoid(Var a);
Var tanh_op(Var a);
Var softplus(Var a);
Var exp_op(Var a);
Var log_op(Var a);  // caller guarantees positivity
Var sqrt_op(Var a);
Var square(Var a);
Var abs_op(Var a);

Var row_softmax(Var a);
// Per-row standardization: (x - mean) / sqrt(var + eps).
Var row_norm(Var a, double eps = 1e-6);

Var sum_all(Var a);
Var mean_all(Var a);
Var row_sum(Var a);  // RxC -> Rx1

Var concat_rows(Var a, Var b);
Var concat_cols(Var a, Var b);
Var slice_rows(Var a, int64_t r0, int64_t r1);
Var slice_cols(Var a, int64_t c0, int64_t c1);
Var gather_rows(Var a, const std::vector<int64_t>& idx);

// Grouped neighborhood ops; g consecutive rows of the (n*g)-row operand
// belong to query row i.
Var group_dot(Var q, Var k, int64_t g);
Var group_weighted_sum(Var w, Var v, int64_t g);
Var group_mean(Var v, int64_t g);  // (n*g)xD -> nxD

// diff: Nx3 offsets -> Nx4 [unit_dir, dist]; exact zeros at dist == 0.
Var unit_dir_dist(Var diff);

// 1-D convolution along rows (point sequence). x: NxCin, w laid out as
// (ks*Cin)xCout, bias 1xCout added by caller. Zero padding ks/2; stride 1
// keeps N rows, stride 2 yields ceil(N/2).
Var conv1d(Var x, Var w, int64_t ks, int64_t stride);

// Elementwise -log2 of the probability that a unit-width interval around
// integer offset d is drawn from Laplace(0, b). Used by the rate loss.
Var laplace_bits(Var d, Var b);

// Loss utility: mean of squared difference.
Var mse(Var a, Var b);

}  // namespace diffcom::nn
