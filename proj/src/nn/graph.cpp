// SPDX-License-Identifier: Apache-2.0

#include "diffcom/nn/graph.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

#include "diffcom/nn/detmath.hpp"

namespace diffcom::nn {

const Tensor& Var::val() const { return g->value(id); }

Var Graph::input(Tensor v) {
  Node n;
  n.value = std::move(v);
  n.needs_grad = false;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::param(ParamStore& ps, const std::string& name) {
  if (bound_store_ == nullptr) bound_store_ = &ps;
  assert(bound_store_ == &ps);
  auto it = param_nodes_.find(name);
  if (it != param_nodes_.end()) return Var{this, it->second};
  Node n;
  n.value = ps.value(name);
  n.needs_grad = true;
  n.param_name = name;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(name, id);
  return Var{this, id};
}

Tensor& Graph::grad(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.grad_alloc) {
    n.grad = Tensor(n.value.rows(), n.value.cols());
    n.grad_alloc = true;
  }
  return n.grad;
}

Var Graph::make(Tensor value, std::vector<int> parents,
                std::function<void(Graph&, const Node&)> bwd) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = any_needs_grad(parents);
  if (n.needs_grad) n.backward = std::move(bwd);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

bool Graph::any_needs_grad(const std::vector<int>& ids) const {
  for (int id : ids)
    if (nodes_[static_cast<size_t>(id)].needs_grad) return true;
  return false;
}

void Graph::backward(Var root) {
  if (root.val().size() != 1)
    throw std::logic_error("backward root must be a scalar");
  grad(root.id).fill(1.0);
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.needs_grad || !n.grad_alloc) continue;
    if (n.backward) n.backward(*this, n);
    if (!n.param_name.empty() && bound_store_ != nullptr)
      bound_store_->accumulate_grad(n.param_name, n.grad);
  }
}

namespace {

enum class Bcast { kSame, kScalar, kRow, kCol };

Bcast bcast_kind(const Tensor& a, const Tensor& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Bcast::kSame;
  if (b.rows() == 1 && b.cols() == 1) return Bcast::kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::kRow;
  if (b.cols() == 1 && b.rows() == a.rows()) return Bcast::kCol;
  throw std::logic_error("incompatible broadcast shapes");
}

double bval(const Tensor& b, Bcast k, int64_t r, int64_t c) {
  switch (k) {
    case Bcast::kSame: return b.at(r, c);
    case Bcast::kScalar: return b[0];
    case Bcast::kRow: return b.at(0, c);
    case Bcast::kCol: return b.at(r, 0);
  }
  return 0.0;
}

// Adds `g` (shaped like a) into bg (shaped like original b), reducing
// over broadcast dimensions.
void reduce_into(Tensor& bg, Bcast k, const Tensor& g) {
  switch (k) {
    case Bcast::kSame:
      for (int64_t i = 0; i < g.size(); ++i) bg[i] += g[i];
      break;
    case Bcast::kScalar: {
      double s = 0.0;
      for (int64_t i = 0; i < g.size(); ++i) s += g[i];
      bg[0] += s;
      break;
    }
    case Bcast::kRow:
      for (int64_t r = 0; r < g.rows(); ++r)
        for (int64_t c = 0; c < g.cols(); ++c) bg.at(0, c) += g.at(r, c);
      break;
    case Bcast::kCol:
      for (int64_t r = 0; r < g.rows(); ++r)
        for (int64_t c = 0; c < g.cols(); ++c) bg.at(r, 0) += g.at(r, c);
      break;
  }
}

Var ewise_binary(Var a, Var b, int mode) {  // 0 add, 1 sub, 2 mul, 3 div
  Graph& g = *a.g;
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  const Bcast k = bcast_kind(av, bv);
  Tensor out(av.rows(), av.cols());
  for (int64_t r = 0; r < av.rows(); ++r)
    for (int64_t c = 0; c < av.cols(); ++c) {
      const double x = av.at(r, c);
      const double y = bval(bv, k, r, c);
      double v = 0.0;
      switch (mode) {
        case 0: v = x + y; break;
        case 1: v = x - y; break;
        case 2: v = x * y; break;
        case 3: v = x / y; break;
      }
      out.at(r, c) = v;
    }
  const int aid = a.id, bid = b.id;
  return g.make(std::move(out), {aid, bid},
                [aid, bid, k, mode](Graph& gg, const Graph::Node& n) {
    const Tensor& go = n.grad;
    const Tensor& av2 = gg.value(aid);
    const Tensor& bv2 = gg.value(bid);
    if (gg.node(aid).needs_grad) {
      Tensor ga(av2.rows(), av2.cols());
      for (int64_t r = 0; r < av2.rows(); ++r)
        for (int64_t c = 0; c < av2.cols(); ++c) {
          const double y = bval(bv2, k, r, c);
          double d = 0.0;
          switch (mode) {
            case 0: case 1: d = 1.0; break;
            case 2: d = y; break;
            case 3: d = 1.0 / y; break;
          }
          ga.at(r, c) = go.at(r, c) * d;
        }
      Tensor& acc = gg.grad(aid);
      for (int64_t i = 0; i < acc.size(); ++i) acc[i] += ga[i];
    }
    if (gg.node(bid).needs_grad) {
      Tensor gb_full(av2.rows(), av2.cols());
      for (int64_t r = 0; r < av2.rows(); ++r)
        for (int64_t c = 0; c < av2.cols(); ++c) {
          const double x = av2.at(r, c);
          const double y = bval(bv2, k, r, c);
          double d = 0.0;
          switch (mode) {
            case 0: d = 1.0; break;
            case 1: d = -1.0; break;
            case 2: d = x; break;
            case 3: d = -x / (y * y); break;
          }
          gb_full.at(r, c) = go.at(r, c) * d;
        }
      reduce_into(gg.grad(bid), k, gb_full);
    }
  });
}

Var ewise_unary(Var a, double (*fwd)(double), double (*dfn)(double)) {
  Graph& g = *a.g;
  const Tensor& av = a.val();
  Tensor out(av.rows(), av.cols());
  for (int64_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  const int aid = a.id;
  return g.make(std::move(out), {aid}, [aid, dfn](Graph& gg, const Graph::Node& n) {
    const Tensor& av2 = gg.value(aid);
    Tensor& acc = gg.grad(aid);
    for (int64_t i = 0; i < av2.size(); ++i) acc[i] += n.grad[i] * dfn(av2[i]);
  });
}

}  // namespace

Var add(Var a, Var b) { return ewise_binary(a, b, 0); }
Var sub(Var a, Var b) { return ewise_binary(a, b, 1); }
Var mul(Var a, Var b) { return ewise_binary(a, b, 2); }
Var div(Var a, Var b) { return ewise_binary(a, b, 3); }

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double c) {
  Graph& g = *a.g;
  const Tensor& av = a.val();
  Tensor out(av.rows(), av.cols());
  for (int64_t i = 0; i < av.size(); ++i) out[i] = av[i] * c;
  const int aid = a.id;
  return g.make(std::move(out), {aid}, [aid, c](Graph& gg, const Graph::Node& n) {
    Tensor& acc = gg.grad(aid);
    for (int64_t i = 0; i < acc.size(); ++i) acc[i] += n.grad[i] * c;
  });
}

Var add_const(Var a, double c) {
  Graph& g = *a.g;
  const Tensor& av = a.val();
  Tensor out(av.rows(), av.cols());
  for (int64_t i = 0; i < av.size(); ++i) out[i] = av[i] + c;
  const int aid = a.id;
  return g.make(std::move(out), {aid}, [aid](Graph& gg, const Graph::Node& n) {
    Tensor& acc = gg.grad(aid);
    for (int64_t i = 0; i < acc.size(); ++i) acc[i] += n.grad[i];
  });
}

Var matmul(Var a, Var b) {
  Graph& g = *a.g;
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  if (av.cols() != bv.rows()) throw std::logic_error("matmul shape mismatch");
  Tensor out(av.rows(), bv.cols());
  for (int64_t r = 0; r < av.rows(); ++r) {
    for (int64_t k = 0; k < av.cols(); ++k) {
      const double x = av.at(r, k);
      if (x == 0.0) continue;
      const double* brow = bv.data() + k * bv.cols();
      double* orow = out.data() + r * out.cols();
      for (int64_t c = 0; c < bv.cols(); ++c) orow[c] += x * brow[c];
    }
  }
  const int aid = a.id, bid = b.id;
  return g.make(std::move(out), {aid, bid}, [aid, bid](Graph& gg, const Graph::Node& n) {
    const Tensor& go = n.grad;
    const Tensor& av2 = gg.value(aid);
    const Tensor& bv2 = gg.value(bid);
    if (gg.node(aid).needs_grad) {
      Tensor& ga = gg.grad(aid);  // go * b^T
      for (int64_t r = 0; r < ga.rows(); ++r)
        for (int64_t k = 0; k < ga.cols(); ++k) {
          const double* grow = go.data() + r * go.cols();
          const double* brow = bv2.data() + k * bv2.cols();
          double s = 0.0;
          for (int64_t c = 0; c < go.cols(); ++c) s += grow[c] * brow[c];
          ga.at(r, k) += s;
        }
    }
    if (gg.node(bid).needs_grad) {
      Tensor& gb = gg.grad(bid);  // a^T * go
      for (int64_t r = 0; r < av2.rows(); ++r)
        for (int64_t k = 0; k < av2.cols(); ++k) {
          const double x = av2.at(r, k);
          if (x == 0.0) continue;
          const double* grow = go.data() + r * go.cols();
          double* brow = gb.data() + k * gb.cols();
          for (int64_t c = 0; c < go.cols(); ++c) brow[c] += x * grow[c];
        }
    }
  });
}

Var transpose(Var a) {
  Graph& g = *a.g;
  const Tensor& av = a.val();
  Tensor out(av.cols(), av.rows());
  for (int64_t r = 0; r < av.rows(); ++r)
    for (int64_t c = 0; c < av.cols(); ++c) out.at(c, r) = av.at(r, c);
  const int aid = a.id;
  return g.make(std::move(out), {aid}, [aid](Graph& gg, const Graph::Node& n) {
    Tensor& acc = gg.grad(aid);
    for (int64_t r = 0; r < n.grad.rows(); ++r)
      for (int64_t c = 0; c < n.grad.cols(); ++c) acc.at(c, r) += n.grad.at(r, c);
  });
}

Var relu(Var a) {
  return ewise_unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                     [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var silu(Var a) {
  return ewise_unary(a,
      [](double x) { return x * detmath::sigmoid(x); },
      [](double x) {
        const double s = detmath::sigmoid(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

Var sigmoid(Var a) {
  return ewise_unary(a, [](double x) { return detmath::sigmoid(x); },
                     [](double x) {
                       const double s = detmath::sigmoid(x);
                       return s * (1.0 - s);
                     });
}

Var tanh_op(Var a) {
  return ewise_unary(a, [](double x) { return detmath::tanh(x); },
                     [](double x) {
                       const double t = detmath::tanh(x);
                       return 1.0 - t * t;
                     });
}

Var softplus(Var a) {
  return ewise_unary(a, [](double x) { return detmath::softplus(x); },
                     [](double x) { return detmath::sigmoid(x); });
}

Var exp_op(Var a) {
  return ewise_unary(a, [](double x) { return detmath::exp(x); },
                     [](double x) { return detmath::exp(x); });
}

Var log_op(Var a) {
  return ewise_unary(a, [](double x) { return detmath::log(x); },
                     [](double x) { return 1.0 / x; });
}

Var sqrt_op(Var a) {
  return ewise_unary(a, [](double x) { return std::sqrt(x); },
                     [](double x) { return 0.5 / std::sqrt(x); });
}

Var square(Var a) {
  return ewise_unary(a, [](double x) { return x * x; },
                     [](double x) { return 2.0 * x; });
}

Var abs_op(Var a) {
  return ewise_unary(a, [](double x) { return std::fabs(x); },
                     [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var row_softmax(Var a) {
  Graph& g = *a.g;
  const Tensor& av = a.val();
  Tensor out(av.rows(), av.cols());
  for (int64_t r = 0; r < av.rows(); ++r) {
    double mx = av.at(r, 0);
    for (int64_t c = 1; c < av.cols(); ++c) mx = std::max(mx, av.at(r, c));
    double z = 0.0;
    for (int64_t c = 0; c < av.cols(); ++c) {
      out.at(r, c) = detmath::exp(av.at(r, c) - mx);
      z += out.at(r, c);
    }
    for (int64_t c = 0; c < av.cols(); ++c) out.at(r, c) /= z;
  }
  const int aid = a.id;
  const int self = static_cast<int>(g.num_nodes());
  return g.make(std::move(out), {aid}, [aid, self](Graph& gg, const Graph::Node& n) {
    const Tensor& y = gg.value(self);
    Tensor& acc = gg.grad(aid);
    for (int64_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (int64_t c = 0; c < y.cols(); ++c) dot += n.grad.at(r, c) * y.at(r, c);
      for (int64_t c = 0; c < y.cols(); ++c)
        acc.at(r, c) += y.at(r, c) * (n.grad.at(r, c) - dot);
    }
  });
}

Var row_norm(Var a, double eps) {
  Graph& g = *a.g;
  const Tensor& av = a.val();
  const int64_t C = av.cols();
  Tensor out(av.rows(), C);
  Tensor stats(av.rows(), 2);  // mean, inv_std
  for (int64_t r = 0; r < av.rows(); ++r) {
    double m = 0.0;
    for (int64_t c = 0; c < C; ++c) m += av.at(r, c);
    m /= static_cast<double>(C);
    double v = 0.0;
    for (int64_t c = 0; c < C; ++c) {
      const double d = av.at(r, c) - m;
      v += d * d;
    }
    v /= static_cast<double>(C);
    const double inv = 1.0 / std::sqrt(v + eps);
    stats.at(r, 0) = m;
    stats.at(r, 1) = inv;
    for (int64_t c = 0; c < C; ++c) out.at(r, c) = (av.at(r, c) - m) * inv;
  }
  const int aid = a.id;
  const int self = static_cast<int>(g.num_nodes());
  return g.make(std::move(out), {aid},
                [aid, self, stats](Graph& gg, const Graph::Node& n) {
    const Tensor& y = gg.value(self);
    const int64_t C2 = y.cols();
    Tensor& acc = gg.grad(aid);
    for (int64_t r = 0; r < y.rows(); ++r) {
      const double inv = stats.at(r, 1);
      double gmean = 0.0, gdoty = 0.0;
      for (int64_t c = 0; c < C2; ++c) {
        gmean += n.grad.at(r, c);
        gdoty += n.grad.at(r, c) * y.at(r, c);
      }
      gmean /= static_cast<double>(C2);
      gdoty /= static_cast<double>(C2);
      for (int64_t c = 0; c < C2; ++c)
        acc.at(r, c) += inv * (n.grad.at(r, c) - gmean - y.at(r, c) * gdoty);
    }
  });
}

Var sum_all(Var a) {
  Graph& g = *a.g;
  const Tensor& av = a.val();
  double s = 0.0;
  for (int64_t i = 0; i < av.size(); ++i) s += av[i];
  const int aid = a.id;
  return g.make(Tensor::scalar(s), {aid}, [aid](Graph& gg, const Graph::Node& n) {
    Tensor& acc = gg.grad(aid);
    const double gv = n.grad[0];
    for (int64_t i = 0; i < acc.size(); ++i) acc[i] += gv;
  });
}

Var mean_all(Var a) {
  const double inv = 1.0 / static_cast<double>(a.val().size());
  return scale(sum_all(a), inv);
}

Var row_sum(Var a) {
  Graph& g = *a.g;
  const Tensor& av = a.val();
  Tensor out(av.rows(), 1);
  for (int64_t r = 0; r < av.rows(); ++r) {
    double s = 0.0;
    for (int64_t c = 0; c < av.cols(); ++c) s += av.at(r, c);
    out.at(r, 0) = s;
  }
  const int aid = a.id;
  return g.make(std::move(out), {aid}, [aid](Graph& gg, const Graph::Node& n) {
    Tensor& acc = gg.grad(aid);
    for (int64_t r = 0; r < acc.rows(); ++r)
      for (int64_t c = 0; c < acc.cols(); ++c) acc.at(r, c) += n.grad.at(r, 0);
  });
}

Var concat_rows(Var a, Var b) {
  Graph& g = *a.g;
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  if (av.cols() != bv.cols()) throw std::logic_error("concat_rows col mismatch");
  Tensor out(av.rows() + bv.rows(), av.cols());
  std::copy(av.data(), av.data() + av.size(), out.data());
  std::copy(bv.data(), bv.data() + bv.size(), out.data() + av.size());
  const int aid = a.id, bid = b.id;
  const int64_t ar = av.rows();
  return g.make(std::move(out), {aid, bid}, [aid, bid, ar](Graph& gg, const Graph::Node& n) {
    if (gg.node(aid).needs_grad) {
      Tensor& ga = gg.grad(aid);
      for (int64_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i];
    }
    if (gg.node(bid).needs_grad) {
      Tensor& gb = gg.grad(bid);
      const int64_t off = ar * n.grad.cols();
      for (int64_t i = 0; i < gb.size(); ++i) gb[i] += n.grad[off + i];
    }
  });
}

Var concat_cols(Var a, Var b) {
  Graph& g = *a.g;
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  if (av.rows() != bv.rows()) throw std::logic_error("concat_cols row mismatch");
  Tensor out(av.rows(), av.cols() + bv.cols());
  for (int64_t r = 0; r < av.rows(); ++r) {
    for (int64_t c = 0; c < av.cols(); ++c) out.at(r, c) = av.at(r, c);
    for (int64_t c = 0; c < bv.cols(); ++c) out.at(r, av.cols() + c) = bv.at(r, c);
  }
  const int aid = a.id, bid = b.id;
  const int64_t ac = av.cols();
  return g.make(std::move(out), {aid, bid}, [aid, bid, ac](Graph& gg, const Graph::Node& n) {
    if (gg.node(aid).needs_grad) {
      Tensor& ga = gg.grad(aid);
      for (int64_t r = 0; r < ga.rows(); ++r)
        for (int64_t c = 0; c < ac; ++c) ga.at(r, c) += n.grad.at(r, c);
    }
    if (gg.node(bid).needs_grad) {
      Tensor& gb = gg.grad(bid);
      for (int64_t r = 0; r < gb.rows(); ++r)
        for (int64_t c = 0; c < gb.cols(); ++c) gb.at(r, c) += n.grad.at(r, ac + c);
    }
  });
}

Var slice_rows(Var a, int64_t r0, int64_t r1) {
  Graph& g = *a.g;
  const Tensor& av = a.val();
  Tensor out(r1 - r0, av.cols());
  std::copy(av.data() + r0 * av.cols(), av.data() + r1 * av.cols(), out.data());
  const int aid = a.id;
  return g.make(std::move(out), {aid}, [aid, r0](Graph& gg, const Graph::Node& n) {
    Tensor& acc = gg.grad(aid);
    const int64_t off = r0 * acc.cols();
    for (int64_t i = 0; i < n.grad.size(); ++i) acc[off + i] += n.grad[i];
  });
}

Var slice_cols(Var a, int64_t c0, int64_t c1) {
  Graph& g = *a.g;
  const Tensor& av = a.val();
  Tensor out(av.rows(), c1 - c0);
  for (int64_t r = 0; r < av.rows(); ++r)
    for (int64_t c = c0; c < c1; ++c) out.at(r, c - c0) = av.at(r, c);
  const int aid = a.id;
  return g.make(std::move(out), {aid}, [aid, c0](Graph& gg, const Graph::Node& n) {
    Tensor& acc = gg.grad(aid);
    for (int64_t r = 0; r < n.grad.rows(); ++r)
      for (int64_t c = 0; c < n.grad.cols(); ++c) acc.at(r, c0 + c) += n.grad.at(r, c);
  });
}

Var gather_rows(Var a, const std::vector<int64_t>& idx) {
  Graph& g = *a.g;
  const Tensor& av = a.val();
  Tensor out(static_cast<int64_t>(idx.size()), av.cols());
  for (size_t i = 0; i < idx.size(); ++i)
    std::copy(av.data() + idx[i] * av.cols(), av.data() + (idx[i] + 1) * av.cols(),
              out.data() + static_cast<int64_t>(i) * av.cols());
  const int aid = a.id;
  return g.make(std::move(out), {aid}, [aid, idx](Graph& gg, const Graph::Node& n) {
    Tensor& acc = gg.grad(aid);
    const int64_t C = acc.cols();
    for (size_t i = 0; i < idx.size(); ++i)
      for (int64_t c = 0; c < C; ++c)
        acc.at(idx[i], c) += n.grad.at(static_cast<int64_t>(i), c);
  });
}

Var group_dot(Var q, Var k, int64_t g_size) {
  Graph& g = *q.g;
  const Tensor& qv = q.val();
  const Tensor& kv = k.val();
  const int64_t n_rows = qv.rows();
  const int64_t d = qv.cols();
  if (kv.rows() != n_rows * g_size || kv.cols() != d)
    throw std::logic_error("group_dot shape mismatch");
  Tensor out(n_rows, g_size);
  for (int64_t i = 0; i < n_rows; ++i)
    for (int64_t j = 0; j < g_size; ++j) {
      double s = 0.0;
      for (int64_t c = 0; c < d; ++c) s += qv.at(i, c) * kv.at(i * g_size + j, c);
      out.at(i, j) = s;
    }
  const int qid = q.id, kid = k.id;
  return g.make(std::move(out), {qid, kid},
                [qid, kid, g_size](Graph& gg, const Graph::Node& n) {
    const Tensor& qv2 = gg.value(qid);
    const Tensor& kv2 = gg.value(kid);
    const int64_t d2 = qv2.cols();
    if (gg.node(qid).needs_grad) {
      Tensor& gq = gg.grad(qid);
      for (int64_t i = 0; i < qv2.rows(); ++i)
        for (int64_t j = 0; j < g_size; ++j) {
          const double gv = n.grad.at(i, j);
          for (int64_t c = 0; c < d2; ++c) gq.at(i, c) += gv * kv2.at(i * g_size + j, c);
        }
    }
    if (gg.node(kid).needs_grad) {
      Tensor& gk = gg.grad(kid);
      for (int64_t i = 0; i < qv2.rows(); ++i)
        for (int64_t j = 0; j < g_size; ++j) {
          const double gv = n.grad.at(i, j);
          for (int64_t c = 0; c < d2; ++c) gk.at(i * g_size + j, c) += gv * qv2.at(i, c);
        }
    }
  });
}

Var group_weighted_sum(Var w, Var v, int64_t g_size) {
  Graph& g = *w.g;
  const Tensor& wv = w.val();
  const Tensor& vv = v.val();
  const int64_t n_rows = wv.rows();
  const int64_t d = vv.cols();
  if (wv.cols() != g_size || vv.rows() != n_rows * g_size)
    throw std::logic_error("group_weighted_sum shape mismatch");
  Tensor out(n_rows, d);
  for (int64_t i = 0; i < n_rows; ++i)
    for (int64_t j = 0; j < g_size; ++j) {
      const double wj = wv.at(i, j);
      for (int64_t c = 0; c < d; ++c) out.at(i, c) += wj * vv.at(i * g_size + j, c);
    }
  const int wid = w.id, vid = v.id;
  return g.make(std::move(out), {wid, vid},
                [wid, vid, g_size](Graph& gg, const Graph::Node& n) {
    const Tensor& wv2 = gg.value(wid);
    const Tensor& vv2 = gg.value(vid);
    const int64_t d2 = vv2.cols();
    if (gg.node(wid).needs_grad) {
      Tensor& gw = gg.grad(wid);
      for (int64_t i = 0; i < wv2.rows(); ++i)
        for (int64_t j = 0; j < g_size; ++j) {
          double s = 0.0;
          for (int64_t c = 0; c < d2; ++c) s += n.grad.at(i, c) * vv2.at(i * g_size + j, c);
          gw.at(i, j) += s;
        }
    }
    if (gg.node(vid).needs_grad) {
      Tensor& gv = gg.grad(vid);
      for (int64_t i = 0; i < wv2.rows(); ++i)
        for (int64_t j = 0; j < g_size; ++j) {
          const double wj = wv2.at(i, j);
          for (int64_t c = 0; c < d2; ++c) gv.at(i * g_size + j, c) += wj * n.grad.at(i, c);
        }
    }
  });
}

Var group_mean(Var v, int64_t g_size) {
  Graph& g = *v.g;
  const Tensor& vv = v.val();
  const int64_t n_rows = vv.rows() / g_size;
  if (vv.rows() != n_rows * g_size) throw std::logic_error("group_mean shape mismatch");
  Tensor out(n_rows, vv.cols());
  const double inv = 1.0 / static_cast<double>(g_size);
  for (int64_t i = 0; i < n_rows; ++i)
    for (int64_t j = 0; j < g_size; ++j)
      for (int64_t c = 0; c < vv.cols(); ++c)
        out.at(i, c) += vv.at(i * g_size + j, c) * inv;
  const int vid = v.id;
  return g.make(std::move(out), {vid}, [vid, g_size, inv](Graph& gg, const Graph::Node& n) {
    Tensor& acc = gg.grad(vid);
    for (int64_t i = 0; i < n.grad.rows(); ++i)
      for (int64_t j = 0; j < g_size; ++j)
        for (int64_t c = 0; c < n.grad.cols(); ++c)
          acc.at(i * g_size + j, c) += n.grad.at(i, c) * inv;
  });
}

Var unit_dir_dist(Var diff) {
  Graph& g = *diff.g;
  const Tensor& dv = diff.val();
  if (dv.cols() != 3) throw std::logic_error("unit_dir_dist expects Nx3");
  Tensor out(dv.rows(), 4);
  for (int64_t r = 0; r < dv.rows(); ++r) {
    const double x = dv.at(r, 0), y = dv.at(r, 1), z = dv.at(r, 2);
    const double d = std::sqrt(x * x + y * y + z * z);
    if (d > 0.0) {
      out.at(r, 0) = x / d;
      out.at(r, 1) = y / d;
      out.at(r, 2) = z / d;
    }
    out.at(r, 3) = d;
  }
  const int did = diff.id;
  return g.make(std::move(out), {did}, [did](Graph& gg, const Graph::Node& n) {
    const Tensor& dv2 = gg.value(did);
    Tensor& acc = gg.grad(did);
    for (int64_t r = 0; r < dv2.rows(); ++r) {
      const double x = dv2.at(r, 0), y = dv2.at(r, 1), z = dv2.at(r, 2);
      const double d = std::sqrt(x * x + y * y + z * z);
      if (d == 0.0) continue;  // subgradient 0 at the kink
      const double inv = 1.0 / d;
      const double u[3] = {x * inv, y * inv, z * inv};
      const double gd = n.grad.at(r, 3);
      // d(dist)/dp = u; d(u_i)/dp_j = (delta_ij - u_i u_j)/d
      for (int64_t j = 0; j < 3; ++j) {
        double s = gd * u[j];
        for (int64_t i = 0; i < 3; ++i) {
          const double jac = ((i == j) ? 1.0 : 0.0) - u[i] * u[j];
          s += n.grad.at(r, i) * jac * inv;
        }
        acc.at(r, j) += s;
      }
    }
  });
}

Var conv1d(Var x, Var w, int64_t ks, int64_t stride) {
  Graph& g = *x.g;
  const Tensor& xv = x.val();
  const Tensor& wv = w.val();
  const int64_t n = xv.rows();
  const int64_t cin = xv.cols();
  const int64_t cout = wv.cols();
  if (wv.rows() != ks * cin) throw std::logic_error("conv1d weight shape mismatch");
  const int64_t pad = ks / 2;
  const int64_t n_out = stride == 1 ? n : (n + 2 * pad - ks) / 2 + 1;
  Tensor out(n_out, cout);
  for (int64_t o = 0; o < n_out; ++o) {
    const int64_t base = o * stride - pad;
    for (int64_t t = 0; t < ks; ++t) {
      const int64_t r = base + t;
      if (r < 0 || r >= n) continue;
      for (int64_t ci = 0; ci < cin; ++ci) {
        const double xv_ = xv.at(r, ci);
        if (xv_ == 0.0) continue;
        const double* wrow = wv.data() + (t * cin + ci) * cout;
        double* orow = out.data() + o * cout;
        for (int64_t co = 0; co < cout; ++co) orow[co] += xv_ * wrow[co];
      }
    }
  }
  const int xid = x.id, wid = w.id;
  return g.make(std::move(out), {xid, wid},
                [xid, wid, ks, stride, pad](Graph& gg, const Graph::Node& n2) {
    const Tensor& xv2 = gg.value(xid);
    const Tensor& wv2 = gg.value(wid);
    const int64_t n = xv2.rows(), cin = xv2.cols(), cout = wv2.cols();
    if (gg.node(xid).needs_grad) {
      Tensor& gx = gg.grad(xid);
      for (int64_t o = 0; o < n2.grad.rows(); ++o) {
        const int64_t base = o * stride - pad;
        for (int64_t t = 0; t < ks; ++t) {
          const int64_t r = base + t;
          if (r < 0 || r >= n) continue;
          for (int64_t ci = 0; ci < cin; ++ci) {
            const double* wrow = wv2.data() + (t * cin + ci) * cout;
            const double* grow = n2.grad.data() + o * cout;
            double s = 0.0;
            for (int64_t co = 0; co < cout; ++co) s += wrow[co] * grow[co];
            gx.at(r, ci) += s;
          }
        }
      }
    }
    if (gg.node(wid).needs_grad) {
      Tensor& gw = gg.grad(wid);
      for (int64_t o = 0; o < n2.grad.rows(); ++o) {
        const int64_t base = o * stride - pad;
        for (int64_t t = 0; t < ks; ++t) {
          const int64_t r = base + t;
          if (r < 0 || r >= n) continue;
          for (int64_t ci = 0; ci < cin; ++ci) {
            const double xv_ = xv2.at(r, ci);
            if (xv_ == 0.0) continue;
            double* wrow = gw.data() + (t * cin + ci) * cout;
            const double* grow = n2.grad.data() + o * cout;
            for (int64_t co = 0; co < cout; ++co) wrow[co] += xv_ * grow[co];
          }
        }
      }
    }
  });
}

namespace {

// P(d, b) = Laplace CDF mass of [d - 1/2, d + 1/2]; returns P and its
// partials. Stable in both the |d| >= 1/2 tail and the center interval.
void laplace_interval(double d, double b, double& p, double& dp_dd, double& dp_db) {
  const double q = std::fabs(d);
  if (q >= 0.5) {
    // P = exp((0.5-q)/b) * (1 - exp(-1/b)) / 2
    const double e1 = detmath::exp((0.5 - q) / b);
    const double e2 = detmath::exp(-1.0 / b);
    p = 0.5 * e1 * (1.0 - e2);
    const double s = d >= 0.0 ? 1.0 : -1.0;
    dp_dd = -s / b * p;
    dp_db = p * (q - 0.5) / (b * b) + 0.5 * e1 * (-e2 / (b * b));
  } else {
    const double ea = detmath::exp((d - 0.5) / b);
    const double eb = detmath::exp(-(d + 0.5) / b);
    p = 1.0 - 0.5 * (ea + eb);
    dp_dd = (eb - ea) / (2.0 * b);
    dp_db = (ea * (d - 0.5) - eb * (d + 0.5)) / (2.0 * b * b);
  }
}

}  // namespace

Var laplace_bits(Var d, Var b) {
  Graph& g = *d.g;
  const Tensor& dv = d.val();
  const Tensor& bv = b.val();
  if (!dv.same_shape(bv)) throw std::logic_error("laplace_bits shape mismatch");
  constexpr double kFloor = 1e-30;
  Tensor out(dv.rows(), dv.cols());
  for (int64_t i = 0; i < dv.size(); ++i) {
    double p, g1, g2;
    laplace_interval(dv[i], bv[i], p, g1, g2);
    out[i] = -detmath::log2(std::max(p, kFloor));
  }
  const int did = d.id, bid = b.id;
  return g.make(std::move(out), {did, bid}, [did, bid](Graph& gg, const Graph::Node& n) {
    const Tensor& dv2 = gg.value(did);
    const Tensor& bv2 = gg.value(bid);
    const bool need_d = gg.node(did).needs_grad;
    const bool need_b = gg.node(bid).needs_grad;
    Tensor* gd = need_d ? &gg.grad(did) : nullptr;
    Tensor* gb = need_b ? &gg.grad(bid) : nullptr;
    for (int64_t i = 0; i < dv2.size(); ++i) {
      double p, dp_dd, dp_db;
      laplace_interval(dv2[i], bv2[i], p, dp_dd, dp_db);
      p = std::max(p, 1e-30);
      const double c = -n.grad[i] / (p * detmath::kLn2);
      if (gd) (*gd)[i] += c * dp_dd;
      if (gb) (*gb)[i] += c * dp_db;
    }
  });
}

Var mse(Var a, Var b) { return mean_all(square(sub(a, b))); }

}  // namespace diffcom::nn
