// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "diffcom/nn/detmath.hpp"
#include "diffcom/nn/graph.hpp"
#include "diffcom/nn/layers.hpp"
#include "diffcom/nn/rng.hpp"

using namespace diffcom;
using nn::Graph;
using nn::ParamStore;
using nn::Tensor;
using nn::Var;

namespace {

Tensor random_tensor(nn::Rng& rng, int64_t r, int64_t c, double scale = 1.0) {
  Tensor t(r, c);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

// Central-difference gradient check of a scalar-valued graph builder with
// respect to one named parameter.
double max_rel_grad_err(ParamStore& ps, const std::string& pname,
                        const std::function<double(ParamStore&)>& value_fn,
                        const std::function<Var(Graph&, ParamStore&)>& loss_fn,
                        int probes, nn::Rng& rng) {
  Graph g;
  Var loss = loss_fn(g, ps);
  g.backward(loss);
  const Tensor* grad = ps.grad(pname);
  REQUIRE(grad != nullptr);
  Tensor grad_copy = *grad;
  ps.zero_grads();

  Tensor& w = ps.value(pname);
  double worst = 0.0;
  for (int p = 0; p < probes; ++p) {
    const int64_t i = static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(w.size())));
    const double h = 1e-5 * std::max(1.0, std::fabs(w[i]));
    const double orig = w[i];
    w[i] = orig + h;
    const double up = value_fn(ps);
    w[i] = orig - h;
    const double dn = value_fn(ps);
    w[i] = orig;
    const double fd = (up - dn) / (2.0 * h);
    const double an = grad_copy[i];
    const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-8});
    worst = std::max(worst, std::fabs(fd - an) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("detmath matches libm closely") {
  nn::Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const double x = rng.uniform(-30.0, 30.0);
    CHECK(detmath::exp(x) == doctest::Approx(std::exp(x)).epsilon(1e-13));
    CHECK(detmath::sin(x) == doctest::Approx(std::sin(x)).epsilon(1e-11));
    CHECK(detmath::cos(x) == doctest::Approx(std::cos(x)).epsilon(1e-11));
    const double p = rng.uniform(1e-9, 1e6);
    CHECK(detmath::log(p) == doctest::Approx(std::log(p)).epsilon(1e-13));
  }
  CHECK(detmath::exp(0.0) == 1.0);
  CHECK(detmath::log(1.0) == 0.0);
  CHECK(detmath::sigmoid(0.0) == doctest::Approx(0.5));
  CHECK(detmath::softplus(-50.0) == doctest::Approx(std::exp(-50.0)).epsilon(1e-10));
  CHECK(detmath::tanh(0.3) == doctest::Approx(std::tanh(0.3)).epsilon(1e-13));
}

TEST_CASE("rng is deterministic and in range") {
  nn::Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    const double ua = a.uniform01();
    CHECK(ua == b.uniform01());
    CHECK(ua >= 0.0);
    CHECK(ua < 1.0);
  }
  nn::Rng c(42);
  for (int i = 0; i < 1000; ++i) {
    const uint64_t v = c.uniform_index(7);
    CHECK(v < 7);
  }
}

TEST_CASE("elementwise ops and broadcasting") {
  Graph g;
  Var a = g.input(Tensor::from({1, 2, 3, 4, 5, 6}, 2, 3));
  Var row = g.input(Tensor::from({10, 20, 30}, 1, 3));
  Var col = g.input(Tensor::from({100, 200}, 2, 1));
  Var s = g.input(Tensor::scalar(2.0));
  CHECK(add(a, row).val().at(1, 2) == 36.0);
  CHECK(add(a, col).val().at(1, 0) == 204.0);
  CHECK(mul(a, s).val().at(0, 1) == 4.0);
  CHECK(sub(a, a).val().at(1, 1) == 0.0);
  CHECK(div(a, s).val().at(0, 0) == 0.5);
}

TEST_CASE("matmul forward") {
  Graph g;
  Var a = g.input(Tensor::from({1, 2, 3, 4}, 2, 2));
  Var b = g.input(Tensor::from({5, 6, 7, 8}, 2, 2));
  const Tensor& c = matmul(a, b).val();
  CHECK(c.at(0, 0) == 19.0);
  CHECK(c.at(0, 1) == 22.0);
  CHECK(c.at(1, 0) == 43.0);
  CHECK(c.at(1, 1) == 50.0);
}

TEST_CASE("row_softmax rows sum to one") {
  nn::Rng rng(3);
  Graph g;
  Var a = g.input(random_tensor(rng, 5, 7, 3.0));
  const Tensor& y = row_softmax(a).val();
  for (int64_t r = 0; r < 5; ++r) {
    double s = 0.0;
    for (int64_t c = 0; c < 7; ++c) {
      CHECK(y.at(r, c) >= 0.0);
      s += y.at(r, c);
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("gradients match finite differences across ops") {
  nn::Rng rng(11);
  ParamStore ps(99);
  ps.ensure("w", 4, 5, nn::Init::kXavier);
  ps.ensure("b", 1, 5, nn::Init::kSmallNormal, 0.3);
  ps.ensure("v", 5, 3, nn::Init::kXavier);
  const Tensor x = random_tensor(rng, 6, 4);

  auto build = [&](Graph& g, ParamStore& p) {
    Var xin = g.input(x);
    Var h = silu(add(matmul(xin, g.param(p, "w")), g.param(p, "b")));
    h = row_softmax(h);
    h = matmul(h, g.param(p, "v"));
    h = tanh_op(h);
    return mean_all(square(h));
  };
  auto value = [&](ParamStore& p) {
    Graph g;
    return build(g, p).val().item();
  };
  for (const char* name : {"w", "b", "v"}) {
    const double err = max_rel_grad_err(ps, name, value, build, 8, rng);
    CHECK(err < 1e-5);
  }
}

TEST_CASE("grouped ops gradcheck") {
  nn::Rng rng(13);
  ParamStore ps(5);
  ps.ensure("q", 4, 3, nn::Init::kXavier);
  ps.ensure("k", 12, 3, nn::Init::kXavier);
  ps.ensure("v", 12, 2, nn::Init::kXavier);

  auto build = [&](Graph& g, ParamStore& p) {
    Var q = g.param(p, "q");
    Var k = g.param(p, "k");
    Var v = g.param(p, "v");
    Var logits = group_dot(q, k, 3);
    Var attn = row_softmax(logits);
    Var out = group_weighted_sum(attn, v, 3);
    return sum_all(square(out));
  };
  auto value = [&](ParamStore& p) {
    Graph g;
    return build(g, p).val().item();
  };
  for (const char* name : {"q", "k", "v"}) {
    const double err = max_rel_grad_err(ps, name, value, build, 8, rng);
    CHECK(err < 1e-5);
  }
}

TEST_CASE("conv1d gradcheck, stride 1 and 2") {
  nn::Rng rng(17);
  for (int stride : {1, 2}) {
    ParamStore ps(21 + stride);
    ps.ensure("w", 3 * 4, 5, nn::Init::kXavier);
    ps.ensure("x", 9, 4, nn::Init::kSmallNormal, 1.0);
    auto build = [&](Graph& g, ParamStore& p) {
      Var out = conv1d(g.param(p, "x"), g.param(p, "w"), 3, stride);
      return mean_all(square(out));
    };
    auto value = [&](ParamStore& p) {
      Graph g;
      return build(g, p).val().item();
    };
    CHECK(max_rel_grad_err(ps, "w", value, build, 10, rng) < 1e-5);
    CHECK(max_rel_grad_err(ps, "x", value, build, 10, rng) < 1e-5);
  }
  // stride-2 row count is ceil(n/2)
  Graph g;
  ParamStore ps(1);
  ps.ensure("w", 3 * 2, 2, nn::Init::kXavier);
  Var x = g.input(Tensor(7, 2));
  CHECK(conv1d(x, g.param(ps, "w"), 3, 2).val().rows() == 4);
}

TEST_CASE("laplace_bits gradcheck and values") {
  // bits at d=0, b=1: -log2(1 - exp(-1/2))
  Graph g;
  Var d = g.input(Tensor::scalar(0.0));
  Var b = g.input(Tensor::scalar(1.0));
  const double bits = laplace_bits(d, b).val().item();
  CHECK(bits == doctest::Approx(-std::log2(1.0 - std::exp(-0.5))).epsilon(1e-12));

  nn::Rng rng(23);
  ParamStore ps(77);
  ps.ensure("d", 4, 3, nn::Init::kSmallNormal, 2.0);
  ps.ensure("braw", 4, 3, nn::Init::kSmallNormal, 0.5);
  auto build2 = [&](Graph& gg, ParamStore& p) {
    Var dd = gg.param(p, "d");
    Var bb = add_const(softplus(gg.param(p, "braw")), 1e-6);
    return sum_all(laplace_bits(dd, bb));
  };
  auto value2 = [&](ParamStore& p) {
    Graph gg;
    return build2(gg, p).val().item();
  };
  CHECK(max_rel_grad_err(ps, "d", value2, build2, 12, rng) < 1e-4);
  CHECK(max_rel_grad_err(ps, "braw", value2, build2, 12, rng) < 1e-4);
}

TEST_CASE("unit_dir_dist exact zeros and gradcheck") {
  {
    Graph g;
    Var diff = g.input(Tensor::from({0, 0, 0, 1, 0, 0}, 2, 3));
    const Tensor& out = unit_dir_dist(diff).val();
    CHECK(out.at(0, 0) == 0.0);
    CHECK(out.at(0, 3) == 0.0);
    CHECK(out.at(1, 0) == 1.0);
    CHECK(out.at(1, 3) == 1.0);
  }
  nn::Rng rng(31);
  ParamStore ps(8);
  ps.ensure("diff", 5, 3, nn::Init::kSmallNormal, 1.0);
  auto build = [&](Graph& g, ParamStore& p) {
    return sum_all(square(unit_dir_dist(g.param(p, "diff"))));
  };
  auto value = [&](ParamStore& p) {
    Graph g;
    return build(g, p).val().item();
  };
  CHECK(max_rel_grad_err(ps, "diff", value, build, 10, rng) < 1e-5);
}

TEST_CASE("row_norm and layer pieces gradcheck") {
  nn::Rng rng(37);
  ParamStore ps(3);
  ps.ensure("x", 6, 8, nn::Init::kSmallNormal, 1.5);
  const Tensor m = random_tensor(rng, 8, 4);
  auto build = [&](Graph& g, ParamStore& p) {
    // project the normalized rows so the loss is not row-scale invariant
    return mean_all(square(matmul(row_norm(g.param(p, "x")), g.input(m))));
  };
  auto value = [&](ParamStore& p) {
    Graph g;
    return build(g, p).val().item();
  };
  CHECK(max_rel_grad_err(ps, "x", value, build, 10, rng) < 1e-4);
}

TEST_CASE("adam reduces a quadratic") {
  ParamStore ps(7);
  ps.ensure("w", 1, 4, nn::Init::kConstant, 3.0);
  for (int i = 0; i < 400; ++i) {
    Graph g;
    Var loss = mean_all(square(g.param(ps, "w")));
    g.backward(loss);
    ps.adam_step(0.05);
    ps.zero_grads();
  }
  for (int64_t i = 0; i < 4; ++i) CHECK(std::fabs(ps.value("w")[i]) < 0.05);
}

TEST_CASE("param init is creation-order independent") {
  ParamStore a(123), b(123);
  a.ensure("p1", 3, 3);
  a.ensure("p2", 2, 5);
  b.ensure("p2", 2, 5);
  b.ensure("p1", 3, 3);
  for (int64_t i = 0; i < 9; ++i) CHECK(a.value("p1")[i] == b.value("p1")[i]);
  for (int64_t i = 0; i < 10; ++i) CHECK(a.value("p2")[i] == b.value("p2")[i]);
}
