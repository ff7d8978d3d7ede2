// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>

#include "diffcom/codec/arith.hpp"
#include "diffcom/codec/bitstream.hpp"
#include "diffcom/codec/models.hpp"
#include "diffcom/nn/rng.hpp"

using namespace diffcom;
using codec::CdfTable;
using nn::Rng;

namespace {

CdfTable random_table(Rng& rng, int support, int64_t offset) {
  std::vector<double> pmf(static_cast<size_t>(support));
  for (auto& p : pmf) p = rng.uniform(0.01, 1.0);
  return CdfTable::from_pmf(pmf, offset);
}

double table_bits(const CdfTable& t, int64_t symbol) {
  const double p = static_cast<double>(t.freq(symbol - t.offset())) /
                   static_cast<double>(codec::kFreqTotal);
  return -std::log2(p);
}

}  // namespace

TEST_CASE("laplace pmf values, symmetry, total mass") {
  CHECK(codec::laplace_pmf(0, 0.0, 1.0) ==
        doctest::Approx(1.0 - std::exp(-0.5)).epsilon(1e-9));
  for (int k = 1; k < 12; ++k)
    CHECK(codec::laplace_pmf(k, 0.0, 2.0) ==
          doctest::Approx(codec::laplace_pmf(-k, 0.0, 2.0)).epsilon(1e-12));
  for (double b : {0.3, 1.0, 4.0}) {
    double total = 0.0;
    for (int k = -400; k <= 400; ++k) total += codec::laplace_pmf(k, 0.25, b);
    CHECK(std::fabs(total - 1.0) < 1e-9);
  }
}

TEST_CASE("cdf table invariants: total, floor, order preservation") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int support = 2 + static_cast<int>(rng.uniform_index(300));
    std::vector<double> pmf(static_cast<size_t>(support));
    for (auto& p : pmf) p = rng.uniform01() < 0.2 ? 0.0 : rng.uniform(0.0, 1.0);
    double s = 0.0;
    for (double p : pmf) s += p;
    if (s <= 0.0) pmf[0] = 1.0;
    const CdfTable t = CdfTable::from_pmf(pmf, -5);
    uint32_t total = 0;
    for (int64_t i = 0; i < t.size(); ++i) {
      CHECK(t.freq(i) >= 1);
      total += t.freq(i);
    }
    CHECK(total == codec::kFreqTotal);
    for (int64_t i = 0; i < t.size(); ++i)
      for (int64_t j = 0; j < t.size(); ++j)
        if (pmf[static_cast<size_t>(i)] > pmf[static_cast<size_t>(j)])
          CHECK(t.freq(i) >= t.freq(j));
  }
}

TEST_CASE("arithmetic coder roundtrip on random streams with random tables") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const int support = 2 + static_cast<int>(rng.uniform_index(64));
    const int64_t offset = static_cast<int64_t>(rng.uniform_index(21)) - 10;
    const CdfTable t = random_table(rng, support, offset);
    const size_t n = 1000 + rng.uniform_index(2000);
    std::vector<int64_t> syms(n);
    for (auto& s : syms)
      s = offset + static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(support)));
    const auto bytes = codec::ac_encode(syms, [&](size_t) -> const CdfTable& { return t; });
    const auto back =
        codec::ac_decode(bytes, [&](size_t) -> const CdfTable& { return t; }, n);
    CHECK(back == syms);
  }
}

TEST_CASE("coder length stays within ideal + 32 bits + 0.1%") {
  Rng rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const int support = 16 + static_cast<int>(rng.uniform_index(240));
    const CdfTable t = random_table(rng, support, 0);
    const size_t n = 100000;
    std::vector<int64_t> syms(n);
    // skewed draws so the ideal length differs meaningfully from uniform
    for (auto& s : syms) {
      const uint32_t target = static_cast<uint32_t>(rng.uniform_index(codec::kFreqTotal));
      s = t.find(target);
    }
    double ideal = 0.0;
    for (int64_t s : syms) ideal += table_bits(t, s);
    const auto bytes = codec::ac_encode(syms, [&](size_t) -> const CdfTable& { return t; });
    const double measured = 8.0 * static_cast<double>(bytes.size());
    CHECK(measured >= ideal);
    CHECK(measured <= ideal + 32.0 + 0.001 * ideal);
  }
}

TEST_CASE("highly skewed stream: near the entropy bound") {
  std::vector<double> pmf(16, 0.01 / 15.0);
  pmf[0] = 0.99;
  const CdfTable t = CdfTable::from_pmf(pmf, 0);
  std::vector<int64_t> syms(1000, 0);
  const auto bytes = codec::ac_encode(syms, [&](size_t) -> const CdfTable& { return t; });
  const double measured = 8.0 * static_cast<double>(bytes.size());
  const double ideal = 1000.0 * table_bits(t, 0);  // ~14.5 bits
  CHECK(measured >= ideal);
  CHECK(measured <= 14.5 + 50.0);
}

TEST_CASE("empty stream is an empty payload") {
  const CdfTable t = CdfTable::from_pmf({0.5, 0.5}, 0);
  const auto bytes = codec::ac_encode({}, [&](size_t) -> const CdfTable& { return t; });
  CHECK(bytes.empty());
  const auto back = codec::ac_decode(bytes, [&](size_t) -> const CdfTable& { return t; }, 0);
  CHECK(back.empty());
}

TEST_CASE("decoding with mismatched tables raises corrupt-stream") {
  Rng rng(31);
  const CdfTable enc_t = random_table(rng, 32, 0);
  const CdfTable dec_t = random_table(rng, 32, 0);
  std::vector<int64_t> syms(500);
  for (auto& s : syms) s = static_cast<int64_t>(rng.uniform_index(32));
  const auto bytes =
      codec::ac_encode(syms, [&](size_t) -> const CdfTable& { return enc_t; });
  CHECK_THROWS_AS(
      codec::ac_decode(bytes, [&](size_t) -> const CdfTable& { return dec_t; }, 500),
      codec::CorruptStreamError);
}

TEST_CASE("roundtrip speed: 100 streams of 1e5 symbols under 5s") {
  Rng rng(41);
  const CdfTable t = random_table(rng, 256, -128);
  std::vector<int64_t> syms(100000);
  const auto t0 = std::chrono::steady_clock::now();
  for (int stream = 0; stream < 100; ++stream) {
    for (auto& s : syms) s = -128 + static_cast<int64_t>(rng.uniform_index(256));
    const auto bytes = codec::ac_encode(syms, [&](size_t) -> const CdfTable& { return t; });
    const auto back =
        codec::ac_decode(bytes, [&](size_t) -> const CdfTable& { return t; }, syms.size());
    REQUIRE(back.size() == syms.size());
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(secs < 5.0);
}

TEST_CASE("rate_estimate examples and encode-and-measure agreement") {
  {
    // uniform over 256 symbols, 100 symbols -> exactly 800 bits
    std::vector<int64_t> syms(100, 3);
    const double bits = codec::rate_estimate(
        syms, [](size_t, int64_t) { return 1.0 / 256.0; });
    CHECK(bits == doctest::Approx(800.0).epsilon(1e-12));
  }
  {
    std::vector<int64_t> syms(10, 0);
    CHECK(codec::rate_estimate(syms, [](size_t, int64_t) { return 1.0; }) ==
          doctest::Approx(0.0));
    CHECK_THROWS_AS(codec::rate_estimate(syms, [](size_t, int64_t) { return 0.0; }),
                    std::invalid_argument);
  }
  {
    // Laplace-distributed stream: table-based estimate within 0.5% of the
    // actual encoded length (excluding the fixed trailer).
    Rng rng(51);
    const double b = 3.0;
    std::vector<int64_t> syms(60000);
    for (auto& s : syms) {
      const double u = rng.uniform01() - 0.5;
      s = static_cast<int64_t>(std::llround(-b * (u < 0 ? -1.0 : 1.0) *
                                            std::log(1.0 - 2.0 * std::fabs(u))));
      s = std::max<int64_t>(-40, std::min<int64_t>(40, s));
    }
    const CdfTable t = codec::laplace_cdf_table(0.0, b, -41, 41);
    const auto bytes = codec::ac_encode(syms, [&](size_t) -> const CdfTable& { return t; });
    const double measured = 8.0 * static_cast<double>(bytes.size()) - 48.0;
    const double estimate = codec::rate_estimate(syms, [&](size_t, int64_t s) {
      return static_cast<double>(t.freq(s - t.offset())) /
             static_cast<double>(codec::kFreqTotal);
    });
    CHECK(std::fabs(measured - estimate) / estimate < 0.005);
  }
}

TEST_CASE("factorized density: monotone CDF, tails, pmf via numeric diff") {
  nn::ParamStore ps(7);
  codec::FactorizedDensity fd("fd", 2, 3, 8, 0.125);
  fd.ensure_params(ps);
  Rng rng(61);
  for (int ch = 0; ch < 2; ++ch) {
    double prev = -1.0;
    for (double x = -100.0; x <= 100.0; x += 0.5) {
      const double c = fd.cdf_value(ps, x, ch);
      CHECK(c >= prev - 1e-15);
      CHECK(c >= 0.0);
      CHECK(c <= 1.0);
      prev = c;
    }
    CHECK(fd.cdf_value(ps, -1e4, ch) < 1e-6);
    CHECK(fd.cdf_value(ps, 1e4, ch) > 1.0 - 1e-6);
    // pmf equals a fine-grid integral of the numeric CDF derivative
    for (int trial = 0; trial < 5; ++trial) {
      const int64_t z = static_cast<int64_t>(rng.uniform_index(17)) - 8;
      const double pmf = fd.pmf_value(ps, z, ch);
      CHECK(pmf >= 0.0);
      const int grid = 400;
      double acc = 0.0;
      for (int i = 0; i < grid; ++i) {
        const double x0 = static_cast<double>(z) - 0.5 + i * (1.0 / grid);
        const double x1 = x0 + 1.0 / grid;
        acc += fd.cdf_value(ps, x1, ch) - fd.cdf_value(ps, x0, ch);
      }
      CHECK(pmf == doctest::Approx(acc).epsilon(1e-6));
    }
  }
}

TEST_CASE("factorized bits gradcheck for mu-free rate loss") {
  nn::ParamStore ps(11);
  codec::FactorizedDensity fd("fd", 3, 3, 8, 0.125);
  fd.ensure_params(ps);
  Rng rng(71);
  nn::Tensor vals(20, 3);
  for (int64_t i = 0; i < vals.size(); ++i) vals[i] = rng.normal() * 4.0;

  nn::Graph g;
  nn::Var bits = fd.bits(g, ps, g.input(vals));
  g.backward(bits);
  const std::string pname = "fd.ch1.l0.H";
  const nn::Tensor* grad = ps.grad(pname);
  REQUIRE(grad != nullptr);
  nn::Tensor gcopy = *grad;
  ps.zero_grads();
  nn::Tensor& w = ps.value(pname);
  for (int64_t i = 0; i < std::min<int64_t>(w.size(), 4); ++i) {
    const double h = 1e-5;
    const double orig = w[i];
    auto eval = [&]() {
      nn::Graph gg;
      return fd.bits(gg, ps, gg.input(vals)).val().item();
    };
    w[i] = orig + h;
    const double up = eval();
    w[i] = orig - h;
    const double dn = eval();
    w[i] = orig;
    const double fd_grad = (up - dn) / (2.0 * h);
    CHECK(std::fabs(fd_grad - gcopy[i]) /
              std::max({std::fabs(fd_grad), std::fabs(gcopy[i]), 1e-8}) <
          1e-4);
  }
}

TEST_CASE("bitstream container roundtrip and error paths") {
  Rng rng(81);
  codec::Bitstream bs;
  bs.n_sparse = 76;
  bs.feat_dim = 32;
  bs.hyper_dim = 32;
  bs.preserved_size = 1;
  bs.center = {1.5f, -2.0f, 0.25f};
  bs.scale = 3.5f;
  bs.ddim_steps = 20;
  bs.sampler_seed = 0x123456789abcdef0ull;
  bs.q_max = 63;
  for (int i = 0; i < 100; ++i) bs.payload_z.push_back(static_cast<uint8_t>(rng.uniform_index(256)));
  for (int i = 0; i < 40; ++i) bs.payload_coords.push_back(static_cast<uint8_t>(rng.uniform_index(256)));
  for (int i = 0; i < 333; ++i) bs.payload_y.push_back(static_cast<uint8_t>(rng.uniform_index(256)));

  auto bytes = codec::pack_bitstream(bs);
  const codec::Bitstream back = codec::unpack_bitstream(bytes);
  CHECK(back.n_sparse == bs.n_sparse);
  CHECK(back.sampler_seed == bs.sampler_seed);
  CHECK(back.q_max == bs.q_max);
  CHECK(back.payload_z == bs.payload_z);
  CHECK(back.payload_coords == bs.payload_coords);
  CHECK(back.payload_y == bs.payload_y);
  CHECK(back.scale == bs.scale);

  // bad magic
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(codec::unpack_bitstream(bad), codec::BadStreamError);
  // truncation
  auto trunc = bytes;
  trunc.resize(trunc.size() - 10);
  CHECK_THROWS_AS(codec::unpack_bitstream(trunc), codec::BadStreamError);
  // payload corruption -> CRC mismatch
  auto corrupt = bytes;
  corrupt[60] ^= 0x40;
  CHECK_THROWS_AS(codec::unpack_bitstream(corrupt), codec::BadStreamError);
  // unsupported version
  auto vbad = bytes;
  vbad[4] = 9;
  CHECK_THROWS_AS(codec::unpack_bitstream(vbad), codec::BadStreamError);
}

TEST_CASE("crc32 known value") {
  const char* s = "123456789";
  CHECK(codec::crc32(reinterpret_cast<const uint8_t*>(s), 9) == 0xcbf43926u);
}
