// SPDX-License-Identifier: Apache-2.0

#include "diffcom/codec/pipeline.hpp"

#include <chrono>
#include <cmath>

#include "diffcom/geom/sampling.hpp"

namespace diffcom::codec {

using geom::PointCloud;
using geom::Vec3;
using nn::Graph;
using nn::Tensor;
using nn::Var;

void ModelConfig::validate() const {
  ae.validate();
  if (kind == ModelKind::kTwoStage) {
    prior.validate();
    denoiser.validate();
    if (diffusion_T < 1) throw std::invalid_argument("ModelConfig: diffusion_T >= 1");
  }
  if (points_per_cloud < 8) throw std::invalid_argument("ModelConfig: cloud too small");
}

ModelConfig default_model_config() {
  ModelConfig m;
  m.kind = ModelKind::kTwoStage;
  m.points_per_cloud = 2048;
  m.ae.encoder.rates = {0.5, 0.5, 0.5};
  m.ae.encoder.dims = {32, 48, 64};
  m.ae.encoder.lift_dim = 16;
  m.ae.encoder.k_neighbors = 16;
  m.ae.decoder.factors = {2, 2, 2};
  m.ae.decoder.dims = {48, 32, 24};
  m.ae.decoder.k_candidates = 8;
  m.ae.decoder.refine_candidates = 4;
  m.prior.encoder.rates = {0.25, 0.25, 0.59375};  // 2048 -> 512 -> 128 -> 76
  m.prior.encoder.dims = {24, 32, 32};
  m.prior.encoder.lift_dim = 16;
  m.prior.encoder.k_neighbors = 16;
  m.prior.analysis_channels = 32;
  m.prior.hyper_channels = 32;
  m.prior.conv_width = 32;
  m.prior.preserved_size = true;
  m.prior.analyze_features = true;
  m.prior.use_hyperprior = true;
  m.denoiser.levels = 2;
  m.denoiser.level_rates = {0.5, 0.5};
  m.denoiser.widths = {64, 96};
  m.denoiser.k_neighbors = 12;
  m.denoiser.time_dim = 32;
  return m;
}

ModelConfig smoke_model_config(int points) {
  ModelConfig m = default_model_config();
  m.points_per_cloud = points;
  m.ae.encoder.dims = {16, 20, 24};
  m.ae.encoder.lift_dim = 8;
  m.ae.encoder.k_neighbors = 10;
  m.ae.decoder.dims = {20, 16, 12};
  m.ae.decoder.k_candidates = 6;
  m.ae.decoder.refine_candidates = 3;
  m.prior.encoder.rates = {0.25, 0.25, 0.59375};
  m.prior.encoder.dims = {12, 16, 16};
  m.prior.encoder.lift_dim = 8;
  m.prior.encoder.k_neighbors = 10;
  m.prior.analysis_channels = 8;
  m.prior.hyper_channels = 6;
  m.prior.conv_width = 16;
  m.denoiser.levels = 2;
  m.denoiser.level_rates = {0.5, 0.5};
  m.denoiser.widths = {32, 48};
  m.denoiser.k_neighbors = 8;
  m.denoiser.time_dim = 16;
  return m;
}

ModelConfig one_stage_config(const ModelConfig& base) {
  ModelConfig m = base;
  m.kind = ModelKind::kOneStage;
  // Latents shrunk to the anchor count: reuse the sparse encoder rates for
  // the autoencoder and expand back with matching factors.
  m.ae.encoder.rates = base.prior.encoder.rates;
  m.ae.decoder.factors.assign(base.prior.encoder.rates.size(), 2);
  for (size_t i = 0; i < base.prior.encoder.rates.size(); ++i) {
    const int f = static_cast<int>(
        std::max(1.0, std::round(1.0 / base.prior.encoder.rates[i])));
    m.ae.decoder.factors[base.prior.encoder.rates.size() - 1 - i] = f;
  }
  int mx = 1;
  for (int f : m.ae.decoder.factors) mx = std::max(mx, f);
  m.ae.decoder.k_candidates = mx + 2;
  return m;
}

CodecModel::CodecModel(ModelConfig cfg) : cfg_(cfg), params_(cfg.init_seed) {
  cfg_.validate();
  ae_ = std::make_unique<ae::PointAutoencoder>(cfg_.ae, "ae");
  if (cfg_.kind == ModelKind::kTwoStage) {
    prior_ = std::make_unique<prior::SparsePrior>(cfg_.prior, "sp");
    denoiser_ = std::make_unique<diffusion::Denoiser>(cfg_.denoiser, "dn");
    sched_ = diffusion::make_schedule(cfg_.diffusion_T, cfg_.beta_start, cfg_.beta_end);
    fz_ = std::make_unique<FactorizedDensity>("fz", cfg_.prior.hyper_channels,
                                              cfg_.entropy_depth, cfg_.entropy_width,
                                              0.125);
    fy_ = std::make_unique<FactorizedDensity>("fy", cfg_.prior.analysis_channels,
                                              cfg_.entropy_depth, cfg_.entropy_width,
                                              0.125);
  } else {
    fy_ = std::make_unique<FactorizedDensity>("fy", cfg_.ae.latent_dim(),
                                              cfg_.entropy_depth, cfg_.entropy_width,
                                              0.125);
  }
  fc_ = std::make_unique<FactorizedDensity>("fc", 6, cfg_.entropy_depth,
                                            cfg_.entropy_width, 1.0 / 32.0);
}

void CodecModel::build_params() {
  // A deterministic miniature cloud touches every module once; parameter
  // shapes depend only on widths, never on point counts.
  nn::Rng rng(0xb111d);
  const int64_t n = 32;
  std::vector<Vec3> pts(static_cast<size_t>(n));
  for (auto& p : pts) p = Vec3{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
                               rng.uniform(-0.5, 0.5)};
  {
    Graph g;
    auto enc = ae_->encode_vars(g, params_, pts);
    ae::LatentSet ls{nn::to_tensor(enc.positions), enc.features.val()};
    Graph g2;
    (void)ae_->decode_vars(g2, params_, ls);
  }
  fc_->ensure_params(params_);
  fy_->ensure_params(params_);
  if (cfg_.kind != ModelKind::kTwoStage) return;
  fz_->ensure_params(params_);
  Graph g;
  auto sp = prior_->encode_sparse(g, params_, pts);
  Var y = prior_->analysis(g, params_, nn::to_tensor(sp.positions), sp.features);
  Var z = prior_->hyper_analysis(g, params_, y);
  auto syn = prior_->synthesis(g, params_, z, static_cast<int64_t>(sp.positions.size()));
  diffusion::CondVars cond;
  cond.sparse_pos = nn::to_tensor(sp.positions);
  cond.feats = y;
  cond.gmm_mean = add(g.input(cond.sparse_pos), syn.gmm_offset);
  cond.gmm_var = syn.gmm_var;
  cond.has_distributions = true;
  const int64_t rows = cfg_.ae.latent_count(n);
  Tensor x_t(rows, 3 + cfg_.ae.latent_dim());
  for (int64_t i = 0; i < x_t.size(); ++i) x_t[i] = rng.normal();
  (void)denoiser_->predict_noise(g, params_, x_t, 1, cond);
}

int64_t coord_quantize(double x) {
  double v = (x + 0.5) * 65535.0;
  int64_t q = static_cast<int64_t>(std::llround(v));
  return std::min<int64_t>(65535, std::max<int64_t>(0, q));
}

double coord_dequantize(int64_t q) {
  return static_cast<double>(q) / 65535.0 - 0.5;
}

namespace {

std::vector<Vec3> resample_to(const std::vector<Vec3>& pts, int64_t target) {
  const int64_t n = static_cast<int64_t>(pts.size());
  if (n == target) return pts;
  if (n < target)
    throw ModelMismatchError("input cloud smaller than the model's point budget");
  const auto idx = geom::farthest_point_sampling_from(
      pts, target, geom::lexicographic_min_index(pts));
  std::vector<Vec3> out(static_cast<size_t>(target));
  for (int64_t i = 0; i < target; ++i) out[static_cast<size_t>(i)] = pts[static_cast<size_t>(idx[static_cast<size_t>(i)])];
  return out;
}

// Coordinate payload symbols: per anchor, per axis, high byte then low
// byte, both centered at zero.
std::vector<int64_t> coord_symbols(const Tensor& pos) {
  std::vector<int64_t> sym;
  sym.reserve(static_cast<size_t>(pos.rows() * 6));
  for (int64_t i = 0; i < pos.rows(); ++i)
    for (int64_t a = 0; a < 3; ++a) {
      const int64_t q = coord_quantize(pos.at(i, a));
      sym.push_back((q >> 8) - 128);
      sym.push_back((q & 0xff) - 128);
    }
  return sym;
}

Tensor coords_from_symbols(const std::vector<int64_t>& sym, int64_t n) {
  Tensor pos(n, 3);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t a = 0; a < 3; ++a) {
      const int64_t hi = sym[static_cast<size_t>(i * 6 + a * 2)] + 128;
      const int64_t lo = sym[static_cast<size_t>(i * 6 + a * 2 + 1)] + 128;
      pos.at(i, a) = coord_dequantize((hi << 8) | lo);
    }
  return pos;
}

std::vector<int64_t> round_symbols(const Tensor& t) {
  std::vector<int64_t> sym(static_cast<size_t>(t.size()));
  for (int64_t i = 0; i < t.size(); ++i) sym[static_cast<size_t>(i)] = std::llround(t[i]);
  return sym;
}

struct ChannelTables {
  std::vector<CdfTable> tables;
  const CdfTable& operator()(size_t i) const { return tables[i % tables.size()]; }
};

ChannelTables factorized_tables(const CodecModel& model, const FactorizedDensity& fd,
                                int64_t lo, int64_t hi) {
  ChannelTables ct;
  ct.tables.reserve(static_cast<size_t>(fd.channels()));
  for (int c = 0; c < fd.channels(); ++c)
    ct.tables.push_back(fd.table(model.params(), c, lo, hi));
  return ct;
}

}  // namespace

std::vector<uint8_t> encode_with_factorized(const CodecModel& model,
                                            const FactorizedDensity& fd,
                                            const std::vector<int64_t>& symbols,
                                            int64_t lo, int64_t hi) {
  ChannelTables ct = factorized_tables(model, fd, lo, hi);
  return ac_encode(symbols, [&](size_t i) -> const CdfTable& { return ct(i); });
}

CompressionResult compress(CodecModel& model, const PointCloud& input,
                           const CompressOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelConfig& cfg = model.config();
  if (input.empty()) throw std::invalid_argument("compress: empty cloud");
  const int64_t n_orig = static_cast<int64_t>(input.size());

  PointCloud normalized = geom::normalize_unit_cube(input);
  const auto pts = resample_to(normalized.points(), cfg.points_per_cloud);
  const geom::NormalizationInfo norm = *normalized.norm();

  Bitstream bs;
  bs.center = {static_cast<float>(norm.center.x), static_cast<float>(norm.center.y),
               static_cast<float>(norm.center.z)};
  bs.scale = static_cast<float>(norm.scale);
  bs.coord_bits = 16;
  bs.sampler_seed = opts.seed;

  if (cfg.kind == ModelKind::kTwoStage) {
    Graph g;
    auto sp = model.sparse_prior().encode_sparse(g, model.params(), pts);
    const Tensor sparse_pos = nn::to_tensor(sp.positions);
    const int64_t n_s = sparse_pos.rows();
    const Tensor y = model.sparse_prior()
                         .analysis(g, model.params(), sparse_pos, sp.features)
                         .val();
    const auto y_sym = round_symbols(y);

    const bool hyper = cfg.prior.use_hyperprior;
    std::vector<int64_t> z_sym;
    Tensor mu, sigma;
    if (hyper) {
      Var yv = g.input(y);
      const Tensor z = model.sparse_prior().hyper_analysis(g, model.params(), yv).val();
      z_sym = round_symbols(z);
      Tensor z_hat(z.rows(), z.cols());
      for (int64_t i = 0; i < z.size(); ++i)
        z_hat[i] = static_cast<double>(z_sym[static_cast<size_t>(i)]);
      Graph g2;
      auto syn = model.sparse_prior().synthesis(g2, model.params(), g2.input(z_hat), n_s);
      mu = syn.mu_code.val();
      sigma = syn.sigma_code.val();
    }

    int64_t q_max = 15;
    for (int64_t s : y_sym) q_max = std::max<int64_t>(q_max, std::llabs(s) + 1);
    for (int64_t s : z_sym) q_max = std::max<int64_t>(q_max, std::llabs(s) + 1);
    q_max = std::min<int64_t>(q_max, 30000);
    bs.q_max = static_cast<int16_t>(q_max);

    if (hyper) {
      ChannelTables zt = factorized_tables(model, model.factorized_z(), -q_max, q_max);
      bs.payload_z = ac_encode(z_sym, [&](size_t i) -> const CdfTable& { return zt(i); });
      std::vector<CdfTable> yt;
      yt.reserve(y_sym.size());
      for (int64_t i = 0; i < y.rows(); ++i)
        for (int64_t c = 0; c < y.cols(); ++c)
          yt.push_back(laplace_cdf_table(mu.at(i, c), sigma.at(i, c), -q_max, q_max));
      bs.payload_y =
          ac_encode(y_sym, [&](size_t i) -> const CdfTable& { return yt[i]; });
    } else {
      bs.payload_y = encode_with_factorized(model, model.factorized_y(), y_sym,
                                            -q_max, q_max);
    }
    const auto c_sym = coord_symbols(sparse_pos);
    ChannelTables ct = factorized_tables(model, model.factorized_coord(), -128, 127);
    bs.payload_coords =
        ac_encode(c_sym, [&](size_t i) -> const CdfTable& { return ct(i); });

    bs.n_sparse = static_cast<uint16_t>(n_s);
    bs.feat_dim = static_cast<uint16_t>(cfg.prior.analysis_channels);
    bs.hyper_dim = static_cast<uint16_t>(hyper ? cfg.prior.hyper_channels : 0);
    bs.preserved_size = cfg.prior.preserved_size ? 1 : 0;
    bs.ddim_steps = static_cast<uint16_t>(opts.ddim_steps);
  } else {
    const ae::LatentSet latents = model.autoencoder().encode(model.params(), pts);
    Tensor scaled(latents.features.rows(), latents.features.cols());
    for (int64_t i = 0; i < scaled.size(); ++i)
      scaled[i] = latents.features[i] * cfg.feature_scale;
    const auto y_sym = round_symbols(scaled);
    int64_t q_max = 15;
    for (int64_t s : y_sym) q_max = std::max<int64_t>(q_max, std::llabs(s) + 1);
    bs.q_max = static_cast<int16_t>(std::min<int64_t>(q_max, 30000));
    bs.payload_y = encode_with_factorized(model, model.factorized_y(), y_sym,
                                          -bs.q_max, bs.q_max);
    const auto c_sym = coord_symbols(latents.positions);
    ChannelTables ct = factorized_tables(model, model.factorized_coord(), -128, 127);
    bs.payload_coords =
        ac_encode(c_sym, [&](size_t i) -> const CdfTable& { return ct(i); });
    bs.n_sparse = static_cast<uint16_t>(latents.positions.rows());
    bs.feat_dim = static_cast<uint16_t>(latents.features.cols());
    bs.hyper_dim = 0;
    bs.preserved_size = 1;
    bs.ddim_steps = 0;
  }

  CompressionResult res;
  res.stream = std::move(bs);
  res.payload_bytes = res.stream.payload_bytes();
  res.header_bytes = res.stream.header_bytes() + 4;  // container CRC trailer
  res.n_sparse = res.stream.n_sparse;
  res.bpp = 8.0 * static_cast<double>(res.stream.total_bytes()) /
            static_cast<double>(n_orig);
  res.enc_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

DecompressResult decompress(CodecModel& model, const Bitstream& bs,
                            int override_steps) {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelConfig& cfg = model.config();
  if (bs.coord_bits != 16) throw ModelMismatchError("unsupported coord_bits");
  const int64_t n_s = bs.n_sparse;
  const int64_t q_max = bs.q_max;

  geom::NormalizationInfo norm;
  norm.center = Vec3{bs.center[0], bs.center[1], bs.center[2]};
  norm.scale = bs.scale;

  geom::PointCloud out;
  int used_steps = 0;
  if (cfg.kind == ModelKind::kTwoStage) {
    const bool hyper = cfg.prior.use_hyperprior;
    if (bs.feat_dim != cfg.prior.analysis_channels ||
        bs.hyper_dim != (hyper ? cfg.prior.hyper_channels : 0) ||
        bs.preserved_size != (cfg.prior.preserved_size ? 1 : 0) ||
        n_s != cfg.prior.sparse_count(cfg.points_per_cloud))
      throw ModelMismatchError("bitstream does not match the checkpoint model");

    Tensor mu, sigma, gmm_mean, gmm_var;
    Tensor y_feats(n_s, cfg.prior.analysis_channels);
    if (hyper) {
      const int64_t z_rows = cfg.prior.preserved_size ? n_s : (n_s + 1) / 2;
      ChannelTables zt = factorized_tables(model, model.factorized_z(), -q_max, q_max);
      const auto z_sym =
          ac_decode(bs.payload_z, [&](size_t i) -> const CdfTable& { return zt(i); },
                    static_cast<size_t>(z_rows * cfg.prior.hyper_channels));
      Tensor z_hat(z_rows, cfg.prior.hyper_channels);
      for (int64_t i = 0; i < z_hat.size(); ++i)
        z_hat[i] = static_cast<double>(z_sym[static_cast<size_t>(i)]);
      Graph g;
      auto syn = model.sparse_prior().synthesis(g, model.params(), g.input(z_hat), n_s);
      mu = syn.mu_code.val();
      sigma = syn.sigma_code.val();
      gmm_mean = syn.gmm_offset.val();
      gmm_var = syn.gmm_var.val();
    } else if (!bs.payload_z.empty()) {
      throw ModelMismatchError("unexpected hyper payload");
    }

    ChannelTables ct = factorized_tables(model, model.factorized_coord(), -128, 127);
    const auto c_sym =
        ac_decode(bs.payload_coords, [&](size_t i) -> const CdfTable& { return ct(i); },
                  static_cast<size_t>(n_s * 6));
    const Tensor sparse_pos = coords_from_symbols(c_sym, n_s);

    std::vector<int64_t> y_sym;
    if (hyper) {
      std::vector<CdfTable> yt;
      yt.reserve(static_cast<size_t>(n_s * cfg.prior.analysis_channels));
      for (int64_t i = 0; i < n_s; ++i)
        for (int64_t c = 0; c < cfg.prior.analysis_channels; ++c)
          yt.push_back(laplace_cdf_table(mu.at(i, c), sigma.at(i, c), -q_max, q_max));
      y_sym = ac_decode(bs.payload_y,
                        [&](size_t i) -> const CdfTable& { return yt[i]; },
                        static_cast<size_t>(n_s * cfg.prior.analysis_channels));
    } else {
      ChannelTables yt = factorized_tables(model, model.factorized_y(), -q_max, q_max);
      y_sym = ac_decode(bs.payload_y,
                        [&](size_t i) -> const CdfTable& { return yt(i); },
                        static_cast<size_t>(n_s * cfg.prior.analysis_channels));
    }
    for (int64_t i = 0; i < y_feats.size(); ++i)
      y_feats[i] = static_cast<double>(y_sym[static_cast<size_t>(i)]);

    // GMM means are anchors plus decoded offsets.
    Tensor means(n_s, 3);
    if (hyper) {
      for (int64_t i = 0; i < n_s; ++i)
        for (int64_t a = 0; a < 3; ++a)
          means.at(i, a) = sparse_pos.at(i, a) + gmm_mean.at(i, a);
    } else {
      gmm_var = Tensor(n_s, 3);
      means = sparse_pos;
    }

    used_steps = override_steps > 0 ? override_steps
                                    : static_cast<int>(bs.ddim_steps > 0 ? bs.ddim_steps : 20);
    Graph gc;
    diffusion::CondVars cond = diffusion::make_cond_vars(
        gc, sparse_pos, y_feats, means, gmm_var, hyper);
    const int64_t rows = cfg.latent_count();
    const Tensor x0 = model.denoiser().ddim_sample(
        model.params(), rows, 3 + cfg.ae.latent_dim(), cond, model.schedule(),
        used_steps, bs.sampler_seed);

    ae::LatentSet latents;
    latents.positions = Tensor(rows, 3);
    latents.features = Tensor(rows, cfg.ae.latent_dim());
    for (int64_t i = 0; i < rows; ++i) {
      for (int64_t c = 0; c < 3; ++c) latents.positions.at(i, c) = x0.at(i, c);
      for (int64_t c = 0; c < cfg.ae.latent_dim(); ++c)
        latents.features.at(i, c) = x0.at(i, c + 3);
    }
    const auto decoded = model.autoencoder().decode(model.params(), latents);
    out = geom::denormalize(PointCloud(decoded), norm);
  } else {
    if (bs.feat_dim != cfg.ae.latent_dim() || bs.hyper_dim != 0)
      throw ModelMismatchError("bitstream does not match the one-stage model");
    ChannelTables ct = factorized_tables(model, model.factorized_coord(), -128, 127);
    const auto c_sym =
        ac_decode(bs.payload_coords, [&](size_t i) -> const CdfTable& { return ct(i); },
                  static_cast<size_t>(n_s * 6));
    ChannelTables yt = factorized_tables(model, model.factorized_y(), -q_max, q_max);
    const auto y_sym = ac_decode(
        bs.payload_y, [&](size_t i) -> const CdfTable& { return yt(i); },
        static_cast<size_t>(n_s * cfg.ae.latent_dim()));
    ae::LatentSet latents;
    latents.positions = coords_from_symbols(c_sym, n_s);
    latents.features = Tensor(n_s, cfg.ae.latent_dim());
    for (int64_t i = 0; i < latents.features.size(); ++i)
      latents.features[i] = static_cast<double>(y_sym[static_cast<size_t>(i)]) /
                            cfg.feature_scale;
    const auto decoded = model.autoencoder().decode(model.params(), latents);
    out = geom::denormalize(PointCloud(decoded), norm);
  }

  DecompressResult res;
  res.cloud = std::move(out);
  res.ddim_steps = used_steps;
  res.dec_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace diffcom::codec
