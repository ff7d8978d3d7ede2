// SPDX-License-Identifier: Apache-2.0

#include "diffcom/train/trainer.hpp"

#include <cmath>
#include <fstream>

#include "diffcom/diffusion/schedule.hpp"
#include "diffcom/geom/metrics.hpp"
#include "diffcom/nn/rng.hpp"

namespace diffcom::train {

using codec::CodecModel;
using geom::Vec3;
using nn::Graph;
using nn::Tensor;
using nn::Var;

void append_log_line(const std::string& path, const StepLog& log) {
  std::ofstream out(path, std::ios::app);
  out << "{\"step\":" << log.step << ",\"loss_recon\":" << log.loss_recon
      << ",\"loss_comp\":" << log.loss_comp << ",\"bpp_est\":" << log.bpp_est
      << ",\"cd_val\":" << log.cd_val << "}\n";
}

Var loss_recon(Graph& g, Var eps_hat, const Tensor& eps) {
  return mse(eps_hat, g.input(eps));
}

namespace {

void emit(const LogSink& sink, const std::string& path, const StepLog& log) {
  if (sink) sink(log);
  if (!path.empty()) append_log_line(path, log);
}

void guard_finite(double v, int64_t step) {
  if (!std::isfinite(v))
    throw TrainingDivergence("loss diverged (NaN/inf) at step " + std::to_string(step));
}

Tensor latent_state(const ae::LatentSet& ls) {
  Tensor x0(ls.positions.rows(), 3 + ls.features.cols());
  for (int64_t i = 0; i < ls.positions.rows(); ++i) {
    for (int64_t c = 0; c < 3; ++c) x0.at(i, c) = ls.positions.at(i, c);
    for (int64_t c = 0; c < ls.features.cols(); ++c)
      x0.at(i, c + 3) = ls.features.at(i, c);
  }
  return x0;
}

std::vector<int64_t> coord_symbol_values(const Tensor& pos) {
  std::vector<int64_t> sym;
  sym.reserve(static_cast<size_t>(pos.rows() * 6));
  for (int64_t i = 0; i < pos.rows(); ++i)
    for (int64_t a = 0; a < 3; ++a) {
      const int64_t q = codec::coord_quantize(pos.at(i, a));
      sym.push_back((q >> 8) - 128);
      sym.push_back((q & 0xff) - 128);
    }
  return sym;
}

// Noise-quantized coordinate symbols as a (N_s x 6) tensor feeding the
// factorized coordinate model's rate term.
Tensor noisy_coord_tensor(const Tensor& pos, nn::Rng& rng) {
  const auto sym = coord_symbol_values(pos);
  Tensor t(pos.rows(), 6);
  for (int64_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<double>(sym[static_cast<size_t>(i)]) + rng.uniform(-0.5, 0.5);
  return t;
}

}  // namespace

std::vector<double> pretrain_autoencoder(CodecModel& model, const TrainConfig& cfg,
                                         const Dataset& data, const LogSink& sink) {
  if (data.clouds.empty()) throw std::invalid_argument("pretrain: empty dataset");
  std::vector<double> history;
  history.reserve(static_cast<size_t>(cfg.steps));
  auto& ps = model.params();
  model.train_seed = cfg.seed;
  for (int64_t step = 0; step < cfg.steps; ++step) {
    const int64_t gstep = model.train_step;
    double batch_loss = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const auto& pts =
          data.clouds[static_cast<size_t>((gstep * cfg.batch_size + b) %
                                          static_cast<int64_t>(data.clouds.size()))];
      Graph g;
      auto enc = model.autoencoder().encode_vars(g, ps, pts);
      Var decoded = model.autoencoder().decode_vars(
          g, ps, g.input(nn::to_tensor(enc.positions)), enc.features);
      Var loss = ae::chamfer_loss(g, decoded, pts);
      batch_loss += loss.val().item();
      g.backward(loss);
    }
    batch_loss /= cfg.batch_size;
    guard_finite(batch_loss, step);
    ps.adam_step(cfg.learning_rate);
    ps.zero_grads();
    history.push_back(batch_loss);
    StepLog log{gstep, batch_loss, 0.0, 0.0, batch_loss};
    emit(sink, cfg.log_path, log);
    ++model.train_step;
  }
  return history;
}

std::vector<StepLog> train_diffusion(CodecModel& model, const TrainConfig& cfg,
                                     const Dataset& data, const LogSink& sink) {
  if (data.clouds.empty()) throw std::invalid_argument("train_diffusion: empty dataset");
  const codec::ModelConfig& mc = model.config();
  if (mc.kind != codec::ModelKind::kTwoStage)
    throw std::invalid_argument("train_diffusion: needs a two-stage model");
  auto& ps = model.params();
  const auto& sched = model.schedule();
  const double n_points = static_cast<double>(mc.points_per_cloud);

  // The autoencoder is frozen here, so latents per cloud are fixed.
  std::vector<Tensor> states;
  states.reserve(data.clouds.size());
  for (const auto& pts : data.clouds)
    states.push_back(latent_state(model.autoencoder().encode(ps, pts)));

  std::vector<StepLog> logs;
  logs.reserve(static_cast<size_t>(cfg.steps));
  model.train_seed = cfg.seed;
  for (int64_t step = 0; step < cfg.steps; ++step) {
    const int64_t gstep = model.train_step;
    double recon_acc = 0.0, comp_acc = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      nn::Rng rng(nn::hash_combine(cfg.seed,
                                   static_cast<uint64_t>(gstep * cfg.batch_size + b)));
      const size_t ci = static_cast<size_t>((gstep * cfg.batch_size + b) %
                                            static_cast<int64_t>(data.clouds.size()));
      const auto& pts = data.clouds[ci];
      const Tensor& x0 = states[ci];

      const int64_t t = 1 + static_cast<int64_t>(rng.uniform_index(
                                static_cast<uint64_t>(sched.T)));
      Tensor eps(x0.rows(), x0.cols());
      for (int64_t i = 0; i < eps.size(); ++i) eps[i] = rng.normal();
      const Tensor x_t = diffusion::forward_noising(x0, t, eps, sched);

      Graph g;
      auto sp = model.sparse_prior().encode_sparse(g, ps, pts);
      const Tensor sparse_pos = nn::to_tensor(sp.positions);
      Var y = model.sparse_prior().analysis(g, ps, sparse_pos, sp.features);
      Var y_tilde = prior::quantize_noise(g, y, rng);

      diffusion::CondVars cond;
      cond.sparse_pos = sparse_pos;
      cond.feats = y_tilde;
      Var bits_total = g.input(Tensor::scalar(0.0));
      if (mc.prior.use_hyperprior) {
        Var z = model.sparse_prior().hyper_analysis(g, ps, y);
        Var z_tilde = prior::quantize_noise(g, z, rng);
        auto syn = model.sparse_prior().synthesis(g, ps, z_tilde, sparse_pos.rows());
        cond.gmm_mean = add(g.input(sparse_pos), syn.gmm_offset);
        cond.gmm_var = syn.gmm_var;
        cond.has_distributions = true;
        Var y_bits = sum_all(laplace_bits(sub(y_tilde, syn.mu_code), syn.sigma_code));
        Var z_bits = model.factorized_z().bits(g, ps, z_tilde);
        bits_total = add(bits_total, add(y_bits, z_bits));
      } else {
        cond.gmm_mean = g.input(Tensor(sparse_pos.rows(), 3));
        cond.gmm_var = g.input(Tensor(sparse_pos.rows(), 3));
        cond.has_distributions = false;
        bits_total = add(bits_total, model.factorized_y().bits(g, ps, y_tilde));
      }
      Var coord_vals = g.input(noisy_coord_tensor(sparse_pos, rng));
      bits_total = add(bits_total, model.factorized_coord().bits(g, ps, coord_vals));
      Var comp_bpp = scale(bits_total, 1.0 / n_points);

      Var eps_hat = model.denoiser().predict_noise(g, ps, x_t, t, cond);
      Var recon = loss_recon(g, eps_hat, eps);
      Var total = cfg.lambda_comp > 0.0
                      ? add(recon, scale(comp_bpp, cfg.lambda_comp))
                      : recon;
      recon_acc += recon.val().item();
      comp_acc += comp_bpp.val().item();
      g.backward(total);
    }
    recon_acc /= cfg.batch_size;
    comp_acc /= cfg.batch_size;
    guard_finite(recon_acc + comp_acc, step);
    ps.adam_step(cfg.learning_rate);
    ps.zero_grads();
    StepLog log{gstep, recon_acc, comp_acc, comp_acc, -1.0};
    logs.push_back(log);
    emit(sink, cfg.log_path, log);
    ++model.train_step;
  }
  return logs;
}

void train_onestage_entropy(CodecModel& model, const TrainConfig& cfg,
                            const Dataset& data, const LogSink& sink) {
  const codec::ModelConfig& mc = model.config();
  auto& ps = model.params();
  std::vector<ae::LatentSet> latents;
  latents.reserve(data.clouds.size());
  for (const auto& pts : data.clouds)
    latents.push_back(model.autoencoder().encode(ps, pts));
  const double n_points = static_cast<double>(mc.points_per_cloud);

  for (int64_t step = 0; step < cfg.steps; ++step) {
    nn::Rng rng(nn::hash_combine(cfg.seed ^ 0xf00d, static_cast<uint64_t>(step)));
    const auto& ls = latents[static_cast<size_t>(step) % latents.size()];
    Graph g;
    Tensor scaled(ls.features.rows(), ls.features.cols());
    for (int64_t i = 0; i < scaled.size(); ++i)
      scaled[i] = ls.features[i] * mc.feature_scale + rng.uniform(-0.5, 0.5);
    Var bits = model.factorized_y().bits(g, ps, g.input(scaled));
    bits = add(bits, model.factorized_coord().bits(
                         g, ps, g.input(noisy_coord_tensor(ls.positions, rng))));
    Var bpp = scale(bits, 1.0 / n_points);
    guard_finite(bpp.val().item(), step);
    g.backward(bpp);
    ps.adam_step(cfg.learning_rate);
    ps.zero_grads();
    StepLog log{step, 0.0, bpp.val().item(), bpp.val().item(), -1.0};
    emit(sink, cfg.log_path, log);
    ++model.train_step;
  }
}

RdSample evaluate_model(CodecModel& model, const Dataset& data, int ddim_steps,
                        uint64_t seed) {
  RdSample acc;
  for (const auto& pts : data.clouds) {
    geom::PointCloud cloud{pts};
    codec::CompressOptions opts;
    opts.seed = seed;
    opts.ddim_steps = ddim_steps;
    auto comp = codec::compress(model, cloud, opts);
    auto dec = codec::decompress(model, comp.stream);
    acc.bpp += comp.bpp;
    acc.cd += geom::chamfer_distance(cloud, dec.cloud);
    acc.d1 += geom::d1_psnr(cloud, dec.cloud);
    acc.enc_time_s += comp.enc_time_s;
    acc.dec_time_s += dec.dec_time_s;
  }
  const double n = static_cast<double>(data.clouds.size());
  acc.bpp /= n;
  acc.cd /= n;
  acc.d1 /= n;
  acc.enc_time_s /= n;
  acc.dec_time_s /= n;
  return acc;
}

}  // namespace diffcom::train
