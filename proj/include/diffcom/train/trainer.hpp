// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "diffcom/codec/pipeline.hpp"
#include "diffcom/train/dataset.hpp"

namespace diffcom::train {

struct TrainingDivergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int points_per_cloud = 512;
  int batch_size = 1;
  double learning_rate = 1e-3;
  int steps = 2000;
  double lambda_comp = 1e-3;
  uint64_t seed = 7;
  std::string dataset = "synth:mixed:8";
  std::string log_path;  // line-delimited JSON when nonempty
};

struct StepLog {
  int64_t step = 0;
  double loss_recon = 0.0;
  double loss_comp = 0.0;
  double bpp_est = 0.0;
  double cd_val = -1.0;
};

using LogSink = std::function<void(const StepLog&)>;

// Stage 1: Chamfer-only autoencoder pretraining. Returns per-step CD.
std::vector<double> pretrain_autoencoder(codec::CodecModel& model,
                                         const TrainConfig& cfg, const Dataset& data,
                                         const LogSink& sink = nullptr);

// Stage 2: joint denoiser + sparse stack + entropy training with
// loss = loss_recon + lambda * loss_comp. The autoencoder stays frozen.
std::vector<StepLog> train_diffusion(codec::CodecModel& model, const TrainConfig& cfg,
                                     const Dataset& data, const LogSink& sink = nullptr);

// One-stage ablation: rate-only training of the factorized feature and
// coordinate models over the frozen autoencoder's quantized latents.
void train_onestage_entropy(codec::CodecModel& model, const TrainConfig& cfg,
                            const Dataset& data, const LogSink& sink = nullptr);

// eps-prediction loss (mean squared error over all entries).
nn::Var loss_recon(nn::Graph& g, nn::Var eps_hat, const nn::Tensor& eps);

struct RdSample {
  double bpp = 0.0;
  double cd = 0.0;
  double d1 = 0.0;
  double enc_time_s = 0.0;
  double dec_time_s = 0.0;
};

// Runs the real codec over every cloud and averages the measurements.
RdSample evaluate_model(codec::CodecModel& model, const Dataset& data, int ddim_steps,
                        uint64_t seed);

void append_log_line(const std::string& path, const StepLog& log);

}  // namespace diffcom::train
