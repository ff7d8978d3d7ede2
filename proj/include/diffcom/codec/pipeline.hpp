// SPDX-License-Identifier: Apache-2.0
//
// End-to-end codec: model bundle (configs + weights) plus compress and
// decompress over the .dcp container.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "diffcom/ae/autoencoder.hpp"
#include "diffcom/codec/bitstream.hpp"
#include "diffcom/codec/models.hpp"
#include "diffcom/diffusion/denoiser.hpp"
#include "diffcom/geom/point_cloud.hpp"
#include "diffcom/prior/sparse_prior.hpp"

namespace diffcom::codec {

struct ModelMismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ModelKind { kTwoStage, kOneStage };

struct ModelConfig {
  ModelKind kind = ModelKind::kTwoStage;
  int points_per_cloud = 2048;
  ae::AeConfig ae;                      // latent autoencoder
  prior::PriorConfig prior;             // two-stage only
  diffusion::DenoiserConfig denoiser;   // two-stage only
  int64_t diffusion_T = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int entropy_depth = 3;
  int entropy_width = 8;
  double feature_scale = 16.0;          // one-stage feature quantization
  uint64_t init_seed = 0x5eedf00d;

  int64_t latent_count() const { return ae.latent_count(points_per_cloud); }
  void validate() const;
};

// Paper-scale default: 2048-point clouds, 256 latents, 76 anchors.
ModelConfig default_model_config();
// Desk-scale variant for a given cloud size (512, 256, ...).
ModelConfig smoke_model_config(int points);
// One-stage ablation: latents shrunk to the anchor count, coded directly.
ModelConfig one_stage_config(const ModelConfig& base);

class CodecModel {
 public:
  explicit CodecModel(ModelConfig cfg);

  ModelConfig& config() { return cfg_; }
  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  const ae::PointAutoencoder& autoencoder() const { return *ae_; }
  const prior::SparsePrior& sparse_prior() const { return *prior_; }
  const diffusion::Denoiser& denoiser() const { return *denoiser_; }
  const diffusion::DiffusionSchedule& schedule() const { return sched_; }
  const FactorizedDensity& factorized_y() const { return *fy_; }
  const FactorizedDensity& factorized_z() const { return *fz_; }
  const FactorizedDensity& factorized_coord() const { return *fc_; }

  // Materializes every parameter so checkpoints are complete even before
  // training has touched a module.
  void build_params();

  int64_t train_step = 0;
  uint64_t train_seed = 0;

 private:
  ModelConfig cfg_;
  nn::ParamStore params_;
  std::unique_ptr<ae::PointAutoencoder> ae_;
  std::unique_ptr<prior::SparsePrior> prior_;
  std::unique_ptr<diffusion::Denoiser> denoiser_;
  std::unique_ptr<FactorizedDensity> fy_, fz_, fc_;
  diffusion::DiffusionSchedule sched_;
};

struct CompressOptions {
  uint64_t seed = 0x0dcb'5eed;
  int ddim_steps = 20;
};

struct CompressionResult {
  Bitstream stream;
  double bpp = 0.0;
  size_t payload_bytes = 0;
  size_t header_bytes = 0;
  int n_sparse = 0;
  double enc_time_s = 0.0;
};

struct DecompressResult {
  geom::PointCloud cloud;
  double dec_time_s = 0.0;
  int ddim_steps = 0;
};

CompressionResult compress(CodecModel& model, const geom::PointCloud& input,
                           const CompressOptions& opts);

DecompressResult decompress(CodecModel& model, const Bitstream& bs,
                            int override_steps = 0);

// 16-bit fixed-point coordinate grid over the unit cube.
int64_t coord_quantize(double x);
double coord_dequantize(int64_t q);

// Measured payload size of coding `symbols` with per-(index mod channels)
// tables from a factorized model; used for rate reports and ablations.
std::vector<uint8_t> encode_with_factorized(const CodecModel& model,
                                            const FactorizedDensity& fd,
                                            const std::vector<int64_t>& symbols,
                                            int64_t lo, int64_t hi);

}  // namespace diffcom::codec
