// SPDX-License-Identifier: Apache-2.0
//
// Latent point autoencoder: staged FPS downsampling with local geometry
// embeddings and neighborhood attention on the way down, sub-point
// convolution upsampling with directional residual hypotheses on the way
// up, plus a rate-1 refinement stage.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffcom/geom/point_cloud.hpp"
#include "diffcom/nn/graph.hpp"
#include "diffcom/nn/layers.hpp"

namespace diffcom::ae {

struct EncoderConfig {
  std::vector<double> rates;  // points kept / points in, per stage
  std::vector<int> dims;      // feature width per stage output
  int lift_dim = 8;           // width of the stage-0 coordinate lift
  int k_neighbors = 12;
};

struct DecoderConfig {
  std::vector<int> factors;  // expansion per stage (f_s)
  std::vector<int> dims;     // feature width per stage output
  int k_candidates = 6;      // candidates per parent, > every factor
  int refine_candidates = 4; // candidates for the final rate-1 stage
};

struct AeConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;

  // Product of rounded per-stage counts for an input of n points.
  int64_t latent_count(int64_t n) const;
  int64_t output_count(int64_t latent_n) const;
  int latent_dim() const { return encoder.dims.back(); }
  void validate() const;
};

struct LatentSet {
  nn::Tensor positions;  // N_l x 3
  nn::Tensor features;   // N_l x d, bounded to (-1, 1)
};

// One encoder stage as a graph fragment over constant positions.
struct StageResult {
  std::vector<geom::Vec3> positions;
  nn::Var features;
};

class PointEncoder {
 public:
  PointEncoder(EncoderConfig cfg, std::string prefix)
      : cfg_(std::move(cfg)), prefix_(std::move(prefix)) {}

  // pts must be normalized to the unit cube. Features come back bounded
  // by tanh. FPS starts from the lexicographically smallest point so the
  // selected set is invariant to input ordering.
  StageResult encode(nn::Graph& g, nn::ParamStore& ps,
                     const std::vector<geom::Vec3>& pts) const;

  const EncoderConfig& config() const { return cfg_; }

 private:
  StageResult downsample_block(nn::Graph& g, nn::ParamStore& ps, int stage,
                               const std::vector<geom::Vec3>& pts,
                               nn::Var feats) const;
  EncoderConfig cfg_;
  std::string prefix_;
};

class PointDecoder {
 public:
  PointDecoder(DecoderConfig cfg, std::string prefix)
      : cfg_(std::move(cfg)), prefix_(std::move(prefix)) {}

  // Returns decoded positions (count = N_l * prod(factors)) as a graph
  // variable so losses can differentiate through them.
  nn::Var decode(nn::Graph& g, nn::ParamStore& ps, nn::Var latent_pos,
                 nn::Var latent_feats) const;

  const DecoderConfig& config() const { return cfg_; }

 private:
  struct UpResult {
    nn::Var positions;
    nn::Var features;
  };
  UpResult upsample_block(nn::Graph& g, nn::ParamStore& ps, const std::string& name,
                          nn::Var pos, nn::Var feats, int factor, int candidates,
                          int out_dim) const;
  DecoderConfig cfg_;
  std::string prefix_;
};

class PointAutoencoder {
 public:
  PointAutoencoder(AeConfig cfg, std::string prefix = "ae")
      : cfg_(cfg), encoder_(cfg.encoder, prefix + ".enc"),
        decoder_(cfg.decoder, prefix + ".dec"), prefix_(std::move(prefix)) {}

  // Graph-building paths (training).
  StageResult encode_vars(nn::Graph& g, nn::ParamStore& ps,
                          const std::vector<geom::Vec3>& pts) const;
  nn::Var decode_vars(nn::Graph& g, nn::ParamStore& ps, const LatentSet& latents) const;
  // Keeps the encoder-decoder gradient path connected.
  nn::Var decode_vars(nn::Graph& g, nn::ParamStore& ps, nn::Var latent_pos,
                      nn::Var latent_feats) const {
    return decoder_.decode(g, ps, latent_pos, latent_feats);
  }

  // Value paths (inference); deterministic given weights and input.
  LatentSet encode(nn::ParamStore& ps, const std::vector<geom::Vec3>& pts) const;
  std::vector<geom::Vec3> decode(nn::ParamStore& ps, const LatentSet& latents) const;

  const AeConfig& config() const { return cfg_; }

 private:
  AeConfig cfg_;
  PointEncoder encoder_;
  PointDecoder decoder_;
  std::string prefix_;
};

// Chamfer loss between decoded positions (graph variable) and a constant
// target cloud; nearest-neighbor assignments are held fixed within the
// step.
nn::Var chamfer_loss(nn::Graph& g, nn::Var decoded,
                     const std::vector<geom::Vec3>& target);

}  // namespace diffcom::ae
