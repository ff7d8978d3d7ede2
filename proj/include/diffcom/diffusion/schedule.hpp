// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "diffcom/nn/tensor.hpp"

namespace diffcom::diffusion {

struct DiffusionSchedule {
  int64_t T = 0;
  std::vector<double> beta;       // index t-1 holds beta_t
  std::vector<double> alpha;      // 1 - beta_t
  std::vector<double> alpha_bar;  // cumulative product

  double beta_at(int64_t t) const { return beta[static_cast<size_t>(t - 1)]; }
  double alpha_at(int64_t t) const { return alpha[static_cast<size_t>(t - 1)]; }
  double alpha_bar_at(int64_t t) const { return alpha_bar[static_cast<size_t>(t - 1)]; }
};

// Linear beta interpolation between the bounds; alpha products exact.
DiffusionSchedule make_schedule(int64_t T, double beta_start, double beta_end);

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, elementwise.
nn::Tensor forward_noising(const nn::Tensor& x0, int64_t t, const nn::Tensor& eps,
                           const DiffusionSchedule& sched);

// Evenly spaced ascending sub-schedule of `steps` timesteps in [1, T].
std::vector<int64_t> ddim_timesteps(int64_t T, int64_t steps);

// Posterior mean (x_t - beta_t/sqrt(1-abar_t) * eps) / sqrt(alpha_t); the
// deterministic part of the ancestral step, with the noise injected by
// the caller.
nn::Tensor ddpm_mean(const nn::Tensor& x_t, int64_t t, const nn::Tensor& eps,
                     const DiffusionSchedule& sched);

}  // namespace diffcom::diffusion
