// SPDX-License-Identifier: Apache-2.0

#include "diffcom/diffusion/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace diffcom::diffusion {

DiffusionSchedule make_schedule(int64_t T, double beta_start, double beta_end) {
  if (T < 1) throw std::invalid_argument("make_schedule: T must be >= 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
    throw std::invalid_argument("make_schedule: need 0 < beta_start <= beta_end < 1");
  DiffusionSchedule s;
  s.T = T;
  s.beta.resize(static_cast<size_t>(T));
  s.alpha.resize(static_cast<size_t>(T));
  s.alpha_bar.resize(static_cast<size_t>(T));
  double prod = 1.0;
  for (int64_t t = 0; t < T; ++t) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(T - 1);
    const double b = beta_start + (beta_end - beta_start) * frac;
    s.beta[static_cast<size_t>(t)] = b;
    s.alpha[static_cast<size_t>(t)] = 1.0 - b;
    prod *= 1.0 - b;
    s.alpha_bar[static_cast<size_t>(t)] = prod;
  }
  return s;
}

nn::Tensor forward_noising(const nn::Tensor& x0, int64_t t, const nn::Tensor& eps,
                           const DiffusionSchedule& sched) {
  if (t < 1 || t > sched.T) throw std::invalid_argument("forward_noising: t out of range");
  if (!x0.same_shape(eps)) throw std::invalid_argument("forward_noising: shape mismatch");
  const double ab = sched.alpha_bar_at(t);
  const double c0 = std::sqrt(ab);
  const double c1 = std::sqrt(1.0 - ab);
  nn::Tensor out(x0.rows(), x0.cols());
  for (int64_t i = 0; i < x0.size(); ++i) out[i] = c0 * x0[i] + c1 * eps[i];
  return out;
}

nn::Tensor ddpm_mean(const nn::Tensor& x_t, int64_t t, const nn::Tensor& eps,
                     const DiffusionSchedule& sched) {
  if (t < 1 || t > sched.T) throw std::invalid_argument("ddpm_mean: t out of range");
  const double c_eps = sched.beta_at(t) / std::sqrt(1.0 - sched.alpha_bar_at(t));
  const double inv_sa = 1.0 / std::sqrt(sched.alpha_at(t));
  nn::Tensor out(x_t.rows(), x_t.cols());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = inv_sa * (x_t[i] - c_eps * eps[i]);
  return out;
}

std::vector<int64_t> ddim_timesteps(int64_t T, int64_t steps) {
  if (steps < 1 || steps > T) throw std::invalid_argument("ddim_timesteps: bad step count");
  std::vector<int64_t> taus(static_cast<size_t>(steps));
  if (steps == 1) {
    taus[0] = T;
    return taus;
  }
  for (int64_t i = 0; i < steps; ++i) {
    const double f = static_cast<double>(i) / static_cast<double>(steps - 1);
    taus[static_cast<size_t>(i)] =
        1 + static_cast<int64_t>(std::llround(f * static_cast<double>(T - 1)));
  }
  for (size_t i = 1; i < taus.size(); ++i)
    if (taus[i] <= taus[i - 1]) taus[i] = taus[i - 1] + 1;  // strictly ascending
  return taus;
}

}  // namespace diffcom::diffusion
