#pragma once

#include <functional>
#include <string>
#include <vector>

#include "endora/autograd.hpp"
#include "endora/rng.hpp"
#include "endora/tensor.hpp"

namespace endora::diffusion {

enum class ScheduleKind { LinearBeta, Cosine };

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind k);

/// Variance-preserving noise schedule: alpha[t]^2 + sigma[t]^2 = 1 for all
/// t in [0,T], alpha[0] = 1, sigma[0] = 0. All arrays are length T+1 and
/// held in 64-bit floats.
struct NoiseSchedule {
    long T = 0;
    ScheduleKind kind = ScheduleKind::LinearBeta;
    std::vector<double> alpha;  // signal coefficient, strictly decreasing
    std::vector<double> sigma;  // noise coefficient, strictly increasing
    std::vector<double> beta;   // per-step variance, beta[0] = 0

    double alpha_bar(long t) const { return alpha[static_cast<size_t>(t)] * alpha[static_cast<size_t>(t)]; }
};

/// Build a schedule. With beta_start/beta_end <= 0 the linear-beta range
/// defaults to [1e-4, 0.02] scaled by 1000/T, so the terminal state stays
/// close to pure noise at any step count.
NoiseSchedule build_schedule(long T, ScheduleKind kind, double beta_start = 0.0, double beta_end = 0.0);

/// xt = alpha_t * x0 + sigma_t * eps.
Tensor forward_marginal(const Tensor& x0, long t, const Tensor& eps, const NoiseSchedule& s);

/// Uniform timesteps on {1..T}, deterministic per generator state.
std::vector<long> sample_timesteps(long batch_size, long T, Rng& rng);

using WeightFn = std::function<double(long)>;

/// Mean-per-element squared error between predicted and true noise,
/// weighted by w(t) and averaged over the batch.
double elbo_loss(const std::vector<Tensor>& eps_pred, const std::vector<Tensor>& eps,
                 const std::vector<long>& t, const WeightFn& w = nullptr);

/// Single-sample convenience form.
double elbo_loss(const Tensor& eps_pred, const Tensor& eps);

/// Differentiable form for the training graph: w(t) * mean((pred - eps)^2).
ag::Var elbo_loss_var(const ag::Var& eps_pred, const Tensor& eps, double weight = 1.0);

/// One ancestral DDPM step from x_t to x_{t-1}. z must be all-zero when
/// t == 1 (the final step is deterministic).
Tensor reverse_step(const Tensor& xt, const Tensor& eps_pred, long t, const NoiseSchedule& s,
                    const Tensor& z);

/// One deterministic DDIM step: project the implied x0 estimate onto the
/// t-1 marginal, keeping the predicted noise direction.
Tensor ddim_step(const Tensor& xt, const Tensor& eps_pred, long t, const NoiseSchedule& s);

using NoiseEstimator = std::function<Tensor(const Tensor& xt, long t)>;

/// Full reverse chain from N(0, I); deterministic given the seed. The
/// per-step noise is scaled by `temperature`; 0 gives the noise-free mean
/// chain (still a random sample through the x_T draw).
Tensor sample(const NoiseEstimator& model, const Shape& shape, const NoiseSchedule& s, uint64_t seed,
              double temperature = 1.0);

/// Deterministic DDIM reverse chain; the seed only draws x_T.
Tensor ddim_sample(const NoiseEstimator& model, const Shape& shape, const NoiseSchedule& s,
                   uint64_t seed);

}  // namespace endora::diffusion
