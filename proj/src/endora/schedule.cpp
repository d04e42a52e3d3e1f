#include "endora/schedule.hpp"

#include <cmath>
#include <numbers>

namespace endora::diffusion {

ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "linear-beta") return ScheduleKind::LinearBeta;
    if (s == "cosine") return ScheduleKind::Cosine;
    throw ConfigError("unknown schedule kind '" + s + "' (expected linear-beta or cosine)");
}

std::string to_string(ScheduleKind k) {
    return k == ScheduleKind::LinearBeta ? "linear-beta" : "cosine";
}

NoiseSchedule build_schedule(long T, ScheduleKind kind, double beta_start, double beta_end) {
    if (T < 1) throw ConfigError("schedule needs T >= 1");

    std::vector<double> beta(static_cast<size_t>(T) + 1, 0.0);
    if (kind == ScheduleKind::LinearBeta) {
        if (beta_start <= 0.0 || beta_end <= 0.0) {
            // Scale the reference [1e-4, 0.02] range (set for T=1000) with
            // 1000/T so short schedules still end near pure noise; the caps
            // keep every beta a valid variance.
            const double s = 1000.0 / static_cast<double>(T);
            beta_start = std::min(1e-4 * s, 0.01);
            beta_end = std::min(0.02 * s, 0.35);
        }
        if (beta_end >= 1.0) throw ConfigError("linear-beta: beta_end must stay below 1");
        for (long t = 1; t <= T; ++t) {
            const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(T - 1);
            beta[static_cast<size_t>(t)] = beta_start + (beta_end - beta_start) * frac;
        }
    } else {
        const double s = 0.008;
        auto f = [&](double u) {
            const double a = (u + s) / (1.0 + s) * std::numbers::pi / 2.0;
            return std::cos(a) * std::cos(a);
        };
        double prev_bar = 1.0;
        for (long t = 1; t <= T; ++t) {
            const double bar = f(static_cast<double>(t) / static_cast<double>(T)) / f(0.0);
            double b = 1.0 - bar / prev_bar;
            b = std::min(std::max(b, 1e-8), 0.999);
            beta[static_cast<size_t>(t)] = b;
            prev_bar *= 1.0 - b;
        }
    }

    NoiseSchedule sch;
    sch.T = T;
    sch.kind = kind;
    sch.beta = std::move(beta);
    sch.alpha.assign(static_cast<size_t>(T) + 1, 0.0);
    sch.sigma.assign(static_cast<size_t>(T) + 1, 0.0);
    sch.alpha[0] = 1.0;
    sch.sigma[0] = 0.0;
    double bar = 1.0;
    for (long t = 1; t <= T; ++t) {
        bar *= 1.0 - sch.beta[static_cast<size_t>(t)];
        sch.alpha[static_cast<size_t>(t)] = std::sqrt(bar);
        sch.sigma[static_cast<size_t>(t)] = std::sqrt(1.0 - bar);
    }
    return sch;
}

Tensor forward_marginal(const Tensor& x0, long t, const Tensor& eps, const NoiseSchedule& s) {
    require_same_shape(x0, eps, "forward_marginal");
    if (t < 0 || t > s.T) throw ContractError("forward_marginal: t out of [0,T]");
    const double a = s.alpha[static_cast<size_t>(t)], sg = s.sigma[static_cast<size_t>(t)];
    Tensor xt(x0.shape);
    for (long i = 0; i < x0.numel(); ++i) xt[i] = a * x0[i] + sg * eps[i];
    return xt;
}

std::vector<long> sample_timesteps(long batch_size, long T, Rng& rng) {
    require(batch_size >= 1, "sample_timesteps: batch_size must be >= 1");
    require(T >= 1, "sample_timesteps: T must be >= 1");
    std::vector<long> out(static_cast<size_t>(batch_size));
    for (auto& t : out) t = rng.uniform_int(1, T);
    return out;
}

double elbo_loss(const Tensor& eps_pred, const Tensor& eps) {
    require_same_shape(eps_pred, eps, "elbo_loss");
    require_finite(eps_pred, "elbo_loss: eps_pred");
    require_finite(eps, "elbo_loss: eps");
    double acc = 0.0;
    for (long i = 0; i < eps.numel(); ++i) {
        const double d = eps_pred[i] - eps[i];
        acc += d * d;
    }
    return acc / static_cast<double>(eps.numel());
}

double elbo_loss(const std::vector<Tensor>& eps_pred, const std::vector<Tensor>& eps,
                 const std::vector<long>& t, const WeightFn& w) {
    require(!eps_pred.empty() && eps_pred.size() == eps.size() && eps.size() == t.size(),
            "elbo_loss: batch size mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < eps.size(); ++i) {
        const double wt = w ? w(t[i]) : 1.0;
        acc += wt * elbo_loss(eps_pred[i], eps[i]);
    }
    return acc / static_cast<double>(eps.size());
}

ag::Var elbo_loss_var(const ag::Var& eps_pred, const Tensor& eps, double weight) {
    require_same_shape(eps_pred->value, eps, "elbo_loss_var");
    require_finite(eps_pred->value, "elbo_loss_var: eps_pred");
    auto diff = ag::sub(eps_pred, ag::constant(eps));
    return ag::scale(ag::mean_all(ag::mul(diff, diff)), weight);
}

Tensor reverse_step(const Tensor& xt, const Tensor& eps_pred, long t, const NoiseSchedule& s,
                    const Tensor& z) {
    require_same_shape(xt, eps_pred, "reverse_step");
    require_same_shape(xt, z, "reverse_step: z");
    if (t < 1 || t > s.T) throw ContractError("reverse_step: t out of [1,T]");

    const double b = s.beta[static_cast<size_t>(t)];
    const double sg = s.sigma[static_cast<size_t>(t)];
    const double bar_prev = s.alpha_bar(t - 1);
    const double bar = s.alpha_bar(t);
    const double post_var = (1.0 - bar_prev) / (1.0 - bar) * b;
    const double post_sigma = std::sqrt(std::max(post_var, 0.0));
    const double inv_sqrt = 1.0 / std::sqrt(1.0 - b);

    if (t == 1) {
        for (double v : z.data)
            if (v != 0.0) throw ContractError("reverse_step: z must be zero at t=1");
    }

    Tensor out(xt.shape);
    for (long i = 0; i < xt.numel(); ++i)
        out[i] = inv_sqrt * (xt[i] - b / sg * eps_pred[i]) + post_sigma * z[i];
    return out;
}

Tensor ddim_step(const Tensor& xt, const Tensor& eps_pred, long t, const NoiseSchedule& s) {
    require_same_shape(xt, eps_pred, "ddim_step");
    if (t < 1 || t > s.T) throw ContractError("ddim_step: t out of [1,T]");

    const double a = s.alpha[static_cast<size_t>(t)];
    const double sg = s.sigma[static_cast<size_t>(t)];
    const double a_prev = s.alpha[static_cast<size_t>(t - 1)];
    const double sg_prev = s.sigma[static_cast<size_t>(t - 1)];

    Tensor out(xt.shape);
    for (long i = 0; i < xt.numel(); ++i) {
        const double x0 = (xt[i] - sg * eps_pred[i]) / a;
        out[i] = a_prev * x0 + sg_prev * eps_pred[i];
    }
    return out;
}

Tensor sample(const NoiseEstimator& model, const Shape& shape, const NoiseSchedule& s, uint64_t seed,
              double temperature) {
    if (temperature < 0.0) throw ContractError("sample: temperature must be >= 0");
    Rng rng(seed);
    Tensor x = rng.gaussian_tensor(shape);
    for (long t = s.T; t >= 1; --t) {
        Tensor eps_pred = model(x, t);
        if (eps_pred.shape != x.shape)
            throw ContractError("sample: model output shape " + shape_str(eps_pred.shape) +
                                " does not match latent shape " + shape_str(x.shape));
        require_finite(eps_pred, "sample: model output at t=" + std::to_string(t));
        // always consume the draw so the stream is temperature-independent
        Tensor z = t > 1 ? rng.gaussian_tensor(shape) : Tensor::zeros(shape);
        if (temperature != 1.0)
            for (double& v : z.data) v *= temperature;
        x = reverse_step(x, eps_pred, t, s, z);
    }
    return x;
}

Tensor ddim_sample(const NoiseEstimator& model, const Shape& shape, const NoiseSchedule& s,
                   uint64_t seed) {
    Rng rng(seed);
    Tensor x = rng.gaussian_tensor(shape);
    for (long t = s.T; t >= 1; --t) {
        Tensor eps_pred = model(x, t);
        if (eps_pred.shape != x.shape)
            throw ContractError("ddim_sample: model output shape " + shape_str(eps_pred.shape) +
                                " does not match latent shape " + shape_str(x.shape));
        require_finite(eps_pred, "ddim_sample: model output at t=" + std::to_string(t));
        x = ddim_step(x, eps_pred, t, s);
    }
    return x;
}

}  // namespace endora::diffusion
