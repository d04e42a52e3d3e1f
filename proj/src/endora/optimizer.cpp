#include "endora/optimizer.hpp"

#include <cmath>

namespace endora::opt {

void AdamWConfig::validate() const {
    if (lr < 0.0) throw ConfigError("adamw: learning rate must be >= 0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw ConfigError("adamw: betas must lie in [0, 1)");
    if (eps <= 0.0) throw ConfigError("adamw: eps must be > 0");
    if (weight_decay < 0.0) throw ConfigError("adamw: weight decay must be >= 0");
}

AdamW::AdamW(AdamWConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void AdamW::set_lr(double lr) {
    require(lr >= 0.0, "AdamW: learning rate must be >= 0");
    cfg_.lr = lr;
}

void AdamW::step(nn::ParamStore& params) {
    ++steps_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
    for (const auto& [name, p] : params.all()) {
        require_finite(p->grad, "adamw: gradient of " + name);
        auto& m = m_.try_emplace(name, Tensor(p->value.shape)).first->second;
        auto& v = v_.try_emplace(name, Tensor(p->value.shape)).first->second;
        require(m.shape == p->value.shape, "adamw: stale moment shape for " + name);
        for (long i = 0; i < p->value.numel(); ++i) {
            const double g = p->grad[i];
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
            p->value[i] -= cfg_.lr * (update + cfg_.weight_decay * p->value[i]);
        }
    }
}

std::map<std::string, Tensor> AdamW::snapshot() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, t] : m_) out.emplace("m." + name, t);
    for (const auto& [name, t] : v_) out.emplace("v." + name, t);
    return out;
}

void AdamW::load(const std::map<std::string, Tensor>& state, long steps) {
    require(steps >= 0, "adamw: negative step counter");
    steps_ = steps;
    m_.clear();
    v_.clear();
    for (const auto& [name, t] : state) {
        if (name.starts_with("m."))
            m_.emplace(name.substr(2), t);
        else if (name.starts_with("v."))
            v_.emplace(name.substr(2), t);
        else
            throw DataError("adamw: unrecognized optimizer state entry '" + name + "'");
    }
}

double grad_norm(const nn::ParamStore& params) {
    double sq = 0.0;
    for (const auto& [name, p] : params.all())
        for (long i = 0; i < p->grad.numel(); ++i) sq += p->grad[i] * p->grad[i];
    return std::sqrt(sq);
}

void clip_grad_norm(nn::ParamStore& params, double max_norm) {
    require(max_norm > 0.0, "clip_grad_norm: max_norm must be > 0");
    const double norm = grad_norm(params);
    if (norm <= max_norm) return;
    const double s = max_norm / norm;
    for (const auto& [name, p] : params.all())
        for (auto& g : p->grad.data) g *= s;
}

void ema_update(std::map<std::string, Tensor>& ema, const nn::ParamStore& model, double decay) {
    require(decay >= 0.0 && decay <= 1.0, "ema_update: decay must lie in [0, 1]");
    if (ema.size() != model.all().size()) throw ContractError("ema_update: parameter trees differ");
    for (const auto& [name, p] : model.all()) {
        auto it = ema.find(name);
        if (it == ema.end()) throw ContractError("ema_update: missing ema entry for " + name);
        require_same_shape(it->second, p->value, "ema_update: " + name);
        for (long i = 0; i < p->value.numel(); ++i)
            it->second[i] = decay * it->second[i] + (1.0 - decay) * p->value[i];
    }
}

}  // namespace endora::opt
