#pragma once

#include <map>

#include "endora/layers.hpp"

namespace endora::opt {

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;

    void validate() const;
};

/// AdamW with decoupled weight decay. Moment buffers are keyed by parameter
/// name so optimizer state survives checkpointing.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {});

    const AdamWConfig& config() const { return cfg_; }
    long steps() const { return steps_; }

    /// Adjust the step size between updates (for lr schedules).
    void set_lr(double lr);

    /// One update over every parameter's accumulated gradient.
    void step(nn::ParamStore& params);

    /// Moment buffers flattened for checkpointing ("m.<name>", "v.<name>").
    std::map<std::string, Tensor> snapshot() const;
    void load(const std::map<std::string, Tensor>& state, long steps);

private:
    AdamWConfig cfg_;
    long steps_ = 0;
    std::map<std::string, Tensor> m_, v_;
};

/// L2 norm of all accumulated gradients.
double grad_norm(const nn::ParamStore& params);

/// Scale gradients down so their global norm is at most max_norm.
void clip_grad_norm(nn::ParamStore& params, double max_norm);

/// ema <- decay * ema + (1 - decay) * model, elementwise per named tensor.
void ema_update(std::map<std::string, Tensor>& ema, const nn::ParamStore& model, double decay);

}  // namespace endora::opt
