#pragma once

#include <map>
#include <string>

#include "endora/autograd.hpp"
#include "endora/rng.hpp"

namespace endora::nn {

using ag::Var;

/// Ordered registry of named trainable parameters. The optimizer, EMA and
/// checkpointing all address parameters through this map, so names are the
/// stable identity of a weight.
class ParamStore {
public:
    Var add(const std::string& name, Tensor init);
    const Var& get(const std::string& name) const;
    const std::map<std::string, Var>& all() const { return params_; }

    void zero_grad();
    long param_count() const;

    std::map<std::string, Tensor> snapshot() const;
    void load(const std::map<std::string, Tensor>& values);

private:
    std::map<std::string, Var> params_;
};

Tensor gaussian_init(Rng& rng, Shape shape, double std_dev = 0.02);

struct Linear {
    Var w, b;
    Var operator()(const Var& x) const { return ag::add_rowvec(ag::matmul(x, w), b); }
};

Linear make_linear(ParamStore& ps, const std::string& name, long in, long out, Rng& rng,
                   bool zero_init = false);

/// Attention outcome of one block over a [G, S, D] view: the transformed
/// tokens plus (optionally) the head-averaged attention matrices [G, S, S].
struct BlockOutput {
    Var tokens;
    Var attention;  // null unless recording was requested
};

/// Pre-norm transformer block conditioned on the diffusion timestep via
/// adaptive layer-norm shift/scale/gate (all derived from t_emb).
struct TransformerBlock {
    long dim = 0;
    long heads = 0;
    Linear qkv, proj, mlp_in, mlp_out, ada;

    /// x: [G, S, D] where attention runs over the S axis within each group.
    BlockOutput forward(const Var& x, const Var& t_emb, bool record_attention) const;
};

TransformerBlock make_block(ParamStore& ps, const std::string& prefix, long dim, long heads,
                            long mlp_ratio, Rng& rng);

/// Fixed sinusoidal table: row f, even columns sin(f / 10000^(2i/D)),
/// odd columns cos of the same argument.
Tensor sinusoidal_embedding_table(long rows, long dim);

/// Sinusoidal embedding of a single (possibly fractional) position.
Tensor sinusoidal_embedding(double pos, long dim);

}  // namespace endora::nn
