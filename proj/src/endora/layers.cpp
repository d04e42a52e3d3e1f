#include "endora/layers.hpp"

#include <cmath>

namespace endora::nn {

Var ParamStore::add(const std::string& name, Tensor init) {
    if (params_.count(name)) throw ContractError("duplicate parameter name: " + name);
    auto v = ag::param(std::move(init));
    params_.emplace(name, v);
    return v;
}

const Var& ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("unknown parameter: " + name);
    return it->second;
}

void ParamStore::zero_grad() {
    for (auto& [name, v] : params_) v->zero_grad();
}

long ParamStore::param_count() const {
    long n = 0;
    for (const auto& [name, v] : params_) n += v->value.numel();
    return n;
}

std::map<std::string, Tensor> ParamStore::snapshot() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, v] : params_) out.emplace(name, v->value);
    return out;
}

void ParamStore::load(const std::map<std::string, Tensor>& values) {
    for (auto& [name, v] : params_) {
        auto it = values.find(name);
        if (it == values.end()) throw DataError("parameter '" + name + "' missing from snapshot");
        if (it->second.shape != v->value.shape)
            throw DataError("parameter '" + name + "' shape mismatch on load");
        v->value = it->second;
    }
}

Tensor gaussian_init(Rng& rng, Shape shape, double std_dev) {
    Tensor t = rng.gaussian_tensor(std::move(shape));
    for (auto& v : t.data) v *= std_dev;
    return t;
}

Linear make_linear(ParamStore& ps, const std::string& name, long in, long out, Rng& rng,
                   bool zero_init) {
    Tensor w = zero_init ? Tensor::zeros({in, out}) : gaussian_init(rng, {in, out});
    return Linear{ps.add(name + ".w", std::move(w)), ps.add(name + ".b", Tensor::zeros({out}))};
}

namespace {

Var modulate(const Var& x, const Var& shift, const Var& scale) {
    return ag::add_rowvec(ag::mul_rowvec(x, ag::add_scalar(scale, 1.0)), shift);
}

}  // namespace

BlockOutput TransformerBlock::forward(const Var& x, const Var& t_emb, bool record_attention) const {
    require(x->value.ndim() == 3 && x->value.shape[2] == dim, "block: input must be [G,S,D]");
    const long G = x->value.shape[0], S = x->value.shape[1];
    const long dh = dim / heads;

    auto cond = ada(ag::silu(t_emb));  // [6D]
    auto chunk = [&](long i) { return ag::slice_lastdim(cond, i * dim, dim); };
    auto shift_att = chunk(0), scale_att = chunk(1), gate_att = chunk(2);
    auto shift_mlp = chunk(3), scale_mlp = chunk(4), gate_mlp = chunk(5);

    // attention
    auto h = modulate(ag::layernorm_lastdim(x), shift_att, scale_att);
    auto qkv_out = qkv(h);  // [G,S,3D]
    auto split_heads = [&](long i) {
        auto part = ag::slice_lastdim(qkv_out, i * dim, dim);
        auto r = ag::reshape(part, {G, S, heads, dh});
        return ag::reshape(ag::permute(r, {0, 2, 1, 3}), {G * heads, S, dh});
    };
    auto q = split_heads(0), k = split_heads(1), v = split_heads(2);
    auto logits = ag::scale(ag::bmm(q, k, /*trans_b=*/true), 1.0 / std::sqrt(static_cast<double>(dh)));
    auto attn = ag::softmax_lastdim(logits);  // [G*heads, S, S]
    if (!attn->value.all_finite())
        throw NumericError("transformer block: non-finite attention weights");

    Var attn_mean;
    if (record_attention) attn_mean = ag::mean_axis(ag::reshape(attn, {G, heads, S, S}), 1);

    auto ctx = ag::bmm(attn, v);  // [G*heads, S, dh]
    ctx = ag::reshape(ag::permute(ag::reshape(ctx, {G, heads, S, dh}), {0, 2, 1, 3}), {G, S, dim});
    auto x1 = ag::add(x, ag::mul_rowvec(proj(ctx), gate_att));

    // mlp
    auto m = modulate(ag::layernorm_lastdim(x1), shift_mlp, scale_mlp);
    auto x2 = ag::add(x1, ag::mul_rowvec(mlp_out(ag::gelu(mlp_in(m))), gate_mlp));
    if (!x2->value.all_finite()) throw NumericError("transformer block: non-finite activations");
    return {x2, attn_mean};
}

TransformerBlock make_block(ParamStore& ps, const std::string& prefix, long dim, long heads,
                            long mlp_ratio, Rng& rng) {
    require(dim % heads == 0, "block dim must be divisible by head count");
    TransformerBlock b;
    b.dim = dim;
    b.heads = heads;
    b.qkv = make_linear(ps, prefix + ".qkv", dim, 3 * dim, rng);
    b.proj = make_linear(ps, prefix + ".proj", dim, dim, rng);
    b.mlp_in = make_linear(ps, prefix + ".mlp_in", dim, mlp_ratio * dim, rng);
    b.mlp_out = make_linear(ps, prefix + ".mlp_out", mlp_ratio * dim, dim, rng);
    // zero-initialized conditioning keeps each block an identity map at init
    b.ada = make_linear(ps, prefix + ".ada", dim, 6 * dim, rng, /*zero_init=*/true);
    return b;
}

Tensor sinusoidal_embedding_table(long rows, long dim) {
    Tensor t({rows, dim});
    for (long r = 0; r < rows; ++r) {
        Tensor row = sinusoidal_embedding(static_cast<double>(r), dim);
        for (long j = 0; j < dim; ++j) t[r * dim + j] = row[j];
    }
    return t;
}

Tensor sinusoidal_embedding(double pos, long dim) {
    require(dim % 2 == 0, "sinusoidal embedding dim must be even");
    Tensor t({dim});
    for (long i = 0; i < dim / 2; ++i) {
        const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
        t[2 * i] = std::sin(pos * freq);
        t[2 * i + 1] = std::cos(pos * freq);
    }
    return t;
}

}  // namespace endora::nn
