#include "endora/backbone.hpp"

namespace endora::model {

void BackboneConfig::validate() const {
    if (depth < 2 || depth % 2 != 0) throw ConfigError("backbone depth must be even and >= 2");
    if (dim < 2 || dim % 2 != 0) throw ConfigError("backbone dim must be even");
    if (heads < 1 || dim % heads != 0) throw ConfigError("backbone dim must be divisible by heads");
    if (patch < 1) throw ConfigError("patch size must be >= 1");
    if (latent_h % patch != 0 || latent_w % patch != 0)
        throw ConfigError("patch size must divide the latent height and width");
    if (t_dim < 2 || t_dim % 2 != 0) throw ConfigError("timestep-embedding dim must be even");
    if (mlp_ratio < 1) throw ConfigError("mlp_ratio must be >= 1");
    if (frames < 1 || latent_c < 1) throw ConfigError("frames and latent channels must be >= 1");
}

nlohmann::json BackboneConfig::to_json() const {
    return {{"depth", depth},   {"dim", dim},           {"heads", heads},
            {"patch", patch},   {"t_dim", t_dim},       {"mlp_ratio", mlp_ratio},
            {"frames", frames}, {"latent_h", latent_h}, {"latent_w", latent_w},
            {"latent_c", latent_c}};
}

BackboneConfig BackboneConfig::from_json(const nlohmann::json& j) {
    BackboneConfig c;
    c.depth = j.value("depth", c.depth);
    c.dim = j.value("dim", c.dim);
    c.heads = j.value("heads", c.heads);
    c.patch = j.value("patch", c.patch);
    c.t_dim = j.value("t_dim", c.t_dim);
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    c.frames = j.value("frames", c.frames);
    c.latent_h = j.value("latent_h", c.latent_h);
    c.latent_w = j.value("latent_w", c.latent_w);
    c.latent_c = j.value("latent_c", c.latent_c);
    c.validate();
    return c;
}

BackboneConfig BackboneConfig::paper_preset() {
    BackboneConfig c;
    c.depth = 28;
    c.dim = 1152;
    c.heads = 16;
    c.patch = 2;
    c.t_dim = 256;
    c.frames = 16;
    c.latent_h = 16;
    c.latent_w = 16;
    c.latent_c = 4;
    return c;
}

ag::Var extract_patches(const ag::Var& latent, long p) {
    const Tensor& x = latent->value;
    require(x.ndim() == 4, "extract_patches: latent must be [F,h,w,C]");
    const long F = x.shape[0], h = x.shape[1], w = x.shape[2], C = x.shape[3];
    if (h % p != 0 || w % p != 0) throw ConfigError("extract_patches: patch size must divide h and w");
    const long nh = h / p, nw = w / p, L = nh * nw, q = p * p * C;

    auto src = std::make_shared<std::vector<long>>(static_cast<size_t>(F * L * q));
    size_t o = 0;
    for (long f = 0; f < F; ++f)
        for (long bi = 0; bi < nh; ++bi)
            for (long bj = 0; bj < nw; ++bj)
                for (long pi = 0; pi < p; ++pi)
                    for (long pj = 0; pj < p; ++pj)
                        for (long c = 0; c < C; ++c)
                            (*src)[o++] = ((f * h + bi * p + pi) * w + bj * p + pj) * C + c;
    return ag::index_map(latent, {F, L, q}, std::move(src));
}

ag::Var combine_patches(const ag::Var& tokens, long h, long w, long c, long p) {
    const Tensor& x = tokens->value;
    require(x.ndim() == 3, "combine_patches: tokens must be [F,L,q]");
    const long F = x.shape[0], nh = h / p, nw = w / p;
    require(x.shape[1] == nh * nw && x.shape[2] == p * p * c,
            "combine_patches: token grid does not match target dims");

    auto src = std::make_shared<std::vector<long>>(static_cast<size_t>(F * h * w * c));
    size_t o = 0;
    const long q = p * p * c;
    for (long f = 0; f < F; ++f)
        for (long i = 0; i < h; ++i)
            for (long j = 0; j < w; ++j)
                for (long ch = 0; ch < c; ++ch) {
                    const long l = (i / p) * nw + (j / p);
                    const long qq = ((i % p) * p + (j % p)) * c + ch;
                    (*src)[o++] = (f * (nh * nw) + l) * q + qq;
                }
    return ag::index_map(tokens, {F, h, w, c}, std::move(src));
}

ag::Var spatial_view(const ag::Var& grid) {
    const Tensor& x = grid->value;
    require(x.ndim() == 4, "spatial_view: grid must be [F,N_H,N_W,D]");
    return ag::reshape(grid, {x.shape[0], x.shape[1] * x.shape[2], x.shape[3]});
}

ag::Var temporal_view(const ag::Var& zs) {
    require(zs->value.ndim() == 3, "temporal_view: input must be [F,L,D]");
    return ag::permute(zs, {1, 0, 2});
}

ag::Var temporal_view_inverse(const ag::Var& zt) {
    require(zt->value.ndim() == 3, "temporal_view_inverse: input must be [L,F,D]");
    return ag::permute(zt, {1, 0, 2});
}

ag::Var add_positional(const ag::Var& tokens, const ag::Var& spatial_pe, const ag::Var& temporal_pe) {
    const Tensor& x = tokens->value;
    require(x.ndim() == 3, "add_positional: tokens must be [F,L,D]");
    const long F = x.shape[0], L = x.shape[1], D = x.shape[2];
    require(spatial_pe->value.shape == Shape{L, D}, "add_positional: spatial PE must be [L,D]");
    require(temporal_pe->value.shape == Shape{F, D}, "add_positional: temporal PE must be [F,D]");

    // spatial term broadcasts over frames, temporal over locations
    auto with_spatial = ag::reshape(
        ag::add_rowvec(ag::reshape(tokens, {F, L * D}), ag::reshape(spatial_pe, {L * D})), {F, L, D});
    auto zt = temporal_view(with_spatial);  // [L,F,D]
    auto with_both = ag::reshape(
        ag::add_rowvec(ag::reshape(zt, {L, F * D}), ag::reshape(temporal_pe, {F * D})), {L, F, D});
    return temporal_view_inverse(with_both);
}

Backbone::Backbone(BackboneConfig cfg, uint64_t seed, bool zero_head) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(seed);
    const long q = cfg_.patch * cfg_.patch * cfg_.latent_c;
    patch_proj_ = nn::make_linear(params_, "patch_proj", q, cfg_.dim, rng);
    head_ = nn::make_linear(params_, "head", cfg_.dim, q, rng, zero_head);
    t_mlp_in_ = nn::make_linear(params_, "t_mlp_in", cfg_.t_dim, cfg_.dim, rng);
    t_mlp_out_ = nn::make_linear(params_, "t_mlp_out", cfg_.dim, cfg_.dim, rng);
    spatial_pe_ = params_.add("spatial_pe",
                              nn::gaussian_init(rng, {cfg_.tokens_per_frame(), cfg_.dim}));
    temporal_pe_ = nn::sinusoidal_embedding_table(cfg_.frames, cfg_.dim);

    for (long i = 0; i < cfg_.depth; ++i) {
        const bool is_spatial = i % 2 == 0;
        const std::string prefix =
            (is_spatial ? "spatial" : "temporal") + std::to_string(i / 2);
        blocks_.push_back(nn::make_block(params_, prefix, cfg_.dim, cfg_.heads, cfg_.mlp_ratio, rng));
    }
}

Backbone::Forward Backbone::predict_noise(const Tensor& xt, long t, bool record_attention) const {
    require(xt.ndim() == 4, "predict_noise: latent must be [F,h,w,C]");
    const long F = xt.shape[0];
    require(F >= 1 && F <= cfg_.frames, "predict_noise: frame count exceeds configured maximum");
    require(xt.shape[1] == cfg_.latent_h && xt.shape[2] == cfg_.latent_w && xt.shape[3] == cfg_.latent_c,
            "predict_noise: latent dims do not match config");
    require(t >= 1, "predict_noise: t must be >= 1");
    require_finite(xt, "predict_noise: input");

    const long L = cfg_.tokens_per_frame(), D = cfg_.dim;

    // timestep conditioning
    auto t_sin = ag::constant(nn::sinusoidal_embedding(static_cast<double>(t), cfg_.t_dim));
    auto t_emb = t_mlp_out_(ag::silu(t_mlp_in_(t_sin)));  // [D]

    // tokens + PE
    auto tokens = patch_proj_(extract_patches(ag::constant(xt), cfg_.patch));  // [F,L,D]
    Tensor tpe({F, D});
    for (long f = 0; f < F; ++f)
        for (long j = 0; j < D; ++j) tpe[f * D + j] = temporal_pe_[f * D + j];
    auto z = add_positional(tokens, spatial_pe_, ag::constant(tpe));

    Forward out;
    for (long i = 0; i < cfg_.depth; ++i) {
        try {
            if (i % 2 == 0) {
                auto r = blocks_[static_cast<size_t>(i)].forward(z, t_emb, record_attention);
                z = r.tokens;
                if (record_attention) out.spatial_attention.push_back(r.attention);
            } else {
                auto zt = temporal_view(z);
                auto r = blocks_[static_cast<size_t>(i)].forward(zt, t_emb, false);
                z = temporal_view_inverse(r.tokens);
            }
        } catch (const NumericError& e) {
            throw NumericError("block " + std::to_string(i) + ": " + e.what());
        }
    }

    auto pred_tokens = head_(z);  // [F,L,p*p*C]
    out.eps_pred = combine_patches(pred_tokens, cfg_.latent_h, cfg_.latent_w, cfg_.latent_c, cfg_.patch);
    require_finite(out.eps_pred->value, "predict_noise: output");
    return out;
}

diffusion::NoiseEstimator Backbone::as_estimator() const {
    return [this](const Tensor& xt, long t) { return predict_noise(xt, t).eps_pred->value; };
}

}  // namespace endora::model
