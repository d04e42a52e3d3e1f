#pragma once

#include <json.hpp>

#include "endora/layers.hpp"
#include "endora/schedule.hpp"

namespace endora::model {

/// Backbone hyperparameters. `paper_preset()` carries the full-scale
/// dimensions; tests and the desk-scale pipeline use much smaller ones.
struct BackboneConfig {
    long depth = 4;  // total block count; spatial/temporal pairs, must be even
    long dim = 64;
    long heads = 4;
    long patch = 2;
    long t_dim = 64;  // timestep-embedding dimension
    long mlp_ratio = 4;
    long frames = 8;  // maximum clip length the temporal PE covers
    long latent_h = 16;
    long latent_w = 16;
    long latent_c = 3;

    void validate() const;
    long tokens_h() const { return latent_h / patch; }
    long tokens_w() const { return latent_w / patch; }
    long tokens_per_frame() const { return tokens_h() * tokens_w(); }

    nlohmann::json to_json() const;
    static BackboneConfig from_json(const nlohmann::json& j);
    static BackboneConfig paper_preset();
};

// Token-grid plumbing, exposed for direct testing. Shapes:
//   latent      [F, h, w, C]
//   token grid  [F, N_H, N_W, D]
//   Z^S view    [F, L, D] with L = N_H * N_W
//   Z^T view    [L, F, D]

/// Cut non-overlapping p x p patches per frame: [F,h,w,C] -> [F, L, p*p*C],
/// row-major patch order within each frame.
ag::Var extract_patches(const ag::Var& latent, long p);

/// Exact inverse spatial arrangement of extract_patches.
ag::Var combine_patches(const ag::Var& tokens, long h, long w, long c, long p);

/// [F, N_H, N_W, D] -> [F, L, D]; pure reshape.
ag::Var spatial_view(const ag::Var& grid);

/// [F, L, D] -> [L, F, D]; pure axis permutation.
ag::Var temporal_view(const ag::Var& zs);

/// Inverse of temporal_view.
ag::Var temporal_view_inverse(const ag::Var& zt);

/// Broadcast sum: token (f, l) receives spatial_pe[l] + temporal_pe[f].
ag::Var add_positional(const ag::Var& tokens, const ag::Var& spatial_pe, const ag::Var& temporal_pe);

/// The noise-estimator backbone: patch embedding, learned spatial +
/// sinusoidal temporal positional embedding, interlaced spatial/temporal
/// transformer blocks, and a linear head back to latent space.
class Backbone {
public:
    struct Forward {
        ag::Var eps_pred;
        /// Head-averaged attention per spatial block, each [F, L, L];
        /// empty unless recording was requested.
        std::vector<ag::Var> spatial_attention;
    };

    /// zero_head keeps the initial noise estimate exactly zero, the usual
    /// safe start for diffusion training.
    Backbone(BackboneConfig cfg, uint64_t seed, bool zero_head = true);

    const BackboneConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }
    long spatial_block_count() const { return cfg_.depth / 2; }

    /// xt: [F, h, w, C] with F <= cfg.frames and 1 <= t <= any schedule's T.
    Forward predict_noise(const Tensor& xt, long t, bool record_attention = false) const;

    /// Value-only forward for samplers.
    diffusion::NoiseEstimator as_estimator() const;

private:
    BackboneConfig cfg_;
    nn::ParamStore params_;
    std::vector<nn::TransformerBlock> blocks_;
    nn::Linear patch_proj_, head_, t_mlp_in_, t_mlp_out_;
    ag::Var spatial_pe_;
    Tensor temporal_pe_;  // fixed sinusoidal, not trained
};

}  // namespace endora::model
