#pragma once

#include <filesystem>
#include <memory>

#include "endora/layers.hpp"

namespace endora::prior {

/// Frozen 2D vision prior. Given a batch of frames it returns per-layer
/// attention maps; no gradient ever flows into a provider.
class PriorProvider {
public:
    virtual ~PriorProvider() = default;

    virtual long levels() const = 0;
    /// Side length of the square attention maps (token count of the prior).
    virtual long map_side() const = 0;

    /// frames: [F, H, W, 3] in [-1, 1]. Returns levels() maps, each
    /// [F, side, side] with rows summing to 1 within 1e-4.
    virtual std::vector<Tensor> attention_maps(const Tensor& frames) const = 0;
};

/// Desk-scale stand-in for a DINO encoder: a small frozen transformer with
/// seeded weights exposing attention at its two blocks twice (padded to
/// four levels).
std::unique_ptr<PriorProvider> toy_prior_provider(uint64_t seed, long patch = 4, long dim = 32,
                                                  long heads = 2, long input_side = 32);

/// Loads precomputed maps from a tensor container ("level0".."levelN-1",
/// each [F, side, side]); returns them regardless of the input frames.
std::unique_ptr<PriorProvider> replay_prior_provider(const std::filesystem::path& file);

struct CorrResult {
    double value = 0.0;
    bool degenerate = false;  // a constant input made the variance vanish
};

/// Pearson correlation of two flattened maps: Cov(A,B)/sqrt(Var A * Var B).
/// Either input constant -> correlation 0 with the degenerate flag set.
CorrResult pearson_corr(const Tensor& a, const Tensor& b);

/// Differentiable form. Sets *degenerate (when non-null) like pearson_corr;
/// a degenerate pair contributes a constant 0 with no gradient.
ag::Var pearson_corr_var(const ag::Var& a, const ag::Var& b, bool* degenerate = nullptr);

/// Trainable stride-2 3x3 resolution adapter for prior maps; its weights
/// belong to the student's parameter set.
struct AdapterConv {
    ag::Var w;  // [1,1,3,3]
    ag::Var b;  // [1]

    /// map: [F, S, S] -> [F, floor((S-1)/2)+1, ...].
    ag::Var operator()(const ag::Var& map) const;
};

AdapterConv make_adapter(nn::ParamStore& ps, uint64_t seed);

/// Which student spatial block feeds each prior level: evenly spaced
/// through the spatial stack (for 14 spatial blocks: 2, 5, 8, 11).
std::vector<long> level_pairing(long spatial_blocks, long levels = 4);

/// 1 - mean over (levels x frames) of the per-frame Pearson correlation.
/// Student and prior maps must share a side after adaptation; when they
/// disagree the larger side is average-pooled down to the smaller.
ag::Var prior_loss(const std::vector<ag::Var>& student_maps,
                   const std::vector<ag::Var>& adapted_prior_maps);

/// elbo + alpha * prior; default alpha 0.5.
double total_loss(double elbo, double prior, double alpha = 0.5);
ag::Var total_loss_var(const ag::Var& elbo, const ag::Var& prior, double alpha = 0.5);

}  // namespace endora::prior
