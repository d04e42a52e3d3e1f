#pragma once

#include <memory>
#include <string>

#include "endora/tensor.hpp"

namespace endora::eval {

/// Pluggable feature backbone for the Fréchet metrics and the Inception
/// Score. A production deployment would wrap a pretrained 2D (frame) and 3D
/// (clip) network behind this interface; the toy extractor below is the
/// self-contained desk-scale stand-in.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;

    virtual std::string id() const = 0;
    virtual long feature_dim() const = 0;
    virtual long num_classes() const = 0;

    /// frames: [F, H, W, 3] -> per-frame features [F, d] (FID path).
    virtual Tensor frame_features(const Tensor& frames) const = 0;

    /// clip: [F, H, W, 3] -> one pooled feature [d] (FVD path).
    virtual Tensor clip_feature(const Tensor& clip) const = 0;

    /// frames: [F, H, W, 3] -> row-stochastic class probabilities [F, K].
    virtual Tensor probabilities(const Tensor& frames) const = 0;
};

/// Frozen random-projection network: frames are normalized to a fixed
/// resolution, projected twice with tanh nonlinearities, and a softmax head
/// supplies class probabilities. Deterministic per seed.
std::unique_ptr<FeatureExtractor> toy_feature_extractor(uint64_t seed, long dim = 16,
                                                        long classes = 8);

}  // namespace endora::eval
