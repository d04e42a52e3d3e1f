#include "endora/extractor.hpp"

#include <cmath>

#include "endora/dataset.hpp"
#include "endora/layers.hpp"

namespace endora::eval {

namespace {

constexpr long kInputSide = 16;  // every frame is normalized to this square

class ToyExtractor final : public FeatureExtractor {
public:
    ToyExtractor(uint64_t seed, long dim, long classes) : seed_(seed), dim_(dim), classes_(classes) {
        require(dim >= 1 && classes >= 2, "toy extractor: dim >= 1 and classes >= 2 required");
        Rng rng(seed);
        const long in = kInputSide * kInputSide * 3;
        w1_ = nn::gaussian_init(rng, {in, dim}, 1.0 / std::sqrt(static_cast<double>(in)));
        w2_ = nn::gaussian_init(rng, {dim, dim}, 1.0 / std::sqrt(static_cast<double>(dim)));
        head_ = nn::gaussian_init(rng, {dim, classes}, 1.0);
    }

    std::string id() const override {
        return "toy-" + std::to_string(dim_) + "d-seed" + std::to_string(seed_);
    }
    long feature_dim() const override { return dim_; }
    long num_classes() const override { return classes_; }

    Tensor frame_features(const Tensor& frames) const override {
        require(frames.ndim() == 4 && frames.shape[3] == 3, "extractor: frames must be [F,H,W,3]");
        const long F = frames.shape[0];
        Tensor out({F, dim_});
        const long fe = frames.shape[1] * frames.shape[2] * 3;
        for (long f = 0; f < F; ++f) {
            Tensor frame({frames.shape[1], frames.shape[2], 3});
            std::copy_n(frames.data.begin() + f * fe, fe, frame.data.begin());
            Tensor feat = embed(frame);
            std::copy_n(feat.data.begin(), dim_, out.data.begin() + f * dim_);
        }
        return out;
    }

    Tensor clip_feature(const Tensor& clip) const override {
        Tensor per_frame = frame_features(clip);
        const long F = per_frame.shape[0];
        Tensor out({dim_});
        for (long f = 0; f < F; ++f)
            for (long i = 0; i < dim_; ++i) out[i] += per_frame.at({f, i}) / static_cast<double>(F);
        return out;
    }

    Tensor probabilities(const Tensor& frames) const override {
        Tensor feats = frame_features(frames);
        const long F = feats.shape[0];
        Tensor out({F, classes_});
        for (long f = 0; f < F; ++f) {
            double mx = -1e300;
            std::vector<double> logits(static_cast<size_t>(classes_), 0.0);
            for (long k = 0; k < classes_; ++k) {
                double z = 0.0;
                for (long i = 0; i < dim_; ++i) z += feats.at({f, i}) * head_.at({i, k});
                logits[static_cast<size_t>(k)] = z;
                mx = std::max(mx, z);
            }
            double sum = 0.0;
            for (long k = 0; k < classes_; ++k) {
                const double e = std::exp(logits[static_cast<size_t>(k)] - mx);
                out.at({f, k}) = e;
                sum += e;
            }
            for (long k = 0; k < classes_; ++k) out.at({f, k}) /= sum;
        }
        return out;
    }

private:
    Tensor embed(const Tensor& frame) const {
        Tensor norm = frame;
        if (frame.shape[0] != kInputSide || frame.shape[1] != kInputSide)
            norm = data::resize_bilinear(data::center_crop_square(frame), kInputSide, kInputSide);
        const long in = kInputSide * kInputSide * 3;
        Tensor h({dim_});
        for (long j = 0; j < dim_; ++j) {
            double z = 0.0;
            for (long i = 0; i < in; ++i) z += norm[i] * w1_.at({i, j});
            h[j] = std::tanh(z);
        }
        Tensor out({dim_});
        for (long j = 0; j < dim_; ++j) {
            double z = 0.0;
            for (long i = 0; i < dim_; ++i) z += h[i] * w2_.at({i, j});
            out[j] = std::tanh(z);
        }
        return out;
    }

    uint64_t seed_;
    long dim_, classes_;
    Tensor w1_, w2_, head_;
};

}  // namespace

std::unique_ptr<FeatureExtractor> toy_feature_extractor(uint64_t seed, long dim, long classes) {
    return std::make_unique<ToyExtractor>(seed, dim, classes);
}

}  // namespace endora::eval
