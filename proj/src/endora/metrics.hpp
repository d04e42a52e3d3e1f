#pragma once

#include "endora/tensor.hpp"

namespace endora::eval {

/// Gaussian fitted to a feature cloud; cov uses the unbiased n-1 divisor.
struct FeatureStats {
    long n = 0;
    Tensor mu;   // [d]
    Tensor cov;  // [d, d], symmetric
};

/// features: [n, d] with n >= 2.
FeatureStats fit_gaussian(const Tensor& features);

/// Streaming mean/co-moment accumulator. Partial accumulators merge
/// exactly, so feature extraction can run in parallel shards.
struct StatsAccumulator {
    long n = 0;
    Tensor mean;      // [d]
    Tensor comoment;  // [d, d], sum of outer products of deviations

    void add(const Tensor& feature);  // [d]
    void merge(const StatsAccumulator& other);
    FeatureStats finish() const;
};

/// Symmetric PSD square root by eigendecomposition. Eigenvalues below
/// -1e-10 (relative) raise NumericError; small negatives clip to zero.
/// The symmetric route keeps everything real, so no imaginary leakage
/// can occur.
Tensor sqrtm_psd(const Tensor& m);

/// ||mu_a - mu_b||^2 + Tr(cov_a + cov_b - 2 (cov_a cov_b)^{1/2}), computed
/// through the symmetrized product S_a cov_b S_a with S_a = cov_a^{1/2}.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

struct ISResult {
    double mean = 0.0;
    double stddev = 0.0;
    long splits = 0;  // may be fewer than requested for small n
};

/// probs: [n, K], each row a distribution (sum 1 within 1e-5). Per split,
/// exp(mean KL(row || split marginal)); mean and std over splits. Requested
/// splits reduce automatically when n < 2 * splits.
ISResult inception_score(const Tensor& probs, long splits = 10);

}  // namespace endora::eval
