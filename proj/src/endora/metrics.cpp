#include "endora/metrics.hpp"

#include <cmath>
#include <iostream>

#include <Eigen/Dense>

namespace endora::eval {

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t) {
    require(t.ndim() == 2, "metrics: expected a matrix");
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        t.data.data(), t.shape[0], t.shape[1]);
}

Tensor from_eigen(const Eigen::MatrixXd& m) {
    Tensor t({m.rows(), m.cols()});
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        t.data.data(), m.rows(), m.cols()) = m;
    return t;
}

}  // namespace

void StatsAccumulator::add(const Tensor& feature) {
    require(feature.ndim() == 1, "stats: feature must be a vector");
    require_finite(feature, "stats: feature");
    const long d = feature.shape[0];
    if (n == 0) {
        mean = Tensor({d});
        comoment = Tensor({d, d});
    }
    require(mean.shape[0] == d, "stats: feature dimension changed mid-stream");
    ++n;
    // Welford: comoment uses the pre-update mean on one side
    Tensor delta({d});
    for (long i = 0; i < d; ++i) delta[i] = feature[i] - mean[i];
    for (long i = 0; i < d; ++i) mean[i] += delta[i] / static_cast<double>(n);
    for (long i = 0; i < d; ++i)
        for (long j = 0; j < d; ++j)
            comoment.at({i, j}) += delta[i] * (feature[j] - mean[j]);
}

void StatsAccumulator::merge(const StatsAccumulator& other) {
    if (other.n == 0) return;
    if (n == 0) {
        *this = other;
        return;
    }
    require(mean.shape == other.mean.shape, "stats: merging incompatible accumulators");
    const long d = mean.shape[0];
    const double na = static_cast<double>(n), nb = static_cast<double>(other.n);
    Tensor delta({d});
    for (long i = 0; i < d; ++i) delta[i] = other.mean[i] - mean[i];
    for (long i = 0; i < d; ++i)
        for (long j = 0; j < d; ++j)
            comoment.at({i, j}) += other.comoment.at({i, j}) + delta[i] * delta[j] * na * nb / (na + nb);
    for (long i = 0; i < d; ++i) mean[i] += delta[i] * nb / (na + nb);
    n += other.n;
}

FeatureStats StatsAccumulator::finish() const {
    require(n >= 2, "fit_gaussian: need at least two samples");
    FeatureStats s;
    s.n = n;
    s.mu = mean;
    s.cov = Tensor(comoment.shape);
    for (long i = 0; i < comoment.numel(); ++i) s.cov[i] = comoment[i] / static_cast<double>(n - 1);
    // enforce exact symmetry against accumulation round-off
    const long d = s.mu.shape[0];
    for (long i = 0; i < d; ++i)
        for (long j = i + 1; j < d; ++j) {
            const double v = 0.5 * (s.cov.at({i, j}) + s.cov.at({j, i}));
            s.cov.at({i, j}) = v;
            s.cov.at({j, i}) = v;
        }
    return s;
}

FeatureStats fit_gaussian(const Tensor& features) {
    require(features.ndim() == 2, "fit_gaussian: features must be [n, d]");
    require(features.shape[0] >= 2, "fit_gaussian: need at least two samples");
    StatsAccumulator acc;
    const long n = features.shape[0], d = features.shape[1];
    Tensor row({d});
    for (long i = 0; i < n; ++i) {
        std::copy_n(features.data.begin() + i * d, d, row.data.begin());
        acc.add(row);
    }
    return acc.finish();
}

Tensor sqrtm_psd(const Tensor& m) {
    require(m.ndim() == 2 && m.shape[0] == m.shape[1], "sqrtm: matrix must be square");
    Eigen::MatrixXd a = to_eigen(m);
    a = 0.5 * (a + a.transpose().eval());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    if (es.info() != Eigen::Success) throw NumericError("sqrtm: eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues();
    const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    for (long i = 0; i < ev.size(); ++i) {
        if (ev[i] < -1e-10 * scale)
            throw NumericError("sqrtm: matrix is not positive semi-definite (eigenvalue " +
                               std::to_string(ev[i]) + ")");
        ev[i] = std::sqrt(std::max(ev[i], 0.0));
    }
    Eigen::MatrixXd root = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    return from_eigen(root);
}

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
    require(a.mu.shape == b.mu.shape, "frechet_distance: dimension mismatch");
    require(a.cov.shape == b.cov.shape, "frechet_distance: dimension mismatch");

    double mean_term = 0.0;
    for (long i = 0; i < a.mu.numel(); ++i) {
        const double d = a.mu[i] - b.mu[i];
        mean_term += d * d;
    }

    Eigen::MatrixXd ca = to_eigen(a.cov), cb = to_eigen(b.cov);
    Eigen::MatrixXd sa = to_eigen(sqrtm_psd(a.cov));
    Eigen::MatrixXd cross = to_eigen(sqrtm_psd(from_eigen(sa * cb * sa)));
    const double value = mean_term + ca.trace() + cb.trace() - 2.0 * cross.trace();
    if (!std::isfinite(value)) throw NumericError("frechet_distance: non-finite result");
    return value;
}

ISResult inception_score(const Tensor& probs, long splits) {
    require(probs.ndim() == 2, "inception_score: probs must be [n, K]");
    require(splits >= 1, "inception_score: splits must be >= 1");
    const long n = probs.shape[0], K = probs.shape[1];
    require(n >= 1 && K >= 1, "inception_score: empty input");
    for (long i = 0; i < n; ++i) {
        double sum = 0.0;
        for (long k = 0; k < K; ++k) {
            const double p = probs.at({i, k});
            if (p < 0.0 || !std::isfinite(p))
                throw ContractError("inception_score: row " + std::to_string(i) + " is not a distribution");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-5)
            throw ContractError("inception_score: row " + std::to_string(i) + " sums to " +
                                std::to_string(sum));
    }

    if (n < 2 * splits) {
        const long reduced = std::max<long>(1, n / 2);
        std::cerr << "[endora] warning: reducing inception-score splits from " << splits << " to "
                  << reduced << " (only " << n << " samples)\n";
        splits = reduced;
    }

    std::vector<double> scores;
    for (long s = 0; s < splits; ++s) {
        const long lo = s * n / splits, hi = (s + 1) * n / splits;
        std::vector<double> marginal(static_cast<size_t>(K), 0.0);
        for (long i = lo; i < hi; ++i)
            for (long k = 0; k < K; ++k) marginal[static_cast<size_t>(k)] += probs.at({i, k});
        for (auto& m : marginal) m /= static_cast<double>(hi - lo);

        double kl = 0.0;
        for (long i = lo; i < hi; ++i)
            for (long k = 0; k < K; ++k) {
                const double p = probs.at({i, k});
                if (p > 0.0) kl += p * (std::log(p) - std::log(marginal[static_cast<size_t>(k)]));
            }
        scores.push_back(std::exp(kl / static_cast<double>(hi - lo)));
    }

    ISResult out;
    out.splits = splits;
    for (double s : scores) out.mean += s;
    out.mean /= static_cast<double>(splits);
    for (double s : scores) out.stddev += (s - out.mean) * (s - out.mean);
    out.stddev = std::sqrt(out.stddev / static_cast<double>(splits));
    return out;
}

}  // namespace endora::eval
