#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "endora/protocol.hpp"

using namespace endora;
using namespace endora::eval;
namespace fs = std::filesystem;

namespace {

Tensor matrix(long n, long d, std::vector<double> v) { return Tensor({n, d}, std::move(v)); }

FeatureStats seeded_stats(uint64_t seed, long d, double spread = 1.0, double shift = 0.0) {
    Rng rng(seed);
    Tensor feats({200, d});
    for (long i = 0; i < feats.numel(); ++i) feats[i] = shift + spread * rng.gaussian();
    return fit_gaussian(feats);
}

}  // namespace

TEST_CASE("fit_gaussian matches the two-point hand computation") {
    auto s = fit_gaussian(matrix(2, 2, {0, 0, 2, 2}));
    CHECK(s.n == 2);
    CHECK(s.mu[0] == doctest::Approx(1.0));
    CHECK(s.mu[1] == doctest::Approx(1.0));
    // unbiased divisor n-1 = 1
    for (long i = 0; i < 4; ++i) CHECK(s.cov[i] == doctest::Approx(2.0));

    auto zero = fit_gaussian(matrix(3, 2, {5, 7, 5, 7, 5, 7}));
    for (double v : zero.cov.data) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));

    CHECK_THROWS_AS(fit_gaussian(matrix(1, 2, {0, 0})), ContractError);
}

TEST_CASE("fit_gaussian recovers a seeded gaussian's mean") {
    Rng rng(3);
    const long n = 100000;
    Tensor feats({n, 2});
    for (long i = 0; i < n; ++i) {
        feats.at({i, 0}) = 1.5 + 2.0 * rng.gaussian();
        feats.at({i, 1}) = -0.5 + 0.5 * rng.gaussian();
    }
    auto s = fit_gaussian(feats);
    CHECK(std::abs(s.mu[0] - 1.5) < 3.0 * 2.0 / std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(s.mu[1] + 0.5) < 3.0 * 0.5 / std::sqrt(static_cast<double>(n)));
    CHECK(s.cov.at({0, 0}) == doctest::Approx(4.0).epsilon(0.05));
    CHECK(s.cov.at({1, 1}) == doctest::Approx(0.25).epsilon(0.05));
}

TEST_CASE("merged partial statistics equal the single pass") {
    Rng rng(4);
    const long n = 500, d = 3;
    Tensor feats({n, d});
    for (long i = 0; i < feats.numel(); ++i) feats[i] = rng.gaussian() + 0.3;

    auto single = fit_gaussian(feats);

    StatsAccumulator a, b, c;
    Tensor row({d});
    for (long i = 0; i < n; ++i) {
        std::copy_n(feats.data.begin() + i * d, d, row.data.begin());
        (i < 120 ? a : i < 130 ? b : c).add(row);
    }
    a.merge(b);
    a.merge(c);
    auto merged = a.finish();

    CHECK(merged.n == single.n);
    for (long i = 0; i < d; ++i) CHECK(merged.mu[i] == doctest::Approx(single.mu[i]).epsilon(1e-10));
    for (long i = 0; i < d * d; ++i)
        CHECK(merged.cov[i] == doctest::Approx(single.cov[i]).epsilon(1e-10));
}

TEST_CASE("matrix square root squares back to the input") {
    for (long d : {2L, 8L, 64L}) {
        Rng rng(static_cast<uint64_t>(d));
        Tensor a({d, d});
        for (auto& v : a.data) v = rng.gaussian();
        // SPD: a a^T + eps I
        Tensor spd({d, d});
        for (long i = 0; i < d; ++i)
            for (long j = 0; j < d; ++j) {
                double acc = (i == j) ? 1e-3 : 0.0;
                for (long k = 0; k < d; ++k) acc += a.at({i, k}) * a.at({j, k});
                spd.at({i, j}) = acc;
            }
        Tensor root = sqrtm_psd(spd);
        double err = 0.0, ref = 0.0;
        for (long i = 0; i < d; ++i)
            for (long j = 0; j < d; ++j) {
                double acc = 0.0;
                for (long k = 0; k < d; ++k) acc += root.at({i, k}) * root.at({k, j});
                const double delta = acc - spd.at({i, j});
                err += delta * delta;
                ref += spd.at({i, j}) * spd.at({i, j});
            }
        CHECK(std::sqrt(err / ref) < 1e-6);
    }

    CHECK_THROWS_AS(sqrtm_psd(matrix(2, 2, {1, 0, 0, -1})), NumericError);
}

TEST_CASE("frechet distance closed forms") {
    auto a = seeded_stats(1, 3);

    CHECK(frechet_distance(a, a) == doctest::Approx(0.0).epsilon(1e-8));

    // identical covariance, means offset by v
    auto b = a;
    b.mu[0] += 0.3;
    b.mu[2] -= 0.4;
    CHECK(frechet_distance(a, b) == doctest::Approx(0.09 + 0.16).epsilon(1e-9));

    // d=1 closed form (s1 - s2)^2 with equal means
    FeatureStats u{2, Tensor::zeros({1}), Tensor::full({1, 1}, 1.0)};
    FeatureStats w{2, Tensor::zeros({1}), Tensor::full({1, 1}, 4.0)};
    CHECK(frechet_distance(u, w) == doctest::Approx(1.0).epsilon(1e-9));

    // symmetry and non-negativity on unrelated stats
    auto c = seeded_stats(2, 3, 1.7, 0.5);
    const double fwd = frechet_distance(a, c);
    CHECK(fwd == doctest::Approx(frechet_distance(c, a)).epsilon(1e-8));
    CHECK(fwd > -1e-8);

    auto d4 = seeded_stats(3, 4);
    CHECK_THROWS_AS(frechet_distance(a, d4), ContractError);
}

TEST_CASE("interpolating one gaussian toward another shrinks the distance") {
    auto a = seeded_stats(5, 4, 1.0, 0.0);
    auto b = seeded_stats(6, 4, 2.0, 1.0);
    double prev = -1.0;
    for (int k = 0; k <= 4; ++k) {
        const double w = k / 4.0;  // 0 = pure a, 1 = pure b
        FeatureStats mix = a;
        for (long i = 0; i < mix.mu.numel(); ++i) mix.mu[i] = (1 - w) * a.mu[i] + w * b.mu[i];
        for (long i = 0; i < mix.cov.numel(); ++i) mix.cov[i] = (1 - w) * a.cov[i] + w * b.cov[i];
        const double d = frechet_distance(mix, b);
        if (k > 0) CHECK(d < prev);
        prev = d;
    }
    CHECK(prev == doctest::Approx(0.0).epsilon(1e-8));
}

TEST_CASE("inception score oracles and bounds") {
    // all-uniform rows carry zero KL
    Tensor uniform = Tensor::full({6, 4}, 0.25);
    auto r = inception_score(uniform, 1);
    CHECK(r.mean == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r.stddev == doctest::Approx(0.0).epsilon(1e-9));

    // one confident row per class reaches the maximum K
    Tensor onehot({3, 3});
    for (long i = 0; i < 3; ++i) onehot.at({i, i}) = 1.0;
    CHECK(inception_score(onehot, 1).mean == doctest::Approx(3.0).epsilon(1e-9));

    // two-row hand computation
    Tensor two = matrix(2, 2, {0.9, 0.1, 0.1, 0.9});
    const double kl = 0.9 * std::log(0.9 / 0.5) + 0.1 * std::log(0.1 / 0.5);
    CHECK(inception_score(two, 1).mean == doctest::Approx(std::exp(kl)).epsilon(1e-9));

    // bounds: 1 <= IS <= K on arbitrary valid rows
    Rng rng(9);
    Tensor rand({40, 5});
    for (long i = 0; i < 40; ++i) {
        double sum = 0.0;
        for (long k = 0; k < 5; ++k) {
            rand.at({i, k}) = rng.uniform() + 0.01;
            sum += rand.at({i, k});
        }
        for (long k = 0; k < 5; ++k) rand.at({i, k}) /= sum;
    }
    auto rr = inception_score(rand, 4);
    CHECK(rr.mean >= 1.0 - 1e-6);
    CHECK(rr.mean <= 5.0 + 1e-6);

    // too few samples: splits reduce instead of failing
    CHECK(inception_score(uniform, 10).splits <= 3);

    Tensor bad = matrix(1, 2, {0.7, 0.7});
    CHECK_THROWS_AS(inception_score(bad, 1), ContractError);
}

TEST_CASE("toy extractor is deterministic and row-stochastic") {
    auto ex1 = toy_feature_extractor(21);
    auto ex2 = toy_feature_extractor(21);
    Tensor clip = data::synth_clip(2, 3, 16, 16);

    CHECK(ex1->frame_features(clip).data == ex2->frame_features(clip).data);
    CHECK(ex1->id() == ex2->id());

    Tensor probs = ex1->probabilities(clip);
    CHECK(probs.shape == Shape{3, ex1->num_classes()});
    for (long f = 0; f < 3; ++f) {
        double sum = 0.0;
        for (long k = 0; k < ex1->num_classes(); ++k) {
            CHECK(probs.at({f, k}) >= 0.0);
            sum += probs.at({f, k});
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }

    // clip feature is the mean of frame features
    Tensor ff = ex1->frame_features(clip);
    Tensor cf = ex1->clip_feature(clip);
    for (long i = 0; i < cf.numel(); ++i) {
        double mean = 0.0;
        for (long f = 0; f < 3; ++f) mean += ff.at({f, i}) / 3.0;
        CHECK(cf[i] == doctest::Approx(mean).epsilon(1e-12));
    }

    // sensitivity: distinct clips separate in feature space
    Tensor other = data::synth_clip(77, 3, 16, 16);
    CHECK(ex1->frame_features(other).data != ff.data);
    // odd-sized frames are normalized internally
    CHECK(ex1->clip_feature(data::synth_clip(5, 2, 24, 30)).numel() == ex1->feature_dim());
}

TEST_CASE("eval clip sampling follows the windowing rules") {
    struct TempDir {
        fs::path path;
        explicit TempDir(const char* n) : path(fs::temp_directory_path() / n) {
            fs::remove_all(path);
            fs::create_directories(path);
        }
        ~TempDir() { fs::remove_all(path); }
    };

    TempDir dir("endora_eval_sampling");
    data::write_video_frames(dir.path, "only", data::synth_clip(1, 16, 8, 8));
    auto idx = data::build_clip_index(dir.path, 1, 1, 8, 8);

    Rng rng(5);
    auto set = sample_eval_clips(idx, 3, 16, rng);
    REQUIRE(set.clips.size() == 3);
    for (const auto& c : set.clips) CHECK(c.data == set.clips[0].data);  // single window
    CHECK(set.skipped_videos == 0);

    TempDir dir2("endora_eval_sampling2");
    data::write_video_frames(dir2.path, "v20", data::synth_clip(2, 20, 8, 8));
    data::write_video_frames(dir2.path, "tiny", data::synth_clip(3, 4, 8, 8));
    auto idx2 = data::build_clip_index(dir2.path, 1, 1, 8, 8);

    Rng r1(6), r2(6);
    auto s1 = sample_eval_clips(idx2, 40, 16, r1);
    auto s2 = sample_eval_clips(idx2, 40, 16, r2);
    CHECK(s1.picks == s2.picks);
    CHECK(s1.skipped_videos == 1);
    for (const auto& [v, start] : s1.picks) {
        CHECK(idx2.videos[static_cast<size_t>(v)].id == "v20");
        CHECK(start >= 0);
        CHECK(start <= 4);
    }

    Rng r3(7);
    CHECK_THROWS_AS(sample_eval_clips(idx2, 1, 64, r3), DataError);
}

TEST_CASE("report files round trip and self-comparison scores zero") {
    std::vector<Tensor> clips;
    for (uint64_t s = 0; s < 4; ++s) clips.push_back(data::synth_clip(s, 4, 16, 16));
    auto ex = toy_feature_extractor(33);

    auto report = evaluate_clip_sets(clips, clips, *ex, 99, 2);
    REQUIRE(report.metrics.size() == 4);
    CHECK(report.metrics[0].name == "fvd");
    CHECK(std::abs(report.metrics[0].value) < 1e-6);
    CHECK(report.metrics[1].name == "fid");
    CHECK(std::abs(report.metrics[1].value) < 1e-6);

    const auto path = fs::temp_directory_path() / "endora_eval_report.txt";
    write_report(path, report);
    auto back = parse_report(path);
    CHECK(back.seed == report.seed);
    CHECK(back.extractor_id == report.extractor_id);
    REQUIRE(back.metrics.size() == report.metrics.size());
    for (size_t i = 0; i < back.metrics.size(); ++i) {
        CHECK(back.metrics[i].name == report.metrics[i].name);
        CHECK(back.metrics[i].value == doctest::Approx(report.metrics[i].value).epsilon(1e-10));
        CHECK(back.metrics[i].count == report.metrics[i].count);
    }

    // identical inputs format to identical bytes
    CHECK(format_report(report) == format_report(evaluate_clip_sets(clips, clips, *ex, 99, 2)));
    fs::remove(path);
}
