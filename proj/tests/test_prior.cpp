#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "endora/prior.hpp"
#include "endora/serialize.hpp"

using namespace endora;
using namespace endora::prior;

namespace {

Tensor vec(std::vector<double> v) {
    const long n = static_cast<long>(v.size());
    return Tensor({n}, std::move(v));
}

Tensor random_tensor(Shape s, uint64_t seed) {
    Rng rng(seed);
    return rng.gaussian_tensor(std::move(s));
}

}  // namespace

TEST_CASE("pearson correlation basic identities") {
    Tensor a = random_tensor({16}, 1);
    CHECK(pearson_corr(a, a).value == doctest::Approx(1.0).epsilon(1e-12));

    Tensor b = a;
    for (auto& v : b.data) v = -v + 3.7;
    CHECK(pearson_corr(a, b).value == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("pearson three-point hand computation") {
    // A=[1,2,3], B=[1,2,4]: means 2 and 7/3,
    // cov = ((-1)(-4/3) + 0 + (1)(5/3)) / 3 = 1,
    // var(A) = 2/3, var(B) = 14/9, corr = 1/sqrt(28/27) = sqrt(27/28)
    const double expected = std::sqrt(27.0 / 28.0);
    auto r = pearson_corr(vec({1, 2, 3}), vec({1, 2, 4}));
    CHECK(!r.degenerate);
    CHECK(std::abs(r.value - expected) < 1e-12);
}

TEST_CASE("degenerate and contract cases") {
    auto r = pearson_corr(Tensor::full({8}, 2.5), random_tensor({8}, 2));
    CHECK(r.value == 0.0);
    CHECK(r.degenerate);
    CHECK_THROWS_AS(pearson_corr(vec({1, 2}), vec({1, 2, 3})), ContractError);
    CHECK_THROWS_AS(pearson_corr(vec({1}), vec({2})), ContractError);
}

TEST_CASE("affine invariance of pearson correlation") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor a = rng.gaussian_tensor({32});
        Tensor b = rng.gaussian_tensor({32});
        const double base = pearson_corr(a, b).value;
        const double scale = std::abs(rng.gaussian()) + 0.1;
        const double shift = rng.gaussian();
        Tensor ap = a;
        for (auto& v : ap.data) v = scale * v + shift;
        CHECK(std::abs(pearson_corr(ap, b).value - base) < 1e-9);
        for (auto& v : ap.data) v = -v;
        CHECK(std::abs(pearson_corr(ap, b).value + base) < 1e-9);
        CHECK(std::abs(base) <= 1.0 + 1e-9);
    }
}

TEST_CASE("adapter convolution hand oracle") {
    nn::ParamStore ps;
    auto ad = make_adapter(ps, 1);

    SUBCASE("all-ones input and kernel") {
        ad.w->value = Tensor::full({1, 1, 3, 3}, 1.0);
        ad.b->value = Tensor::zeros({1});
        auto y = ad(ag::constant(Tensor::full({1, 4, 4}, 1.0)));
        CHECK(y->value.shape == Shape{1, 2, 2});
        CHECK(y->value[0] == 4.0);
        CHECK(y->value[1] == 6.0);
        CHECK(y->value[2] == 6.0);
        CHECK(y->value[3] == 9.0);
    }
    SUBCASE("delta kernel is a strided subsample") {
        ad.w->value = Tensor::zeros({1, 1, 3, 3});
        ad.w->value.at({0, 0, 1, 1}) = 1.0;
        ad.b->value = Tensor::zeros({1});
        Tensor x = random_tensor({2, 5, 5}, 4);
        auto y = ad(ag::constant(x));
        CHECK(y->value.shape == Shape{2, 3, 3});
        for (long f = 0; f < 2; ++f)
            for (long i = 0; i < 3; ++i)
                for (long j = 0; j < 3; ++j) CHECK(y->value.at({f, i, j}) == x.at({f, 2 * i, 2 * j}));
    }
    SUBCASE("32 -> 16 shape arithmetic and too-small inputs") {
        auto y = ad(ag::constant(random_tensor({1, 32, 32}, 5)));
        CHECK(y->value.shape == Shape{1, 16, 16});
        CHECK_THROWS_AS(ad(ag::constant(random_tensor({1, 2, 2}, 6))), ContractError);
    }
}

TEST_CASE("prior_loss extremes and midpoint") {
    Tensor m = random_tensor({2, 4, 4}, 7);
    auto same = prior_loss({ag::constant(m)}, {ag::constant(m)});
    CHECK(same->value[0] == doctest::Approx(0.0).epsilon(1e-9));

    Tensor neg = m;
    for (auto& v : neg.data) v = -2.0 * v + 1.0;
    auto anti = prior_loss({ag::constant(m)}, {ag::constant(neg)});
    CHECK(anti->value[0] == doctest::Approx(2.0).epsilon(1e-9));

    // two levels (one frame each) with correlations {1, 0} -> loss 0.5
    Tensor one = random_tensor({1, 2, 2}, 71);
    Tensor a({1, 2, 2}, {0, 1, 0, 1});
    Tensor b({1, 2, 2}, {0, 0, 1, 1});
    auto half = prior_loss({ag::constant(one), ag::constant(a)}, {ag::constant(one), ag::constant(b)});
    CHECK(half->value[0] == doctest::Approx(0.5).epsilon(1e-9));

    CHECK_THROWS_AS(prior_loss({ag::constant(m)}, {ag::constant(m), ag::constant(m)}), ContractError);
}

TEST_CASE("prior_loss stays in [0,2] and pools mismatched sides") {
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        auto s = ag::constant(rng.gaussian_tensor({2, 8, 8}));
        auto p = ag::constant(rng.gaussian_tensor({2, 4, 4}));
        auto l = prior_loss({s}, {p});
        CHECK(l->value[0] >= 0.0);
        CHECK(l->value[0] <= 2.0);
    }
    // 8 vs 3 cannot be pooled
    CHECK_THROWS_AS(prior_loss({ag::constant(random_tensor({1, 8, 8}, 9))},
                               {ag::constant(random_tensor({1, 3, 3}, 10))}),
                    ContractError);
}

TEST_CASE("total_loss arithmetic and error surface") {
    CHECK(total_loss(1.0, 0.0, 0.5) == 1.0);
    CHECK(total_loss(0.0, 2.0, 0.5) == 1.0);
    CHECK(total_loss(0.37, 0.8, 0.5) == doctest::Approx(0.77).epsilon(1e-12));
    CHECK_THROWS_AS(total_loss(std::nan(""), 0.0, 0.5), NumericError);
    CHECK_THROWS_AS(total_loss(0.0, std::numeric_limits<double>::infinity(), 0.5), NumericError);
}

TEST_CASE("total_loss gradient w.r.t. student map matches finite differences") {
    Rng rng(11);
    Tensor student = rng.gaussian_tensor({1, 4, 4});
    Tensor prior_map = rng.gaussian_tensor({1, 4, 4});

    auto loss_of = [&](const Tensor& s) {
        auto l = prior_loss({ag::constant(s)}, {ag::constant(prior_map)});
        return total_loss(0.42, l->value[0], 0.5);
    };

    auto sv = ag::param(student);
    auto l = total_loss_var(ag::constant(Tensor::full({1}, 0.42)),
                            prior_loss({sv}, {ag::constant(prior_map)}), 0.5);
    ag::backward(l);
    const double h = 1e-6;
    for (long i = 0; i < student.numel(); ++i) {
        Tensor up = student, dn = student;
        up[i] += h;
        dn[i] -= h;
        const double fd = (loss_of(up) - loss_of(dn)) / (2 * h);
        CHECK(std::abs(sv->grad[i] - fd) / std::max(1e-8, std::abs(fd)) < 1e-4);
    }
}

TEST_CASE("gradient descent on 1-corr reaches corr >= 0.99 within 500 steps") {
    Rng rng(12);
    Tensor target = rng.gaussian_tensor({1, 8, 8});
    auto student = ag::param(rng.gaussian_tensor({1, 8, 8}));
    double corr = 0.0;
    for (int step = 0; step < 500; ++step) {
        student->zero_grad();
        auto loss = prior_loss({student}, {ag::constant(target)});
        ag::backward(loss);
        for (long i = 0; i < student->value.numel(); ++i)
            student->value[i] -= 0.5 * student->grad[i];
        corr = pearson_corr(student->value, target).value;
        if (corr >= 0.99) break;
    }
    CHECK(corr >= 0.99);
}

TEST_CASE("level pairing mirrors the evenly spaced layer choice") {
    CHECK(level_pairing(14) == std::vector<long>{2, 5, 8, 11});
    CHECK(level_pairing(2) == std::vector<long>{0, 0, 1, 1});
    CHECK(level_pairing(4) == std::vector<long>{0, 1, 2, 3});
}

TEST_CASE("toy prior provider is frozen, stochastic and input-sensitive") {
    auto provider = toy_prior_provider(77);
    CHECK(provider->levels() == 4);
    CHECK(provider->map_side() == 64);

    Tensor frames = random_tensor({2, 32, 32, 3}, 13);
    auto m1 = provider->attention_maps(frames);
    auto m2 = provider->attention_maps(frames);
    REQUIRE(m1.size() == 4);
    for (size_t l = 0; l < 4; ++l) CHECK(m1[l].data == m2[l].data);

    for (const auto& m : m1) {
        CHECK(m.shape == Shape{2, 64, 64});
        for (long r = 0; r < 2 * 64; ++r) {
            double sum = 0.0;
            for (long j = 0; j < 64; ++j) sum += m.data[static_cast<size_t>(r * 64 + j)];
            CHECK(std::abs(sum - 1.0) < 1e-4);
        }
    }

    Tensor other = random_tensor({2, 32, 32, 3}, 14);
    auto m3 = provider->attention_maps(other);
    double max_diff = 0.0;
    for (long i = 0; i < m1[0].numel(); ++i) max_diff = std::max(max_diff, std::abs(m1[0][i] - m3[0][i]));
    CHECK(max_diff > 1e-6);
}

TEST_CASE("replay provider round-trips maps through a container file") {
    namespace fs = std::filesystem;
    const auto path = fs::temp_directory_path() / "endora_replay_test.etc";

    io::TensorFile tf;
    tf.meta = {{"levels", 2}, {"map_side", 4}};
    tf.tensors["level0"] = random_tensor({1, 4, 4}, 15);
    tf.tensors["level1"] = random_tensor({1, 4, 4}, 16);
    tf.save(path);

    auto provider = replay_prior_provider(path);
    CHECK(provider->levels() == 2);
    CHECK(provider->map_side() == 4);
    auto maps = provider->attention_maps(Tensor::zeros({1, 8, 8, 3}));
    CHECK(maps[0].data == tf.tensors["level0"].data);
    CHECK(maps[1].data == tf.tensors["level1"].data);
    fs::remove(path);
}
