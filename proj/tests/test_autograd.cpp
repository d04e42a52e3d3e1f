#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "endora/autograd.hpp"
#include "endora/rng.hpp"

using namespace endora;
using namespace endora::ag;

namespace {

// Central-difference gradient check of a scalar-valued graph builder.
void gradcheck(const std::function<Var(const std::vector<Var>&)>& f, std::vector<Tensor> inputs,
               double tol = 1e-6) {
    std::vector<Var> params;
    for (auto& t : inputs) params.push_back(param(t));
    auto out = f(params);
    backward(out);

    const double h = 1e-5;
    for (size_t k = 0; k < inputs.size(); ++k) {
        for (long i = 0; i < inputs[k].numel(); ++i) {
            auto eval = [&](double delta) {
                std::vector<Var> ps;
                for (size_t j = 0; j < inputs.size(); ++j) {
                    Tensor t = inputs[j];
                    if (j == k) t[i] += delta;
                    ps.push_back(constant(t));
                }
                return f(ps)->value[0];
            };
            const double fd = (eval(h) - eval(-h)) / (2 * h);
            const double got = params[k]->grad[i];
            CHECK(std::abs(got - fd) < tol * std::max(1.0, std::abs(fd)));
        }
    }
}

}  // namespace

TEST_CASE("elementwise op gradients") {
    Rng rng(1);
    Tensor a = rng.gaussian_tensor({3, 4});
    Tensor b = rng.gaussian_tensor({3, 4});
    for (auto& v : b.data) v += (v > 0 ? 1.5 : -1.5);  // keep divisors away from 0

    gradcheck([](const std::vector<Var>& p) { return mean_all(mul(add(p[0], p[1]), sub(p[0], p[1]))); },
              {a, b});
    gradcheck([](const std::vector<Var>& p) { return mean_all(div(p[0], p[1])); }, {a, b});
    gradcheck([](const std::vector<Var>& p) { return mean_all(gelu(p[0])); }, {a});
    gradcheck([](const std::vector<Var>& p) { return mean_all(silu(p[0])); }, {a});
    Tensor pos = a;
    for (auto& v : pos.data) v = std::abs(v) + 0.5;
    gradcheck([](const std::vector<Var>& p) { return mean_all(sqrt_v(p[0])); }, {pos});
}

TEST_CASE("matmul and bmm gradients") {
    Rng rng(2);
    Tensor x = rng.gaussian_tensor({2, 3, 5});
    Tensor w = rng.gaussian_tensor({5, 4});
    gradcheck([](const std::vector<Var>& p) { return mean_all(matmul(p[0], p[1])); }, {x, w});

    Tensor a = rng.gaussian_tensor({2, 3, 4});
    Tensor b = rng.gaussian_tensor({2, 4, 5});
    gradcheck([](const std::vector<Var>& p) { return mean_all(mul(bmm(p[0], p[1]), bmm(p[0], p[1]))); },
              {a, b});
    Tensor bt = rng.gaussian_tensor({2, 5, 4});
    gradcheck([](const std::vector<Var>& p) { return mean_all(bmm(p[0], p[1], true)); }, {a, bt});
}

TEST_CASE("softmax and layernorm gradients") {
    Rng rng(3);
    Tensor x = rng.gaussian_tensor({4, 6});
    gradcheck(
        [](const std::vector<Var>& p) {
            auto s = softmax_lastdim(p[0]);
            return mean_all(mul(s, s));
        },
        {x}, 1e-5);
    gradcheck(
        [](const std::vector<Var>& p) {
            auto y = layernorm_lastdim(p[0]);
            return mean_all(mul(y, add_scalar(y, 0.3)));
        },
        {x}, 1e-5);
}

TEST_CASE("softmax rows sum to one") {
    Rng rng(4);
    auto s = softmax_lastdim(constant(rng.gaussian_tensor({5, 7})));
    for (long r = 0; r < 5; ++r) {
        double sum = 0.0;
        for (long j = 0; j < 7; ++j) sum += s->value[r * 7 + j];
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("broadcast, rowvec and slice gradients") {
    Rng rng(5);
    Tensor x = rng.gaussian_tensor({3, 4});
    Tensor v = rng.gaussian_tensor({4});
    Tensor s = rng.gaussian_tensor({1});
    gradcheck([](const std::vector<Var>& p) { return mean_all(mul(add_rowvec(p[0], p[1]), p[0])); },
              {x, v});
    gradcheck([](const std::vector<Var>& p) { return mean_all(mul_rowvec(p[0], p[1])); }, {x, v});
    gradcheck(
        [&x](const std::vector<Var>& p) {
            return mean_all(mul(broadcast_scalar(p[0], x.shape), constant(x)));
        },
        {s});
    gradcheck([](const std::vector<Var>& p) {
        auto a = slice_lastdim(p[0], 1, 2);
        return mean_all(mul(a, a));
    },
              {x});
}

TEST_CASE("permute and reshape are exact data movements with correct gradients") {
    Rng rng(6);
    Tensor x = rng.gaussian_tensor({2, 3, 4});
    auto p = constant(x);
    auto y = permute(p, {2, 0, 1});
    CHECK(y->value.shape == Shape{4, 2, 3});
    for (long i = 0; i < 2; ++i)
        for (long j = 0; j < 3; ++j)
            for (long k = 0; k < 4; ++k) CHECK(y->value.at({k, i, j}) == x.at({i, j, k}));

    gradcheck([](const std::vector<Var>& p2) {
        auto t = permute(p2[0], {1, 2, 0});
        return mean_all(mul(t, t));
    },
              {x});
    gradcheck([](const std::vector<Var>& p2) {
        auto t = reshape(p2[0], {6, 4});
        return mean_all(mul(t, add_scalar(t, 1.0)));
    },
              {x});
}

TEST_CASE("reductions") {
    Rng rng(7);
    Tensor x = rng.gaussian_tensor({2, 3, 4});
    auto m = mean_axis(constant(x), 1);
    CHECK(m->value.shape == Shape{2, 4});
    CHECK(m->value.at({1, 2}) ==
          doctest::Approx((x.at({1, 0, 2}) + x.at({1, 1, 2}) + x.at({1, 2, 2})) / 3.0));
    gradcheck([](const std::vector<Var>& p) {
        auto t = mean_axis(p[0], 1);
        return mean_all(mul(t, t));
    },
              {x});
}

TEST_CASE("conv3x3 stride-2 values and gradients") {
    // all-ones 4x4 input and kernel, padding 1 -> [[4,6],[6,9]]
    Tensor x = Tensor::full({1, 1, 4, 4}, 1.0);
    Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor b = Tensor::zeros({1});
    auto y = conv3x3_s2(constant(x), constant(w), constant(b));
    CHECK(y->value.shape == Shape{1, 1, 2, 2});
    CHECK(y->value[0] == 4.0);
    CHECK(y->value[1] == 6.0);
    CHECK(y->value[2] == 6.0);
    CHECK(y->value[3] == 9.0);

    // delta kernel -> strided subsample
    Tensor wd = Tensor::zeros({1, 1, 3, 3});
    wd.at({0, 0, 1, 1}) = 1.0;
    Rng rng(8);
    Tensor xr = rng.gaussian_tensor({1, 1, 5, 5});
    auto ys = conv3x3_s2(constant(xr), constant(wd), constant(b));
    CHECK(ys->value.shape == Shape{1, 1, 3, 3});
    for (long i = 0; i < 3; ++i)
        for (long j = 0; j < 3; ++j) CHECK(ys->value.at({0, 0, i, j}) == xr.at({0, 0, 2 * i, 2 * j}));

    Tensor xg = rng.gaussian_tensor({2, 2, 5, 5});
    Tensor wg = rng.gaussian_tensor({2, 2, 3, 3});
    Tensor bg = rng.gaussian_tensor({2});
    gradcheck([](const std::vector<Var>& p) {
        auto c = conv3x3_s2(p[0], p[1], p[2]);
        return mean_all(mul(c, c));
    },
              {xg, wg, bg}, 1e-5);
}

TEST_CASE("avgpool2d values and gradients") {
    Rng rng(9);
    Tensor x = rng.gaussian_tensor({2, 4, 4});
    auto y = avgpool2d(constant(x), 2);
    CHECK(y->value.shape == Shape{2, 2, 2});
    CHECK(y->value.at({0, 0, 0}) ==
          doctest::Approx((x.at({0, 0, 0}) + x.at({0, 0, 1}) + x.at({0, 1, 0}) + x.at({0, 1, 1})) / 4.0));
    gradcheck([](const std::vector<Var>& p) {
        auto t = avgpool2d(p[0], 2);
        return mean_all(mul(t, t));
    },
              {x});
}

TEST_CASE("gradients accumulate across two backward passes until zeroed") {
    Tensor x = Tensor::full({2}, 1.5);
    auto p = param(x);
    auto f = [&] { return mean_all(mul(p, p)); };
    backward(f());
    const double g1 = p->grad[0];
    backward(f());
    CHECK(p->grad[0] == doctest::Approx(2 * g1));
    p->zero_grad();
    CHECK(p->grad[0] == 0.0);
}

TEST_CASE("a node reused twice in the graph gets both contributions") {
    Tensor x = Tensor::full({1}, 0.7);
    auto p = param(x);
    auto y = mul(p, p);  // d/dx x^2 = 2x
    backward(mean_all(y));
    CHECK(p->grad[0] == doctest::Approx(1.4));
}
