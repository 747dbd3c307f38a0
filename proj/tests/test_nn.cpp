#include <catch2/catch_amalgamated.hpp>

#include <functional>

#include "burstlab/nn.hpp"
#include "burstlab/random.hpp"
#include "fd_support.hpp"

using namespace burstlab;
using namespace burstlab::testsupport;

namespace {

/// Fixed-weight linear loss over a tensor: L = sum w_i y_i. The gradient wrt y
/// is the weight field itself, which keeps finite differences sharp.
struct WeightedLoss {
    TensorT<double> w;
    explicit WeightedLoss(const TensorT<double>& like, uint64_t seed) : w(like.c, like.h, like.w) {
        RandomSource rng(seed);
        for (auto& v : w.v) v = rng.normal();
    }
    double operator()(const TensorT<double>& y) const {
        double acc = 0;
        for (size_t i = 0; i < y.size(); ++i) acc += w.v[i] * y.v[i];
        return acc;
    }
    TensorT<double> grad() const { return w; }
};

} // namespace

TEST_CASE("conv2d gradients match finite differences", "[nn]") {
    struct Case {
        int in_c, out_c, k, stride;
    };
    for (auto cse : {Case{3, 4, 3, 1}, Case{4, 6, 3, 2}, Case{5, 3, 1, 1}}) {
        RandomSource rng(31);
        Conv2d<double> conv;
        conv.init(cse.in_c, cse.out_c, cse.k, cse.stride);
        conv.init_weights(rng);
        for (auto& b : conv.bias.w) b = rng.normal() * 0.1;
        TensorT<double> x = random_tensor_d(cse.in_c, 7, 6, rng);
        TensorT<double> y0 = conv.forward(x);
        WeightedLoss loss(y0, 77);

        auto loss_fn = [&]() { return loss(conv.forward(x)); };
        std::fill(conv.weight.g.begin(), conv.weight.g.end(), 0.0);
        std::fill(conv.bias.g.begin(), conv.bias.g.end(), 0.0);
        TensorT<double> dx = conv.backward(x, loss.grad());
        fd_check_param(conv.weight, loss_fn, 12, rng, 1e-5);
        fd_check_param(conv.bias, loss_fn, 4, rng, 1e-5);
        fd_check_input(x, dx, loss_fn, 10, rng, 1e-5);
    }
}

TEST_CASE("linear gradients match finite differences", "[nn]") {
    RandomSource rng(32);
    Linear<double> lin;
    lin.init(6, 4);
    lin.init_weights(rng);
    std::vector<double> x(6);
    for (auto& v : x) v = rng.normal();
    std::vector<double> w(4);
    for (auto& v : w) v = rng.normal();

    auto loss_fn = [&]() {
        auto y = lin.forward(x);
        double acc = 0;
        for (int i = 0; i < 4; ++i) acc += w[i] * y[i];
        return acc;
    };
    std::vector<double> dx = lin.backward(x, w);
    fd_check_param(lin.weight, loss_fn, 10, rng, 1e-6);
    fd_check_param(lin.bias, loss_fn, 4, rng, 1e-6);
    const double h = 1e-6;
    for (int i = 0; i < 6; ++i) {
        double saved = x[i];
        x[i] = saved + h;
        double lp = loss_fn();
        x[i] = saved - h;
        double lm = loss_fn();
        x[i] = saved;
        CHECK(dx[i] == Catch::Approx((lp - lm) / (2 * h)).epsilon(1e-5));
    }
}

TEST_CASE("group norm gradients match finite differences", "[nn]") {
    RandomSource rng(33);
    GroupNorm<double> gn;
    gn.init(8, 4);
    for (auto& g : gn.gamma.w) g = 0.5 + rng.uniform();
    for (auto& b : gn.beta.w) b = rng.normal() * 0.1;
    TensorT<double> x = random_tensor_d(8, 5, 4, rng);
    typename GroupNorm<double>::Cache cache;
    TensorT<double> y0 = gn.forward(x, &cache);
    WeightedLoss loss(y0, 55);

    auto loss_fn = [&]() { return loss(gn.forward(x, nullptr)); };
    TensorT<double> dx = gn.backward(loss.grad(), cache);
    fd_check_param(gn.gamma, loss_fn, 8, rng, 1e-5);
    fd_check_param(gn.beta, loss_fn, 8, rng, 1e-5);
    fd_check_input(x, dx, loss_fn, 12, rng, 1e-4, 1e-7);
}

TEST_CASE("group norm normalizes per group", "[nn]") {
    RandomSource rng(34);
    GroupNorm<double> gn;
    gn.init(4, 2);
    TensorT<double> x = random_tensor_d(4, 6, 6, rng, 3.0);
    TensorT<double> y = gn.forward(x, nullptr);
    const size_t m = 2 * 36;
    for (int g = 0; g < 2; ++g) {
        double mean = 0, var = 0;
        for (size_t i = 0; i < m; ++i) mean += y.v[g * m + i];
        mean /= m;
        for (size_t i = 0; i < m; ++i) var += (y.v[g * m + i] - mean) * (y.v[g * m + i] - mean);
        var /= m;
        CHECK(std::abs(mean) < 1e-10);
        CHECK(var == Catch::Approx(1.0).margin(1e-4));
    }
}

TEST_CASE("silu gradients match finite differences", "[nn]") {
    RandomSource rng(35);
    TensorT<double> x = random_tensor_d(2, 4, 4, rng, 2.0);
    TensorT<double> y0 = silu(x);
    WeightedLoss loss(y0, 99);
    auto loss_fn = [&]() { return loss(silu(x)); };
    TensorT<double> dx = silu_backward(x, loss.grad());
    fd_check_input(x, dx, loss_fn, 16, rng, 1e-6);
}

TEST_CASE("upsample and pixel shuffle are exact adjoint pairs", "[nn]") {
    RandomSource rng(36);
    SECTION("nearest upsample") {
        TensorT<double> x = random_tensor_d(3, 5, 4, rng);
        TensorT<double> y = random_tensor_d(3, 10, 8, rng);
        TensorT<double> fx = upsample_nearest2x(x);
        TensorT<double> bty = upsample_nearest2x_backward(y);
        double lhs = 0, rhs = 0;
        for (size_t i = 0; i < fx.size(); ++i) lhs += fx.v[i] * y.v[i];
        for (size_t i = 0; i < x.size(); ++i) rhs += x.v[i] * bty.v[i];
        CHECK(lhs == Catch::Approx(rhs).epsilon(1e-12));
    }
    SECTION("pixel shuffle") {
        TensorT<double> x = random_tensor_d(12, 3, 4, rng);
        TensorT<double> y = random_tensor_d(3, 6, 8, rng);
        TensorT<double> fx = pixel_shuffle(x, 2);
        TensorT<double> bty = pixel_shuffle_backward(y, 2);
        double lhs = 0, rhs = 0;
        for (size_t i = 0; i < fx.size(); ++i) lhs += fx.v[i] * y.v[i];
        for (size_t i = 0; i < x.size(); ++i) rhs += x.v[i] * bty.v[i];
        CHECK(lhs == Catch::Approx(rhs).epsilon(1e-12));
        CHECK_THROWS_AS(pixel_shuffle(random_tensor_d(5, 2, 2, rng), 2), param_error);
    }
}

TEST_CASE("pixel shuffle layout matches the sub-pixel convention", "[nn]") {
    TensorT<double> x(4, 1, 1);
    x.v = {1, 2, 3, 4};
    TensorT<double> y = pixel_shuffle(x, 2);
    CHECK(y.c == 1);
    CHECK(y.at(0, 0, 0) == 1);
    CHECK(y.at(0, 0, 1) == 2);
    CHECK(y.at(0, 1, 0) == 3);
    CHECK(y.at(0, 1, 1) == 4);
}

TEST_CASE("concat and split are inverses", "[nn]") {
    RandomSource rng(37);
    TensorT<double> a = random_tensor_d(3, 4, 4, rng);
    TensorT<double> b = random_tensor_d(5, 4, 4, rng);
    TensorT<double> cat = concat_channels(a, b);
    TensorT<double> a2, b2;
    split_channels(cat, a2, b2, 3);
    CHECK(max_abs_diff(a, a2) == 0.0);
    CHECK(max_abs_diff(b, b2) == 0.0);
}

TEST_CASE("sinusoidal embedding distinguishes timesteps", "[nn]") {
    auto e1 = sinusoidal_embedding<double>(1, 32);
    auto e2 = sinusoidal_embedding<double>(100, 32);
    REQUIRE(e1.size() == 32);
    double diff = 0;
    for (size_t i = 0; i < e1.size(); ++i) diff += std::abs(e1[i] - e2[i]);
    CHECK(diff > 0.5);
    CHECK_THROWS_AS(sinusoidal_embedding<double>(1, 3), param_error);
}

TEST_CASE("adamw single step matches the hand-computed update", "[nn]") {
    Param<double> p;
    p.init({1});
    p.w[0] = 1.0;
    p.g[0] = 0.5;
    ParamRegistry<double> reg;
    reg.add("p", p);
    AdamW<double> opt;
    opt.lr = 0.1;
    opt.beta1 = 0.9;
    opt.beta2 = 0.999;
    opt.weight_decay = 0.01;
    opt.init(reg);
    opt.step(reg);
    // mhat = g, vhat = g^2 at step 1 -> update = g/(|g|+eps) + wd*p
    double expect = 1.0 - 0.1 * (0.5 / (0.5 + 1e-8) + 0.01 * 1.0);
    CHECK(p.w[0] == Catch::Approx(expect).epsilon(1e-9));
    CHECK(opt.step_count == 1);
}

TEST_CASE("registry copy and grad accumulation across model copies", "[nn]") {
    RandomSource rng(38);
    Conv2d<double> a, b;
    a.init(2, 3, 3);
    a.init_weights(rng);
    b.init(2, 3, 3);
    ParamRegistry<double> ra, rb;
    a.register_params(ra, "conv");
    b.register_params(rb, "conv");
    rb.copy_params_from(ra);
    CHECK(b.weight.w == a.weight.w);

    for (auto& g : a.weight.g) g = 1.0;
    for (auto& g : b.weight.g) g = 2.0;
    ra.add_grads_from(rb);
    for (auto g : a.weight.g) CHECK(g == 3.0);
    CHECK(ra.total_size() == a.weight.size() + a.bias.size());
    CHECK(ra.find("conv.weight") == &a.weight);
    CHECK(ra.find("missing") == nullptr);
}
