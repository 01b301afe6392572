#include "test_util.hpp"

#include "mixscale/core/conv.hpp"
#include "mixscale/nn/module.hpp"

using namespace mixscale;

namespace {

// Central finite differences of a scalar-valued graph with respect to one
// leaf, compared against the recorded backward pass.
template <typename Fn>
void fd_check_leaf(const Var<double>& leaf, Fn&& build, double eps = 1e-6,
                   double tol = 1e-5) {
    leaf->requires_grad = true;
    leaf->grad = TensorD();
    Var<double> loss = build();
    backward(loss);
    TensorD analytic = leaf->grad;
    REQUIRE(analytic.size() == leaf->value.size());
    for (size_t i = 0; i < leaf->value.size(); ++i) {
        double saved = leaf->value.v[i];
        NoGradGuard no_grad;
        leaf->value.v[i] = saved + eps;
        double lp = build()->value.v[0];
        leaf->value.v[i] = saved - eps;
        double lm = build()->value.v[0];
        leaf->value.v[i] = saved;
        double fd = (lp - lm) / (2 * eps);
        REQUIRE(std::abs(fd - analytic.v[i]) <= tol * std::max(1.0, std::abs(fd)));
    }
}

}  // namespace

TEST_CASE("elementwise ops: values and gradients") {
    auto x = make_leaf<double>(testutil::random_tensor<double>(1, 2, 3, 3, 11), true);
    fd_check_leaf(x, [&] { return mean_all(relu(x)); });
    fd_check_leaf(x, [&] { return mean_all(sigmoid(x)); });
    fd_check_leaf(x, [&] { return sum_all(scale(x, 2.5)); });

    auto y = make_leaf<double>(testutil::random_tensor<double>(1, 2, 3, 3, 12), true);
    fd_check_leaf(x, [&] { return sum_all(add(x, y)); });
    fd_check_leaf(y, [&] { return sum_all(add(x, y)); });
}

TEST_CASE("broadcast multiply covers attention and channel-gate shapes") {
    auto x = make_leaf<double>(testutil::random_tensor<double>(2, 3, 4, 4, 21), true);
    auto attn = make_leaf<double>(testutil::random_tensor<double>(2, 1, 4, 4, 22), true);
    auto gate = make_leaf<double>(testutil::random_tensor<double>(2, 3, 1, 1, 23), true);
    fd_check_leaf(x, [&] { return sum_all(mul_bcast(x, attn)); });
    fd_check_leaf(attn, [&] { return sum_all(mul_bcast(x, attn)); });
    fd_check_leaf(gate, [&] { return sum_all(mul_bcast(x, gate)); });

    // value check
    Var<double> out = mul_bcast(x, gate);
    CHECK(out->value.at(1, 2, 3, 0) ==
          doctest::Approx(x->value.at(1, 2, 3, 0) * gate->value.at(1, 2, 0, 0)));
}

TEST_CASE("concat/slice round trip and gradients") {
    auto a = make_leaf<double>(testutil::random_tensor<double>(1, 2, 3, 3, 31), true);
    auto b = make_leaf<double>(testutil::random_tensor<double>(1, 3, 3, 3, 32), true);
    Var<double> cat = concat_channels<double>({a, b});
    CHECK(cat->value.c == 5);
    CHECK(testutil::max_abs_diff(slice_channels(cat, 2, 3)->value, b->value) == 0.0);
    fd_check_leaf(a, [&] {
        return sum_all(slice_channels(concat_channels<double>({a, b}), 1, 3));
    });
    fd_check_leaf(b, [&] {
        return sum_all(slice_channels(concat_channels<double>({a, b}), 1, 3));
    });
}

TEST_CASE("softmax over channels normalizes and differentiates") {
    auto x = make_leaf<double>(testutil::random_tensor<double>(1, 3, 5, 5, 41, -3.0, 3.0),
                               true);
    Var<double> sm = softmax_channels(x);
    for (int r = 0; r < 5; ++r)
        for (int s = 0; s < 5; ++s) {
            double total = 0;
            for (int j = 0; j < 3; ++j) total += sm->value.at(0, j, r, s);
            CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
        }
    // weighted sum makes the loss sensitive to the softmax output
    auto w = make_leaf<double>(testutil::random_tensor<double>(1, 3, 5, 5, 42), false);
    fd_check_leaf(x, [&] { return sum_all(mul_bcast(softmax_channels(x), w)); });
}

TEST_CASE("bilinear resize: constants, gradient, known ramp") {
    TensorD ramp(1, 1, 2, 2);
    ramp.v = {0.0, 1.0, 2.0, 3.0};
    auto x = make_leaf<double>(ramp, true);
    Var<double> up = bilinear_resize(x, 4, 4);
    // half-pixel convention: corners replicate, centers interpolate
    CHECK(up->value.at(0, 0, 0, 0) == doctest::Approx(0.0));
    CHECK(up->value.at(0, 0, 3, 3) == doctest::Approx(3.0));
    CHECK(up->value.at(0, 0, 1, 1) == doctest::Approx(0.75));
    CHECK(up->value.at(0, 0, 2, 2) == doctest::Approx(2.25));

    auto w = make_leaf<double>(testutil::random_tensor<double>(1, 1, 4, 4, 52), false);
    fd_check_leaf(x, [&] { return sum_all(mul_bcast(bilinear_resize(x, 4, 4), w)); });

    TensorD c(1, 2, 5, 7, 3.25);
    auto cv = make_leaf<double>(c, false);
    Var<double> r = bilinear_resize(cv, 3, 4);
    for (double v : r->value.v) CHECK(v == doctest::Approx(3.25));
}

TEST_CASE("adaptive pooling: constants preserved, gradients correct") {
    TensorD c(1, 1, 6, 9, 2.5);
    auto cv = make_leaf<double>(c, false);
    Var<double> avg = adaptive_avg_pool(cv, 4, 4), mx = adaptive_max_pool(cv, 4, 4),
                hy = hybrid_downsample(cv, 4, 4);
    for (double v : avg->value.v) CHECK(v == doctest::Approx(2.5));
    for (double v : mx->value.v) CHECK(v == doctest::Approx(2.5));
    for (double v : hy->value.v) CHECK(v == doctest::Approx(2.5));

    auto x = make_leaf<double>(testutil::random_tensor<double>(1, 2, 6, 6, 61), true);
    auto w = make_leaf<double>(testutil::random_tensor<double>(1, 2, 4, 4, 62), false);
    fd_check_leaf(x, [&] { return sum_all(mul_bcast(adaptive_avg_pool(x, 4, 4), w)); });
    fd_check_leaf(x, [&] { return sum_all(mul_bcast(hybrid_downsample(x, 4, 4), w)); },
                  1e-7, 1e-4);
    fd_check_leaf(x, [&] { return sum_all(global_avg_pool(x)); });
}

TEST_CASE("conv2d matches direct convolution and differentiates") {
    auto x = make_leaf<double>(testutil::random_tensor<double>(2, 3, 5, 5, 71), true);
    auto w = make_leaf<double>(testutil::random_tensor<double>(4, 3, 3, 3, 72), true);
    auto b = make_leaf<double>(testutil::random_tensor<double>(1, 4, 1, 1, 73), true);

    Var<double> y = conv2d(x, w, b, 1, 1);
    REQUIRE(y->value.n == 2);
    REQUIRE(y->value.c == 4);
    REQUIRE(y->value.h == 5);

    // direct quadruple-loop oracle
    for (int i = 0; i < 2; ++i)
        for (int co = 0; co < 4; ++co)
            for (int r = 0; r < 5; ++r)
                for (int s = 0; s < 5; ++s) {
                    double acc = b->value.v[co];
                    for (int ci = 0; ci < 3; ++ci)
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx) {
                                int yy = r - 1 + ky, xx = s - 1 + kx;
                                if (yy < 0 || yy >= 5 || xx < 0 || xx >= 5) continue;
                                acc += x->value.at(i, ci, yy, xx) *
                                       w->value.at(co, ci, ky, kx);
                            }
                    CHECK(y->value.at(i, co, r, s) == doctest::Approx(acc).epsilon(1e-10));
                }

    auto probe = make_leaf<double>(testutil::random_tensor<double>(2, 4, 5, 5, 74), false);
    auto loss = [&] { return sum_all(mul_bcast(conv2d(x, w, b, 1, 1), probe)); };
    fd_check_leaf(x, loss);
    fd_check_leaf(w, loss);
    fd_check_leaf(b, loss);
}

TEST_CASE("conv2d stride and dilation shapes") {
    auto x = make_leaf<double>(testutil::random_tensor<double>(1, 2, 9, 9, 81), false);
    auto w = make_leaf<double>(testutil::random_tensor<double>(3, 2, 3, 3, 82), false);
    CHECK(conv2d(x, w, Var<double>{}, 2, 1)->value.h == 5);
    CHECK(conv2d(x, w, Var<double>{}, 1, 5, 5)->value.h == 9);  // dilated 'same'
    auto w7 = make_leaf<double>(testutil::random_tensor<double>(3, 2, 7, 7, 83), false);
    CHECK(conv2d(x, w7, Var<double>{}, 2, 3)->value.h == 5);
}

TEST_CASE("max pooling matches brute force and routes gradients") {
    auto x = make_leaf<double>(testutil::random_tensor<double>(1, 2, 6, 6, 91), true);
    Var<double> y = max_pool2d(x, 3, 2, 1);
    CHECK(y->value.h == 3);
    for (int j = 0; j < 2; ++j)
        for (int r = 0; r < 3; ++r)
            for (int s = 0; s < 3; ++s) {
                double best = -1e30;
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx) {
                        int yy = 2 * r - 1 + ky, xx = 2 * s - 1 + kx;
                        if (yy < 0 || yy >= 6 || xx < 0 || xx >= 6) continue;
                        best = std::max(best, x->value.at(0, j, yy, xx));
                    }
                CHECK(y->value.at(0, j, r, s) == doctest::Approx(best));
            }
    auto w = make_leaf<double>(testutil::random_tensor<double>(1, 2, 3, 3, 92), false);
    fd_check_leaf(x, [&] { return sum_all(mul_bcast(max_pool2d(x, 3, 2, 1), w)); }, 1e-7,
                  1e-4);
}

TEST_CASE("batch norm: training statistics, inference affine, gradients") {
    ParamRegistry<double> reg(5);
    BatchNorm2dLayer<double> bn(reg, "bn", 3);
    auto x = make_leaf<double>(testutil::random_tensor<double>(2, 3, 4, 4, 101), true);

    Var<double> y = bn.forward(x, /*training=*/true);
    for (int j = 0; j < 3; ++j) {
        double mean = 0, var = 0;
        for (int i = 0; i < 2; ++i)
            for (int r = 0; r < 4; ++r)
                for (int s = 0; s < 4; ++s) mean += y->value.at(i, j, r, s);
        mean /= 32;
        for (int i = 0; i < 2; ++i)
            for (int r = 0; r < 4; ++r)
                for (int s = 0; s < 4; ++s) {
                    double d = y->value.at(i, j, r, s) - mean;
                    var += d * d;
                }
        var /= 32;
        CHECK(std::abs(mean) < 1e-10);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps shifts it slightly
    }

    auto w = make_leaf<double>(testutil::random_tensor<double>(2, 3, 4, 4, 102), false);
    fd_check_leaf(x, [&] { return sum_all(mul_bcast(bn.forward(x, true), w)); }, 1e-6,
                  1e-4);
    // gamma/beta gradients, training mode
    Var<double> gamma = bn.gamma();
    fd_check_leaf(gamma, [&] { return sum_all(mul_bcast(bn.forward(x, true), w)); }, 1e-6,
                  1e-4);
    // inference mode uses running stats: per-sample affine
    fd_check_leaf(x, [&] { return sum_all(mul_bcast(bn.forward(x, false), w)); });
}

TEST_CASE("no-grad mode records nothing") {
    auto x = make_leaf<double>(testutil::random_tensor<double>(1, 1, 3, 3, 111), true);
    NoGradGuard no_grad;
    Var<double> y = relu(x);
    CHECK_FALSE(y->requires_grad);
    CHECK(y->parents.empty());
}

TEST_CASE("stacked CBR channel pairs follow the sliding window") {
    ParamRegistry<float> reg(1);
    StackedCbr<float> one(reg, "a", 64, 32, 1, 3);
    REQUIRE(one.blocks().size() == 1);
    CHECK(one.blocks()[0].conv().weight()->value.c == 64);
    CHECK(one.blocks()[0].conv().weight()->value.n == 32);

    StackedCbr<float> three(reg, "b", 128, 128, 3, 5);
    REQUIRE(three.blocks().size() == 3);
    for (const auto& blk : three.blocks()) {
        CHECK(blk.conv().weight()->value.c == 128);
        CHECK(blk.conv().weight()->value.n == 128);
        CHECK(blk.conv().weight()->value.h == 5);
    }

    // (C->C, blocks=1, k=1) preserves spatial size on any input
    StackedCbr<float> k1(reg, "c", 8, 8, 1, 1);
    auto x = make_leaf<float>(testutil::random_tensor<float>(1, 8, 7, 9, 3), false);
    Var<float> y = k1.forward(x, false);
    CHECK(y->value.h == 7);
    CHECK(y->value.w == 9);
}
