#include <doctest.h>

#include <cmath>

#include "found/autodiff.hpp"
#include "found/errors.hpp"
#include "test_helpers.hpp"

using namespace found;
using found::testing::finite_difference_check;
using found::testing::random_tensor;

namespace {

// Every op gets the same treatment: wrap a scalar function of a single leaf,
// compare backward() against central differences.
void check_op(const std::function<ad::Var(const ad::Var&)>& op, const Tensor& input,
              double tol = 1e-6) {
    ad::Var leaf = ad::leaf(input);
    ad::Var out = ad::sum_all(op(leaf));
    ad::backward(out);
    auto scalar_fn = [&op](const Tensor& t) {
        return ad::sum_all(op(ad::constant(t))).scalar();
    };
    Rng rng(1234);
    const auto fd = finite_difference_check(scalar_fn, input, leaf.grad(), rng, 12);
    CHECK(fd.max_rel_err < tol);
}

}  // namespace

TEST_CASE("autodiff: elementwise op gradients match finite differences") {
    Rng rng(7);
    const Tensor x = random_tensor(rng, 2, 3, 4, 5, -0.9, 0.9);
    const Tensor y = random_tensor(rng, 2, 3, 4, 5, -0.9, 0.9);

    check_op([&](const ad::Var& v) { return ad::add(v, ad::constant(y)); }, x);
    check_op([&](const ad::Var& v) { return ad::sub(ad::constant(y), v); }, x);
    check_op([&](const ad::Var& v) { return ad::mul(v, ad::constant(y)); }, x);
    check_op([&](const ad::Var& v) { return ad::mul(v, v); }, x);
    check_op([&](const ad::Var& v) { return ad::scale(v, -2.5); }, x);
    check_op([&](const ad::Var& v) { return ad::add_scalar(v, 0.7); }, x);
    check_op([&](const ad::Var& v) { return ad::leaky_relu(v, 0.1); }, x);
    check_op([&](const ad::Var& v) { return ad::tanh_op(v); }, x);
    check_op([&](const ad::Var& v) { return ad::sigmoid(v); }, x);
    // Keep probes away from the clamp kinks.
    check_op([&](const ad::Var& v) { return ad::clamp(v, -0.95, 0.95); }, x);
}

TEST_CASE("autodiff: structural op gradients") {
    Rng rng(8);
    const Tensor x = random_tensor(rng, 2, 4, 4, 4);
    const Tensor other = random_tensor(rng, 2, 2, 4, 4);
    check_op([&](const ad::Var& v) {
        return ad::concat_channels({v, ad::constant(other)});
    }, x);
    check_op([&](const ad::Var& v) { return ad::slice_channels(v, 1, 3); }, x);
    check_op([&](const ad::Var& v) { return ad::space_to_depth(v, 2); }, x);
    check_op([&](const ad::Var& v) { return ad::depth_to_space(v, 2); }, x);
    check_op([&](const ad::Var& v) { return ad::global_avg_pool(v); }, x);
    check_op([&](const ad::Var& v) { return ad::sum_channels(v); }, x);
    check_op([&](const ad::Var& v) { return ad::upsample_nearest2(v); }, x);

    const Tensor small = random_tensor(rng, 2, 3, 1, 1);
    check_op([&](const ad::Var& v) { return ad::tile_spatial(v, 5, 6); }, small);

    const Tensor batch = random_tensor(rng, 3, 2, 4, 4);
    const Tensor delta = random_tensor(rng, 1, 2, 4, 4, -0.05, 0.05);
    // Gradient with respect to the broadcast operand.
    ad::Var d = ad::leaf(delta);
    ad::Var out = ad::sum_all(ad::mul(ad::add_broadcast_batch(ad::constant(batch), d),
                                      ad::add_broadcast_batch(ad::constant(batch), d)));
    ad::backward(out);
    auto fn = [&](const Tensor& t) {
        ad::Var dd = ad::constant(t);
        ad::Var s = ad::add_broadcast_batch(ad::constant(batch), dd);
        return ad::sum_all(ad::mul(s, s)).scalar();
    };
    Rng probe_rng(99);
    const auto fd = finite_difference_check(fn, delta, d.grad(), probe_rng, 12);
    CHECK(fd.max_rel_err < 1e-6);
}

TEST_CASE("autodiff: conv2d gradients for input, weight and bias") {
    Rng rng(9);
    const Tensor x = random_tensor(rng, 2, 3, 6, 6);
    const Tensor w = random_tensor(rng, 4, 3, 3, 3, -0.5, 0.5);
    const Tensor b = random_tensor(rng, 1, 4, 1, 1, -0.2, 0.2);

    for (int stride : {1, 2}) {
        // input gradient
        check_op(
            [&](const ad::Var& v) {
                return ad::conv2d(v, ad::constant(w), ad::constant(b), stride, 1);
            },
            x);
        // weight gradient
        {
            ad::Var wl = ad::leaf(w);
            ad::Var out = ad::sum_all(ad::conv2d(ad::constant(x), wl, ad::constant(b), stride, 1));
            ad::backward(out);
            auto fn = [&](const Tensor& t) {
                return ad::sum_all(
                           ad::conv2d(ad::constant(x), ad::constant(t), ad::constant(b), stride, 1))
                    .scalar();
            };
            Rng probe_rng(100 + stride);
            const auto fd = finite_difference_check(fn, w, wl.grad(), probe_rng, 12);
            CHECK(fd.max_rel_err < 1e-6);
        }
        // bias gradient
        {
            ad::Var bl = ad::leaf(b);
            ad::Var out = ad::sum_all(ad::conv2d(ad::constant(x), ad::constant(w), bl, stride, 1));
            ad::backward(out);
            auto fn = [&](const Tensor& t) {
                return ad::sum_all(
                           ad::conv2d(ad::constant(x), ad::constant(w), ad::constant(t), stride, 1))
                    .scalar();
            };
            Rng probe_rng(200 + stride);
            const auto fd = finite_difference_check(fn, b, bl.grad(), probe_rng, 8);
            CHECK(fd.max_rel_err < 1e-6);
        }
    }
}

TEST_CASE("autodiff: reduction gradients") {
    Rng rng(10);
    const Tensor x = random_tensor(rng, 2, 1, 3, 4);
    const Tensor y = random_tensor(rng, 2, 1, 3, 4);
    check_op([&](const ad::Var& v) { return ad::mse(v, ad::constant(y)); }, x);
    check_op([&](const ad::Var& v) { return ad::mse(ad::constant(y), v); }, x);
    // Probs sum to 1, so weight them to keep the scalar non-degenerate.
    const Tensor wts = random_tensor(rng, 2, 1, 3, 4);
    check_op(
        [&](const ad::Var& v) { return ad::mul(ad::softmax_spatial(v), ad::constant(wts)); }, x,
        1e-5);
    check_op([&](const ad::Var& v) { return ad::mean_all(v); }, x);

    // KL through both softmax branches.
    check_op(
        [&](const ad::Var& v) {
            return ad::kl_mean(ad::softmax_spatial(v),
                               ad::softmax_spatial(ad::constant(y)));
        },
        x, 1e-5);
    check_op(
        [&](const ad::Var& v) {
            return ad::kl_mean(ad::softmax_spatial(ad::constant(y)),
                               ad::softmax_spatial(v));
        },
        x, 1e-5);
}

TEST_CASE("autodiff: bilinear resize values and gradients") {
    // Hand-evaluated align-corners case.
    Tensor m(1, 1, 2, 2);
    m.v = {0.0, 1.0, 2.0, 3.0};
    const Tensor r = ad::resize_bilinear(ad::constant(m), 3, 3).value();
    const std::vector<double> expected = {0.0, 0.5, 1.0, 1.0, 1.5, 2.0, 2.0, 2.5, 3.0};
    for (size_t i = 0; i < expected.size(); ++i) CHECK(r.v[i] == doctest::Approx(expected[i]));

    // 1x1 -> 2x2 constant extension.
    Tensor one(1, 1, 1, 1);
    one.v = {0.75};
    const Tensor up = ad::resize_bilinear(ad::constant(one), 2, 2).value();
    for (double v : up.v) CHECK(v == 0.75);

    // Identity resize is exact.
    Rng rng(11);
    const Tensor x = random_tensor(rng, 1, 2, 5, 7);
    const Tensor same = ad::resize_bilinear(ad::constant(x), 5, 7).value();
    CHECK(max_abs_diff(x, same) == 0.0);

    // Constant maps preserved exactly at any size.
    const Tensor c = Tensor::full(1, 1, 3, 5, -0.37);
    const Tensor cr = ad::resize_bilinear(ad::constant(c), 9, 4).value();
    for (double v : cr.v) CHECK(v == -0.37);

    check_op([&](const ad::Var& v) { return ad::resize_bilinear(v, 9, 11); }, x);
    check_op([&](const ad::Var& v) { return ad::resize_bilinear(v, 3, 4); }, x);
}

TEST_CASE("autodiff: diamond-shaped graphs accumulate gradients") {
    Tensor x(1, 1, 1, 1);
    x.v = {0.5};
    ad::Var v = ad::leaf(x);
    ad::Var out = ad::add(ad::mul(v, v), ad::scale(v, 3.0));  // x^2 + 3x
    ad::backward(out);
    CHECK(v.grad().v[0] == doctest::Approx(2.0 * 0.5 + 3.0));
}

TEST_CASE("autodiff: backward requires scalar root") {
    ad::Var v = ad::leaf(Tensor::full(1, 1, 2, 2, 1.0));
    ad::Var out = ad::scale(v, 2.0);
    CHECK_THROWS_AS(ad::backward(out), ShapeError);
}
