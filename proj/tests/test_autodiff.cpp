#include <doctest.h>

#include <cmath>
#include <memory>

#include "cmbclean/autodiff.hpp"
#include "cmbclean/rng.hpp"
#include "oracles.hpp"

using namespace cmbclean;
using namespace cmbclean::ad;

namespace {
Tensor random_tensor(Shape shape, std::uint64_t seed, bool requires_grad = false) {
    Rng rng(seed);
    std::vector<double> v(std::size_t(numel(shape)));
    for (auto& x : v) x = rng.normal();
    return Tensor::from_values(shape, std::move(v), requires_grad);
}
}  // namespace

TEST_CASE("relu forward values") {
    auto x = Tensor::from_values({1, 1, 2}, {-2.0, 3.0});
    auto y = relu(nullptr, x);
    CHECK(y.values()[0] == 0.0);
    CHECK(y.values()[1] == 3.0);
}

TEST_CASE("concat shape algebra") {
    auto a = Tensor::zeros({1, 2, 5});
    auto b = Tensor::zeros({1, 3, 5});
    auto c = concat_channels(nullptr, a, b);
    CHECK(c.shape() == Shape{1, 5, 5});
    CHECK_THROWS_AS(concat_channels(nullptr, a, Tensor::zeros({1, 2, 4})), std::invalid_argument);
}

TEST_CASE("shape mismatch errors name the primitive") {
    auto a = Tensor::zeros({1, 2, 3});
    auto b = Tensor::zeros({1, 2, 4});
    try {
        add(nullptr, a, b);
        FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("add") != std::string::npos);
    }
    try {
        mul(nullptr, a, b);
        FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("mul") != std::string::npos);
    }
}

TEST_CASE("sparse_laplacian_apply matches a dense matvec at nside=1") {
    auto g = std::make_shared<const graph::SphereGraph>(
        graph::SphereGraph::build(healpix::Resolution(1)));
    auto L = graph::laplacian(g);
    auto x = random_tensor({1, 1, 12}, 3);
    auto y = sparse_laplacian_apply(nullptr, L, x);

    auto dense = oracles::dense_laplacian(*g);
    Eigen::VectorXd xv(12);
    for (int i = 0; i < 12; ++i) xv(i) = x.values()[std::size_t(i)];
    Eigen::VectorXd expected = dense * xv;
    for (int i = 0; i < 12; ++i)
        CHECK(y.values()[std::size_t(i)] == doctest::Approx(expected(i)).epsilon(1e-12));
}

TEST_CASE("backward: d(x^2)/dx = 2x") {
    Tape tape;
    auto x = Tensor::scalar(3.0, true);
    auto loss = mul(&tape, x, x);
    tape.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("backward: sigmoid gradient at zero") {
    Tape tape;
    auto x = Tensor::zeros({1, 1, 4}, true);
    auto loss = sum_all(&tape, sigmoid(&tape, x));
    tape.backward(loss);
    for (double g : x.grad()) CHECK(g == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("backward rejects non-scalar losses") {
    Tape tape;
    auto x = Tensor::zeros({1, 1, 4}, true);
    auto y = scale(&tape, x, 2.0);
    CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
}

TEST_CASE("backward: random three-layer composition vs finite differences") {
    auto fn = [](Tape& tape, const Tensor& x) {
        auto h1 = sigmoid(&tape, scale(&tape, x, 1.7));
        auto h2 = exp(&tape, scale(&tape, h1, -0.8));
        auto h3 = mul(&tape, h2, add_const(&tape, x, 0.3));
        return mean_all(&tape, h3);
    };
    auto x = random_tensor({2, 3, 5}, 11);
    CHECK(gradient_check(fn, x) <= 1e-6);
}

TEST_CASE("gradient_check: linear function is near-exact") {
    auto fn = [](Tape& tape, const Tensor& x) { return sum_all(&tape, scale(&tape, x, 2.5)); };
    CHECK(gradient_check(fn, random_tensor({1, 2, 4}, 5)) <= 1e-9);
}

TEST_CASE("gradient_check: relu probed away from the kink") {
    auto fn = [](Tape& tape, const Tensor& x) { return sum_all(&tape, relu(&tape, x)); };
    auto x = Tensor::from_values({1, 1, 4}, {-1.0, 2.0, -0.5, 0.7});
    CHECK(gradient_check(fn, x) <= 1e-6);
}

TEST_CASE("gradient_check: cheb_apply as a function of theta") {
    auto g = std::make_shared<const graph::SphereGraph>(
        graph::SphereGraph::build(healpix::Resolution(2)));
    auto lhat = graph::normalized_laplacian(g);
    auto f = random_tensor({1, 1, 48}, 21);
    auto fn = [&](Tape& tape, const Tensor& theta) {
        // sum_k theta_k T_k(Lhat) f via tape primitives
        Tensor t_prev = f;
        Tensor t_curr = sparse_laplacian_apply(&tape, lhat, f);
        Tensor acc = channel_scale(&tape, t_prev, slice_channels(&tape, theta, 0, 1));
        acc = add(&tape, acc, channel_scale(&tape, t_curr, slice_channels(&tape, theta, 1, 2)));
        for (int k = 2; k <= 3; ++k) {
            auto t_next = sub(&tape, scale(&tape, sparse_laplacian_apply(&tape, lhat, t_curr), 2.0),
                              t_prev);
            acc = add(&tape, acc,
                      channel_scale(&tape, t_next, slice_channels(&tape, theta, k, k + 1)));
            t_prev = t_curr;
            t_curr = t_next;
        }
        return sum_all(&tape, acc);
    };
    auto theta = random_tensor({1, 4, 1}, 33);
    CHECK(gradient_check(fn, theta) <= 1e-6);
}

TEST_CASE("laplacian backward equals explicit transpose computation") {
    auto g = std::make_shared<const graph::SphereGraph>(
        graph::SphereGraph::build(healpix::Resolution(1)));
    auto L = graph::laplacian(g);

    Tape tape;
    auto x = random_tensor({1, 1, 12}, 8, true);
    auto w = random_tensor({1, 1, 12}, 9);
    auto loss = sum_all(&tape, mul(&tape, sparse_laplacian_apply(&tape, L, x), w));
    tape.backward(loss);

    // d/dx (w^T L x) = L^T w; compare against the dense transpose product.
    auto dense = oracles::dense_laplacian(*g);
    Eigen::VectorXd wv(12);
    for (int i = 0; i < 12; ++i) wv(i) = w.values()[std::size_t(i)];
    Eigen::VectorXd expected = dense.transpose() * wv;
    for (int i = 0; i < 12; ++i)
        CHECK(x.grad()[std::size_t(i)] == doctest::Approx(expected(i)).epsilon(1e-12));
}

TEST_CASE("two backward passes double every leaf gradient exactly") {
    Tape tape;
    auto x = random_tensor({1, 2, 3}, 14, true);
    auto loss = mean_all(&tape, mul(&tape, sigmoid(&tape, x), x));
    tape.backward(loss);
    const auto once = x.grad();
    tape.backward(loss);
    for (std::size_t i = 0; i < once.size(); ++i) CHECK(x.grad()[i] == 2.0 * once[i]);
}

TEST_CASE("division and sqrt backward") {
    auto fn = [](Tape& tape, const Tensor& x) {
        auto num = add_const(&tape, x, 3.0);
        auto den = add_const(&tape, mul(&tape, x, x), 1.0);
        return sum_all(&tape, sqrt(&tape, div(&tape, num, den)));
    };
    CHECK(gradient_check(fn, random_tensor({1, 2, 4}, 19)) <= 1e-6);
}

TEST_CASE("affine, channel_scale, channel_mean, expand_scalar backward") {
    auto x = random_tensor({2, 3, 4}, 25);
    auto fn_gamma = [&](Tape& tape, const Tensor& gamma) {
        auto beta = Tensor::full({1, 3, 1}, 0.2);
        return mean_all(&tape, affine(&tape, x, gamma, beta));
    };
    CHECK(gradient_check(fn_gamma, random_tensor({1, 3, 1}, 26)) <= 1e-8);

    auto fn_x = [](Tape& tape, const Tensor& x_in) {
        auto mu = channel_mean(&tape, x_in);
        auto gamma = Tensor::full({1, 3, 1}, 1.5);
        auto centered = affine(&tape, x_in, gamma, scale(&tape, mu, -1.5));
        return mean_all(&tape, mul(&tape, centered, centered));
    };
    CHECK(gradient_check(fn_x, x) <= 1e-7);

    auto fn_s = [&](Tape& tape, const Tensor& s) {
        return mean_all(&tape, channel_scale(&tape, x, s));
    };
    CHECK(gradient_check(fn_s, random_tensor({2, 3, 1}, 27)) <= 1e-8);

    auto fn_scalar = [&](Tape& tape, const Tensor& s) {
        auto e = expand_scalar(&tape, s, {2, 3, 4});
        return mean_all(&tape, mul(&tape, e, x));
    };
    CHECK(gradient_check(fn_scalar, Tensor::scalar(0.7)) <= 1e-8);
}

TEST_CASE("matmul_channels forward and backward") {
    auto w = Tensor::from_values({1, 2, 3}, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
    auto x = Tensor::from_values({1, 2, 2}, {1.0, 10.0, 100.0, 1000.0});
    auto y = matmul_channels(nullptr, w, x);
    CHECK(y.shape() == Shape{1, 3, 2});
    // out[co, n] = w[0,co] x[0,n] + w[1,co] x[1,n]
    CHECK(y.values()[0] == doctest::Approx(1.0 * 1 + 4.0 * 100).epsilon(1e-15));
    CHECK(y.values()[1] == doctest::Approx(1.0 * 10 + 4.0 * 1000).epsilon(1e-15));
    CHECK(y.values()[2] == doctest::Approx(2.0 * 1 + 5.0 * 100).epsilon(1e-15));

    auto xr = random_tensor({2, 3, 5}, 41);
    auto fn_w = [&](Tape& tape, const Tensor& weights) {
        return mean_all(&tape, matmul_channels(&tape, weights, xr));
    };
    CHECK(gradient_check(fn_w, random_tensor({1, 3, 4}, 42)) <= 1e-8);

    auto wr = random_tensor({1, 3, 4}, 43);
    auto fn_x = [&](Tape& tape, const Tensor& x_in) {
        auto out = matmul_channels(&tape, wr, x_in);
        return mean_all(&tape, mul(&tape, out, out));
    };
    CHECK(gradient_check(fn_x, xr) <= 1e-7);
}

TEST_CASE("gather_pixels: shared and per-element index forms") {
    auto x = Tensor::from_values({1, 2, 4}, {0, 1, 2, 3, 10, 11, 12, 13});
    auto shared = std::make_shared<const std::vector<std::int32_t>>(std::vector<std::int32_t>{3, 0});
    auto y = gather_pixels(nullptr, x, shared, 2);
    CHECK(y.values() == std::vector<double>{3, 0, 13, 10});

    auto per_bc = std::make_shared<const std::vector<std::int32_t>>(
        std::vector<std::int32_t>{0, 1, 2, 3});
    auto y2 = gather_pixels(nullptr, x, per_bc, 2);
    CHECK(y2.values() == std::vector<double>{0, 1, 12, 13});

    auto fn = [&](Tape& tape, const Tensor& x_in) {
        auto g = gather_pixels(&tape, x_in, shared, 2);
        return mean_all(&tape, mul(&tape, g, g));
    };
    CHECK(gradient_check(fn, random_tensor({1, 2, 4}, 50)) <= 1e-7);
}

TEST_CASE("slice_d0 extracts one coefficient block") {
    auto theta = Tensor::from_values({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
    auto k1 = slice_d0(nullptr, theta, 1);
    CHECK(k1.shape() == Shape{1, 2, 2});
    CHECK(k1.values() == std::vector<double>{5, 6, 7, 8});
    auto fn = [&](Tape& tape, const Tensor& t) {
        return sum_all(&tape, mul(&tape, slice_d0(&tape, t, 0), slice_d0(&tape, t, 1)));
    };
    CHECK(gradient_check(fn, random_tensor({2, 2, 2}, 52)) <= 1e-7);
}
