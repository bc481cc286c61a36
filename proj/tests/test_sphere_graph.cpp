#include <doctest.h>

#include <chrono>
#include <cmath>
#include <memory>

#include "cmbclean/rng.hpp"
#include "cmbclean/sphere_graph.hpp"
#include "oracles.hpp"

using namespace cmbclean;
using namespace cmbclean::graph;

namespace {
std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}
}  // namespace

TEST_CASE("build_graph: weight matrix is symmetric and in (0,1)") {
    auto g = SphereGraph::build(healpix::Resolution(2));
    auto a = oracles::dense_adjacency(g);
    for (std::int64_t i = 0; i < g.n_nodes(); ++i)
        for (std::int64_t j = 0; j < g.n_nodes(); ++j) CHECK(a(i, j) == a(j, i));
    for (double w : g.weight) {
        CHECK(w > 0.0);
        CHECK(w < 1.0);  // distinct centers, so d > 0 always
    }
}

TEST_CASE("build_graph: edge count matches the neighbor histogram") {
    auto g = SphereGraph::build(healpix::Resolution(2));
    std::int64_t nb_sum = 0;
    for (healpix::pix_t p = 0; p < 48; ++p)
        nb_sum += std::int64_t(healpix::neighbors(healpix::Resolution(2), p).size());
    CHECK(g.n_edges() == nb_sum / 2);
}

TEST_CASE("laplacian: annihilates constants, dense form is symmetric PSD") {
    auto g = std::make_shared<const SphereGraph>(SphereGraph::build(healpix::Resolution(1)));
    auto L = laplacian(g);
    std::vector<double> ones(12, 1.0), out(12);
    L.apply(ones, out);
    for (double v : out) CHECK(std::abs(v) < 1e-12);

    auto dense = oracles::dense_laplacian(*g);
    CHECK((dense - dense.transpose()).cwiseAbs().maxCoeff() == 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
    for (std::int64_t i = 0; i < 12; ++i) CHECK(std::abs(dense.row(i).sum()) < 1e-12);
}

TEST_CASE("laplacian: quadratic form identity at nside=2") {
    auto g = std::make_shared<const SphereGraph>(SphereGraph::build(healpix::Resolution(2)));
    auto L = laplacian(g);
    auto x = random_vec(48, 5);
    std::vector<double> lx(48);
    L.apply(x, lx);
    double xlx = 0.0;
    for (int i = 0; i < 48; ++i) xlx += x[std::size_t(i)] * lx[std::size_t(i)];

    double edge_form = 0.0;
    for (std::int64_t i = 0; i < 48; ++i)
        for (std::int32_t e = g->row_ptr[std::size_t(i)]; e < g->row_ptr[std::size_t(i) + 1]; ++e) {
            const double d = x[std::size_t(i)] - x[std::size_t(g->col[std::size_t(e)])];
            edge_form += 0.5 * g->weight[std::size_t(e)] * d * d;
        }
    CHECK(xlx == doctest::Approx(edge_form).epsilon(1e-10));
}

TEST_CASE("estimate_lambda_max against a dense eigensolve") {
    auto g = std::make_shared<const SphereGraph>(SphereGraph::build(healpix::Resolution(1)));
    auto L = laplacian(g);
    const double est = estimate_lambda_max(L, 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(oracles::dense_laplacian(*g));
    const double true_max = es.eigenvalues().maxCoeff();
    CHECK(est == doctest::Approx(true_max).epsilon(1e-6));
    CHECK(est <= true_max + 1e-12);
    CHECK(est > 0.0);

    double max_degree = 0.0;
    for (double d : g->degree) max_degree = std::max(max_degree, d);
    CHECK(est <= 2.0 * max_degree);
}

TEST_CASE("normalize: spectrum mapped into [-1, 1]") {
    auto g = std::make_shared<const SphereGraph>(SphereGraph::build(healpix::Resolution(1)));
    auto L = laplacian(g);
    const double lmax = estimate_lambda_max(L, 1e-9);
    auto lhat = normalize(L, lmax);

    std::vector<double> ones(12, 1.0), out(12);
    lhat.apply(ones, out);
    for (double v : out) CHECK(v == doctest::Approx(-1.0).epsilon(1e-12));

    Eigen::MatrixXd dense =
        (2.0 / lmax) * oracles::dense_laplacian(*g) - Eigen::MatrixXd::Identity(12, 12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense);
    CHECK(es.eigenvalues().minCoeff() >= -1.0 - 1e-9);
    CHECK(es.eigenvalues().maxCoeff() <= 1.0 + 1e-6);

    CHECK_THROWS_AS(normalize(L, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(normalize(L, -1.0), std::invalid_argument);
}

TEST_CASE("normalize: doubling lambda_max halves the spread") {
    auto g = std::make_shared<const SphereGraph>(SphereGraph::build(healpix::Resolution(2)));
    auto L = laplacian(g);
    const double lmax = estimate_lambda_max(L, 1e-9);
    auto l1 = normalize(L, lmax);
    auto l2 = normalize(L, 2.0 * lmax);
    auto x = random_vec(48, 9);
    std::vector<double> y1(48), y2(48);
    l1.apply(x, y1);
    l2.apply(x, y2);
    for (int i = 0; i < 48; ++i)
        CHECK(y2[std::size_t(i)] + x[std::size_t(i)] ==
              doctest::Approx(0.5 * (y1[std::size_t(i)] + x[std::size_t(i)])).epsilon(1e-12));
}

TEST_CASE("cheb_apply: degenerate coefficient vectors") {
    auto g = std::make_shared<const SphereGraph>(SphereGraph::build(healpix::Resolution(2)));
    auto lhat = normalized_laplacian(g);
    auto f = random_vec(48, 2);
    std::vector<double> y(48);

    cheb_apply(lhat, ChebCoeffs{{0.7}}, f, y);
    for (int i = 0; i < 48; ++i) CHECK(y[std::size_t(i)] == 0.7 * f[std::size_t(i)]);

    cheb_apply(lhat, ChebCoeffs{{0.0, 1.0, 0.0, 0.0}}, f, y);
    std::vector<double> lf(48);
    lhat.apply(f, lf);
    for (int i = 0; i < 48; ++i) CHECK(y[std::size_t(i)] == doctest::Approx(lf[std::size_t(i)]).epsilon(1e-14));
}

TEST_CASE("cheb_apply matches the dense spectral-filtering oracle") {
    auto g = std::make_shared<const SphereGraph>(SphereGraph::build(healpix::Resolution(2)));
    auto L = laplacian(g);
    const double lmax = estimate_lambda_max(L, 1e-9) * 1.01;
    auto lhat = normalize(L, lmax);
    Eigen::MatrixXd dense_lhat =
        (2.0 / lmax) * oracles::dense_laplacian(*g) - Eigen::MatrixXd::Identity(48, 48);

    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> theta(4);
        for (auto& t : theta) t = rng.normal();
        Eigen::VectorXd f(48);
        for (int i = 0; i < 48; ++i) f(i) = rng.normal();

        std::vector<double> y(48);
        std::vector<double> fv(f.data(), f.data() + 48);
        cheb_apply(lhat, ChebCoeffs{theta}, fv, y);
        Eigen::VectorXd expected = oracles::dense_cheb_filter(dense_lhat, theta, f);
        for (int i = 0; i < 48; ++i) {
            const double denom = std::max(std::abs(expected(i)), 1e-12);
            CHECK(std::abs(y[std::size_t(i)] - expected(i)) / denom <= 1e-10);
        }
    }
}

TEST_CASE("cheb_apply: linear in signal and coefficients") {
    auto g = std::make_shared<const SphereGraph>(SphereGraph::build(healpix::Resolution(2)));
    auto lhat = normalized_laplacian(g);
    auto f1 = random_vec(48, 3), f2 = random_vec(48, 4);
    std::vector<double> theta1{0.3, -1.1, 0.4, 0.9}, theta2{1.0, 0.2, -0.5, 0.1};

    std::vector<double> y1(48), y2(48), ysum(48), fsum(48);
    for (int i = 0; i < 48; ++i) fsum[std::size_t(i)] = f1[std::size_t(i)] + f2[std::size_t(i)];
    cheb_apply(lhat, ChebCoeffs{theta1}, f1, y1);
    cheb_apply(lhat, ChebCoeffs{theta1}, f2, y2);
    cheb_apply(lhat, ChebCoeffs{theta1}, fsum, ysum);
    for (int i = 0; i < 48; ++i)
        CHECK(ysum[std::size_t(i)] ==
              doctest::Approx(y1[std::size_t(i)] + y2[std::size_t(i)]).epsilon(1e-12));

    std::vector<double> ta(48), tb(48), tsum(48), theta_sum(4);
    for (int k = 0; k < 4; ++k) theta_sum[std::size_t(k)] = theta1[std::size_t(k)] + theta2[std::size_t(k)];
    cheb_apply(lhat, ChebCoeffs{theta1}, f1, ta);
    cheb_apply(lhat, ChebCoeffs{theta2}, f1, tb);
    cheb_apply(lhat, ChebCoeffs{theta_sum}, f1, tsum);
    for (int i = 0; i < 48; ++i)
        CHECK(tsum[std::size_t(i)] ==
              doctest::Approx(ta[std::size_t(i)] + tb[std::size_t(i)]).epsilon(1e-12));
}

TEST_CASE("cheb_apply: constant maps stay constant") {
    auto g = std::make_shared<const SphereGraph>(SphereGraph::build(healpix::Resolution(2)));
    auto lhat = normalized_laplacian(g);
    std::vector<double> theta{0.4, -0.7, 1.3, 0.2};
    std::vector<double> f(48, 2.0), y(48);
    cheb_apply(lhat, ChebCoeffs{theta}, f, y);
    double expected = 0.0;
    for (int k = 0; k < 4; ++k) expected += theta[std::size_t(k)] * oracles::cheb_scalar(k, -1.0) * 2.0;
    for (double v : y) CHECK(v == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("cheb_apply: zero-padded coefficients give identical output") {
    auto g = std::make_shared<const SphereGraph>(SphereGraph::build(healpix::Resolution(2)));
    auto lhat = normalized_laplacian(g);
    auto f = random_vec(48, 6);
    std::vector<double> y1(48), y2(48);
    cheb_apply(lhat, ChebCoeffs{{0.5, -0.2, 0.8}}, f, y1);
    cheb_apply(lhat, ChebCoeffs{{0.5, -0.2, 0.8, 0.0}}, f, y2);
    for (int i = 0; i < 48; ++i) CHECK(y1[std::size_t(i)] == y2[std::size_t(i)]);
}

TEST_CASE("cheb_apply: shape mismatch rejected") {
    auto g = std::make_shared<const SphereGraph>(SphereGraph::build(healpix::Resolution(2)));
    auto lhat = normalized_laplacian(g);
    std::vector<double> f(47), y(48);
    CHECK_THROWS_AS(cheb_apply(lhat, ChebCoeffs{{1.0}}, f, y), std::invalid_argument);
}

TEST_CASE("cheb_apply: runtime scales linearly with pixel count") {
    // One nside doubling quadruples n_pixels; the spec allows 4x +/- 25%
    // per step on measured medians.
    auto time_one = [](healpix::pix_t nside) {
        auto g = std::make_shared<const SphereGraph>(SphereGraph::build(healpix::Resolution(nside)));
        auto lhat = normalized_laplacian(g);
        const std::size_t n = std::size_t(g->n_nodes());
        auto f = random_vec(n, 7);
        std::vector<double> y(n);
        ChebCoeffs coeffs{{0.1, 0.2, 0.3, 0.4}};
        const int reps = int(6'000'000 / n) + 1;
        cheb_apply(lhat, coeffs, f, y);  // warm up
        std::vector<double> samples;
        for (int s = 0; s < 5; ++s) {
            const auto t0 = std::chrono::steady_clock::now();
            for (int r = 0; r < reps; ++r) cheb_apply(lhat, coeffs, f, y);
            const auto t1 = std::chrono::steady_clock::now();
            samples.push_back(std::chrono::duration<double>(t1 - t0).count() / reps);
        }
        std::sort(samples.begin(), samples.end());
        return samples[2];
    };
    double prev = time_one(4);
    for (healpix::pix_t nside : {8, 16, 32}) {
        const double curr = time_one(nside);
        const double ratio = curr / prev;
        CHECK(ratio > 3.0);
        CHECK(ratio < 5.0);
        prev = curr;
    }
}
