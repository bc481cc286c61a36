#include "cmbclean/sphere_graph.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "cmbclean/rng.hpp"

namespace cmbclean::graph {

namespace {

std::array<double, 3> unit_vector(Resolution res, healpix::pix_t p) {
    const auto [theta, phi] = healpix::pixel_center(res, p);
    const double st = std::sin(theta);
    return {st * std::cos(phi), st * std::sin(phi), std::cos(theta)};
}

double great_circle_distance(const std::array<double, 3>& u, const std::array<double, 3>& v) {
    const double dx = u[0] - v[0], dy = u[1] - v[1], dz = u[2] - v[2];
    const double chord = std::sqrt(dx * dx + dy * dy + dz * dz);
    return 2.0 * std::asin(std::min(1.0, 0.5 * chord));
}

}  // namespace

SphereGraph SphereGraph::build(Resolution res, bool gaussian_weights) {
    const auto npix = res.npix();
    SphereGraph g{res, {}, {}, {}, {}, 0.0};
    g.row_ptr.reserve(std::size_t(npix) + 1);
    g.col.reserve(std::size_t(npix) * 8);

    std::vector<std::array<double, 3>> centers(static_cast<std::size_t>(npix));
    for (healpix::pix_t p = 0; p < npix; ++p) centers[std::size_t(p)] = unit_vector(res, p);

    g.row_ptr.push_back(0);
    for (healpix::pix_t p = 0; p < npix; ++p) {
        for (auto q : healpix::neighbors(res, p)) g.col.push_back(std::int32_t(q));
        g.row_ptr.push_back(std::int32_t(g.col.size()));
    }

    std::vector<double> dist(g.col.size());
    double dist_sum = 0.0;
    for (healpix::pix_t p = 0; p < npix; ++p) {
        for (std::int32_t e = g.row_ptr[std::size_t(p)]; e < g.row_ptr[std::size_t(p) + 1]; ++e) {
            dist[std::size_t(e)] =
                great_circle_distance(centers[std::size_t(p)], centers[std::size_t(g.col[std::size_t(e)])]);
            dist_sum += dist[std::size_t(e)];
        }
    }
    g.mean_neighbor_distance = dist_sum / double(g.col.size());

    g.weight.resize(g.col.size());
    const double inv_two_dbar2 =
        1.0 / (2.0 * g.mean_neighbor_distance * g.mean_neighbor_distance);
    for (std::size_t e = 0; e < g.col.size(); ++e)
        g.weight[e] = gaussian_weights ? std::exp(-dist[e] * dist[e] * inv_two_dbar2) : 1.0;

    g.degree.assign(std::size_t(npix), 0.0);
    for (healpix::pix_t p = 0; p < npix; ++p) {
        double d = 0.0;
        for (std::int32_t e = g.row_ptr[std::size_t(p)]; e < g.row_ptr[std::size_t(p) + 1]; ++e)
            d += g.weight[std::size_t(e)];
        g.degree[std::size_t(p)] = d;
    }
    return g;
}

LaplacianOperator::LaplacianOperator(std::shared_ptr<const SphereGraph> graph, Form form,
                                     double lambda_max)
    : graph_(std::move(graph)), form_(form), lambda_max_(lambda_max) {}

LaplacianOperator LaplacianOperator::combinatorial(std::shared_ptr<const SphereGraph> graph) {
    if (!graph) throw std::invalid_argument("LaplacianOperator: null graph");
    return LaplacianOperator(std::move(graph), Form::combinatorial, 0.0);
}

double LaplacianOperator::lambda_max() const {
    if (form_ != Form::normalized_scaled)
        throw std::logic_error("lambda_max is only defined for the normalized form");
    return lambda_max_;
}

void LaplacianOperator::apply(std::span<const double> x, std::span<double> y) const {
    const auto& g = *graph_;
    const auto n = g.n_nodes();
    if (std::int64_t(x.size()) != n || std::int64_t(y.size()) != n)
        throw std::invalid_argument("LaplacianOperator::apply: vector length " +
                                    std::to_string(x.size()) + " != " + std::to_string(n));
    for (std::int64_t i = 0; i < n; ++i) {
        double acc = g.degree[std::size_t(i)] * x[std::size_t(i)];
        for (std::int32_t e = g.row_ptr[std::size_t(i)]; e < g.row_ptr[std::size_t(i) + 1]; ++e)
            acc -= g.weight[std::size_t(e)] * x[std::size_t(g.col[std::size_t(e)])];
        y[std::size_t(i)] = acc;
    }
    if (form_ == Form::normalized_scaled) {
        const double scale = 2.0 / lambda_max_;
        for (std::int64_t i = 0; i < n; ++i)
            y[std::size_t(i)] = scale * y[std::size_t(i)] - x[std::size_t(i)];
    }
}

LaplacianOperator laplacian(std::shared_ptr<const SphereGraph> graph) {
    return LaplacianOperator::combinatorial(std::move(graph));
}

double estimate_lambda_max(const LaplacianOperator& L, double tol, int max_iters) {
    if (L.form() != LaplacianOperator::Form::combinatorial)
        throw std::invalid_argument("estimate_lambda_max: combinatorial form required");
    const auto n = L.size();
    std::vector<double> v(static_cast<std::size_t>(n)), w(static_cast<std::size_t>(n));
    Rng rng(0x9d2c5680u);  // fixed start vector; estimate is deterministic
    for (auto& vi : v) vi = rng.uniform() - 0.5;

    double norm = 0.0;
    for (double vi : v) norm += vi * vi;
    norm = std::sqrt(norm);
    for (auto& vi : v) vi /= norm;

    double rayleigh_prev = 0.0;
    for (int it = 0; it < max_iters; ++it) {
        L.apply(v, w);
        double rayleigh = 0.0, wnorm = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            rayleigh += v[std::size_t(i)] * w[std::size_t(i)];
            wnorm += w[std::size_t(i)] * w[std::size_t(i)];
        }
        wnorm = std::sqrt(wnorm);
        if (wnorm == 0.0) return 0.0;  // graph with no edges
        for (std::int64_t i = 0; i < n; ++i) v[std::size_t(i)] = w[std::size_t(i)] / wnorm;
        if (it > 0 && std::abs(rayleigh - rayleigh_prev) < tol * std::abs(rayleigh))
            return rayleigh;
        rayleigh_prev = rayleigh;
    }
    throw std::runtime_error("estimate_lambda_max: power iteration did not converge in " +
                             std::to_string(max_iters) + " iterations");
}

LaplacianOperator normalize(const LaplacianOperator& L, double lambda_max) {
    if (L.form() != LaplacianOperator::Form::combinatorial)
        throw std::invalid_argument("normalize: combinatorial form required");
    if (!(lambda_max > 0.0)) throw std::invalid_argument("normalize: lambda_max must be positive");
    return LaplacianOperator(L.graph_, LaplacianOperator::Form::normalized_scaled, lambda_max);
}

LaplacianOperator normalized_laplacian(std::shared_ptr<const SphereGraph> graph) {
    auto L = laplacian(std::move(graph));
    // Top eigenvalues cluster as nside grows; a loose stopping tolerance plus
    // the 1% inflation is enough for spectral containment.
    const double lmax = estimate_lambda_max(L, 1e-7, 100000);
    return normalize(L, lmax * 1.01);
}

void cheb_apply(const LaplacianOperator& lhat, const ChebCoeffs& coeffs,
                std::span<const double> x, std::span<double> y, int channels) {
    if (lhat.form() != LaplacianOperator::Form::normalized_scaled)
        throw std::invalid_argument("cheb_apply: normalized Laplacian required");
    if (coeffs.theta.empty()) throw std::invalid_argument("cheb_apply: empty coefficients");
    const auto n = lhat.size();
    if (std::int64_t(x.size()) != n * channels || std::int64_t(y.size()) != n * channels)
        throw std::invalid_argument("cheb_apply: signal length mismatch");

    const int K = coeffs.order();
    std::vector<double> t_prev(static_cast<std::size_t>(n)), t_curr(static_cast<std::size_t>(n)), t_next(static_cast<std::size_t>(n));
    for (int c = 0; c < channels; ++c) {
        auto xc = x.subspan(std::size_t(c) * n, std::size_t(n));
        auto yc = y.subspan(std::size_t(c) * n, std::size_t(n));
        // T_0 x = x
        for (std::int64_t i = 0; i < n; ++i) {
            t_prev[std::size_t(i)] = xc[std::size_t(i)];
            yc[std::size_t(i)] = coeffs.theta[0] * xc[std::size_t(i)];
        }
        if (K == 0) continue;
        // T_1 x = L_hat x
        lhat.apply(xc, t_curr);
        for (std::int64_t i = 0; i < n; ++i) yc[std::size_t(i)] += coeffs.theta[1] * t_curr[std::size_t(i)];
        for (int k = 2; k <= K; ++k) {
            lhat.apply(t_curr, t_next);
            for (std::int64_t i = 0; i < n; ++i) {
                t_next[std::size_t(i)] = 2.0 * t_next[std::size_t(i)] - t_prev[std::size_t(i)];
                yc[std::size_t(i)] += coeffs.theta[std::size_t(k)] * t_next[std::size_t(i)];
            }
            std::swap(t_prev, t_curr);
            std::swap(t_curr, t_next);
        }
    }
}

}  // namespace cmbclean::graph
