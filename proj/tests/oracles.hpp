#pragma once

// Test-only oracles, kept independent of the implementation paths they check:
// HEALPix geometry via the continuous face-plane map (quadtree digit decode,
// not bit-interleave tables), dense linear algebra via Eigen.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <set>
#include <vector>

#include "cmbclean/healpix.hpp"
#include "cmbclean/sphere_graph.hpp"

namespace oracles {

inline constexpr int kJrll[12] = {2, 2, 2, 2, 3, 3, 3, 3, 4, 4, 4, 4};
inline constexpr int kJpll[12] = {1, 3, 5, 7, 0, 2, 4, 6, 1, 3, 5, 7};

struct FaceCoord {
    std::int64_t ix, iy;
    int face;
};

// Quadtree digit decode of a nested index (independent of lookup tables).
inline FaceCoord decode_nested(std::int64_t nside, std::int64_t pix) {
    int order = 0;
    while ((std::int64_t(1) << order) < nside) ++order;
    FaceCoord fc{0, 0, int(pix >> (2 * order))};
    const std::int64_t p = pix & (nside * nside - 1);
    for (int b = 0; b < order; ++b) {
        const int digit = int((p >> (2 * b)) & 3);
        fc.ix |= std::int64_t(digit & 1) << b;
        fc.iy |= std::int64_t((digit >> 1) & 1) << b;
    }
    return fc;
}

// Continuous equal-area face map: (u, v) in [0, nside]^2 on a base face to
// (z, phi). Pixel centers sit at half-integer (u, v), corners at integers.
inline std::pair<double, double> face_point(std::int64_t nside, int face, double u, double v) {
    const double a = double(kJrll[face]) * double(nside) - u - v;
    const double h = u - v;
    const double ns = double(nside);
    double z, phi;
    if (a < ns) {  // north polar cap
        if (a <= 0.0) return {1.0, 0.0};
        z = 1.0 - (a * a) / (3.0 * ns * ns);
        phi = (std::numbers::pi / 4.0) * (kJpll[face] + h / a);
    } else if (a <= 3.0 * ns) {  // equatorial belt
        z = (2.0 * ns - a) * 2.0 / (3.0 * ns);
        phi = (std::numbers::pi / 4.0) * (kJpll[face] + h / ns);
    } else {  // south polar cap
        const double b = 4.0 * ns - a;
        if (b <= 0.0) return {-1.0, 0.0};
        z = -1.0 + (b * b) / (3.0 * ns * ns);
        phi = (std::numbers::pi / 4.0) * (kJpll[face] + h / b);
    }
    const double two_pi = 2.0 * std::numbers::pi;
    phi = std::fmod(phi, two_pi);
    if (phi < 0.0) phi += two_pi;
    return {z, phi};
}

inline std::pair<double, double> pixel_center_oracle(std::int64_t nside, std::int64_t pix) {
    const auto fc = decode_nested(nside, pix);
    const auto [z, phi] = face_point(nside, fc.face, double(fc.ix) + 0.5, double(fc.iy) + 0.5);
    return {std::acos(z), phi};
}

inline std::array<double, 3> to_xyz(double z, double phi) {
    const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {s * std::cos(phi), s * std::sin(phi), z};
}

// Brute-force adjacency: two pixels are neighbors iff they share at least one
// boundary corner point on the sphere.
inline std::vector<std::set<std::int64_t>> corner_adjacency(std::int64_t nside) {
    const std::int64_t npix = 12 * nside * nside;
    auto key_of = [](const std::array<double, 3>& p) {
        const double q = 1e9;
        return std::array<std::int64_t, 3>{std::int64_t(std::llround(p[0] * q)),
                                           std::int64_t(std::llround(p[1] * q)),
                                           std::int64_t(std::llround(p[2] * q))};
    };
    std::map<std::array<std::int64_t, 3>, std::vector<std::int64_t>> corner_owners;
    for (std::int64_t p = 0; p < npix; ++p) {
        const auto fc = decode_nested(nside, p);
        const double offsets[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
        for (const auto& o : offsets) {
            const auto [z, phi] = face_point(nside, fc.face, double(fc.ix) + o[0], double(fc.iy) + o[1]);
            corner_owners[key_of(to_xyz(z, phi))].push_back(p);
        }
    }
    std::vector<std::set<std::int64_t>> adj(static_cast<std::size_t>(npix));
    for (const auto& [key, owners] : corner_owners)
        for (auto p : owners)
            for (auto q : owners)
                if (p != q) adj[std::size_t(p)].insert(q);
    return adj;
}

inline Eigen::MatrixXd dense_adjacency(const cmbclean::graph::SphereGraph& g) {
    const auto n = g.n_nodes();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int32_t e = g.row_ptr[std::size_t(i)]; e < g.row_ptr[std::size_t(i) + 1]; ++e)
            a(i, g.col[std::size_t(e)]) = g.weight[std::size_t(e)];
    return a;
}

inline Eigen::MatrixXd dense_laplacian(const cmbclean::graph::SphereGraph& g) {
    Eigen::MatrixXd a = dense_adjacency(g);
    Eigen::MatrixXd l = -a;
    for (std::int64_t i = 0; i < g.n_nodes(); ++i) l(i, i) += g.degree[std::size_t(i)];
    return l;
}

// Chebyshev polynomial of scalar argument by the three-term recurrence.
inline double cheb_scalar(int k, double x) {
    double t_prev = 1.0, t_curr = x;
    if (k == 0) return t_prev;
    for (int i = 2; i <= k; ++i) {
        const double t_next = 2.0 * x * t_curr - t_prev;
        t_prev = t_curr;
        t_curr = t_next;
    }
    return t_curr;
}

// Spectral-domain filtering through a full eigendecomposition:
// y = U diag(sum_k theta_k T_k(lambda_i)) U^T x.
inline Eigen::VectorXd dense_cheb_filter(const Eigen::MatrixXd& lhat,
                                         const std::vector<double>& theta,
                                         const Eigen::VectorXd& x) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lhat);
    Eigen::VectorXd filt = Eigen::VectorXd::Zero(lhat.rows());
    for (std::int64_t i = 0; i < lhat.rows(); ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < theta.size(); ++k)
            s += theta[k] * cheb_scalar(int(k), es.eigenvalues()(i));
        filt(i) = s;
    }
    return es.eigenvectors() * (filt.asDiagonal() * (es.eigenvectors().transpose() * x));
}

}  // namespace oracles
