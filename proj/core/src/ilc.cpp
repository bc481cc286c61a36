#include "cmbclean/ilc.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace cmbclean::ilc {

ILCWeights ilc_weights(const SkyMap& x, const MaskMap* mask) {
    const int channels = x.channels;
    if (channels < 2) throw std::invalid_argument("ilc_weights: need at least 2 channels");
    if (mask && !(mask->res == x.res))
        throw std::invalid_argument("ilc_weights: mask resolution mismatch");

    std::vector<healpix::pix_t> kept;
    for (healpix::pix_t p = 0; p < x.res.npix(); ++p)
        if (!mask || mask->keep[std::size_t(p)]) kept.push_back(p);
    if (kept.size() < 10)
        throw std::invalid_argument("ilc_weights: fewer than 10 pixels available");

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(channels);
    for (auto p : kept)
        for (int c = 0; c < channels; ++c) mean(c) += x.at(c, p);
    mean /= double(kept.size());

    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(channels, channels);
    for (auto p : kept) {
        Eigen::VectorXd d(channels);
        for (int c = 0; c < channels; ++c) d(c) = x.at(c, p) - mean(c);
        cov += d * d.transpose();
    }
    cov /= double(kept.size());

    // Ridge if ill-conditioned (condition number above 1e12).
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (!(hi > 0.0)) throw std::runtime_error("ilc_weights: zero covariance");
    if (lo <= 0.0 || hi / lo > 1e12)
        cov += (1e-10 * cov.trace() / channels) * Eigen::MatrixXd::Identity(channels, channels);

    Eigen::VectorXd ones = Eigen::VectorXd::Ones(channels);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
    if (ldlt.info() != Eigen::Success)
        throw std::runtime_error("ilc_weights: covariance factorization failed");
    Eigen::VectorXd solved = ldlt.solve(ones);
    const double denom = ones.dot(solved);
    if (!std::isfinite(denom) || denom == 0.0)
        throw std::runtime_error("ilc_weights: singular covariance even after ridge");

    ILCWeights out;
    out.w.resize(std::size_t(channels));
    double sum = 0.0;
    for (int c = 0; c < channels; ++c) {
        out.w[std::size_t(c)] = solved(c) / denom;
        sum += out.w[std::size_t(c)];
    }
    for (auto& w : out.w) w /= sum;  // exact unit sum after rounding
    return out;
}

SkyMap ilc_clean(const SkyMap& x, const ILCWeights& weights) {
    if (int(weights.w.size()) != x.channels)
        throw std::invalid_argument("ilc_clean: weight count " + std::to_string(weights.w.size()) +
                                    " != channel count " + std::to_string(x.channels));
    SkyMap out = SkyMap::zeros(x.res, 1);
    for (healpix::pix_t p = 0; p < x.res.npix(); ++p) {
        double acc = 0.0;
        for (int c = 0; c < x.channels; ++c) acc += weights.w[std::size_t(c)] * x.at(c, p);
        out.values[std::size_t(p)] = acc;
    }
    return out;
}

}  // namespace cmbclean::ilc
