#include "cmbclean/harmonics.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

namespace cmbclean::harmonics {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kFourPi = 4.0 * std::numbers::pi;
}  // namespace

AlmSet AlmSet::zeros(int lmax) {
    if (lmax < 0) throw std::invalid_argument("AlmSet: lmax must be >= 0");
    return AlmSet{lmax, std::vector<std::complex<double>>(count(lmax), {0.0, 0.0})};
}

double Beam::sigma_rad() const {
    if (!(fwhm_arcmin > 0.0)) throw std::invalid_argument("Beam: fwhm must be positive");
    const double fwhm_rad = fwhm_arcmin / 60.0 * kPi / 180.0;
    return fwhm_rad / std::sqrt(8.0 * std::log(2.0));
}

double Beam::transfer(int l) const {
    const double s = sigma_rad();
    return std::exp(-0.5 * double(l) * double(l + 1) * s * s);
}

void legendre_column(int m, int lmax, double x, std::span<double> out) {
    // P̄_mm via the sectoral recurrence (includes the Condon-Shortley phase),
    // then upward in l with on-the-fly normalization.
    const double sx = std::sqrt(std::max(0.0, (1.0 - x) * (1.0 + x)));
    double pmm = std::sqrt(1.0 / kFourPi);
    for (int k = 1; k <= m; ++k)
        pmm *= -std::sqrt((2.0 * k + 1.0) / (2.0 * k)) * sx;

    if (m > lmax) return;
    out[0] = pmm;
    if (m == lmax) return;
    double p_prev = pmm;
    double p_curr = std::sqrt(2.0 * m + 3.0) * x * pmm;
    out[1] = p_curr;
    for (int l = m + 2; l <= lmax; ++l) {
        const double a = std::sqrt((4.0 * l * l - 1.0) / (double(l) * l - double(m) * m));
        const double b =
            std::sqrt((double(l - 1) * (l - 1) - double(m) * m) / (4.0 * double(l - 1) * (l - 1) - 1.0));
        const double p_next = a * (x * p_curr - b * p_prev);
        p_prev = p_curr;
        p_curr = p_next;
        out[std::size_t(l - m)] = p_curr;
    }
}

SkyMap synthesize(const AlmSet& alm, Resolution res) {
    if (alm.lmax > 3 * res.nside() - 1)
        throw std::invalid_argument("synthesize: lmax " + std::to_string(alm.lmax) +
                                    " exceeds 3*nside-1 for nside " + std::to_string(res.nside()));
    const int lmax = alm.lmax;
    const auto npix = res.npix();
    SkyMap map = SkyMap::zeros(res, 1);

    std::vector<double> plm(std::size_t(lmax) + 1);
    for (healpix::pix_t p = 0; p < npix; ++p) {
        const auto [theta, phi] = healpix::pixel_center(res, p);
        const double x = std::cos(theta);
        double acc = 0.0;
        for (int m = 0; m <= lmax; ++m) {
            legendre_column(m, lmax, x, plm);
            if (m == 0) {
                for (int l = 0; l <= lmax; ++l) acc += alm.at(l, 0).real() * plm[std::size_t(l)];
            } else {
                const double c = std::cos(m * phi);
                const double s = std::sin(m * phi);
                double re_sum = 0.0, im_sum = 0.0;
                for (int l = m; l <= lmax; ++l) {
                    re_sum += alm.at(l, m).real() * plm[std::size_t(l - m)];
                    im_sum += alm.at(l, m).imag() * plm[std::size_t(l - m)];
                }
                acc += 2.0 * (re_sum * c - im_sum * s);
            }
        }
        map.values[std::size_t(p)] = acc;
    }
    return map;
}

namespace {

AlmSet analyze_quadrature(const SkyMap& map, int lmax) {
    const auto npix = map.res.npix();
    const double omega = pixel_area(map.res);
    AlmSet alm = AlmSet::zeros(lmax);

    std::vector<double> plm(std::size_t(lmax) + 1);
    for (healpix::pix_t p = 0; p < npix; ++p) {
        const double f = map.values[std::size_t(p)];
        if (f == 0.0) continue;
        const auto [theta, phi] = healpix::pixel_center(map.res, p);
        const double x = std::cos(theta);
        for (int m = 0; m <= lmax; ++m) {
            legendre_column(m, lmax, x, plm);
            const double c = std::cos(m * phi);
            const double s = std::sin(m * phi);
            for (int l = m; l <= lmax; ++l) {
                const double w = omega * f * plm[std::size_t(l - m)];
                alm.at(l, m) += std::complex<double>(w * c, -w * s);
            }
        }
    }
    return alm;
}

}  // namespace

AlmSet analyze(const SkyMap& map, int lmax, int iterations) {
    if (map.channels != 1) throw std::invalid_argument("analyze: single-channel maps only");
    if (lmax > 2 * map.res.nside())
        throw std::invalid_argument("analyze: lmax " + std::to_string(lmax) +
                                    " exceeds 2*nside for nside " + std::to_string(map.res.nside()));
    AlmSet alm = analyze_quadrature(map, lmax);
    for (int it = 0; it < iterations; ++it) {
        SkyMap fitted = synthesize(alm, map.res);
        SkyMap residual = map;
        for (std::size_t i = 0; i < residual.values.size(); ++i)
            residual.values[i] -= fitted.values[i];
        AlmSet corr = analyze_quadrature(residual, lmax);
        for (std::size_t i = 0; i < alm.a.size(); ++i) alm.a[i] += corr.a[i];
    }
    return alm;
}

PowerSpectrum spectrum_from_alm(const AlmSet& alm) {
    PowerSpectrum spec;
    spec.cl.assign(std::size_t(alm.lmax) + 1, 0.0);
    for (int l = 0; l <= alm.lmax; ++l) {
        double sum = std::norm(alm.at(l, 0));
        for (int m = 1; m <= l; ++m) sum += 2.0 * std::norm(alm.at(l, m));
        spec.cl[std::size_t(l)] = sum / (2.0 * l + 1.0);
    }
    return spec;
}

AlmSet sample_alm(const PowerSpectrum& spec, Rng& rng) {
    for (double c : spec.cl)
        if (!(c >= 0.0)) throw std::invalid_argument("sample_alm: C_l must be nonnegative");
    AlmSet alm = AlmSet::zeros(spec.lmax());
    for (int l = 0; l <= spec.lmax(); ++l) {
        const double cl = spec.cl[std::size_t(l)];
        const double sd0 = std::sqrt(cl);
        const double sdm = std::sqrt(cl / 2.0);
        alm.at(l, 0) = {sd0 == 0.0 ? 0.0 : rng.normal(0.0, sd0), 0.0};
        for (int m = 1; m <= l; ++m) {
            if (sdm == 0.0) continue;
            const double re = rng.normal(0.0, sdm);
            const double im = rng.normal(0.0, sdm);
            alm.at(l, m) = {re, im};
        }
    }
    return alm;
}

AlmSet apply_beam(const AlmSet& alm, const Beam& beam) {
    AlmSet out = alm;
    for (int l = 0; l <= alm.lmax; ++l) {
        const double b = beam.transfer(l);
        for (int m = 0; m <= l; ++m) out.at(l, m) *= b;
    }
    return out;
}

PowerSpectrum masked_spectrum(const SkyMap& map, const MaskMap& mask, int lmax) {
    if (map.channels != 1) throw std::invalid_argument("masked_spectrum: single-channel maps only");
    if (!(map.res == mask.res))
        throw std::invalid_argument("masked_spectrum: map and mask resolutions differ");
    const double fsky = mask.f_sky();
    if (fsky <= 0.0) throw std::invalid_argument("masked_spectrum: mask keeps no pixels");

    SkyMap cut = map;
    for (healpix::pix_t p = 0; p < map.res.npix(); ++p)
        if (!mask.keep[std::size_t(p)]) cut.values[std::size_t(p)] = 0.0;

    // Plain quadrature here: the pseudo-C_l estimator is defined on the direct
    // transform of the zeroed map (a cut map is not band limited, so residual
    // refinement would change the estimator, not improve it).
    PowerSpectrum spec = spectrum_from_alm(analyze(cut, lmax, 0));
    for (double& c : spec.cl) c /= fsky;
    return spec;
}

PowerSpectrum load_spectrum_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open spectrum file " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("ell,C_ell", 0) != 0)
        throw std::runtime_error("spectrum file " + path.string() +
                                 ": expected header 'ell,C_ell'");
    PowerSpectrum spec;
    int expected_l = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string ell_str, cl_str;
        if (!std::getline(ss, ell_str, ',') || !std::getline(ss, cl_str))
            throw std::runtime_error("spectrum file: malformed row '" + line + "'");
        const int l = std::stoi(ell_str);
        const double cl = std::stod(cl_str);
        if (l != expected_l)
            throw std::runtime_error("spectrum file: rows must cover l = 0..lmax in order");
        if (!(cl >= 0.0) || !std::isfinite(cl))
            throw std::runtime_error("spectrum file: C_ell must be finite and nonnegative");
        spec.cl.push_back(cl);
        ++expected_l;
    }
    if (spec.cl.empty()) throw std::runtime_error("spectrum file: no rows");
    return spec;
}

void save_spectrum_csv(const PowerSpectrum& spec, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write spectrum file " + path.string());
    out << "ell,C_ell\n";
    out.precision(17);
    for (int l = 0; l <= spec.lmax(); ++l) out << l << "," << spec.cl[std::size_t(l)] << "\n";
}

PowerSpectrum placeholder_spectrum(int lmax, double plateau_uk2) {
    if (lmax < 2) throw std::invalid_argument("placeholder_spectrum: lmax must be >= 2");
    PowerSpectrum spec;
    spec.cl.assign(std::size_t(lmax) + 1, 0.0);
    for (int l = 2; l <= lmax; ++l)
        spec.cl[std::size_t(l)] = 2.0 * kPi * plateau_uk2 / (double(l) * (l + 1));
    return spec;
}

}  // namespace cmbclean::harmonics
