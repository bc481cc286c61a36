#pragma once

#include <complex>
#include <filesystem>
#include <vector>

#include "cmbclean/healpix.hpp"
#include "cmbclean/rng.hpp"

namespace cmbclean::harmonics {

using healpix::MaskMap;
using healpix::Resolution;
using healpix::SkyMap;

// Spherical-harmonic coefficients of a real field, m >= 0 only (m < 0 is
// implied by conjugate symmetry). Triangle layout: index(l, m) = l(l+1)/2 + m.
struct AlmSet {
    int lmax = 0;
    std::vector<std::complex<double>> a;

    static AlmSet zeros(int lmax);
    static std::size_t index(int l, int m) { return std::size_t(l) * (l + 1) / 2 + m; }
    static std::size_t count(int lmax) { return std::size_t(lmax + 1) * (lmax + 2) / 2; }

    std::complex<double>& at(int l, int m) { return a[index(l, m)]; }
    std::complex<double> at(int l, int m) const { return a[index(l, m)]; }
};

struct PowerSpectrum {
    std::vector<double> cl;  // cl[l], l = 0..lmax, in uK^2

    int lmax() const { return int(cl.size()) - 1; }
};

// Gaussian beam; multiplies a_lm by exp(-l(l+1) sigma^2 / 2).
struct Beam {
    double fwhm_arcmin;

    double sigma_rad() const;
    double transfer(int l) const;
};

// f(p) = sum_lm a_lm Y_lm(p), real-field convention. Requires
// lmax <= 3*nside - 1.
SkyMap synthesize(const AlmSet& alm, Resolution res);

// Quadrature estimate a_lm = Omega_pix * sum_p f(p) conj(Y_lm(p)), plus
// `iterations` rounds of residual refinement (re-analyzing f - synth(a_lm)).
// One round keeps desk-scale round-trip errors below 1e-2 per coefficient.
// Single-channel maps only; lmax <= 2*nside.
AlmSet analyze(const SkyMap& map, int lmax, int iterations = 1);

// C_l = (|a_l0|^2 + 2 sum_{m>=1} |a_lm|^2) / (2l + 1).
PowerSpectrum spectrum_from_alm(const AlmSet& alm);

// Gaussian realization: a_l0 ~ N(0, C_l); Re/Im a_lm ~ N(0, C_l/2) for m > 0.
AlmSet sample_alm(const PowerSpectrum& spec, Rng& rng);

AlmSet apply_beam(const AlmSet& alm, const Beam& beam);

// Pseudo-C_l of a masked map: masked pixels zeroed, then C_l / f_sky.
PowerSpectrum masked_spectrum(const SkyMap& map, const MaskMap& mask, int lmax);

// Theory spectrum file: CSV with header "ell,C_ell", rows l = 0..lmax.
PowerSpectrum load_spectrum_csv(const std::filesystem::path& path);
void save_spectrum_csv(const PowerSpectrum& spec, const std::filesystem::path& path);

// Smooth placeholder spectrum (flat l(l+1)C_l/2pi plateau); not a cosmological
// model, just a stand-in with a realistic overall shape and amplitude.
PowerSpectrum placeholder_spectrum(int lmax, double plateau_uk2 = 1000.0);

// Normalized associated Legendre column P̄_lm(x) for fixed m, l = m..lmax,
// such that Y_lm = P̄_lm(cos theta) e^{i m phi}. Upward recurrence, stable.
void legendre_column(int m, int lmax, double x, std::span<double> out);

}  // namespace cmbclean::harmonics
