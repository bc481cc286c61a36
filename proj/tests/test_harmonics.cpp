#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "cmbclean/harmonics.hpp"

using namespace cmbclean;
using namespace cmbclean::harmonics;
namespace nb = std::numbers;

namespace {
AlmSet random_alm(int lmax, std::uint64_t seed) {
    Rng rng(seed);
    AlmSet alm = AlmSet::zeros(lmax);
    for (int l = 0; l <= lmax; ++l) {
        alm.at(l, 0) = {rng.normal(), 0.0};
        for (int m = 1; m <= l; ++m) alm.at(l, m) = {rng.normal(), rng.normal()};
    }
    return alm;
}
}  // namespace

TEST_CASE("synthesize: monopole gives a constant map") {
    AlmSet alm = AlmSet::zeros(0);
    alm.at(0, 0) = {std::sqrt(4.0 * nb::pi), 0.0};
    auto map = synthesize(alm, healpix::Resolution(4));
    for (double v : map.values) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("synthesize: dipole a_10 is proportional to cos(theta)") {
    const double c = 2.5;
    AlmSet alm = AlmSet::zeros(1);
    alm.at(1, 0) = {c, 0.0};
    healpix::Resolution res(8);
    auto map = synthesize(alm, res);
    for (healpix::pix_t p : {healpix::pix_t(0), healpix::pix_t(100), healpix::pix_t(700)}) {
        const auto [theta, phi] = healpix::pixel_center(res, p);
        CHECK(map.values[std::size_t(p)] ==
              doctest::Approx(c * std::sqrt(3.0 / (4.0 * nb::pi)) * std::cos(theta)).epsilon(1e-12));
    }
}

TEST_CASE("synthesize: zero alm gives zero map, band limit enforced") {
    auto map = synthesize(AlmSet::zeros(3), healpix::Resolution(2));
    for (double v : map.values) CHECK(v == 0.0);
    CHECK_THROWS_AS(synthesize(AlmSet::zeros(6), healpix::Resolution(2)), std::invalid_argument);
}

TEST_CASE("synthesize is linear") {
    healpix::Resolution res(4);
    AlmSet a = random_alm(5, 11), b = random_alm(5, 12);
    AlmSet sum = a;
    for (std::size_t i = 0; i < sum.a.size(); ++i) sum.a[i] += b.a[i];
    auto fa = synthesize(a, res), fb = synthesize(b, res), fs = synthesize(sum, res);
    for (std::size_t i = 0; i < fs.values.size(); ++i)
        CHECK(fs.values[i] == doctest::Approx(fa.values[i] + fb.values[i]).epsilon(1e-12));
}

TEST_CASE("analyze: constant-map round trip is exact on the equal-area grid") {
    AlmSet alm = AlmSet::zeros(0);
    alm.at(0, 0) = {std::sqrt(4.0 * nb::pi), 0.0};
    auto map = synthesize(alm, healpix::Resolution(8));
    auto back = analyze(map, 0);
    CHECK(back.at(0, 0).real() == doctest::Approx(std::sqrt(4.0 * nb::pi)).epsilon(1e-6));
    CHECK(back.at(0, 0).imag() == 0.0);
}

TEST_CASE("analyze/synthesize round trip at nside=16, lmax=8") {
    healpix::Resolution res(16);
    AlmSet alm = random_alm(8, 42);
    auto back = analyze(synthesize(alm, res), 8);
    for (int l = 0; l <= 8; ++l)
        for (int m = 0; m <= l; ++m) {
            const auto in = alm.at(l, m);
            const auto out = back.at(l, m);
            const double mag = std::max(std::abs(in), 1e-12);
            CHECK(std::abs(in - out) / mag <= 1e-2);
        }
}

TEST_CASE("analyze: zero map and channel guard") {
    auto zero = healpix::SkyMap::zeros(healpix::Resolution(4), 1);
    auto alm = analyze(zero, 4);
    for (auto c : alm.a) CHECK(std::abs(c) == 0.0);
    auto multi = healpix::SkyMap::zeros(healpix::Resolution(4), 2);
    CHECK_THROWS_AS(analyze(multi, 4), std::invalid_argument);
    CHECK_THROWS_AS(analyze(zero, 9), std::invalid_argument);
}

TEST_CASE("spectrum_from_alm: monopole and quadratic scaling") {
    AlmSet alm = AlmSet::zeros(2);
    alm.at(0, 0) = {std::sqrt(4.0 * nb::pi), 0.0};
    auto spec = spectrum_from_alm(alm);
    CHECK(spec.cl[0] == doctest::Approx(4.0 * nb::pi).epsilon(1e-14));
    CHECK(spec.cl[1] == 0.0);
    CHECK(spec.cl[2] == 0.0);

    AlmSet r = random_alm(4, 3);
    AlmSet r2 = r;
    for (auto& c : r2.a) c *= 2.0;
    auto s1 = spectrum_from_alm(r), s2 = spectrum_from_alm(r2);
    for (int l = 0; l <= 4; ++l)
        CHECK(s2.cl[std::size_t(l)] == doctest::Approx(4.0 * s1.cl[std::size_t(l)]).epsilon(1e-13));
}

TEST_CASE("sample_alm -> spectrum is unbiased (cosmic variance bands)") {
    const int lmax = 8, n_real = 200;
    PowerSpectrum unit;
    unit.cl.assign(lmax + 1, 1.0);
    std::vector<double> mean(lmax + 1, 0.0);
    Rng rng(2024);
    for (int r = 0; r < n_real; ++r) {
        auto spec = spectrum_from_alm(sample_alm(unit, rng));
        for (int l = 0; l <= lmax; ++l) mean[std::size_t(l)] += spec.cl[std::size_t(l)] / n_real;
    }
    for (int l = 0; l <= lmax; ++l) {
        const double band = 3.0 * std::sqrt(2.0 / ((2.0 * l + 1.0) * n_real));
        CHECK(std::abs(mean[std::size_t(l)] - 1.0) <= band);
    }
}

TEST_CASE("sample_alm: determinism, zero spectrum, moment check") {
    PowerSpectrum spec;
    spec.cl = {0.0, 2.0, 5.0};

    Rng r1(7), r2(7);
    auto a1 = sample_alm(spec, r1), a2 = sample_alm(spec, r2);
    for (std::size_t i = 0; i < a1.a.size(); ++i) CHECK(a1.a[i] == a2.a[i]);

    PowerSpectrum zeros;
    zeros.cl = {0.0, 0.0};
    Rng r3(1);
    for (auto c : sample_alm(zeros, r3).a) CHECK(std::abs(c) == 0.0);

    PowerSpectrum bad;
    bad.cl = {1.0, -0.5};
    Rng r4(1);
    CHECK_THROWS_AS(sample_alm(bad, r4), std::invalid_argument);

    // E[|a_lm|^2] = C_l within 5% over 1e4 draws.
    const int n_draws = 10000;
    std::vector<double> acc(AlmSet::count(2), 0.0);
    Rng r5(99);
    for (int d = 0; d < n_draws; ++d) {
        auto alm = sample_alm(spec, r5);
        for (std::size_t i = 0; i < alm.a.size(); ++i) acc[i] += std::norm(alm.a[i]) / n_draws;
    }
    for (int l = 1; l <= 2; ++l)
        for (int m = 0; m <= l; ++m)
            CHECK(acc[AlmSet::index(l, m)] ==
                  doctest::Approx(spec.cl[std::size_t(l)]).epsilon(0.05));
}

TEST_CASE("apply_beam") {
    Beam beam{150.0};
    CHECK(beam.transfer(0) == 1.0);
    const double sigma = (150.0 / 60.0) * (nb::pi / 180.0) / std::sqrt(8.0 * std::log(2.0));
    CHECK(beam.transfer(10) == doctest::Approx(std::exp(-110.0 * sigma * sigma / 2.0)).epsilon(1e-14));
    for (int l = 1; l < 50; ++l) CHECK(beam.transfer(l) < beam.transfer(l - 1));

    AlmSet alm = random_alm(6, 5);
    auto smoothed = apply_beam(alm, beam);
    CHECK(smoothed.at(0, 0) == alm.at(0, 0));

    // Commutes with alm addition.
    AlmSet other = random_alm(6, 6);
    AlmSet sum = alm;
    for (std::size_t i = 0; i < sum.a.size(); ++i) sum.a[i] += other.a[i];
    auto lhs = apply_beam(sum, beam);
    auto sa = apply_beam(alm, beam), sb = apply_beam(other, beam);
    for (std::size_t i = 0; i < lhs.a.size(); ++i)
        CHECK(std::abs(lhs.a[i] - (sa.a[i] + sb.a[i])) <= 1e-14 * (1.0 + std::abs(lhs.a[i])));
}

TEST_CASE("masked_spectrum") {
    healpix::Resolution res(8);
    auto map = synthesize(random_alm(6, 17), res);

    healpix::MaskMap all{res, std::vector<std::uint8_t>(std::size_t(res.npix()), 1)};
    auto full = masked_spectrum(map, all, 6);
    auto direct = spectrum_from_alm(analyze(map, 6, 0));
    for (int l = 0; l <= 6; ++l)
        CHECK(full.cl[std::size_t(l)] == doctest::Approx(direct.cl[std::size_t(l)]).epsilon(1e-13));

    // Constant map: C_0 recovers 4*pi*f_sky exactly up to roundoff.
    auto ones = healpix::SkyMap::zeros(res, 1);
    std::fill(ones.values.begin(), ones.values.end(), 1.0);
    auto cut = healpix::latitude_mask(res, 30.0);
    auto spec = masked_spectrum(ones, cut, 4);
    CHECK(spec.cl[0] == doctest::Approx(4.0 * nb::pi * cut.f_sky()).epsilon(1e-10));

    auto zero = healpix::SkyMap::zeros(res, 1);
    for (double c : masked_spectrum(zero, cut, 4).cl) CHECK(c == 0.0);

    healpix::MaskMap none{res, std::vector<std::uint8_t>(std::size_t(res.npix()), 0)};
    CHECK_THROWS_AS(masked_spectrum(map, none, 4), std::invalid_argument);
}

TEST_CASE("Parseval at desk scale") {
    healpix::Resolution res(8);
    AlmSet alm = random_alm(8, 23);
    auto map = synthesize(alm, res);
    double pix_power = 0.0;
    for (double v : map.values) pix_power += v * v;
    pix_power *= healpix::pixel_area(res);
    auto spec = spectrum_from_alm(analyze(map, 8));
    double sh_power = 0.0;
    for (int l = 0; l <= 8; ++l) sh_power += (2.0 * l + 1.0) * spec.cl[std::size_t(l)];
    CHECK(pix_power == doctest::Approx(sh_power).epsilon(0.02));
}

TEST_CASE("spectrum CSV round trip and validation") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "cmbclean_harm_test";
    fs::create_directories(dir);
    auto spec = placeholder_spectrum(16);
    save_spectrum_csv(spec, dir / "spec.csv");
    auto loaded = load_spectrum_csv(dir / "spec.csv");
    REQUIRE(loaded.lmax() == spec.lmax());
    for (std::size_t i = 0; i < spec.cl.size(); ++i) CHECK(loaded.cl[i] == spec.cl[i]);

    std::ofstream bad(dir / "bad.csv");
    bad << "l,cl\n0,1.0\n";
    bad.close();
    CHECK_THROWS_AS(load_spectrum_csv(dir / "bad.csv"), std::runtime_error);
    fs::remove_all(dir);
}
