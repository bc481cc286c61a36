#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "cmbclean/healpix.hpp"
#include "oracles.hpp"

using namespace cmbclean::healpix;
namespace nb = std::numbers;

TEST_CASE("n_pixels") {
    CHECK(n_pixels(Resolution(1)) == 12);
    CHECK(n_pixels(Resolution(64)) == 49152);
    CHECK(n_pixels(Resolution(16)) == 3072);
    for (pix_t ns = 2; ns <= 64; ns *= 2)
        CHECK(n_pixels(Resolution(ns)) == 4 * n_pixels(Resolution(ns / 2)));
}

TEST_CASE("Resolution rejects non-power-of-two nside") {
    CHECK_THROWS_AS(Resolution(0), std::invalid_argument);
    CHECK_THROWS_AS(Resolution(-4), std::invalid_argument);
    CHECK_THROWS_AS(Resolution(3), std::invalid_argument);
    CHECK_THROWS_AS(Resolution(12), std::invalid_argument);
    CHECK_THROWS_AS(Resolution(48), std::invalid_argument);
}

TEST_CASE("pixel_center: base pixel rings at nside=1") {
    Resolution res(1);
    std::vector<double> z(12);
    for (pix_t p = 0; p < 12; ++p) z[std::size_t(p)] = std::cos(pixel_center(res, p).first);
    std::sort(z.begin(), z.end(), std::greater<>());
    for (int i = 0; i < 4; ++i) CHECK(z[std::size_t(i)] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    for (int i = 4; i < 8; ++i) CHECK(std::abs(z[std::size_t(i)]) < 1e-14);
    for (int i = 8; i < 12; ++i) CHECK(z[std::size_t(i)] == doctest::Approx(-2.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("pixel_center: centers sum to zero at nside=2") {
    Resolution res(2);
    double sx = 0, sy = 0, sz = 0;
    for (pix_t p = 0; p < res.npix(); ++p) {
        const auto [theta, phi] = pixel_center(res, p);
        sx += std::sin(theta) * std::cos(phi);
        sy += std::sin(theta) * std::sin(phi);
        sz += std::cos(theta);
    }
    CHECK(std::abs(sx) < 1e-12);
    CHECK(std::abs(sy) < 1e-12);
    CHECK(std::abs(sz) < 1e-12);
}

TEST_CASE("pixel_center: frozen value at nside=16, pix=0") {
    const auto [theta, phi] = pixel_center(Resolution(16), 0);
    // First pixel of face 0 sits on the equatorial belt at z = 1/24, phi = pi/4.
    CHECK(theta == doctest::Approx(std::acos(1.0 / 24.0)).epsilon(1e-15));
    CHECK(phi == doctest::Approx(nb::pi / 4.0).epsilon(1e-15));
}

TEST_CASE("pixel_center matches the continuous-map oracle") {
    for (pix_t ns : {1, 2, 4, 16}) {
        Resolution res(ns);
        for (pix_t p = 0; p < res.npix(); ++p) {
            const auto [theta, phi] = pixel_center(res, p);
            const auto [ot, op] = oracles::pixel_center_oracle(ns, p);
            CHECK(theta == doctest::Approx(ot).epsilon(1e-12));
            CHECK(phi == doctest::Approx(op).epsilon(1e-12));
        }
    }
}

TEST_CASE("pixel_center rejects out-of-range indices") {
    CHECK_THROWS_AS(pixel_center(Resolution(2), -1), std::out_of_range);
    CHECK_THROWS_AS(pixel_center(Resolution(2), 48), std::out_of_range);
}

TEST_CASE("parent and children") {
    CHECK(parent(7) == 1);
    CHECK(parent(0) == 0);
    CHECK(children(3) == std::array<pix_t, 4>{12, 13, 14, 15});
    // Children partition the parent index range at every level.
    Resolution coarse(2), fine(4);
    std::set<pix_t> seen;
    for (pix_t p = 0; p < coarse.npix(); ++p)
        for (auto c : children(p)) {
            CHECK(parent(c) == p);
            seen.insert(c);
        }
    CHECK(pix_t(seen.size()) == fine.npix());
}

TEST_CASE("neighbors: symmetric and irreflexive") {
    for (pix_t ns : {1, 2, 4, 8, 16}) {
        Resolution res(ns);
        std::vector<std::set<pix_t>> nb_sets(std::size_t(res.npix()));
        for (pix_t p = 0; p < res.npix(); ++p) {
            auto nbs = neighbors(res, p);
            CHECK(std::is_sorted(nbs.begin(), nbs.end()));
            nb_sets[std::size_t(p)] = std::set<pix_t>(nbs.begin(), nbs.end());
            CHECK(nb_sets[std::size_t(p)].count(p) == 0);
        }
        for (pix_t p = 0; p < res.npix(); ++p)
            for (auto q : nb_sets[std::size_t(p)]) CHECK(nb_sets[std::size_t(q)].count(p) == 1);
    }
}

TEST_CASE("neighbors match brute-force shared-corner adjacency") {
    for (pix_t ns : {1, 2, 4}) {
        Resolution res(ns);
        const auto adj = oracles::corner_adjacency(ns);
        for (pix_t p = 0; p < res.npix(); ++p) {
            auto nbs = neighbors(res, p);
            CHECK(std::set<pix_t>(nbs.begin(), nbs.end()) == adj[std::size_t(p)]);
        }
    }
}

TEST_CASE("neighbors: count histogram at nside=2") {
    Resolution res(2);
    std::map<std::size_t, int> hist;
    for (pix_t p = 0; p < res.npix(); ++p) ++hist[neighbors(res, p).size()];
    // 24 pixels touch a face corner where only three faces meet.
    CHECK(hist[7] == 24);
    CHECK(hist[8] == 24);
    CHECK(hist.size() == 2);
}

TEST_CASE("neighbors of nside=1 base pixels") {
    // At nside=1 each base diamond touches exactly six others.
    auto nbs = neighbors(Resolution(1), 4);
    CHECK(nbs == std::vector<pix_t>{0, 3, 5, 7, 8, 11});
}

TEST_CASE("latitude_mask: cut 0 keeps everything") {
    auto mask = latitude_mask(Resolution(8), 0.0);
    CHECK(mask.kept_count() == Resolution(8).npix());
    CHECK(mask.f_sky() == 1.0);
}

TEST_CASE("latitude_mask: kept fraction tracks band area") {
    // At nside=16 and a 30 degree cut a full ring sits exactly on the
    // boundary (z = 1/2), so the discrete fraction is 0.5 off by exactly half
    // a ring weight whichever way the boundary falls.
    auto mask30 = latitude_mask(Resolution(16), 30.0);
    const double frac30 = mask30.f_sky();
    CHECK(std::abs(frac30 - 0.5) <= 1.0 / 48.0 + 1e-12);

    // Away from an exact boundary ring the fraction matches the analytic
    // band area well inside 2%.
    auto mask29 = latitude_mask(Resolution(16), 29.0);
    CHECK(std::abs(mask29.f_sky() - (1.0 - std::sin(29.0 * nb::pi / 180.0))) < 0.02);
}

TEST_CASE("latitude_mask: near-polar cut keeps only near-polar pixels") {
    Resolution res(16);
    auto mask = latitude_mask(res, 89.9);
    for (pix_t p = 0; p < res.npix(); ++p)
        if (mask.keep[std::size_t(p)]) {
            const double lat = 90.0 - pixel_center(res, p).first * 180.0 / nb::pi;
            CHECK(std::abs(lat) >= 89.9);
        }
    // nside=16 pixel centers reach only ~87 degrees latitude.
    CHECK(mask.kept_count() == 0);

    auto mask85 = latitude_mask(res, 85.0);
    CHECK(mask85.kept_count() == 8);  // first ring around each pole
}

TEST_CASE("latitude_mask rejects out-of-range cut") {
    CHECK_THROWS_AS(latitude_mask(Resolution(4), -1.0), std::invalid_argument);
    CHECK_THROWS_AS(latitude_mask(Resolution(4), 90.0), std::invalid_argument);
}

TEST_CASE("pixel_area is 4pi/npix") {
    for (pix_t ns : {1, 4, 64})
        CHECK(pixel_area(Resolution(ns)) ==
              doctest::Approx(4.0 * nb::pi / double(12 * ns * ns)).epsilon(1e-15));
}

TEST_CASE("SkyMap validation") {
    auto m = SkyMap::zeros(Resolution(2), 3);
    CHECK(m.values.size() == 3u * 48u);
    m.validate();
    m.values[5] = std::nan("");
    CHECK_THROWS_AS(m.validate(), std::runtime_error);
}
