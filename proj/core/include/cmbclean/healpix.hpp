#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace cmbclean::healpix {

using pix_t = std::int64_t;

// HEALPix resolution parameter. nside must be a power of two; the sphere is
// covered by 12 * nside^2 equal-area pixels.
class Resolution {
  public:
    explicit Resolution(pix_t nside);

    pix_t nside() const { return nside_; }
    pix_t npix() const { return 12 * nside_ * nside_; }
    int order() const { return order_; }  // log2(nside)

    bool operator==(const Resolution&) const = default;

  private:
    pix_t nside_;
    int order_;
};

inline pix_t n_pixels(Resolution res) { return res.npix(); }

// Solid angle of one pixel, 4*pi / npix (equal-area by construction).
double pixel_area(Resolution res);

// Scalar field(s) on the sphere, nested ordering only. values are stored
// channel-major: values[c * npix + p].
struct SkyMap {
    Resolution res{1};
    int channels = 1;
    std::vector<double> values;

    static SkyMap zeros(Resolution res, int channels = 1);

    double& at(int channel, pix_t pix) { return values[std::size_t(channel) * res.npix() + pix]; }
    double at(int channel, pix_t pix) const {
        return values[std::size_t(channel) * res.npix() + pix];
    }
    std::span<double> channel(int c) {
        return std::span<double>(values).subspan(std::size_t(c) * res.npix(), res.npix());
    }
    std::span<const double> channel(int c) const {
        return std::span<const double>(values).subspan(std::size_t(c) * res.npix(), res.npix());
    }

    // Throws if any value is non-finite or the size disagrees with the header.
    void validate() const;
};

struct MaskMap {
    Resolution res{1};
    std::vector<std::uint8_t> keep;

    pix_t kept_count() const;
    double f_sky() const;
};

// Center of a nested-order pixel as (colatitude theta, longitude phi) in
// radians. All pixels of one iso-latitude ring share theta.
std::pair<double, double> pixel_center(Resolution res, pix_t pix);

// z = cos(theta) of the pixel center; exact rational arithmetic where the
// grid allows it (equatorial belt rings).
double pixel_z(Resolution res, pix_t pix);

// Nested hierarchy: a pixel at nside has 4 children at 2*nside.
pix_t parent(pix_t pix);
std::array<pix_t, 4> children(pix_t pix);

// Pixels sharing an edge or a corner with pix, sorted ascending. Size is 6
// at nside=1, and 7 or 8 for nside >= 2.
std::vector<pix_t> neighbors(Resolution res, pix_t pix);

// keep[p] = true iff the pixel center lies outside the equatorial band of
// half-width cut_deg (|latitude| >= cut_deg). cut_deg in [0, 90).
MaskMap latitude_mask(Resolution res, double cut_deg);

}  // namespace cmbclean::healpix
