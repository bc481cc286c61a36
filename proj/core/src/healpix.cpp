#include "cmbclean/healpix.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace cmbclean::healpix {

namespace {

constexpr double kPi = std::numbers::pi;

// Bit-interleaving tables for the nested scheme (Gorski et al. 2005).
// utab spreads 8 bits into the even positions of 16, ctab compresses back.
constexpr std::array<std::uint16_t, 256> make_utab() {
    std::array<std::uint16_t, 256> t{};
    for (unsigned m = 0; m < 256; ++m) {
        std::uint16_t v = 0;
        for (unsigned b = 0; b < 8; ++b)
            if (m & (1u << b)) v |= std::uint16_t(1u << (2 * b));
        t[m] = v;
    }
    return t;
}

constexpr std::array<std::uint16_t, 256> make_ctab() {
    std::array<std::uint16_t, 256> t{};
    for (unsigned m = 0; m < 256; ++m) {
        std::uint16_t v = 0;
        for (unsigned b = 0; b < 4; ++b)
            if (m & (1u << (2 * b))) v |= std::uint16_t(1u << b);
        for (unsigned b = 0; b < 4; ++b)
            if (m & (1u << (2 * b + 1))) v |= std::uint16_t(1u << (b + 4));
        t[m] = v;
    }
    return t;
}

constexpr auto utab = make_utab();
constexpr auto ctab = make_ctab();

// Base-pixel ring and longitude offsets of the 12 faces.
constexpr int jrll[12] = {2, 2, 2, 2, 3, 3, 3, 3, 4, 4, 4, 4};
constexpr int jpll[12] = {1, 3, 5, 7, 0, 2, 4, 6, 1, 3, 5, 7};

std::uint64_t spread_bits(std::uint64_t x) {
    return std::uint64_t(utab[x & 0xff]) | (std::uint64_t(utab[(x >> 8) & 0xff]) << 16) |
           (std::uint64_t(utab[(x >> 16) & 0xff]) << 32) |
           (std::uint64_t(utab[(x >> 24) & 0xff]) << 48);
}

std::uint64_t compress_bits(std::uint64_t x) {
    std::uint64_t out = 0;
    for (unsigned i = 0; i < 8; ++i)
        out |= std::uint64_t(ctab[(x >> (8 * i)) & 0xff] & 0xf) << (4 * i);
    return out;
}

struct Xyf {
    pix_t ix, iy;
    int face;
};

Xyf nest2xyf(Resolution res, pix_t pix) {
    const pix_t npface = res.nside() * res.nside();
    Xyf out;
    out.face = int(pix / npface);
    pix_t p = pix & (npface - 1);
    out.ix = pix_t(compress_bits(std::uint64_t(p)));
    out.iy = pix_t(compress_bits(std::uint64_t(p) >> 1));
    return out;
}

pix_t xyf2nest(Resolution res, pix_t ix, pix_t iy, int face) {
    return face * res.nside() * res.nside() +
           pix_t(spread_bits(std::uint64_t(ix)) | (spread_bits(std::uint64_t(iy)) << 1));
}

void check_pix(Resolution res, pix_t pix) {
    if (pix < 0 || pix >= res.npix())
        throw std::out_of_range("healpix: pixel index " + std::to_string(pix) +
                                " out of range for nside " + std::to_string(res.nside()));
}

}  // namespace

Resolution::Resolution(pix_t nside) : nside_(nside), order_(0) {
    if (nside < 1 || (nside & (nside - 1)) != 0)
        throw std::invalid_argument("healpix: nside must be a positive power of two, got " +
                                    std::to_string(nside));
    if (nside > (pix_t(1) << 20))
        throw std::invalid_argument("healpix: nside too large");
    while ((pix_t(1) << order_) < nside_) ++order_;
}

double pixel_area(Resolution res) { return 4.0 * kPi / double(res.npix()); }

SkyMap SkyMap::zeros(Resolution res, int channels) {
    if (channels < 1) throw std::invalid_argument("SkyMap: channel count must be positive");
    SkyMap m{res, channels, std::vector<double>(std::size_t(channels) * res.npix(), 0.0)};
    return m;
}

void SkyMap::validate() const {
    if (channels < 1) throw std::runtime_error("SkyMap: channel count must be positive");
    if (values.size() != std::size_t(channels) * res.npix())
        throw std::runtime_error("SkyMap: value array has " + std::to_string(values.size()) +
                                 " entries, expected " +
                                 std::to_string(std::size_t(channels) * res.npix()));
    for (double v : values)
        if (!std::isfinite(v)) throw std::runtime_error("SkyMap: non-finite value");
}

pix_t MaskMap::kept_count() const {
    pix_t n = 0;
    for (auto k : keep) n += (k != 0);
    return n;
}

double MaskMap::f_sky() const { return double(kept_count()) / double(res.npix()); }

double pixel_z(Resolution res, pix_t pix) {
    check_pix(res, pix);
    const pix_t nside = res.nside();
    const auto [ix, iy, face] = nest2xyf(res, pix);
    const pix_t jr = pix_t(jrll[face]) * nside - ix - iy - 1;
    if (jr < nside) {
        return 1.0 - double(jr * jr) / (3.0 * double(nside) * double(nside));
    } else if (jr > 3 * nside) {
        const pix_t nr = 4 * nside - jr;
        return -1.0 + double(nr * nr) / (3.0 * double(nside) * double(nside));
    }
    return double(2 * nside - jr) * 2.0 / (3.0 * double(nside));
}

std::pair<double, double> pixel_center(Resolution res, pix_t pix) {
    check_pix(res, pix);
    const pix_t nside = res.nside();
    const auto [ix, iy, face] = nest2xyf(res, pix);
    const pix_t jr = pix_t(jrll[face]) * nside - ix - iy - 1;

    pix_t nr;
    double z;
    pix_t kshift;
    if (jr < nside) {
        nr = jr;
        z = 1.0 - double(nr * nr) / (3.0 * double(nside) * double(nside));
        kshift = 0;
    } else if (jr > 3 * nside) {
        nr = 4 * nside - jr;
        z = -1.0 + double(nr * nr) / (3.0 * double(nside) * double(nside));
        kshift = 0;
    } else {
        nr = nside;
        z = double(2 * nside - jr) * 2.0 / (3.0 * double(nside));
        kshift = (jr - nside) & 1;
    }

    // Numerator is always even, so the division is exact.
    pix_t jp = (pix_t(jpll[face]) * nr + ix - iy + 1 + kshift) / 2;
    if (jp > 4 * nr) jp -= 4 * nr;
    if (jp < 1) jp += 4 * nr;

    const double phi = (double(jp) - double(kshift + 1) * 0.5) * (kPi / (2.0 * double(nr)));
    return {std::acos(z), phi};
}

pix_t parent(pix_t pix) {
    if (pix < 0) throw std::out_of_range("healpix: negative pixel index");
    return pix >> 2;
}

std::array<pix_t, 4> children(pix_t pix) {
    if (pix < 0) throw std::out_of_range("healpix: negative pixel index");
    return {4 * pix, 4 * pix + 1, 4 * pix + 2, 4 * pix + 3};
}

std::vector<pix_t> neighbors(Resolution res, pix_t pix) {
    check_pix(res, pix);
    // Offsets in SW, W, NW, N, NE, E, SE, S order; face transition tables
    // from the standard HEALPix adjacency construction.
    static constexpr int xoffset[] = {-1, -1, 0, 1, 1, 1, 0, -1};
    static constexpr int yoffset[] = {0, 1, 1, 1, 0, -1, -1, -1};
    static constexpr int facearray[][12] = {
        {8, 9, 10, 11, -1, -1, -1, -1, 10, 11, 8, 9},  // S
        {5, 6, 7, 4, 8, 9, 10, 11, 9, 10, 11, 8},      // SE
        {-1, -1, -1, -1, 5, 6, 7, 4, -1, -1, -1, -1},  // E
        {4, 5, 6, 7, 11, 8, 9, 10, 11, 8, 9, 10},      // SW
        {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11},        // center
        {1, 2, 3, 0, 0, 1, 2, 3, 5, 6, 7, 4},          // NE
        {-1, -1, -1, -1, 7, 4, 5, 6, -1, -1, -1, -1},  // W
        {3, 0, 1, 2, 3, 0, 1, 2, 4, 5, 6, 7},          // NW
        {2, 3, 0, 1, -1, -1, -1, -1, 0, 1, 2, 3}};     // N
    static constexpr int swaparray[][12] = {
        {0, 0, 0, 0, 0, 0, 0, 0, 3, 3, 3, 3},  // S
        {0, 0, 0, 0, 0, 0, 0, 0, 6, 6, 6, 6},  // SE
        {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0},  // E
        {0, 0, 0, 0, 0, 0, 0, 0, 5, 5, 5, 5},  // SW
        {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0},  // center
        {5, 5, 5, 5, 0, 0, 0, 0, 0, 0, 0, 0},  // NE
        {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0},  // W
        {6, 6, 6, 6, 0, 0, 0, 0, 0, 0, 0, 0},  // NW
        {3, 3, 3, 3, 0, 0, 0, 0, 0, 0, 0, 0}};  // N

    const pix_t nside = res.nside();
    const auto [ix, iy, face] = nest2xyf(res, pix);

    std::vector<pix_t> out;
    out.reserve(8);
    const pix_t nsm1 = nside - 1;
    if (ix > 0 && ix < nsm1 && iy > 0 && iy < nsm1) {
        for (int m = 0; m < 8; ++m)
            out.push_back(xyf2nest(res, ix + xoffset[m], iy + yoffset[m], face));
    } else {
        for (int m = 0; m < 8; ++m) {
            pix_t x = ix + xoffset[m];
            pix_t y = iy + yoffset[m];
            int nbnum = 4;
            if (x < 0) {
                x += nside;
                nbnum -= 1;
            } else if (x >= nside) {
                x -= nside;
                nbnum += 1;
            }
            if (y < 0) {
                y += nside;
                nbnum -= 3;
            } else if (y >= nside) {
                y -= nside;
                nbnum += 3;
            }
            const int f = facearray[nbnum][face];
            if (f < 0) continue;
            const int bits = swaparray[nbnum][face];
            if (bits & 1) x = nside - x - 1;
            if (bits & 2) y = nside - y - 1;
            if (bits & 4) std::swap(x, y);
            out.push_back(xyf2nest(res, x, y, f));
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

MaskMap latitude_mask(Resolution res, double cut_deg) {
    if (!(cut_deg >= 0.0 && cut_deg < 90.0))
        throw std::invalid_argument("latitude_mask: cut_deg must be in [0, 90), got " +
                                    std::to_string(cut_deg));
    // Compare in z = cos(theta) space; pixel_z is exact on belt rings, so the
    // boundary decision is stable.
    const double z_cut = std::sin(cut_deg * kPi / 180.0);
    MaskMap mask{res, std::vector<std::uint8_t>(std::size_t(res.npix()), 0)};
    for (pix_t p = 0; p < res.npix(); ++p)
        mask.keep[std::size_t(p)] = std::abs(pixel_z(res, p)) >= z_cut ? 1 : 0;
    return mask;
}

}  // namespace cmbclean::healpix
