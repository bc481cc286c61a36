#pragma once

#include <filesystem>
#include <string>

#include "cmbclean/healpix.hpp"

namespace cmbclean::io {

// .hmap container: magic "HMAP1", u32 nside, u8 ordering (0 = nested),
// u32 channel count, u32 units-tag length + bytes, then channels * npix
// little-endian f64. The loader rejects trailing bytes and non-finite
// payloads; round trips are bit-exact.
struct LoadedMap {
    healpix::SkyMap map;
    std::string units;
};

void save_hmap(const healpix::SkyMap& map, const std::string& units,
               const std::filesystem::path& path);
LoadedMap load_hmap(const std::filesystem::path& path);

}  // namespace cmbclean::io
