#include "cmbclean/map_io.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace cmbclean::io {

namespace {

constexpr char kMagic[5] = {'H', 'M', 'A', 'P', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("hmap: truncated header");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

static_assert(sizeof(double) == 8);

}  // namespace

void save_hmap(const healpix::SkyMap& map, const std::string& units,
               const std::filesystem::path& path) {
    map.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("hmap: cannot open " + path.string() + " for writing");
    out.write(kMagic, 5);
    write_u32(out, std::uint32_t(map.res.nside()));
    const char ordering = 0;  // nested
    out.write(&ordering, 1);
    write_u32(out, std::uint32_t(map.channels));
    write_u32(out, std::uint32_t(units.size()));
    out.write(units.data(), std::streamsize(units.size()));
    out.write(reinterpret_cast<const char*>(map.values.data()),
              std::streamsize(map.values.size() * sizeof(double)));
    if (!out) throw std::runtime_error("hmap: write failure for " + path.string());
}

LoadedMap load_hmap(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("hmap: cannot open " + path.string());
    char magic[5];
    in.read(magic, 5);
    if (!in || std::memcmp(magic, kMagic, 5) != 0)
        throw std::runtime_error("hmap: bad magic in " + path.string());
    const std::uint32_t nside = read_u32(in);
    char ordering = 0;
    in.read(&ordering, 1);
    if (!in) throw std::runtime_error("hmap: truncated header in " + path.string());
    if (ordering != 0)
        throw std::runtime_error("hmap: only nested ordering (0) is supported, got " +
                                 std::to_string(int(ordering)));
    const std::uint32_t channels = read_u32(in);
    const std::uint32_t units_len = read_u32(in);
    std::string units(units_len, '\0');
    in.read(units.data(), units_len);
    if (!in) throw std::runtime_error("hmap: truncated units tag in " + path.string());

    healpix::Resolution res{healpix::pix_t(nside)};
    if (channels < 1) throw std::runtime_error("hmap: zero channels in " + path.string());
    const std::size_t count = std::size_t(channels) * std::size_t(res.npix());
    std::vector<double> values(count);
    in.read(reinterpret_cast<char*>(values.data()), std::streamsize(count * sizeof(double)));
    if (!in || std::size_t(in.gcount()) != count * sizeof(double))
        throw std::runtime_error("hmap: payload shorter than header promises in " + path.string());
    if (in.peek() != std::ifstream::traits_type::eof())
        throw std::runtime_error("hmap: trailing bytes after payload in " + path.string());

    LoadedMap out{healpix::SkyMap{res, int(channels), std::move(values)}, std::move(units)};
    out.map.validate();
    return out;
}

}  // namespace cmbclean::io
