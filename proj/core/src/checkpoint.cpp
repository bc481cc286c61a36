#include "cmbclean/checkpoint.hpp"

#include <json.hpp>

#include <fstream>
#include <stdexcept>

namespace cmbclean::io {

namespace {
constexpr char kMagic[5] = {'C', 'K', 'P', 'T', '1'};
}

const TensorRecord* Checkpoint::find(const std::string& name) const {
    for (const auto& r : records)
        if (r.name == name) return &r;
    return nullptr;
}

void Checkpoint::save(const std::filesystem::path& path) const {
    nlohmann::json header;
    header["stage"] = stage;
    header["epoch"] = epoch;
    header["master_seed"] = master_seed;
    header["rng_label"] = rng_label;
    header["config_echo"] = config_echo;
    auto& table = header["records"] = nlohmann::json::array();
    for (const auto& r : records) {
        table.push_back({{"name", r.name},
                         {"shape", {r.shape[0], r.shape[1], r.shape[2]}},
                         {"count", r.data.size()},
                         {"kind", r.kind}});
        if (r.data.size() != std::size_t(r.shape[0]) * r.shape[1] * r.shape[2])
            throw std::logic_error("checkpoint: record " + r.name + " size/shape mismatch");
    }
    const std::string header_str = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
    out.write(kMagic, 5);
    const std::uint64_t len = header_str.size();
    unsigned char lb[8];
    for (int i = 0; i < 8; ++i) lb[i] = static_cast<unsigned char>((len >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(lb), 8);
    out.write(header_str.data(), std::streamsize(header_str.size()));
    for (const auto& r : records)
        out.write(reinterpret_cast<const char*>(r.data.data()),
                  std::streamsize(r.data.size() * sizeof(double)));
    if (!out) throw std::runtime_error("checkpoint: write failure for " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
    char magic[5];
    in.read(magic, 5);
    if (!in || std::string(magic, 5) != std::string(kMagic, 5))
        throw std::runtime_error("checkpoint: bad magic in " + path.string());
    unsigned char lb[8];
    in.read(reinterpret_cast<char*>(lb), 8);
    if (!in) throw std::runtime_error("checkpoint: truncated header length");
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i) len |= std::uint64_t(lb[i]) << (8 * i);
    std::string header_str(len, '\0');
    in.read(header_str.data(), std::streamsize(len));
    if (!in) throw std::runtime_error("checkpoint: truncated header in " + path.string());

    nlohmann::json header = nlohmann::json::parse(header_str);
    Checkpoint ckpt;
    ckpt.stage = header.at("stage").get<std::string>();
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.master_seed = header.at("master_seed").get<std::uint64_t>();
    ckpt.rng_label = header.at("rng_label").get<std::string>();
    ckpt.config_echo = header.at("config_echo").get<std::string>();
    for (const auto& entry : header.at("records")) {
        TensorRecord r;
        r.name = entry.at("name").get<std::string>();
        const auto& sh = entry.at("shape");
        r.shape = {sh.at(0).get<int>(), sh.at(1).get<int>(), sh.at(2).get<int>()};
        r.kind = entry.at("kind").get<std::string>();
        const auto count = entry.at("count").get<std::size_t>();
        r.data.resize(count);
        in.read(reinterpret_cast<char*>(r.data.data()), std::streamsize(count * sizeof(double)));
        if (!in || std::size_t(in.gcount()) != count * sizeof(double))
            throw std::runtime_error("checkpoint: truncated payload for record " + r.name);
        ckpt.records.push_back(std::move(r));
    }
    if (in.peek() != std::ifstream::traits_type::eof())
        throw std::runtime_error("checkpoint: trailing bytes in " + path.string());
    return ckpt;
}

}  // namespace cmbclean::io
