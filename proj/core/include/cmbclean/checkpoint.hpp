#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cmbclean::io {

// Self-describing model/optimizer snapshot. Layout: magic "CKPT1", u64
// little-endian header length, header JSON (stage, epoch, seed, rng label,
// config echo, record table), then the concatenated f64 payload in record
// order. Save/load round trips are bit-exact.
struct TensorRecord {
    std::string name;
    std::array<int, 3> shape{1, 1, 1};
    std::vector<double> data;
    std::string kind;  // "param" | "buffer" | "optimizer"
};

struct Checkpoint {
    std::string stage;  // "deterministic" | "bayesian"
    int epoch = 0;
    std::uint64_t master_seed = 0;
    std::string rng_label;
    std::string config_echo;  // canonical run-config JSON
    std::vector<TensorRecord> records;

    const TensorRecord* find(const std::string& name) const;

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace cmbclean::io
