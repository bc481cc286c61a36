#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cmbclean/skysim.hpp"

namespace cmbclean::sim {

// On-disk dataset descriptor: split assignment, per-channel normalization
// statistics from the training split, and everything needed to regenerate
// the instances bit-for-bit (config echo + master seed).
struct DatasetManifest {
    int n = 0;
    std::int64_t nside = 0;
    int channels = 9;
    std::vector<int> train_ids, validation_ids, test_ids;
    std::vector<double> channel_mean, channel_std;  // from the training split
    std::uint64_t master_seed = 0;
    std::uint64_t config_hash = 0;
    std::string config_echo;

    std::vector<int> all_ids() const;
    void save(const std::filesystem::path& path) const;
    static DatasetManifest load(const std::filesystem::path& path);
};

// 80/10/10 split of a seeded permutation of 0..n-1 (each list sorted).
struct SplitIds {
    std::vector<int> train, validation, test;
};
SplitIds split_80_10_10(int n, std::uint64_t master_seed);

struct GeneratedDataset {
    DatasetManifest manifest;
    std::vector<SimulationInstance> instances;  // ordered by id
};

// Simulate n instances, split them, and compute training-split normalization.
// Requires n >= 10 so every split is nonempty.
GeneratedDataset build_dataset(const io::RunConfig& config, int n, std::uint64_t master_seed);

// Directory layout: manifest.json + inst_<id>.hmap (9 observation channels
// followed by the target as channel 10).
void write_dataset(const GeneratedDataset& ds, const std::filesystem::path& dir);

// Training-facing view: observations normalized channel-wise with the
// manifest statistics, targets left in uK.
struct LoadedInstance {
    int id = 0;
    std::vector<double> x;  // channels x npix, normalized
    std::vector<double> y;  // npix, raw uK
};

struct LoadedDataset {
    DatasetManifest manifest;
    healpix::Resolution res{1};
    int channels = 9;
    std::vector<LoadedInstance> train, validation, test;

    const std::vector<LoadedInstance>& split(const std::string& name) const;
};

LoadedDataset load_dataset(const std::filesystem::path& dir);

std::string instance_filename(int id);

}  // namespace cmbclean::sim
