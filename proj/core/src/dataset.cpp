#include "cmbclean/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "cmbclean/map_io.hpp"

namespace cmbclean::sim {

using nlohmann::json;

std::vector<int> DatasetManifest::all_ids() const {
    std::vector<int> ids;
    ids.reserve(std::size_t(n));
    ids.insert(ids.end(), train_ids.begin(), train_ids.end());
    ids.insert(ids.end(), validation_ids.begin(), validation_ids.end());
    ids.insert(ids.end(), test_ids.begin(), test_ids.end());
    std::sort(ids.begin(), ids.end());
    return ids;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
    json root;
    root["format"] = "cmbclean-dataset-v1";
    root["n"] = n;
    root["nside"] = nside;
    root["channels"] = channels;
    root["splits"] = {{"train", train_ids}, {"validation", validation_ids}, {"test", test_ids}};
    root["normalization"] = {{"mean", channel_mean}, {"std", channel_std}};
    root["master_seed"] = master_seed;
    root["config_hash"] = config_hash;
    root["config"] = json::parse(config_echo);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("manifest: cannot write " + path.string());
    out << root.dump(2) << "\n";
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("manifest: cannot open " + path.string());
    json root = json::parse(in);
    if (root.at("format").get<std::string>() != "cmbclean-dataset-v1")
        throw std::runtime_error("manifest: unknown format tag");
    DatasetManifest m;
    m.n = root.at("n").get<int>();
    m.nside = root.at("nside").get<std::int64_t>();
    m.channels = root.at("channels").get<int>();
    m.train_ids = root.at("splits").at("train").get<std::vector<int>>();
    m.validation_ids = root.at("splits").at("validation").get<std::vector<int>>();
    m.test_ids = root.at("splits").at("test").get<std::vector<int>>();
    m.channel_mean = root.at("normalization").at("mean").get<std::vector<double>>();
    m.channel_std = root.at("normalization").at("std").get<std::vector<double>>();
    m.master_seed = root.at("master_seed").get<std::uint64_t>();
    m.config_hash = root.at("config_hash").get<std::uint64_t>();
    m.config_echo = root.at("config").dump(2);
    return m;
}

SplitIds split_80_10_10(int n, std::uint64_t master_seed) {
    std::vector<int> perm(std::size_t(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 engine(derive_seed(master_seed, stream::split));
    std::shuffle(perm.begin(), perm.end(), engine);

    const int n_train = n * 8 / 10;
    const int n_val = n * 9 / 10 - n_train;
    SplitIds out;
    out.train.assign(perm.begin(), perm.begin() + n_train);
    out.validation.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
    out.test.assign(perm.begin() + n_train + n_val, perm.end());
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.validation.begin(), out.validation.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

GeneratedDataset build_dataset(const io::RunConfig& config, int n, std::uint64_t master_seed) {
    if (n < 10)
        throw std::invalid_argument("build_dataset: need at least 10 instances for an 80/10/10 "
                                    "split, got " + std::to_string(n));
    SkySimulator simulator(config, master_seed);

    GeneratedDataset ds;
    ds.instances.reserve(std::size_t(n));
    for (int id = 0; id < n; ++id) ds.instances.push_back(simulator.make_instance(id));

    const auto splits = split_80_10_10(n, master_seed);
    auto& m = ds.manifest;
    m.n = n;
    m.nside = config.nside;
    m.channels = int(config.bands.size());
    m.train_ids = splits.train;
    m.validation_ids = splits.validation;
    m.test_ids = splits.test;
    m.master_seed = master_seed;
    m.config_hash = config.config_hash();
    m.config_echo = config.canonical_json();

    // Channel-wise normalization from the training split only.
    const auto npix = healpix::Resolution(config.nside).npix();
    m.channel_mean.assign(std::size_t(m.channels), 0.0);
    m.channel_std.assign(std::size_t(m.channels), 0.0);
    const double count = double(splits.train.size()) * double(npix);
    for (int id : splits.train)
        for (int c = 0; c < m.channels; ++c)
            for (healpix::pix_t p = 0; p < npix; ++p)
                m.channel_mean[std::size_t(c)] += ds.instances[std::size_t(id)].observation.at(c, p);
    for (auto& v : m.channel_mean) v /= count;
    for (int id : splits.train)
        for (int c = 0; c < m.channels; ++c)
            for (healpix::pix_t p = 0; p < npix; ++p) {
                const double d = ds.instances[std::size_t(id)].observation.at(c, p) -
                                 m.channel_mean[std::size_t(c)];
                m.channel_std[std::size_t(c)] += d * d;
            }
    for (auto& v : m.channel_std) {
        v = std::sqrt(v / count);
        if (!(v > 0.0))
            throw std::runtime_error("build_dataset: degenerate channel variance");
    }
    return ds;
}

std::string instance_filename(int id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "inst_%04d.hmap", id);
    return buf;
}

void write_dataset(const GeneratedDataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    ds.manifest.save(dir / "manifest.json");
    const auto npix = healpix::Resolution(ds.manifest.nside).npix();
    for (const auto& inst : ds.instances) {
        healpix::SkyMap packed =
            healpix::SkyMap::zeros(inst.observation.res, ds.manifest.channels + 1);
        for (int c = 0; c < ds.manifest.channels; ++c)
            for (healpix::pix_t p = 0; p < npix; ++p) packed.at(c, p) = inst.observation.at(c, p);
        for (healpix::pix_t p = 0; p < npix; ++p)
            packed.at(ds.manifest.channels, p) = inst.target.values[std::size_t(p)];
        io::save_hmap(packed, "uK_CMB", dir / instance_filename(inst.id));
    }
}

const std::vector<LoadedInstance>& LoadedDataset::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "validation") return validation;
    if (name == "test") return test;
    throw std::invalid_argument("unknown split '" + name + "'");
}

LoadedDataset load_dataset(const std::filesystem::path& dir) {
    LoadedDataset ds;
    ds.manifest = DatasetManifest::load(dir / "manifest.json");
    ds.res = healpix::Resolution(ds.manifest.nside);
    ds.channels = ds.manifest.channels;
    const auto npix = ds.res.npix();

    auto load_split = [&](const std::vector<int>& ids, std::vector<LoadedInstance>& out) {
        out.reserve(ids.size());
        for (int id : ids) {
            auto loaded = io::load_hmap(dir / instance_filename(id));
            if (!(loaded.map.res == ds.res) || loaded.map.channels != ds.channels + 1)
                throw std::runtime_error("dataset: instance " + std::to_string(id) +
                                         " disagrees with the manifest header");
            LoadedInstance inst;
            inst.id = id;
            inst.x.resize(std::size_t(ds.channels) * npix);
            inst.y.resize(std::size_t(npix));
            for (int c = 0; c < ds.channels; ++c) {
                const double mean = ds.manifest.channel_mean[std::size_t(c)];
                const double inv_std = 1.0 / ds.manifest.channel_std[std::size_t(c)];
                for (healpix::pix_t p = 0; p < npix; ++p)
                    inst.x[std::size_t(c) * npix + std::size_t(p)] =
                        (loaded.map.at(c, p) - mean) * inv_std;
            }
            for (healpix::pix_t p = 0; p < npix; ++p)
                inst.y[std::size_t(p)] = loaded.map.at(ds.channels, p);
            out.push_back(std::move(inst));
        }
    };
    load_split(ds.manifest.train_ids, ds.train);
    load_split(ds.manifest.validation_ids, ds.validation);
    load_split(ds.manifest.test_ids, ds.test);
    return ds;
}

}  // namespace cmbclean::sim
