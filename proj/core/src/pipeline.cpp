#include "cmbclean/pipeline.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <map>

#include "cmbclean/ilc.hpp"
#include "cmbclean/map_io.hpp"

namespace cmbclean::pipeline {

namespace fs = std::filesystem;

namespace {

nn::UNetConfig architecture_from(const io::RunConfig& cfg, bool bayesian) {
    nn::UNetConfig arch;
    arch.in_channels = int(cfg.bands.size());
    arch.depth = cfg.depth;
    arch.widths = cfg.widths;
    arch.cheb_order = cfg.cheb_order;
    arch.nside = cfg.nside;
    arch.bayesian = bayesian;
    arch.dropout_temperature = cfg.dropout_temperature;
    arch.initial_dropout_p = cfg.initial_dropout_p;
    return arch;
}

void check_dataset_matches(const sim::LoadedDataset& data, const io::RunConfig& cfg) {
    if (data.manifest.nside != cfg.nside)
        throw std::invalid_argument("dataset nside " + std::to_string(data.manifest.nside) +
                                    " does not match config nside " + std::to_string(cfg.nside));
    if (data.channels != int(cfg.bands.size()))
        throw std::invalid_argument("dataset channel count does not match config bands");
}

// Raw (unnormalized) observation and target straight from the instance file.
std::pair<healpix::SkyMap, healpix::SkyMap> load_raw_instance(const fs::path& dir, int id,
                                                              int channels) {
    const auto loaded = io::load_hmap(dir / sim::instance_filename(id));
    if (loaded.map.channels != channels + 1)
        throw std::invalid_argument("instance " + std::to_string(id) +
                                    " has unexpected channel count");
    healpix::SkyMap obs = healpix::SkyMap::zeros(loaded.map.res, channels);
    healpix::SkyMap target = healpix::SkyMap::zeros(loaded.map.res, 1);
    const auto npix = loaded.map.res.npix();
    for (int c = 0; c < channels; ++c)
        for (healpix::pix_t p = 0; p < npix; ++p) obs.at(c, p) = loaded.map.at(c, p);
    for (healpix::pix_t p = 0; p < npix; ++p)
        target.values[std::size_t(p)] = loaded.map.at(channels, p);
    return {std::move(obs), std::move(target)};
}

std::string pred_filename(int id, const std::string& kind) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "pred_%04d_%s.hmap", id, kind.c_str());
    return buf;
}

std::string ilc_filename(int id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "ilc_%04d.hmap", id);
    return buf;
}

const std::vector<int>& split_ids(const sim::DatasetManifest& manifest, const std::string& split) {
    if (split == "train") return manifest.train_ids;
    if (split == "validation") return manifest.validation_ids;
    if (split == "test") return manifest.test_ids;
    throw std::invalid_argument("unknown split '" + split + "' (train|validation|test)");
}

}  // namespace

void run_simulate(const io::RunConfig& config, int n, std::uint64_t seed, const fs::path& out_dir,
                  bool force) {
    if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !force)
        throw std::invalid_argument("output directory " + out_dir.string() +
                                    " is not empty (use --force to overwrite)");
    auto ds = sim::build_dataset(config, n, seed);
    sim::write_dataset(ds, out_dir);
}

train::TrainResult run_train(const std::string& stage, const fs::path& data_dir,
                             const io::RunConfig& config, const fs::path& out_dir,
                             const std::optional<fs::path>& init_checkpoint, std::uint64_t seed,
                             const std::optional<fs::path>& resume_checkpoint) {
    auto data = sim::load_dataset(data_dir);
    check_dataset_matches(data, config);

    std::optional<io::Checkpoint> resume;
    if (resume_checkpoint) resume = io::Checkpoint::load(*resume_checkpoint);

    if (stage == "deterministic") {
        nn::GraphUNet model(architecture_from(config, false), seed);
        return train::train_deterministic(model, data, config, seed, out_dir,
                                          resume ? &*resume : nullptr);
    }
    if (stage == "bayesian") {
        if (!init_checkpoint && !resume_checkpoint)
            throw std::invalid_argument(
                "the bayesian stage requires --init with a selected checkpoint from the "
                "deterministic pre-training stage");
        nn::GraphUNet model(architecture_from(config, true), seed);
        if (!resume) {
            auto det = io::Checkpoint::load(*init_checkpoint);
            if (det.stage != "deterministic")
                throw std::invalid_argument("--init checkpoint is from stage '" + det.stage +
                                            "'; bayesian training must start from the "
                                            "deterministic pre-training stage");
            train::transfer_weights(det, model, seed);
        }
        return train::train_bayesian(model, data, config, seed, out_dir,
                                     resume ? &*resume : nullptr);
    }
    throw std::invalid_argument("unknown stage '" + stage + "' (deterministic|bayesian)");
}

void run_predict(const fs::path& model_checkpoint, const fs::path& data_dir,
                 const std::string& split, int T, std::uint64_t seed, const fs::path& out_dir) {
    if (T < 2) throw std::invalid_argument("predict: --T must be >= 2 (Monte Carlo sampling)");
    auto ckpt = io::Checkpoint::load(model_checkpoint);
    if (ckpt.stage != "bayesian")
        throw std::invalid_argument("predict requires a bayesian checkpoint, got stage '" +
                                    ckpt.stage + "'");
    const auto cfg = io::RunConfig::from_json_text(ckpt.config_echo);
    auto data = sim::load_dataset(data_dir);
    check_dataset_matches(data, cfg);

    nn::GraphUNet model(architecture_from(cfg, true), ckpt.master_seed);
    train::restore_model(ckpt, model);

    fs::create_directories(out_dir);
    for (const auto& inst : data.split(split)) {
        const auto uq_result =
            uq::mc_predict(model, inst.x, T, derive_seed(seed, std::uint64_t(inst.id)));
        io::save_hmap(uq_result.mean, "uK_CMB", out_dir / pred_filename(inst.id, "mean"));
        io::save_hmap(uq_result.epistemic, "uK^2", out_dir / pred_filename(inst.id, "epistemic"));
        io::save_hmap(uq_result.aleatoric, "uK^2", out_dir / pred_filename(inst.id, "aleatoric"));
        io::save_hmap(uq_result.total, "uK^2", out_dir / pred_filename(inst.id, "total"));
    }
}

void run_ilc(const fs::path& data_dir, const std::string& split, const fs::path& out_dir,
             std::optional<double> covariance_mask_cut) {
    const auto manifest = sim::DatasetManifest::load(data_dir / "manifest.json");
    const healpix::Resolution res(manifest.nside);
    std::optional<healpix::MaskMap> cov_mask;
    if (covariance_mask_cut) cov_mask = healpix::latitude_mask(res, *covariance_mask_cut);

    fs::create_directories(out_dir);
    nlohmann::json weights_json = nlohmann::json::object();
    for (int id : split_ids(manifest, split)) {
        auto [obs, target] = load_raw_instance(data_dir, id, manifest.channels);
        const auto weights = ilc::ilc_weights(obs, cov_mask ? &*cov_mask : nullptr);
        io::save_hmap(ilc::ilc_clean(obs, weights), "uK_CMB", out_dir / ilc_filename(id));
        weights_json[sim::instance_filename(id)] = weights.w;
    }
    std::ofstream out(out_dir / "ilc_weights.json");
    if (!out) throw std::runtime_error("ilc: cannot write weights file");
    out << weights_json.dump(2) << "\n";
}

uq::EvalReport run_evaluate(const fs::path& pred_dir, const fs::path& data_dir,
                            const std::string& split, double cut_deg, const fs::path& out_json) {
    const auto manifest = sim::DatasetManifest::load(data_dir / "manifest.json");
    const healpix::Resolution res(manifest.nside);
    const auto mask = healpix::latitude_mask(res, cut_deg);
    const auto& ids = split_ids(manifest, split);
    if (ids.empty()) throw std::invalid_argument("evaluate: split '" + split + "' is empty");

    // Pooled over all kept pixels of all instances.
    double sq_err = 0.0;
    double sum_p = 0.0, sum_t = 0.0, sum_pp = 0.0, sum_tt = 0.0, sum_pt = 0.0;
    double cov1 = 0.0, cov2 = 0.0, cov3 = 0.0;
    double sum_e = 0.0, sum_s = 0.0, sum_ee = 0.0, sum_ss = 0.0, sum_es = 0.0;
    std::int64_t count = 0;
    bool have_uncertainty = true;

    for (int id : ids) {
        auto [obs, truth] = load_raw_instance(data_dir, id, manifest.channels);
        const fs::path mean_path = pred_dir / pred_filename(id, "mean");
        const fs::path ilc_path = pred_dir / ilc_filename(id);
        fs::path used;
        if (fs::exists(mean_path))
            used = mean_path;
        else if (fs::exists(ilc_path))
            used = ilc_path;
        else
            throw std::invalid_argument("evaluate: no prediction for instance " +
                                        std::to_string(id) + " in " + pred_dir.string());
        const auto pred = io::load_hmap(used).map;
        if (!(pred.res == res) || pred.channels != 1)
            throw std::invalid_argument("evaluate: prediction for instance " + std::to_string(id) +
                                        " has the wrong shape");

        const fs::path total_path = pred_dir / pred_filename(id, "total");
        std::optional<healpix::SkyMap> total;
        if (fs::exists(total_path))
            total = io::load_hmap(total_path).map;
        else
            have_uncertainty = false;

        for (healpix::pix_t p = 0; p < res.npix(); ++p) {
            if (!mask.keep[std::size_t(p)]) continue;
            const double pv = pred.values[std::size_t(p)];
            const double tv = truth.values[std::size_t(p)];
            const double d = pv - tv;
            sq_err += d * d;
            sum_p += pv;
            sum_t += tv;
            sum_pp += pv * pv;
            sum_tt += tv * tv;
            sum_pt += pv * tv;
            ++count;
            if (total) {
                const double sigma = std::sqrt(total->values[std::size_t(p)]);
                const double err = std::abs(d);
                cov1 += err <= sigma;
                cov2 += err <= 2.0 * sigma;
                cov3 += err <= 3.0 * sigma;
                sum_e += err;
                sum_s += sigma;
                sum_ee += err * err;
                sum_ss += sigma * sigma;
                sum_es += err * sigma;
            }
        }
    }
    if (count == 0) throw std::invalid_argument("evaluate: mask keeps no pixels");

    uq::EvalReport report;
    report.cut_deg = cut_deg;
    report.n_instances = int(ids.size());
    report.rmse_uk = std::sqrt(sq_err / double(count));
    const double n = double(count);
    const double var_p = sum_pp - sum_p * sum_p / n;
    const double var_t = sum_tt - sum_t * sum_t / n;
    if (!(var_p > 0.0) || !(var_t > 0.0))
        throw std::invalid_argument("evaluate: zero variance over the kept pixels");
    report.pearson = (sum_pt - sum_p * sum_t / n) / std::sqrt(var_p * var_t);

    if (have_uncertainty) {
        uq::CoverageTable table;
        table.one_sigma = cov1 / n;
        table.two_sigma = cov2 / n;
        table.three_sigma = cov3 / n;
        const double var_e = sum_ee - sum_e * sum_e / n;
        const double var_s = sum_ss - sum_s * sum_s / n;
        table.error_uncertainty_corr =
            (var_e > 0.0 && var_s > 0.0)
                ? (sum_es - sum_e * sum_s / n) / std::sqrt(var_e * var_s)
                : 0.0;
        report.coverage = table;
    }

    std::ofstream out(out_json);
    if (!out) throw std::runtime_error("evaluate: cannot write " + out_json.string());
    out << report.to_json() << "\n";
    return report;
}

void run_spectrum(const fs::path& pred_dir, const fs::path& data_dir,
                  const std::optional<fs::path>& ilc_dir, const std::string& split, double cut_deg,
                  int lmax, const fs::path& out_csv) {
    const auto manifest = sim::DatasetManifest::load(data_dir / "manifest.json");
    const healpix::Resolution res(manifest.nside);
    if (lmax <= 0) lmax = int(2 * manifest.nside);
    const auto mask = healpix::latitude_mask(res, cut_deg);

    std::vector<healpix::SkyMap> truths, preds, ilcs;
    for (int id : split_ids(manifest, split)) {
        auto [obs, truth] = load_raw_instance(data_dir, id, manifest.channels);
        truths.push_back(std::move(truth));
        const fs::path mean_path = pred_dir / pred_filename(id, "mean");
        if (!fs::exists(mean_path))
            throw std::invalid_argument("spectrum: missing prediction for instance " +
                                        std::to_string(id));
        preds.push_back(io::load_hmap(mean_path).map);
        if (ilc_dir) {
            const fs::path ip = *ilc_dir / ilc_filename(id);
            if (!fs::exists(ip))
                throw std::invalid_argument("spectrum: missing ILC map for instance " +
                                            std::to_string(id));
            ilcs.push_back(io::load_hmap(ip).map);
        }
    }
    const auto report = uq::spectral_report(preds, truths, ilcs, mask, lmax);
    report.save_csv(out_csv);
}

}  // namespace cmbclean::pipeline
