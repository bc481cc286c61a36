#include "cmbclean/uq_eval.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace cmbclean::uq {

UQResult mc_predict(nn::GraphUNet& model, const std::vector<double>& x, int T,
                    std::uint64_t seed) {
    if (T < 2) throw std::invalid_argument("mc_predict: T must be >= 2");
    if (!model.config().bayesian)
        throw std::invalid_argument("mc_predict: model must be Bayesian");
    const healpix::Resolution res(model.config().nside);
    const auto npix = res.npix();
    if (std::int64_t(x.size()) != std::int64_t(model.config().in_channels) * npix)
        throw std::invalid_argument("mc_predict: input length mismatch");

    model.set_bn_train(false);
    model.set_dropout_stochastic(true);
    const ad::Tensor input =
        ad::Tensor::from_values({1, model.config().in_channels, int(npix)}, x);

    // Sample moments accumulated relative to the first draw: with identical
    // samples the shifted sums are exactly zero, so the epistemic term
    // vanishes exactly rather than up to roundoff.
    std::vector<double> offset(std::size_t(npix), 0.0);
    std::vector<double> sum_shifted(std::size_t(npix), 0.0);
    std::vector<double> sum_shifted_sq(std::size_t(npix), 0.0);
    std::vector<double> sum_var(std::size_t(npix), 0.0);

    for (int t = 0; t < T; ++t) {
        Rng rng(derive_seed(seed, stream::mc_sample, std::uint64_t(t)));
        auto out = model.forward(nullptr, input, &rng);
        const auto& mean_v = out.mean.values();
        const auto& logvar_v = out.log_variance->values();
        for (healpix::pix_t p = 0; p < npix; ++p) {
            const auto i = std::size_t(p);
            if (t == 0) offset[i] = mean_v[i];
            const double shifted = mean_v[i] - offset[i];
            sum_shifted[i] += shifted;
            sum_shifted_sq[i] += shifted * shifted;
            sum_var[i] += std::exp(logvar_v[i]);
        }
    }

    UQResult result{healpix::SkyMap::zeros(res, 1), healpix::SkyMap::zeros(res, 1),
                    healpix::SkyMap::zeros(res, 1), healpix::SkyMap::zeros(res, 1), T};
    const double inv_t = 1.0 / double(T);
    for (healpix::pix_t p = 0; p < npix; ++p) {
        const auto i = std::size_t(p);
        const double m1 = sum_shifted[i] * inv_t;
        double epi = sum_shifted_sq[i] * inv_t - m1 * m1;
        if (epi < 0.0) {
            if (epi < -1e-12 * std::max(1.0, sum_shifted_sq[i] * inv_t))
                throw std::runtime_error("mc_predict: epistemic variance below numerical floor");
            epi = 0.0;
        }
        const double ale = sum_var[i] * inv_t;
        result.mean.values()[i] = offset[i] + m1;
        result.epistemic.values()[i] = epi;
        result.aleatoric.values()[i] = ale;
        result.total.values()[i] = epi + ale;
    }
    return result;
}

namespace {

void check_eval_inputs(const SkyMap& pred, const SkyMap& truth, const MaskMap& mask) {
    if (!(pred.res == truth.res) || !(pred.res == mask.res))
        throw std::invalid_argument("evaluation: resolution mismatch");
    if (pred.channels != 1 || truth.channels != 1)
        throw std::invalid_argument("evaluation: single-channel maps required");
}

}  // namespace

double rmse(const SkyMap& pred, const SkyMap& truth, const MaskMap& mask) {
    check_eval_inputs(pred, truth, mask);
    double acc = 0.0;
    std::int64_t count = 0;
    for (healpix::pix_t p = 0; p < pred.res.npix(); ++p) {
        if (!mask.keep[std::size_t(p)]) continue;
        const double d = pred.values[std::size_t(p)] - truth.values[std::size_t(p)];
        acc += d * d;
        ++count;
    }
    if (count == 0) throw std::invalid_argument("rmse: mask keeps no pixels");
    return std::sqrt(acc / double(count));
}

double pearson_r(const SkyMap& pred, const SkyMap& truth, const MaskMap& mask) {
    check_eval_inputs(pred, truth, mask);
    double sum_p = 0.0, sum_t = 0.0;
    std::int64_t count = 0;
    for (healpix::pix_t p = 0; p < pred.res.npix(); ++p) {
        if (!mask.keep[std::size_t(p)]) continue;
        sum_p += pred.values[std::size_t(p)];
        sum_t += truth.values[std::size_t(p)];
        ++count;
    }
    if (count < 2) throw std::invalid_argument("pearson_r: need at least 2 kept pixels");
    const double mean_p = sum_p / double(count), mean_t = sum_t / double(count);
    double spp = 0.0, stt = 0.0, spt = 0.0;
    for (healpix::pix_t p = 0; p < pred.res.npix(); ++p) {
        if (!mask.keep[std::size_t(p)]) continue;
        const double dp = pred.values[std::size_t(p)] - mean_p;
        const double dt = truth.values[std::size_t(p)] - mean_t;
        spp += dp * dp;
        stt += dt * dt;
        spt += dp * dt;
    }
    if (!(spp > 0.0) || !(stt > 0.0))
        throw std::invalid_argument("pearson_r: zero variance over the kept pixels");
    return spt / std::sqrt(spp * stt);
}

CoverageTable calibration(const UQResult& uq, const SkyMap& truth, const MaskMap& mask) {
    check_eval_inputs(uq.mean, truth, mask);
    CoverageTable table;
    std::int64_t count = 0;
    double sum_e = 0.0, sum_s = 0.0;
    std::vector<double> errors, sigmas;
    for (healpix::pix_t p = 0; p < truth.res.npix(); ++p) {
        if (!mask.keep[std::size_t(p)]) continue;
        const double err = std::abs(truth.values[std::size_t(p)] - uq.mean.values[std::size_t(p)]);
        const double sigma = std::sqrt(uq.total.values[std::size_t(p)]);
        errors.push_back(err);
        sigmas.push_back(sigma);
        table.one_sigma += err <= sigma;
        table.two_sigma += err <= 2.0 * sigma;
        table.three_sigma += err <= 3.0 * sigma;
        sum_e += err;
        sum_s += sigma;
        ++count;
    }
    if (count == 0) throw std::invalid_argument("calibration: mask keeps no pixels");
    table.one_sigma /= double(count);
    table.two_sigma /= double(count);
    table.three_sigma /= double(count);

    const double mean_e = sum_e / double(count), mean_s = sum_s / double(count);
    double see = 0.0, sss = 0.0, ses = 0.0;
    for (std::size_t i = 0; i < errors.size(); ++i) {
        see += (errors[i] - mean_e) * (errors[i] - mean_e);
        sss += (sigmas[i] - mean_s) * (sigmas[i] - mean_s);
        ses += (errors[i] - mean_e) * (sigmas[i] - mean_s);
    }
    table.error_uncertainty_corr =
        (see > 0.0 && sss > 0.0) ? ses / std::sqrt(see * sss) : 0.0;
    return table;
}

SpectralReport spectral_report(const std::vector<SkyMap>& cnn_preds,
                               const std::vector<SkyMap>& truths,
                               const std::vector<SkyMap>& ilc_preds, const MaskMap& mask,
                               int lmax) {
    if (cnn_preds.size() != truths.size() ||
        (!ilc_preds.empty() && ilc_preds.size() != truths.size()))
        throw std::invalid_argument("spectral_report: misaligned prediction and truth sets");
    if (truths.empty()) throw std::invalid_argument("spectral_report: empty test set");

    SpectralReport report;
    report.lmax = lmax;
    const std::size_t nl = std::size_t(lmax) + 1;
    report.truth.assign(nl, 0.0);
    report.cnn.assign(nl, 0.0);
    report.diff_cnn.assign(nl, 0.0);
    report.ilc.assign(nl, ilc_preds.empty() ? std::nan("") : 0.0);
    report.diff_ilc.assign(nl, ilc_preds.empty() ? std::nan("") : 0.0);

    const double inv_n = 1.0 / double(truths.size());
    for (std::size_t i = 0; i < truths.size(); ++i) {
        auto add = [&](const SkyMap& map, std::vector<double>& acc) {
            auto spec = harmonics::masked_spectrum(map, mask, lmax);
            for (std::size_t l = 0; l < nl; ++l) acc[l] += spec.cl[l] * inv_n;
        };
        add(truths[i], report.truth);
        add(cnn_preds[i], report.cnn);
        SkyMap diff = cnn_preds[i];
        for (std::size_t p = 0; p < diff.values.size(); ++p)
            diff.values[p] -= truths[i].values[p];
        add(diff, report.diff_cnn);
        if (!ilc_preds.empty()) {
            add(ilc_preds[i], report.ilc);
            SkyMap idiff = ilc_preds[i];
            for (std::size_t p = 0; p < idiff.values.size(); ++p)
                idiff.values[p] -= truths[i].values[p];
            add(idiff, report.diff_ilc);
        }
    }
    return report;
}

void SpectralReport::save_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("spectral report: cannot write " + path.string());
    out << "ell,truth,cnn,ilc,diff_cnn,diff_ilc\n";
    out.precision(17);
    for (int l = 0; l <= lmax; ++l) {
        const auto i = std::size_t(l);
        out << l << "," << truth[i] << "," << cnn[i] << "," << ilc[i] << "," << diff_cnn[i] << ","
            << diff_ilc[i] << "\n";
    }
}

std::string EvalReport::to_json() const {
    nlohmann::json root;
    root["rmse_uk"] = rmse_uk;
    root["pearson_r"] = pearson;
    root["cut_deg"] = cut_deg;
    root["n_instances"] = n_instances;
    if (coverage) {
        root["calibration"] = {{"coverage_1sigma", coverage->one_sigma},
                               {"coverage_2sigma", coverage->two_sigma},
                               {"coverage_3sigma", coverage->three_sigma},
                               {"error_uncertainty_corr", coverage->error_uncertainty_corr}};
    }
    return root.dump(2);
}

}  // namespace cmbclean::uq
