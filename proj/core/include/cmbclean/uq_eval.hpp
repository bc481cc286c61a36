#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cmbclean/harmonics.hpp"
#include "cmbclean/unet.hpp"

namespace cmbclean::uq {

using healpix::MaskMap;
using healpix::SkyMap;

// Monte Carlo prediction summary. total = epistemic + aleatoric per pixel by
// construction; epistemic is the variance across the T sampled means,
// aleatoric the average predicted variance.
struct UQResult {
    SkyMap mean;       // uK
    SkyMap epistemic;  // uK^2
    SkyMap aleatoric;  // uK^2
    SkyMap total;      // uK^2
    int samples = 0;
};

// T stochastic forward passes with fresh dropout masks (batch norm stays in
// eval mode); requires T >= 2. x is one normalized observation (channels x
// npix). Deterministic given (model state, seed).
UQResult mc_predict(nn::GraphUNet& model, const std::vector<double>& x, int T,
                    std::uint64_t seed);

double rmse(const SkyMap& pred, const SkyMap& truth, const MaskMap& mask);
double pearson_r(const SkyMap& pred, const SkyMap& truth, const MaskMap& mask);

struct CoverageTable {
    double one_sigma = 0.0;
    double two_sigma = 0.0;
    double three_sigma = 0.0;
    double error_uncertainty_corr = 0.0;  // Pearson r between |error| and sqrt(total)
};

CoverageTable calibration(const UQResult& uq, const SkyMap& truth, const MaskMap& mask);

// Fig.-style spectral comparison: per-l mean masked pseudo-spectra over a
// test set for the truth, the CNN prediction, the ILC prediction, and the
// two difference maps.
struct SpectralReport {
    int lmax = 0;
    std::vector<double> truth, cnn, ilc, diff_cnn, diff_ilc;

    void save_csv(const std::filesystem::path& path) const;
};

SpectralReport spectral_report(const std::vector<SkyMap>& cnn_preds,
                               const std::vector<SkyMap>& truths,
                               const std::vector<SkyMap>& ilc_preds, const MaskMap& mask,
                               int lmax);

struct EvalReport {
    double rmse_uk = 0.0;
    double pearson = 0.0;
    double cut_deg = 0.0;
    int n_instances = 0;
    std::optional<CoverageTable> coverage;  // present when uncertainty maps exist

    std::string to_json() const;
};

}  // namespace cmbclean::uq
