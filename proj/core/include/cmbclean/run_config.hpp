#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cmbclean::io {

struct BandConfig {
    double freq_ghz = 0.0;
    double noise_sigma_uk = 0.0;  // base per-pixel noise level
};

// Run configuration, one JSON file with fixed sections. Unknown keys are
// rejected. Defaults reproduce the published setup wherever it states a
// value (nside 64, 9 Planck bands, FWHM 150', lr 1e-3/1e-5, batch 10/7,
// length scale 1e-4, selection weights 0.8/0.2, K=3, T via inference).
struct RunConfig {
    // resolution
    std::int64_t nside = 64;
    int sim_lmax = 0;  // 0 = 3*nside - 1

    // bands (fixed ascending frequency order)
    std::vector<BandConfig> bands;

    // simulation
    double beam_fwhm_arcmin = 150.0;
    std::string spectrum_file;          // empty = built-in placeholder
    double spectrum_plateau_uk2 = 1000.0;
    double foreground_amplitude_uk = 300.0;
    double foreground_width_deg = 15.0;
    double foreground_spectral_index = 2.0;
    double foreground_reference_ghz = 100.0;
    double foreground_pattern_scale = 0.3;
    int foreground_pattern_lmax = 8;
    double foreground_modulation = 0.1;  // per-instance multiplicative perturbation
    double noise_polar_boost = 0.5;      // modulation m(p) = 1 + boost*|cos theta|

    // architecture
    int depth = 3;
    std::vector<int> widths = {32, 64, 128};
    int cheb_order = 3;
    double dropout_temperature = 0.1;
    double initial_dropout_p = 1e-3;

    // training
    int deterministic_epochs = 190;
    int bayesian_epochs = 191;
    double lr_deterministic = 1e-3;
    double lr_bayesian = 1e-5;
    int batch_deterministic = 10;
    int batch_bayesian = 7;
    double length_scale = 1e-4;
    double selection_val_weight = 0.8;
    double selection_train_weight = 0.2;
    int early_stop_patience = 25;

    // inference
    int mc_samples = 50;

    // evaluation
    double cut_deg = 30.0;
    int eval_lmax = 0;  // 0 = 2*nside

    static RunConfig defaults();
    static RunConfig load(const std::filesystem::path& path);
    static RunConfig from_json_text(const std::string& text);

    void validate() const;
    int simulation_lmax() const;
    int evaluation_lmax() const;
    std::string canonical_json() const;
    std::uint64_t config_hash() const;  // FNV-1a over the canonical JSON
    void save(const std::filesystem::path& path) const;

    // "section.key = value" lines for --help output.
    static std::vector<std::string> describe_defaults();
};

}  // namespace cmbclean::io
