#include "cmbclean/skysim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cmbclean::sim {

namespace {
constexpr double kPi = std::numbers::pi;
}

SkyMap simulate_cmb(const PowerSpectrum& spec, Resolution res, const Beam& beam, Rng& rng) {
    auto alm = harmonics::sample_alm(spec, rng);
    return harmonics::synthesize(harmonics::apply_beam(alm, beam), res);
}

SkyMap noise_realization(const io::BandConfig& band, Resolution res, const SkyMap& modulation,
                         Rng& rng) {
    if (!(modulation.res == res) || modulation.channels != 1)
        throw std::invalid_argument("noise_realization: modulation map mismatch");
    for (double m : modulation.values)
        if (!(m > 0.0))
            throw std::invalid_argument("noise_realization: modulation must be strictly positive");
    SkyMap noise = SkyMap::zeros(res, 1);
    for (healpix::pix_t p = 0; p < res.npix(); ++p)
        noise.values[std::size_t(p)] =
            band.noise_sigma_uk * modulation.values[std::size_t(p)] * rng.normal();
    return noise;
}

SkyMap default_noise_modulation(Resolution res, double polar_boost) {
    SkyMap mod = SkyMap::zeros(res, 1);
    for (healpix::pix_t p = 0; p < res.npix(); ++p)
        mod.values[std::size_t(p)] = 1.0 + polar_boost * std::abs(healpix::pixel_z(res, p));
    return mod;
}

SkyMap SkySimulator::large_scale_field(Rng& rng) const {
    PowerSpectrum flat;
    flat.cl.assign(std::size_t(config_.foreground_pattern_lmax) + 1, 1.0);
    flat.cl[0] = 0.0;
    SkyMap field = harmonics::synthesize(harmonics::sample_alm(flat, rng), res_);
    double mean = 0.0;
    for (double v : field.values) mean += v;
    mean /= double(field.values.size());
    double var = 0.0;
    for (double v : field.values) var += (v - mean) * (v - mean);
    var /= double(field.values.size());
    const double inv_std = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
    for (double& v : field.values) v = (v - mean) * inv_std;
    return field;
}

SkySimulator::SkySimulator(io::RunConfig config, std::uint64_t master_seed)
    : config_(std::move(config)),
      res_(config_.nside),
      master_seed_(master_seed),
      beam_{config_.beam_fwhm_arcmin},
      foreground_template_(SkyMap::zeros(res_, 1)),
      noise_modulation_(SkyMap::zeros(res_, 1)) {
    config_.validate();

    if (config_.spectrum_file.empty()) {
        spectrum_ = harmonics::placeholder_spectrum(config_.simulation_lmax(),
                                                    config_.spectrum_plateau_uk2);
    } else {
        spectrum_ = harmonics::load_spectrum_csv(config_.spectrum_file);
        if (spectrum_.lmax() > config_.simulation_lmax())
            spectrum_.cl.resize(std::size_t(config_.simulation_lmax()) + 1);
    }

    // Fixed template: equatorial band profile times a large-scale log-normal
    // pattern, scaled per band by the frequency power law.
    Rng pattern_rng(derive_seed(master_seed_, stream::foreground_pattern));
    SkyMap pattern = large_scale_field(pattern_rng);
    foreground_template_ = SkyMap::zeros(res_, int(config_.bands.size()));
    for (healpix::pix_t p = 0; p < res_.npix(); ++p) {
        const auto [theta, phi] = healpix::pixel_center(res_, p);
        const double lat_deg = std::abs(90.0 - theta * 180.0 / kPi);
        const double band_profile = config_.foreground_amplitude_uk *
                                    std::exp(-(lat_deg / config_.foreground_width_deg) *
                                             (lat_deg / config_.foreground_width_deg));
        const double shape = band_profile * std::exp(config_.foreground_pattern_scale *
                                                     pattern.values[std::size_t(p)]);
        for (std::size_t b = 0; b < config_.bands.size(); ++b) {
            const double g = std::pow(config_.bands[b].freq_ghz / config_.foreground_reference_ghz,
                                      config_.foreground_spectral_index);
            foreground_template_.at(int(b), p) = shape * g;
        }
    }

    noise_modulation_ = default_noise_modulation(res_, config_.noise_polar_boost);
}

SkyMap SkySimulator::cmb_for(int id) const {
    Rng rng(derive_seed(master_seed_, stream::cmb, std::uint64_t(id)));
    return simulate_cmb(spectrum_, res_, beam_, rng);
}

SkyMap SkySimulator::foreground_for(int id) const {
    Rng rng(derive_seed(master_seed_, stream::foreground_modulation, std::uint64_t(id)));
    SkyMap modulation = large_scale_field(rng);
    SkyMap fg = foreground_template_;
    for (int b = 0; b < fg.channels; ++b)
        for (healpix::pix_t p = 0; p < res_.npix(); ++p)
            fg.at(b, p) *= 1.0 + config_.foreground_modulation * modulation.values[std::size_t(p)];
    return fg;
}

SkyMap SkySimulator::noise_for(int id) const {
    SkyMap noise = SkyMap::zeros(res_, int(config_.bands.size()));
    for (std::size_t b = 0; b < config_.bands.size(); ++b) {
        Rng rng(derive_seed(master_seed_, stream::noise, std::uint64_t(id), b));
        SkyMap band_noise = noise_realization(config_.bands[b], res_, noise_modulation_, rng);
        for (healpix::pix_t p = 0; p < res_.npix(); ++p)
            noise.at(int(b), p) = band_noise.values[std::size_t(p)];
    }
    return noise;
}

SimulationInstance SkySimulator::make_instance(int id) const {
    SimulationInstance inst;
    inst.id = id;
    inst.cmb_seed = derive_seed(master_seed_, stream::cmb, std::uint64_t(id));
    inst.modulation_seed = derive_seed(master_seed_, stream::foreground_modulation, std::uint64_t(id));
    inst.noise_seed = derive_seed(master_seed_, stream::noise, std::uint64_t(id));

    inst.target = cmb_for(id);
    const SkyMap fg = foreground_for(id);
    const SkyMap noise = noise_for(id);
    inst.observation = SkyMap::zeros(res_, int(config_.bands.size()));
    for (int b = 0; b < inst.observation.channels; ++b)
        for (healpix::pix_t p = 0; p < res_.npix(); ++p)
            inst.observation.at(b, p) =
                inst.target.values[std::size_t(p)] + fg.at(b, p) + noise.at(b, p);
    return inst;
}

}  // namespace cmbclean::sim
