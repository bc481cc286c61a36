#pragma once

#include <cstdint>

#include "cmbclean/harmonics.hpp"
#include "cmbclean/run_config.hpp"

namespace cmbclean::sim {

using harmonics::Beam;
using harmonics::PowerSpectrum;
using healpix::Resolution;
using healpix::SkyMap;

// One paired training example: 9-band noisy observation and the clean
// (beam-smoothed) CMB target, plus the seeds that regenerate every component.
struct SimulationInstance {
    int id = 0;
    SkyMap observation;  // 9 channels, raw uK
    SkyMap target;       // 1 channel, beam-smoothed CMB, uK
    std::uint64_t cmb_seed = 0;
    std::uint64_t noise_seed = 0;
    std::uint64_t modulation_seed = 0;
};

// sample_alm -> apply_beam -> synthesize. The result enters every frequency
// channel identically and doubles as the regression target.
SkyMap simulate_cmb(const PowerSpectrum& spec, Resolution res, const Beam& beam, Rng& rng);

// Per-band noise N(p) = sigma_band * m(p) * z_p with i.i.d. standard normal z.
SkyMap noise_realization(const io::BandConfig& band, Resolution res, const SkyMap& modulation,
                         Rng& rng);

// Default spatial noise modulation m(p) = 1 + boost * |cos theta_p|.
SkyMap default_noise_modulation(Resolution res, double polar_boost);

// Deterministic generator for a whole dataset: the foreground template and
// noise modulation are fixed per (config, master seed); each instance id maps
// to derived seeds for its CMB draw, foreground modulation, and noise.
class SkySimulator {
  public:
    SkySimulator(io::RunConfig config, std::uint64_t master_seed);

    const io::RunConfig& config() const { return config_; }
    Resolution resolution() const { return res_; }
    std::uint64_t master_seed() const { return master_seed_; }
    const PowerSpectrum& spectrum() const { return spectrum_; }

    // 9-channel equatorial-band foreground template A(theta) * pattern * g(nu).
    const SkyMap& foreground_template() const { return foreground_template_; }

    SkyMap cmb_for(int id) const;
    SkyMap foreground_for(int id) const;  // template with per-instance modulation
    SkyMap noise_for(int id) const;
    SimulationInstance make_instance(int id) const;

  private:
    SkyMap large_scale_field(Rng& rng) const;  // band-limited, standardized

    io::RunConfig config_;
    Resolution res_;
    std::uint64_t master_seed_;
    PowerSpectrum spectrum_;
    Beam beam_;
    SkyMap foreground_template_;
    SkyMap noise_modulation_;
};

}  // namespace cmbclean::sim
