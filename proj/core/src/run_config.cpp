#include "cmbclean/run_config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <stdexcept>

#include "cmbclean/healpix.hpp"

namespace cmbclean::io {

using nlohmann::json;

namespace {

// Default per-band noise levels: decreasing toward the CMB channels and
// rising steeply for the dust-dominated high frequencies. Synthetic values,
// not calibrated Planck sensitivities.
const std::vector<BandConfig> kDefaultBands = {
    {30.0, 6.0},  {44.0, 5.0},  {70.0, 4.0},   {100.0, 3.0},  {143.0, 2.5},
    {217.0, 3.0}, {353.0, 5.0}, {545.0, 10.0}, {857.0, 30.0},
};

void require_known_keys(const json& obj, const std::string& section,
                        const std::set<std::string>& known) {
    for (const auto& [key, value] : obj.items())
        if (!known.count(key))
            throw std::invalid_argument("config: unknown key '" + section + "." + key + "'");
}

template <typename T>
void read_if(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

RunConfig RunConfig::defaults() {
    RunConfig cfg;
    cfg.bands = kDefaultBands;
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

RunConfig RunConfig::from_json_text(const std::string& text) {
    json root = json::parse(text);
    if (!root.is_object()) throw std::invalid_argument("config: top level must be an object");
    require_known_keys(root, "",
                       {"resolution", "bands", "simulation", "architecture", "training",
                        "inference", "evaluation"});

    RunConfig cfg = defaults();

    if (root.contains("resolution")) {
        const auto& sec = root["resolution"];
        require_known_keys(sec, "resolution", {"nside", "sim_lmax"});
        read_if(sec, "nside", cfg.nside);
        read_if(sec, "sim_lmax", cfg.sim_lmax);
    }
    if (root.contains("bands")) {
        const auto& sec = root["bands"];
        if (!sec.is_array()) throw std::invalid_argument("config: bands must be an array");
        cfg.bands.clear();
        for (const auto& b : sec) {
            require_known_keys(b, "bands[]", {"freq_ghz", "noise_sigma_uk"});
            BandConfig band;
            read_if(b, "freq_ghz", band.freq_ghz);
            read_if(b, "noise_sigma_uk", band.noise_sigma_uk);
            cfg.bands.push_back(band);
        }
    }
    if (root.contains("simulation")) {
        const auto& sec = root["simulation"];
        require_known_keys(sec, "simulation",
                           {"beam_fwhm_arcmin", "spectrum_file", "spectrum_plateau_uk2",
                            "foreground_amplitude_uk", "foreground_width_deg",
                            "foreground_spectral_index", "foreground_reference_ghz",
                            "foreground_pattern_scale", "foreground_pattern_lmax",
                            "foreground_modulation", "noise_polar_boost"});
        read_if(sec, "beam_fwhm_arcmin", cfg.beam_fwhm_arcmin);
        read_if(sec, "spectrum_file", cfg.spectrum_file);
        read_if(sec, "spectrum_plateau_uk2", cfg.spectrum_plateau_uk2);
        read_if(sec, "foreground_amplitude_uk", cfg.foreground_amplitude_uk);
        read_if(sec, "foreground_width_deg", cfg.foreground_width_deg);
        read_if(sec, "foreground_spectral_index", cfg.foreground_spectral_index);
        read_if(sec, "foreground_reference_ghz", cfg.foreground_reference_ghz);
        read_if(sec, "foreground_pattern_scale", cfg.foreground_pattern_scale);
        read_if(sec, "foreground_pattern_lmax", cfg.foreground_pattern_lmax);
        read_if(sec, "foreground_modulation", cfg.foreground_modulation);
        read_if(sec, "noise_polar_boost", cfg.noise_polar_boost);
    }
    if (root.contains("architecture")) {
        const auto& sec = root["architecture"];
        require_known_keys(sec, "architecture",
                           {"depth", "widths", "cheb_order", "dropout_temperature",
                            "initial_dropout_p"});
        read_if(sec, "depth", cfg.depth);
        read_if(sec, "widths", cfg.widths);
        read_if(sec, "cheb_order", cfg.cheb_order);
        read_if(sec, "dropout_temperature", cfg.dropout_temperature);
        read_if(sec, "initial_dropout_p", cfg.initial_dropout_p);
    }
    if (root.contains("training")) {
        const auto& sec = root["training"];
        require_known_keys(sec, "training",
                           {"deterministic_epochs", "bayesian_epochs", "lr_deterministic",
                            "lr_bayesian", "batch_deterministic", "batch_bayesian",
                            "length_scale", "selection_val_weight", "selection_train_weight",
                            "early_stop_patience"});
        read_if(sec, "deterministic_epochs", cfg.deterministic_epochs);
        read_if(sec, "bayesian_epochs", cfg.bayesian_epochs);
        read_if(sec, "lr_deterministic", cfg.lr_deterministic);
        read_if(sec, "lr_bayesian", cfg.lr_bayesian);
        read_if(sec, "batch_deterministic", cfg.batch_deterministic);
        read_if(sec, "batch_bayesian", cfg.batch_bayesian);
        read_if(sec, "length_scale", cfg.length_scale);
        read_if(sec, "selection_val_weight", cfg.selection_val_weight);
        read_if(sec, "selection_train_weight", cfg.selection_train_weight);
        read_if(sec, "early_stop_patience", cfg.early_stop_patience);
    }
    if (root.contains("inference")) {
        const auto& sec = root["inference"];
        require_known_keys(sec, "inference", {"mc_samples"});
        read_if(sec, "mc_samples", cfg.mc_samples);
    }
    if (root.contains("evaluation")) {
        const auto& sec = root["evaluation"];
        require_known_keys(sec, "evaluation", {"cut_deg", "eval_lmax"});
        read_if(sec, "cut_deg", cfg.cut_deg);
        read_if(sec, "eval_lmax", cfg.eval_lmax);
    }

    cfg.validate();
    return cfg;
}

void RunConfig::validate() const {
    healpix::Resolution res(nside);  // throws on invalid nside
    if (bands.size() != 9)
        throw std::invalid_argument("config: exactly 9 bands required, got " +
                                    std::to_string(bands.size()));
    for (std::size_t i = 1; i < bands.size(); ++i)
        if (!(bands[i].freq_ghz > bands[i - 1].freq_ghz))
            throw std::invalid_argument("config: bands must be in ascending frequency order");
    for (const auto& b : bands)
        if (b.noise_sigma_uk < 0.0)
            throw std::invalid_argument("config: noise_sigma_uk must be nonnegative");
    if (!(beam_fwhm_arcmin > 0.0))
        throw std::invalid_argument("config: beam_fwhm_arcmin must be positive");
    if (sim_lmax < 0 || sim_lmax > 3 * nside - 1)
        throw std::invalid_argument("config: sim_lmax must be in [0, 3*nside-1]");
    if (eval_lmax < 0 || eval_lmax > 2 * nside)
        throw std::invalid_argument("config: eval_lmax must be in [0, 2*nside]");
    if (!(cut_deg >= 0.0 && cut_deg < 90.0))
        throw std::invalid_argument("config: cut_deg must be in [0, 90)");
    if (mc_samples < 2) throw std::invalid_argument("config: mc_samples must be >= 2");
    if (depth < 1 || int(widths.size()) != depth)
        throw std::invalid_argument("config: widths length must equal depth");
    if (depth > res.order())
        throw std::invalid_argument("config: depth exceeds log2(nside)");
    if (deterministic_epochs < 1 || bayesian_epochs < 1)
        throw std::invalid_argument("config: epoch budgets must be >= 1");
    if (batch_deterministic < 1 || batch_bayesian < 1)
        throw std::invalid_argument("config: batch sizes must be >= 1");
    if (!(lr_deterministic > 0.0) || !(lr_bayesian > 0.0))
        throw std::invalid_argument("config: learning rates must be positive");
    if (!(length_scale > 0.0)) throw std::invalid_argument("config: length_scale must be positive");
    if (!(selection_val_weight >= 0.0 && selection_train_weight >= 0.0))
        throw std::invalid_argument("config: selection weights must be nonnegative");
    if (early_stop_patience < 1)
        throw std::invalid_argument("config: early_stop_patience must be >= 1");
    if (!(foreground_width_deg > 0.0))
        throw std::invalid_argument("config: foreground_width_deg must be positive");
    if (foreground_pattern_lmax < 2 || foreground_pattern_lmax > 3 * nside - 1)
        throw std::invalid_argument("config: foreground_pattern_lmax out of range");
    if (!(noise_polar_boost >= 0.0))
        throw std::invalid_argument("config: noise_polar_boost must be nonnegative");
}

int RunConfig::simulation_lmax() const { return sim_lmax > 0 ? sim_lmax : int(3 * nside - 1); }
int RunConfig::evaluation_lmax() const { return eval_lmax > 0 ? eval_lmax : int(2 * nside); }

std::string RunConfig::canonical_json() const {
    json root;
    root["resolution"] = {{"nside", nside}, {"sim_lmax", sim_lmax}};
    auto& bands_json = root["bands"] = json::array();
    for (const auto& b : bands)
        bands_json.push_back({{"freq_ghz", b.freq_ghz}, {"noise_sigma_uk", b.noise_sigma_uk}});
    root["simulation"] = {{"beam_fwhm_arcmin", beam_fwhm_arcmin},
                          {"spectrum_file", spectrum_file},
                          {"spectrum_plateau_uk2", spectrum_plateau_uk2},
                          {"foreground_amplitude_uk", foreground_amplitude_uk},
                          {"foreground_width_deg", foreground_width_deg},
                          {"foreground_spectral_index", foreground_spectral_index},
                          {"foreground_reference_ghz", foreground_reference_ghz},
                          {"foreground_pattern_scale", foreground_pattern_scale},
                          {"foreground_pattern_lmax", foreground_pattern_lmax},
                          {"foreground_modulation", foreground_modulation},
                          {"noise_polar_boost", noise_polar_boost}};
    root["architecture"] = {{"depth", depth},
                            {"widths", widths},
                            {"cheb_order", cheb_order},
                            {"dropout_temperature", dropout_temperature},
                            {"initial_dropout_p", initial_dropout_p}};
    root["training"] = {{"deterministic_epochs", deterministic_epochs},
                        {"bayesian_epochs", bayesian_epochs},
                        {"lr_deterministic", lr_deterministic},
                        {"lr_bayesian", lr_bayesian},
                        {"batch_deterministic", batch_deterministic},
                        {"batch_bayesian", batch_bayesian},
                        {"length_scale", length_scale},
                        {"selection_val_weight", selection_val_weight},
                        {"selection_train_weight", selection_train_weight},
                        {"early_stop_patience", early_stop_patience}};
    root["inference"] = {{"mc_samples", mc_samples}};
    root["evaluation"] = {{"cut_deg", cut_deg}, {"eval_lmax", eval_lmax}};
    return root.dump(2);
}

std::uint64_t RunConfig::config_hash() const {
    const std::string text = canonical_json();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

void RunConfig::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("config: cannot write " + path.string());
    out << canonical_json() << "\n";
}

std::vector<std::string> RunConfig::describe_defaults() {
    const RunConfig d = defaults();
    const json root = json::parse(d.canonical_json());
    std::vector<std::string> lines;
    for (const auto& [section, content] : root.items()) {
        if (content.is_object()) {
            for (const auto& [key, value] : content.items())
                lines.push_back(section + "." + key + " = " + value.dump());
        } else {
            lines.push_back(section + " = " + content.dump());
        }
    }
    return lines;
}

}  // namespace cmbclean::io
