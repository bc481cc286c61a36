#include <CLI11.hpp>

#include <cstdio>
#include <optional>
#include <string>

#include "cmbclean/pipeline.hpp"

namespace {

std::string defaults_footer() {
    std::string footer =
        "Config file defaults (JSON, sections: resolution/bands/simulation/architecture/"
        "training/inference/evaluation; unknown keys rejected):\n";
    for (const auto& line : cmbclean::io::RunConfig::describe_defaults())
        footer += "  " + line + "\n";
    return footer;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cmbclean: CMB recovery from multi-frequency HEALPix maps with a Bayesian "
                 "graph U-Net, plus an ILC baseline and spectral evaluation"};
    app.require_subcommand(1);
    app.footer(defaults_footer());

    std::string config_path, data_dir, out_path, stage, split = "test", model_path, pred_dir;
    std::string init_path, resume_path, ilc_dir;
    int n = 0, mc_samples = 50, lmax = 0;
    std::uint64_t seed = 0;
    double cut_deg = 30.0;
    double ilc_mask_cut = -1.0;
    bool force = false;

    auto* simulate = app.add_subcommand("simulate", "Generate a paired observation/CMB dataset");
    simulate->add_option("--config", config_path, "Run configuration JSON")->required();
    simulate->add_option("--n", n, "Number of instances (>= 10)")->required();
    simulate->add_option("--seed", seed, "Master seed")->required();
    simulate->add_option("--out", out_path, "Output dataset directory")->required();
    simulate->add_flag("--force", force, "Overwrite a non-empty output directory");

    auto* train = app.add_subcommand("train", "Train the deterministic or Bayesian network");
    train->add_option("--stage", stage, "deterministic | bayesian")->required();
    train->add_option("--data", data_dir, "Dataset directory")->required();
    train->add_option("--config", config_path, "Run configuration JSON")->required();
    train->add_option("--out", out_path, "Run directory (checkpoints + history.csv)")->required();
    train->add_option("--init", init_path,
                      "Deterministic checkpoint to initialize the Bayesian stage");
    train->add_option("--seed", seed, "Master seed (default 0)");
    train->add_option("--resume", resume_path, "Checkpoint to resume this stage from");

    auto* predict = app.add_subcommand("predict", "Monte Carlo prediction with uncertainty maps");
    predict->add_option("--model", model_path, "Bayesian checkpoint")->required();
    predict->add_option("--data", data_dir, "Dataset directory")->required();
    predict->add_option("--split", split, "train | validation | test (default test)");
    predict->add_option("--T", mc_samples, "Monte Carlo samples (>= 2, default 50)");
    predict->add_option("--seed", seed, "Sampling seed (default 0)");
    predict->add_option("--out", out_path, "Output directory for prediction maps")->required();

    auto* ilc = app.add_subcommand("ilc", "Internal Linear Combination baseline");
    ilc->add_option("--data", data_dir, "Dataset directory")->required();
    ilc->add_option("--out", out_path, "Output directory for ILC maps")->required();
    ilc->add_option("--split", split, "train | validation | test (default test)");
    ilc->add_option("--mask-cut", ilc_mask_cut,
                    "Restrict the covariance estimate to |lat| >= this cut (degrees); "
                    "default: full sky");

    auto* evaluate = app.add_subcommand("evaluate", "RMSE, Pearson r, and calibration report");
    evaluate->add_option("--pred", pred_dir, "Prediction directory (CNN or ILC)")->required();
    evaluate->add_option("--data", data_dir, "Dataset directory")->required();
    evaluate->add_option("--cut", cut_deg, "Sky-cut half-width in degrees (default 30)");
    evaluate->add_option("--split", split, "train | validation | test (default test)");
    evaluate->add_option("--out", out_path, "Report JSON path")->required();

    auto* spectrum = app.add_subcommand("spectrum", "Mean masked spectra and difference spectra");
    spectrum->add_option("--pred", pred_dir, "CNN prediction directory")->required();
    spectrum->add_option("--data", data_dir, "Dataset directory")->required();
    spectrum->add_option("--ilc", ilc_dir, "ILC prediction directory (optional)");
    spectrum->add_option("--cut", cut_deg, "Sky-cut half-width in degrees (default 30)");
    spectrum->add_option("--lmax", lmax, "Maximum multipole (default 2*nside)");
    spectrum->add_option("--split", split, "train | validation | test (default test)");
    spectrum->add_option("--out", out_path, "Output CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (simulate->parsed()) {
            const auto cfg = cmbclean::io::RunConfig::load(config_path);
            cmbclean::pipeline::run_simulate(cfg, n, seed, out_path, force);
        } else if (train->parsed()) {
            const auto cfg = cmbclean::io::RunConfig::load(config_path);
            std::optional<std::filesystem::path> init, resume;
            if (!init_path.empty()) init = init_path;
            if (!resume_path.empty()) resume = resume_path;
            const auto result =
                cmbclean::pipeline::run_train(stage, data_dir, cfg, out_path, init, seed, resume);
            std::printf("selected epoch %d -> %s\n", result.selected_epoch,
                        result.selected_checkpoint.string().c_str());
        } else if (predict->parsed()) {
            cmbclean::pipeline::run_predict(model_path, data_dir, split, mc_samples, seed,
                                            out_path);
        } else if (ilc->parsed()) {
            std::optional<double> mask_cut;
            if (ilc_mask_cut >= 0.0) mask_cut = ilc_mask_cut;
            cmbclean::pipeline::run_ilc(data_dir, split, out_path, mask_cut);
        } else if (evaluate->parsed()) {
            const auto report =
                cmbclean::pipeline::run_evaluate(pred_dir, data_dir, split, cut_deg, out_path);
            std::printf("rmse %.6f uK, pearson r %.6f (%d instances, cut %.1f deg)\n",
                        report.rmse_uk, report.pearson, report.n_instances, report.cut_deg);
        } else if (spectrum->parsed()) {
            std::optional<std::filesystem::path> ilc_opt;
            if (!ilc_dir.empty()) ilc_opt = ilc_dir;
            cmbclean::pipeline::run_spectrum(pred_dir, data_dir, ilc_opt, split, cut_deg, lmax,
                                             out_path);
        }
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
