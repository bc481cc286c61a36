#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "cmbclean/run_config.hpp"
#include "cmbclean/training.hpp"
#include "cmbclean/uq_eval.hpp"

namespace cmbclean::pipeline {

// Command-level operations behind the CLI. Contract violations (bad usage,
// misaligned inputs, violated preconditions) throw std::invalid_argument;
// everything else that fails throws std::runtime_error.

void run_simulate(const io::RunConfig& config, int n, std::uint64_t seed,
                  const std::filesystem::path& out_dir, bool force);

train::TrainResult run_train(const std::string& stage, const std::filesystem::path& data_dir,
                             const io::RunConfig& config, const std::filesystem::path& out_dir,
                             const std::optional<std::filesystem::path>& init_checkpoint,
                             std::uint64_t seed,
                             const std::optional<std::filesystem::path>& resume_checkpoint = {});

void run_predict(const std::filesystem::path& model_checkpoint,
                 const std::filesystem::path& data_dir, const std::string& split, int T,
                 std::uint64_t seed, const std::filesystem::path& out_dir);

void run_ilc(const std::filesystem::path& data_dir, const std::string& split,
             const std::filesystem::path& out_dir, std::optional<double> covariance_mask_cut);

uq::EvalReport run_evaluate(const std::filesystem::path& pred_dir,
                            const std::filesystem::path& data_dir, const std::string& split,
                            double cut_deg, const std::filesystem::path& out_json);

void run_spectrum(const std::filesystem::path& pred_dir, const std::filesystem::path& data_dir,
                  const std::optional<std::filesystem::path>& ilc_dir, const std::string& split,
                  double cut_deg, int lmax, const std::filesystem::path& out_csv);

}  // namespace cmbclean::pipeline
