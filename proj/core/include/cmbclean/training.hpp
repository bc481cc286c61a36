#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cmbclean/checkpoint.hpp"
#include "cmbclean/dataset.hpp"
#include "cmbclean/unet.hpp"

namespace cmbclean::train {

struct SgdOptimizer {
    double lr = 1e-3;

    void step(std::vector<nn::NamedTensor>& params);
};

struct AdamOptimizer {
    double lr = 1e-5;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::int64_t t = 0;
    std::map<std::string, std::vector<double>> first_moment, second_moment;

    void step(std::vector<nn::NamedTensor>& params);

    void append_records(std::vector<io::TensorRecord>& out) const;
    void restore(const io::Checkpoint& ckpt);
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double combined = 0.0;
};

// argmin of w_val * val + w_train * train; ties resolve to the earliest epoch.
int select_epoch(const std::vector<EpochStats>& history, double val_weight, double train_weight);

struct TrainResult {
    std::vector<EpochStats> history;
    int selected_epoch = 0;
    std::filesystem::path selected_checkpoint;
};

// History CSV: "epoch,train_loss,val_loss,combined", one row per epoch.
void write_history_csv(const std::filesystem::path& path, const std::vector<EpochStats>& history);
std::vector<EpochStats> read_history_csv(const std::filesystem::path& path);

// Model snapshot (+ optional Adam state) in the checkpoint container.
io::Checkpoint snapshot_model(nn::GraphUNet& model, const std::string& stage, int epoch,
                              std::uint64_t master_seed, const std::string& config_echo,
                              const AdamOptimizer* adam = nullptr);
void restore_model(const io::Checkpoint& ckpt, nn::GraphUNet& model);

// Copy the deterministic checkpoint into a Bayesian model: shared parameters
// and batch-norm statistics are copied exactly, the log-variance head is
// drawn from N(0, 1e-6), and every dropout probability is reset to the
// configured initial value (1e-3 by default). Throws with the full list of
// unmatched names if the architectures disagree.
void transfer_weights(const io::Checkpoint& deterministic_ckpt, nn::GraphUNet& bayes_model,
                      std::uint64_t transfer_seed);

// SGD + MSE pre-training of the deterministic network; per-epoch checkpoints
// and combined-metric selection. `resume_from` continues a previous run
// bitwise (same seeds, same trajectory).
TrainResult train_deterministic(nn::GraphUNet& model, const sim::LoadedDataset& data,
                                const io::RunConfig& config, std::uint64_t master_seed,
                                const std::filesystem::path& out_dir,
                                const io::Checkpoint* resume_from = nullptr);

// Adam + heteroscedastic loss (with the concrete-dropout KL terms) on a
// transferred model.
TrainResult train_bayesian(nn::GraphUNet& model, const sim::LoadedDataset& data,
                           const io::RunConfig& config, std::uint64_t master_seed,
                           const std::filesystem::path& out_dir,
                           const io::Checkpoint* resume_from = nullptr);

}  // namespace cmbclean::train
