#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "cmbclean/nn_layers.hpp"

namespace cmbclean::nn {

struct UNetConfig {
    int in_channels = 9;
    int depth = 3;
    std::vector<int> widths = {32, 64, 128};
    int cheb_order = 3;
    std::int64_t nside = 64;
    bool bayesian = false;
    double dropout_temperature = 0.1;
    double initial_dropout_p = 1e-3;

    void validate() const;
};

struct ForwardResult {
    Tensor mean;                        // (B, 1, N), uK
    std::optional<Tensor> log_variance;  // (B, 1, N), present iff bayesian
};

// Graph U-Net on the HEALPix sphere. Encoder levels apply two Chebyshev
// convolutions (each followed by batch norm and ReLU, plus spatial concrete
// dropout in the Bayesian variant) and pool by 4; the decoder mirrors them
// with nearest-neighbor up-sampling and skip concatenation. Two order-0
// Chebyshev heads emit the predicted mean and (Bayesian only) log variance.
class GraphUNet {
  public:
    GraphUNet(UNetConfig config, std::uint64_t init_seed);

    ForwardResult forward(Tape* tape, const Tensor& x, Rng* dropout_rng = nullptr) const;

    // Batch norm mode. Dropout stochasticity is controlled separately so MC
    // inference can sample masks while batch norm stays in eval mode.
    void set_bn_train(bool train) { bn_train_ = train; }
    void set_dropout_stochastic(bool stochastic) { dropout_stochastic_ = stochastic; }
    bool bn_train() const { return bn_train_; }
    bool dropout_stochastic() const { return dropout_stochastic_; }

    // Sum of the concrete-dropout KL terms over all dropout layers.
    Tensor kl_regularizer(Tape* tape, double length_scale, std::int64_t n_data) const;

    std::vector<NamedTensor> parameters();
    std::vector<NamedTensor> buffers();
    void clamp_dropout_probabilities();
    std::vector<double> dropout_probabilities() const;
    void set_dropout_probabilities(double p);

    const UNetConfig& config() const { return config_; }
    const graph::LaplacianOperator& laplacian(int level) const;

  private:
    struct Block {
        std::unique_ptr<ChebConv> conv1, conv2;
        std::unique_ptr<BatchNorm1d> bn1, bn2;
        std::unique_ptr<ConcreteDropout> do1, do2;
    };

    Block make_block(const std::string& name, int in_ch, int out_ch, Rng& rng) const;
    Tensor block_forward(const Block& block, Tape* tape, const graph::LaplacianOperator& lhat,
                         const Tensor& x, Rng* rng) const;

    UNetConfig config_;
    std::vector<graph::LaplacianOperator> laplacians_;  // level 0..depth
    std::vector<Block> encoder_;
    Block bottleneck_;
    std::vector<Block> decoder_;
    std::unique_ptr<ChebConv> head_mean_;
    std::unique_ptr<ChebConv> head_logvar_;
    bool bn_train_ = true;
    bool dropout_stochastic_ = true;
};

// Eq.-style deterministic loss: (1/D) sum_i ||y_i - yhat_i||^2, averaged over
// the batch.
Tensor loss_mse(Tape* tape, const Tensor& pred, const Tensor& target);

// Heteroscedastic loss in the log-variance parameterization:
// (1/D) sum_i [ 1/2 exp(-s_i) (y_i - yhat_i)^2 + 1/2 s_i ] + kl.
Tensor loss_heteroscedastic(Tape* tape, const Tensor& pred_mean, const Tensor& pred_log_var,
                            const Tensor& target, const Tensor& kl);

}  // namespace cmbclean::nn
