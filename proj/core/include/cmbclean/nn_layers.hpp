#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cmbclean/autodiff.hpp"
#include "cmbclean/rng.hpp"

namespace cmbclean::nn {

using ad::Tape;
using ad::Tensor;

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

// Chebyshev graph convolution: out = sum_k sum_cin theta[k,cin,cout]
// T_k(L_hat) x_cin + bias[cout]. theta shaped (K+1, Cin, Cout).
class ChebConv {
  public:
    ChebConv(std::string name, int in_channels, int out_channels, int order, Rng& init_rng);

    Tensor forward(Tape* tape, const graph::LaplacianOperator& lhat, const Tensor& x) const;

    int in_channels() const { return in_channels_; }
    int out_channels() const { return out_channels_; }
    int order() const { return order_; }
    Tensor& theta() { return theta_; }
    const Tensor& theta() const { return theta_; }
    Tensor& bias() { return bias_; }

    void append_parameters(std::vector<NamedTensor>& out);

  private:
    std::string name_;
    int in_channels_, out_channels_, order_;
    Tensor theta_;  // (K+1, Cin, Cout)
    Tensor bias_;   // (1, Cout, 1)
};

// Batch normalization over (batch x pixels) per channel.
class BatchNorm1d {
  public:
    BatchNorm1d(std::string name, int channels, double eps = 1e-5, double momentum = 0.1);

    // train=true normalizes by batch statistics (differentiable through them)
    // and updates the running estimates; train=false uses running statistics.
    Tensor forward(Tape* tape, const Tensor& x, bool train);

    void append_parameters(std::vector<NamedTensor>& out);
    void append_buffers(std::vector<NamedTensor>& out);

  private:
    std::string name_;
    int channels_;
    double eps_, momentum_;
    Tensor gamma_, beta_;
    Tensor running_mean_, running_var_;  // non-learnable buffers
};

// Spatial concrete dropout: one learnable dropout probability per layer, soft
// masks shared across all pixels of a channel. In frozen-mask mode the layer
// is the identity (mask forced to zero, no retain rescale), which is what
// makes a transferred Bayesian model reproduce its deterministic source.
class ConcreteDropout {
  public:
    ConcreteDropout(std::string name, double temperature = 0.1, double initial_p = 1e-3);

    Tensor forward(Tape* tape, const Tensor& x, Rng* rng, bool stochastic) const;

    // KL contribution under the standard-Gaussian-prior approximation:
    // (l^2 (1-p) / (2 N)) ||theta||^2 + (C / N)(p log p + (1-p) log(1-p)),
    // where C counts the channels the mask covers.
    Tensor regularizer(Tape* tape, const Tensor& conv_theta, int mask_channels,
                       double length_scale, std::int64_t n_data) const;

    double p() const;
    void set_p(double p);
    // Keeps p inside [1e-6, 1-1e-6] so the entropy term stays finite.
    void clamp();

    Tensor& p_logit() { return p_logit_; }
    void append_parameters(std::vector<NamedTensor>& out);

  private:
    std::string name_;
    double temperature_;
    Tensor p_logit_;  // scalar
};

// HEALPix max-pooling over nested sibling blocks of 4. Returns the pooled
// tensor and the absolute argmax indices (ties resolved to the lowest index).
std::pair<Tensor, std::shared_ptr<const std::vector<std::int32_t>>> max_pool4(Tape* tape,
                                                                              const Tensor& x);

// Nearest-neighbor up-sampling: each parent value copied into its 4 children.
Tensor upsample_nn(Tape* tape, const Tensor& x);

}  // namespace cmbclean::nn
