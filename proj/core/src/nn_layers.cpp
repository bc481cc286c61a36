#include "cmbclean/nn_layers.hpp"

#include <cmath>
#include <stdexcept>

namespace cmbclean::nn {

namespace {
double logit(double p) { return std::log(p / (1.0 - p)); }
}  // namespace

ChebConv::ChebConv(std::string name, int in_channels, int out_channels, int order, Rng& init_rng)
    : name_(std::move(name)), in_channels_(in_channels), out_channels_(out_channels), order_(order) {
    if (in_channels < 1 || out_channels < 1 || order < 0)
        throw std::invalid_argument("ChebConv: bad configuration for " + name_);
    // He-style fan-in scaling; fan-in counts all Chebyshev orders.
    const double stddev = std::sqrt(2.0 / (double(in_channels) * (order + 1)));
    std::vector<double> theta(std::size_t(order + 1) * in_channels * out_channels);
    for (auto& t : theta) t = init_rng.normal(0.0, stddev);
    theta_ = Tensor::from_values({order + 1, in_channels, out_channels}, std::move(theta), true);
    bias_ = Tensor::zeros({1, out_channels, 1}, true);
}

Tensor ChebConv::forward(Tape* tape, const graph::LaplacianOperator& lhat, const Tensor& x) const {
    if (x.shape()[1] != in_channels_)
        throw std::invalid_argument(name_ + ": expected " + std::to_string(in_channels_) +
                                    " input channels, got " + std::to_string(x.shape()[1]));
    if (std::int64_t(x.shape()[2]) != lhat.size())
        throw std::invalid_argument(name_ + ": pixel count " + std::to_string(x.shape()[2]) +
                                    " does not match operator resolution " +
                                    std::to_string(lhat.size()));
    Tensor acc = ad::matmul_channels(tape, ad::slice_d0(tape, theta_, 0), x);
    if (order_ > 0) {
        Tensor t_prev = x;
        Tensor t_curr = ad::sparse_laplacian_apply(tape, lhat, x);
        acc = ad::add(tape, acc, ad::matmul_channels(tape, ad::slice_d0(tape, theta_, 1), t_curr));
        for (int k = 2; k <= order_; ++k) {
            Tensor t_next = ad::sub(
                tape, ad::scale(tape, ad::sparse_laplacian_apply(tape, lhat, t_curr), 2.0), t_prev);
            acc = ad::add(tape, acc,
                          ad::matmul_channels(tape, ad::slice_d0(tape, theta_, k), t_next));
            t_prev = t_curr;
            t_curr = t_next;
        }
    }
    return ad::bias_add(tape, acc, bias_);
}

void ChebConv::append_parameters(std::vector<NamedTensor>& out) {
    out.push_back({name_ + ".theta", theta_});
    out.push_back({name_ + ".bias", bias_});
}

BatchNorm1d::BatchNorm1d(std::string name, int channels, double eps, double momentum)
    : name_(std::move(name)), channels_(channels), eps_(eps), momentum_(momentum) {
    gamma_ = Tensor::full({1, channels, 1}, 1.0, true);
    beta_ = Tensor::zeros({1, channels, 1}, true);
    running_mean_ = Tensor::zeros({1, channels, 1}, false);
    running_var_ = Tensor::full({1, channels, 1}, 1.0, false);
}

Tensor BatchNorm1d::forward(Tape* tape, const Tensor& x, bool train) {
    if (x.shape()[1] != channels_)
        throw std::invalid_argument(name_ + ": expected " + std::to_string(channels_) +
                                    " channels, got " + std::to_string(x.shape()[1]));
    const Tensor ones = Tensor::full({1, channels_, 1}, 1.0);
    const Tensor zeros = Tensor::zeros({1, channels_, 1});
    if (train) {
        Tensor mu = ad::channel_mean(tape, x);
        Tensor centered = ad::affine(tape, x, ones, ad::scale(tape, mu, -1.0));
        Tensor var = ad::channel_mean(tape, ad::mul(tape, centered, centered));
        Tensor inv_std = ad::div(tape, ones, ad::sqrt(tape, ad::add_const(tape, var, eps_)));
        Tensor xhat = ad::affine(tape, centered, inv_std, zeros);

        // Running statistics track the batch moments (unbiased variance),
        // outside the tape.
        const double n = double(x.shape()[0]) * double(x.shape()[2]);
        const double bessel = n > 1.0 ? n / (n - 1.0) : 1.0;
        for (int c = 0; c < channels_; ++c) {
            running_mean_.values()[std::size_t(c)] =
                (1.0 - momentum_) * running_mean_.values()[std::size_t(c)] +
                momentum_ * mu.values()[std::size_t(c)];
            running_var_.values()[std::size_t(c)] =
                (1.0 - momentum_) * running_var_.values()[std::size_t(c)] +
                momentum_ * var.values()[std::size_t(c)] * bessel;
        }
        return ad::affine(tape, xhat, gamma_, beta_);
    }
    std::vector<double> inv(static_cast<std::size_t>(channels_));
    std::vector<double> shift(static_cast<std::size_t>(channels_));
    for (int c = 0; c < channels_; ++c) {
        inv[std::size_t(c)] = 1.0 / std::sqrt(running_var_.values()[std::size_t(c)] + eps_);
        shift[std::size_t(c)] = -running_mean_.values()[std::size_t(c)] * inv[std::size_t(c)];
    }
    Tensor xhat = ad::affine(tape, x, Tensor::from_values({1, channels_, 1}, std::move(inv)),
                             Tensor::from_values({1, channels_, 1}, std::move(shift)));
    return ad::affine(tape, xhat, gamma_, beta_);
}

void BatchNorm1d::append_parameters(std::vector<NamedTensor>& out) {
    out.push_back({name_ + ".gamma", gamma_});
    out.push_back({name_ + ".beta", beta_});
}

void BatchNorm1d::append_buffers(std::vector<NamedTensor>& out) {
    out.push_back({name_ + ".running_mean", running_mean_});
    out.push_back({name_ + ".running_var", running_var_});
}

ConcreteDropout::ConcreteDropout(std::string name, double temperature, double initial_p)
    : name_(std::move(name)), temperature_(temperature) {
    p_logit_ = Tensor::full({1, 1, 1}, logit(initial_p), true);
}

double ConcreteDropout::p() const {
    const double v = p_logit_.values()[0];
    return 1.0 / (1.0 + std::exp(-v));
}

void ConcreteDropout::set_p(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument(name_ + ": p must be in (0,1)");
    p_logit_.values()[0] = logit(p);
}

void ConcreteDropout::clamp() {
    const double lo = logit(1e-6), hi = logit(1.0 - 1e-6);
    double& v = p_logit_.values()[0];
    if (v < lo) v = lo;
    if (v > hi) v = hi;
}

Tensor ConcreteDropout::forward(Tape* tape, const Tensor& x, Rng* rng, bool stochastic) const {
    if (!stochastic) return x;  // frozen mask: identity
    if (!rng) throw std::invalid_argument(name_ + ": stochastic mode requires an rng");
    const int b = x.shape()[0], c = x.shape()[1];

    // log p - log(1-p) is exactly the logit, so the relaxation reads
    // z = sigmoid((p_logit + log u - log(1-u)) / t) with u ~ Uniform(0,1).
    std::vector<double> noise(std::size_t(b) * c);
    for (auto& v : noise) {
        double u = rng->uniform();
        u = std::min(std::max(u, 1e-12), 1.0 - 1e-12);
        v = std::log(u) - std::log(1.0 - u);
    }
    Tensor noise_t = Tensor::from_values({b, c, 1}, std::move(noise));
    Tensor z_arg = ad::scale(
        tape, ad::add(tape, ad::expand_scalar(tape, p_logit_, {b, c, 1}), noise_t),
        1.0 / temperature_);
    Tensor z = ad::sigmoid(tape, z_arg);
    Tensor keep = ad::sub(tape, Tensor::full({b, c, 1}, 1.0), z);

    Tensor p_t = ad::sigmoid(tape, p_logit_);
    Tensor one_minus_p = ad::sub(tape, Tensor::scalar(1.0), p_t);
    Tensor retain = ad::div(tape, keep, ad::expand_scalar(tape, one_minus_p, {b, c, 1}));
    return ad::channel_scale(tape, x, retain);
}

Tensor ConcreteDropout::regularizer(Tape* tape, const Tensor& conv_theta, int mask_channels,
                                    double length_scale, std::int64_t n_data) const {
    if (!(length_scale > 0.0)) throw std::invalid_argument(name_ + ": length scale must be > 0");
    if (n_data < 1) throw std::invalid_argument(name_ + ": n_data must be >= 1");
    Tensor p_t = ad::sigmoid(tape, p_logit_);
    Tensor one_minus_p = ad::sub(tape, Tensor::scalar(1.0), p_t);

    Tensor norm_sq = ad::sum_all(tape, ad::mul(tape, conv_theta, conv_theta));
    Tensor weight_term = ad::scale(tape, ad::mul(tape, one_minus_p, norm_sq),
                                   length_scale * length_scale / (2.0 * double(n_data)));

    Tensor entropy = ad::add(tape, ad::mul(tape, p_t, ad::log(tape, p_t)),
                             ad::mul(tape, one_minus_p, ad::log(tape, one_minus_p)));
    Tensor dropout_term = ad::scale(tape, entropy, double(mask_channels) / double(n_data));
    return ad::add(tape, weight_term, dropout_term);
}

void ConcreteDropout::append_parameters(std::vector<NamedTensor>& out) {
    out.push_back({name_ + ".p_logit", p_logit_});
}

std::pair<Tensor, std::shared_ptr<const std::vector<std::int32_t>>> max_pool4(Tape* tape,
                                                                              const Tensor& x) {
    const auto s = x.shape();
    if (s[2] % 4 != 0)
        throw std::invalid_argument("max_pool4: pixel count " + std::to_string(s[2]) +
                                    " not divisible by 4");
    const int out_n = s[2] / 4;
    auto indices =
        std::make_shared<std::vector<std::int32_t>>(std::size_t(s[0]) * s[1] * out_n);
    for (int b = 0; b < s[0]; ++b)
        for (int c = 0; c < s[1]; ++c) {
            const double* src = x.values().data() + (std::size_t(b) * s[1] + c) * s[2];
            std::int32_t* idx = indices->data() + (std::size_t(b) * s[1] + c) * out_n;
            for (int p = 0; p < out_n; ++p) {
                int best = 4 * p;
                for (int j = 1; j < 4; ++j)
                    if (src[4 * p + j] > src[best]) best = 4 * p + j;
                idx[p] = std::int32_t(best);
            }
        }
    std::shared_ptr<const std::vector<std::int32_t>> frozen = std::move(indices);
    return {ad::gather_pixels(tape, x, frozen, out_n), frozen};
}

Tensor upsample_nn(Tape* tape, const Tensor& x) {
    const auto s = x.shape();
    auto indices = std::make_shared<std::vector<std::int32_t>>(std::size_t(s[2]) * 4);
    for (int j = 0; j < s[2] * 4; ++j) (*indices)[std::size_t(j)] = std::int32_t(j / 4);
    return ad::gather_pixels(tape, x, std::move(indices), s[2] * 4);
}

}  // namespace cmbclean::nn
