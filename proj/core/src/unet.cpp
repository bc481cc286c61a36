#include "cmbclean/unet.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cmbclean::nn {

void UNetConfig::validate() const {
    if (in_channels < 1) throw std::invalid_argument("UNetConfig: in_channels must be positive");
    if (depth < 1) throw std::invalid_argument("UNetConfig: depth must be >= 1");
    if (int(widths.size()) != depth)
        throw std::invalid_argument("UNetConfig: widths length " + std::to_string(widths.size()) +
                                    " != depth " + std::to_string(depth));
    for (int w : widths)
        if (w < 1) throw std::invalid_argument("UNetConfig: widths must be positive");
    if (cheb_order < 0) throw std::invalid_argument("UNetConfig: cheb_order must be >= 0");
    healpix::Resolution res(nside);
    if (depth > res.order())
        throw std::invalid_argument("UNetConfig: depth " + std::to_string(depth) +
                                    " exceeds log2(nside) = " + std::to_string(res.order()));
    if (!(dropout_temperature > 0.0))
        throw std::invalid_argument("UNetConfig: dropout temperature must be positive");
    if (!(initial_dropout_p > 0.0 && initial_dropout_p < 1.0))
        throw std::invalid_argument("UNetConfig: initial dropout probability must be in (0,1)");
}

GraphUNet::Block GraphUNet::make_block(const std::string& name, int in_ch, int out_ch,
                                       Rng& rng) const {
    Block b;
    b.conv1 = std::make_unique<ChebConv>(name + ".conv1", in_ch, out_ch, config_.cheb_order, rng);
    b.bn1 = std::make_unique<BatchNorm1d>(name + ".bn1", out_ch);
    b.conv2 = std::make_unique<ChebConv>(name + ".conv2", out_ch, out_ch, config_.cheb_order, rng);
    b.bn2 = std::make_unique<BatchNorm1d>(name + ".bn2", out_ch);
    if (config_.bayesian) {
        b.do1 = std::make_unique<ConcreteDropout>(name + ".do1", config_.dropout_temperature,
                                                  config_.initial_dropout_p);
        b.do2 = std::make_unique<ConcreteDropout>(name + ".do2", config_.dropout_temperature,
                                                  config_.initial_dropout_p);
    }
    return b;
}

GraphUNet::GraphUNet(UNetConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
    config_.validate();
    laplacians_.reserve(std::size_t(config_.depth) + 1);
    for (int level = 0; level <= config_.depth; ++level) {
        auto g = std::make_shared<const graph::SphereGraph>(
            graph::SphereGraph::build(healpix::Resolution(config_.nside >> level)));
        laplacians_.push_back(graph::normalized_laplacian(g));
    }

    Rng rng(derive_seed(init_seed, stream::init));
    int in_ch = config_.in_channels;
    for (int i = 0; i < config_.depth; ++i) {
        encoder_.push_back(make_block("enc" + std::to_string(i), in_ch, config_.widths[std::size_t(i)], rng));
        in_ch = config_.widths[std::size_t(i)];
    }
    const int deepest = config_.widths.back();
    bottleneck_ = make_block("bottleneck", deepest, deepest, rng);

    decoder_.resize(std::size_t(config_.depth));
    for (int i = config_.depth - 1; i >= 0; --i) {
        const int carried = (i == config_.depth - 1) ? deepest : config_.widths[std::size_t(i) + 1];
        const int concat_ch = carried + config_.widths[std::size_t(i)];
        decoder_[std::size_t(i)] =
            make_block("dec" + std::to_string(i), concat_ch, config_.widths[std::size_t(i)], rng);
    }

    head_mean_ = std::make_unique<ChebConv>("head_mean", config_.widths[0], 1, 0, rng);
    if (config_.bayesian)
        head_logvar_ = std::make_unique<ChebConv>("head_logvar", config_.widths[0], 1, 0, rng);
}

const graph::LaplacianOperator& GraphUNet::laplacian(int level) const {
    return laplacians_.at(std::size_t(level));
}

Tensor GraphUNet::block_forward(const Block& block, Tape* tape,
                                const graph::LaplacianOperator& lhat, const Tensor& x,
                                Rng* rng) const {
    Tensor h = ad::relu(tape, block.bn1->forward(tape, block.conv1->forward(tape, lhat, x), bn_train_));
    if (block.do1) h = block.do1->forward(tape, h, rng, dropout_stochastic_);
    h = ad::relu(tape, block.bn2->forward(tape, block.conv2->forward(tape, lhat, h), bn_train_));
    if (block.do2) h = block.do2->forward(tape, h, rng, dropout_stochastic_);
    return h;
}

ForwardResult GraphUNet::forward(Tape* tape, const Tensor& x, Rng* dropout_rng) const {
    const auto s = x.shape();
    if (s[1] != config_.in_channels)
        throw std::invalid_argument("GraphUNet: expected " + std::to_string(config_.in_channels) +
                                    " input channels, got " + std::to_string(s[1]));
    const auto npix = healpix::Resolution(config_.nside).npix();
    if (std::int64_t(s[2]) != npix)
        throw std::invalid_argument("GraphUNet: expected " + std::to_string(npix) +
                                    " pixels for nside " + std::to_string(config_.nside) +
                                    ", got " + std::to_string(s[2]));

    std::vector<Tensor> skips;
    skips.reserve(std::size_t(config_.depth));
    Tensor h = x;
    for (int i = 0; i < config_.depth; ++i) {
        h = block_forward(encoder_[std::size_t(i)], tape, laplacians_[std::size_t(i)], h, dropout_rng);
        skips.push_back(h);
        h = max_pool4(tape, h).first;
    }
    h = block_forward(bottleneck_, tape, laplacians_[std::size_t(config_.depth)], h, dropout_rng);
    for (int i = config_.depth - 1; i >= 0; --i) {
        h = upsample_nn(tape, h);
        h = ad::concat_channels(tape, h, skips[std::size_t(i)]);
        h = block_forward(decoder_[std::size_t(i)], tape, laplacians_[std::size_t(i)], h, dropout_rng);
    }

    ForwardResult out{head_mean_->forward(tape, laplacians_[0], h), std::nullopt};
    if (head_logvar_) out.log_variance = head_logvar_->forward(tape, laplacians_[0], h);
    return out;
}

Tensor GraphUNet::kl_regularizer(Tape* tape, double length_scale, std::int64_t n_data) const {
    if (!config_.bayesian)
        throw std::logic_error("kl_regularizer: deterministic model has no dropout layers");
    Tensor total = Tensor::scalar(0.0);
    auto add_block = [&](const Block& b) {
        total = ad::add(tape, total,
                        b.do1->regularizer(tape, b.conv1->theta(), b.conv1->out_channels(),
                                           length_scale, n_data));
        total = ad::add(tape, total,
                        b.do2->regularizer(tape, b.conv2->theta(), b.conv2->out_channels(),
                                           length_scale, n_data));
    };
    for (const auto& b : encoder_) add_block(b);
    add_block(bottleneck_);
    for (const auto& b : decoder_) add_block(b);
    return total;
}

std::vector<NamedTensor> GraphUNet::parameters() {
    std::vector<NamedTensor> out;
    auto add_block = [&](Block& b) {
        b.conv1->append_parameters(out);
        b.bn1->append_parameters(out);
        if (b.do1) b.do1->append_parameters(out);
        b.conv2->append_parameters(out);
        b.bn2->append_parameters(out);
        if (b.do2) b.do2->append_parameters(out);
    };
    for (auto& b : encoder_) add_block(b);
    add_block(bottleneck_);
    for (auto& b : decoder_) add_block(b);
    head_mean_->append_parameters(out);
    if (head_logvar_) head_logvar_->append_parameters(out);
    return out;
}

std::vector<NamedTensor> GraphUNet::buffers() {
    std::vector<NamedTensor> out;
    auto add_block = [&](Block& b) {
        b.bn1->append_buffers(out);
        b.bn2->append_buffers(out);
    };
    for (auto& b : encoder_) add_block(b);
    add_block(bottleneck_);
    for (auto& b : decoder_) add_block(b);
    return out;
}

void GraphUNet::clamp_dropout_probabilities() {
    auto clamp_block = [](Block& b) {
        if (b.do1) b.do1->clamp();
        if (b.do2) b.do2->clamp();
    };
    for (auto& b : encoder_) clamp_block(b);
    clamp_block(bottleneck_);
    for (auto& b : decoder_) clamp_block(b);
}

std::vector<double> GraphUNet::dropout_probabilities() const {
    std::vector<double> out;
    auto add_block = [&](const Block& b) {
        if (b.do1) out.push_back(b.do1->p());
        if (b.do2) out.push_back(b.do2->p());
    };
    for (const auto& b : encoder_) add_block(b);
    add_block(bottleneck_);
    for (const auto& b : decoder_) add_block(b);
    return out;
}

void GraphUNet::set_dropout_probabilities(double p) {
    auto set_block = [p](Block& b) {
        if (b.do1) b.do1->set_p(p);
        if (b.do2) b.do2->set_p(p);
    };
    for (auto& b : encoder_) set_block(b);
    set_block(bottleneck_);
    for (auto& b : decoder_) set_block(b);
}

Tensor loss_mse(Tape* tape, const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape())
        throw std::invalid_argument("loss_mse: shape mismatch " + ad::shape_str(pred.shape()) +
                                    " vs " + ad::shape_str(target.shape()));
    Tensor diff = ad::sub(tape, pred, target);
    return ad::mean_all(tape, ad::mul(tape, diff, diff));
}

Tensor loss_heteroscedastic(Tape* tape, const Tensor& pred_mean, const Tensor& pred_log_var,
                            const Tensor& target, const Tensor& kl) {
    if (pred_mean.shape() != target.shape() || pred_mean.shape() != pred_log_var.shape())
        throw std::invalid_argument("loss_heteroscedastic: shape mismatch");
    if (kl.size() != 1) throw std::invalid_argument("loss_heteroscedastic: kl must be scalar");
    Tensor diff = ad::sub(tape, pred_mean, target);
    Tensor precision = ad::exp(tape, ad::scale(tape, pred_log_var, -1.0));
    Tensor data_term = ad::add(tape, ad::mul(tape, precision, ad::mul(tape, diff, diff)),
                               pred_log_var);
    return ad::add(tape, ad::scale(tape, ad::mean_all(tape, data_term), 0.5), kl);
}

}  // namespace cmbclean::nn
