#include "cmbclean/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace cmbclean::train {

namespace {

std::string rng_label(std::uint64_t seed, const std::string& stage, int epoch) {
    return "master=" + std::to_string(seed) + ";stage=" + stage +
           ";epoch=" + std::to_string(epoch);
}

}  // namespace

void SgdOptimizer::step(std::vector<nn::NamedTensor>& params) {
    for (auto& p : params) {
        auto& v = p.tensor.values();
        const auto& g = p.tensor.grad();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
    }
}

void AdamOptimizer::step(std::vector<nn::NamedTensor>& params) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, double(t));
    const double bc2 = 1.0 - std::pow(beta2, double(t));
    for (auto& p : params) {
        auto& v = p.tensor.values();
        const auto& g = p.tensor.grad();
        auto& m = first_moment[p.name];
        auto& s = second_moment[p.name];
        if (m.empty()) m.assign(v.size(), 0.0);
        if (s.empty()) s.assign(v.size(), 0.0);
        for (std::size_t i = 0; i < v.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            s[i] = beta2 * s[i] + (1.0 - beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double shat = s[i] / bc2;
            v[i] -= lr * mhat / (std::sqrt(shat) + eps);
        }
    }
}

void AdamOptimizer::append_records(std::vector<io::TensorRecord>& out) const {
    out.push_back({"optim.adam.t", {1, 1, 1}, {double(t)}, "optimizer"});
    for (const auto& [name, m] : first_moment)
        out.push_back({"optim.adam.m." + name, {1, 1, int(m.size())}, m, "optimizer"});
    for (const auto& [name, s] : second_moment)
        out.push_back({"optim.adam.v." + name, {1, 1, int(s.size())}, s, "optimizer"});
}

void AdamOptimizer::restore(const io::Checkpoint& ckpt) {
    first_moment.clear();
    second_moment.clear();
    t = 0;
    for (const auto& r : ckpt.records) {
        if (r.kind != "optimizer") continue;
        if (r.name == "optim.adam.t")
            t = std::int64_t(r.data.at(0));
        else if (r.name.rfind("optim.adam.m.", 0) == 0)
            first_moment[r.name.substr(13)] = r.data;
        else if (r.name.rfind("optim.adam.v.", 0) == 0)
            second_moment[r.name.substr(13)] = r.data;
    }
}

int select_epoch(const std::vector<EpochStats>& history, double val_weight, double train_weight) {
    if (history.empty()) throw std::invalid_argument("select_epoch: empty history");
    int best = history.front().epoch;
    double best_metric = val_weight * history.front().val_loss +
                         train_weight * history.front().train_loss;
    for (const auto& row : history) {
        const double metric = val_weight * row.val_loss + train_weight * row.train_loss;
        if (metric < best_metric) {
            best_metric = metric;
            best = row.epoch;
        }
    }
    return best;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochStats>& history) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("history: cannot write " + path.string());
    out << "epoch,train_loss,val_loss,combined\n";
    out.precision(17);
    for (const auto& row : history)
        out << row.epoch << "," << row.train_loss << "," << row.val_loss << "," << row.combined
            << "\n";
}

std::vector<EpochStats> read_history_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("history: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "epoch,train_loss,val_loss,combined")
        throw std::runtime_error("history: bad header in " + path.string());
    std::vector<EpochStats> history;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string field;
        EpochStats row;
        std::getline(ss, field, ',');
        row.epoch = std::stoi(field);
        std::getline(ss, field, ',');
        row.train_loss = std::stod(field);
        std::getline(ss, field, ',');
        row.val_loss = std::stod(field);
        std::getline(ss, field, ',');
        row.combined = std::stod(field);
        history.push_back(row);
    }
    return history;
}

io::Checkpoint snapshot_model(nn::GraphUNet& model, const std::string& stage, int epoch,
                              std::uint64_t master_seed, const std::string& config_echo,
                              const AdamOptimizer* adam) {
    io::Checkpoint ckpt;
    ckpt.stage = stage;
    ckpt.epoch = epoch;
    ckpt.master_seed = master_seed;
    ckpt.rng_label = rng_label(master_seed, stage, epoch);
    ckpt.config_echo = config_echo;
    for (auto& p : model.parameters())
        ckpt.records.push_back({p.name, p.tensor.shape(), p.tensor.values(), "param"});
    for (auto& b : model.buffers())
        ckpt.records.push_back({b.name, b.tensor.shape(), b.tensor.values(), "buffer"});
    if (adam) adam->append_records(ckpt.records);
    return ckpt;
}

void restore_model(const io::Checkpoint& ckpt, nn::GraphUNet& model) {
    std::vector<std::string> missing;
    auto restore_set = [&](std::vector<nn::NamedTensor> tensors) {
        for (auto& p : tensors) {
            const auto* rec = ckpt.find(p.name);
            if (!rec || rec->shape != p.tensor.shape()) {
                missing.push_back(p.name);
                continue;
            }
            p.tensor.values() = rec->data;
        }
    };
    restore_set(model.parameters());
    restore_set(model.buffers());
    if (!missing.empty()) {
        std::string msg = "restore_model: checkpoint is missing or mismatched for:";
        for (const auto& name : missing) msg += " " + name;
        throw std::invalid_argument(msg);
    }
}

void transfer_weights(const io::Checkpoint& deterministic_ckpt, nn::GraphUNet& bayes_model,
                      std::uint64_t transfer_seed) {
    if (!bayes_model.config().bayesian)
        throw std::invalid_argument("transfer_weights: target model is not Bayesian");
    std::vector<std::string> missing;

    Rng head_rng(derive_seed(transfer_seed, stream::init, 0xb2));
    for (auto& p : bayes_model.parameters()) {
        if (p.name.rfind("head_logvar", 0) == 0) {
            // N(0, 1e-6): small variance head keeps early Bayesian epochs stable.
            for (auto& v : p.tensor.values()) v = head_rng.normal(0.0, 1e-3);
            continue;
        }
        if (p.name.size() > 8 && p.name.rfind(".p_logit") == p.name.size() - 8) continue;
        const auto* rec = deterministic_ckpt.find(p.name);
        if (!rec || rec->shape != p.tensor.shape()) {
            missing.push_back(p.name);
            continue;
        }
        p.tensor.values() = rec->data;
    }
    for (auto& b : bayes_model.buffers()) {
        const auto* rec = deterministic_ckpt.find(b.name);
        if (!rec || rec->shape != b.tensor.shape()) {
            missing.push_back(b.name);
            continue;
        }
        b.tensor.values() = rec->data;
    }
    bayes_model.set_dropout_probabilities(bayes_model.config().initial_dropout_p);
    if (!missing.empty()) {
        std::string msg = "transfer_weights: unmatched parameters:";
        for (const auto& name : missing) msg += " " + name;
        throw std::invalid_argument(msg);
    }
}

namespace {

struct StageSetup {
    std::string name;
    int epochs = 0;
    int batch_size = 0;
    bool bayesian = false;
};

ad::Tensor make_batch_x(const std::vector<const sim::LoadedInstance*>& batch, int channels,
                        std::int64_t npix) {
    std::vector<double> data;
    data.reserve(batch.size() * std::size_t(channels) * std::size_t(npix));
    for (const auto* inst : batch) data.insert(data.end(), inst->x.begin(), inst->x.end());
    return ad::Tensor::from_values({int(batch.size()), channels, int(npix)}, std::move(data));
}

ad::Tensor make_batch_y(const std::vector<const sim::LoadedInstance*>& batch, std::int64_t npix) {
    std::vector<double> data;
    data.reserve(batch.size() * std::size_t(npix));
    for (const auto* inst : batch) data.insert(data.end(), inst->y.begin(), inst->y.end());
    return ad::Tensor::from_values({int(batch.size()), 1, int(npix)}, std::move(data));
}

double evaluate_split(nn::GraphUNet& model, const std::vector<sim::LoadedInstance>& split,
                      const io::RunConfig& config, const StageSetup& stage,
                      std::uint64_t master_seed, int epoch, std::int64_t n_data) {
    if (split.empty()) throw std::invalid_argument("training: empty validation split");
    const auto npix = healpix::Resolution(config.nside).npix();
    model.set_bn_train(false);
    model.set_dropout_stochastic(stage.bayesian);
    Rng val_rng(derive_seed(master_seed, stream::validation, std::uint64_t(epoch)));

    double acc = 0.0;
    std::size_t i = 0;
    while (i < split.size()) {
        std::vector<const sim::LoadedInstance*> batch;
        for (; i < split.size() && int(batch.size()) < stage.batch_size; ++i)
            batch.push_back(&split[i]);
        auto x = make_batch_x(batch, model.config().in_channels, npix);
        auto y = make_batch_y(batch, npix);
        auto out = model.forward(nullptr, x, stage.bayesian ? &val_rng : nullptr);
        double loss;
        if (stage.bayesian) {
            auto kl = model.kl_regularizer(nullptr, config.length_scale, n_data);
            loss = nn::loss_heteroscedastic(nullptr, out.mean, *out.log_variance, y, kl).item();
        } else {
            loss = nn::loss_mse(nullptr, out.mean, y).item();
        }
        acc += loss * double(batch.size());
    }
    return acc / double(split.size());
}

template <typename Optimizer>
TrainResult run_stage(nn::GraphUNet& model, const sim::LoadedDataset& data,
                      const io::RunConfig& config, std::uint64_t master_seed,
                      const std::filesystem::path& out_dir, const StageSetup& stage,
                      Optimizer& optimizer, const io::Checkpoint* resume_from) {
    if (data.train.empty()) throw std::invalid_argument("training: empty training split");
    std::filesystem::create_directories(out_dir);
    const auto npix = healpix::Resolution(config.nside).npix();
    const std::int64_t n_train = std::int64_t(data.train.size());
    auto params = model.parameters();

    TrainResult result;
    int start_epoch = 0;
    if (resume_from) {
        if (resume_from->stage != stage.name)
            throw std::invalid_argument("training: resume checkpoint is from stage '" +
                                        resume_from->stage + "', expected '" + stage.name + "'");
        restore_model(*resume_from, model);
        if constexpr (std::is_same_v<Optimizer, AdamOptimizer>) optimizer.restore(*resume_from);
        start_epoch = resume_from->epoch;
        auto past = read_history_csv(out_dir / "history.csv");
        for (const auto& row : past)
            if (row.epoch <= start_epoch) result.history.push_back(row);
    }

    double best_combined = std::numeric_limits<double>::infinity();
    int since_best = 0;
    for (const auto& row : result.history) {
        if (row.combined < best_combined) {
            best_combined = row.combined;
            since_best = 0;
        } else {
            ++since_best;
        }
    }

    for (int epoch = start_epoch + 1; epoch <= stage.epochs; ++epoch) {
        // Per-epoch seeded shuffle keeps resumed runs on the original batch
        // order.
        std::vector<int> order(static_cast<std::size_t>(n_train));
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 shuffle_engine(
            derive_seed(master_seed, stream::shuffle, std::uint64_t(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle_engine);

        model.set_bn_train(true);
        model.set_dropout_stochastic(stage.bayesian);

        double epoch_loss = 0.0;
        int batch_index = 0;
        std::size_t cursor = 0;
        while (cursor < order.size()) {
            std::vector<const sim::LoadedInstance*> batch;
            for (; cursor < order.size() && int(batch.size()) < stage.batch_size; ++cursor)
                batch.push_back(&data.train[std::size_t(order[cursor])]);

            auto x = make_batch_x(batch, model.config().in_channels, npix);
            auto y = make_batch_y(batch, npix);

            for (auto& p : params) p.tensor.zero_grad();
            ad::Tape tape;
            Rng dropout_rng(derive_seed(master_seed, stream::dropout, std::uint64_t(epoch),
                                        std::uint64_t(batch_index)));
            auto out = model.forward(&tape, x, stage.bayesian ? &dropout_rng : nullptr);
            ad::Tensor loss;
            if (stage.bayesian) {
                auto kl = model.kl_regularizer(&tape, config.length_scale, n_train);
                loss = nn::loss_heteroscedastic(&tape, out.mean, *out.log_variance, y, kl);
            } else {
                loss = nn::loss_mse(&tape, out.mean, y);
            }
            const double loss_value = loss.item();
            if (!std::isfinite(loss_value))
                throw std::runtime_error("training diverged: non-finite loss at stage " +
                                         stage.name + ", epoch " + std::to_string(epoch) +
                                         ", batch " + std::to_string(batch_index));
            tape.backward(loss);
            optimizer.step(params);
            if (stage.bayesian) model.clamp_dropout_probabilities();
            epoch_loss += loss_value * double(batch.size());
            ++batch_index;
        }

        EpochStats row;
        row.epoch = epoch;
        row.train_loss = epoch_loss / double(n_train);
        row.val_loss = evaluate_split(model, data.validation, config, stage, master_seed, epoch,
                                      n_train);
        row.combined = config.selection_val_weight * row.val_loss +
                       config.selection_train_weight * row.train_loss;
        result.history.push_back(row);

        io::Checkpoint ckpt;
        if constexpr (std::is_same_v<Optimizer, AdamOptimizer>)
            ckpt = snapshot_model(model, stage.name, epoch, master_seed, config.canonical_json(),
                                  &optimizer);
        else
            ckpt = snapshot_model(model, stage.name, epoch, master_seed, config.canonical_json());
        ckpt.save(out_dir / ("epoch_" + std::to_string(epoch) + ".ckpt"));
        write_history_csv(out_dir / "history.csv", result.history);

        if (row.combined < best_combined) {
            best_combined = row.combined;
            since_best = 0;
        } else if (++since_best >= config.early_stop_patience) {
            break;
        }
    }

    result.selected_epoch =
        select_epoch(result.history, config.selection_val_weight, config.selection_train_weight);
    const auto selected_src = out_dir / ("epoch_" + std::to_string(result.selected_epoch) + ".ckpt");
    result.selected_checkpoint = out_dir / "selected.ckpt";
    std::filesystem::copy_file(selected_src, result.selected_checkpoint,
                               std::filesystem::copy_options::overwrite_existing);
    return result;
}

}  // namespace

TrainResult train_deterministic(nn::GraphUNet& model, const sim::LoadedDataset& data,
                                const io::RunConfig& config, std::uint64_t master_seed,
                                const std::filesystem::path& out_dir,
                                const io::Checkpoint* resume_from) {
    if (model.config().bayesian)
        throw std::invalid_argument("train_deterministic: model must be deterministic");
    StageSetup stage{"deterministic", config.deterministic_epochs, config.batch_deterministic,
                     false};
    SgdOptimizer sgd{config.lr_deterministic};
    return run_stage(model, data, config, master_seed, out_dir, stage, sgd, resume_from);
}

TrainResult train_bayesian(nn::GraphUNet& model, const sim::LoadedDataset& data,
                           const io::RunConfig& config, std::uint64_t master_seed,
                           const std::filesystem::path& out_dir,
                           const io::Checkpoint* resume_from) {
    if (!model.config().bayesian)
        throw std::invalid_argument("train_bayesian: model must be Bayesian");
    StageSetup stage{"bayesian", config.bayesian_epochs, config.batch_bayesian, true};
    AdamOptimizer adam;
    adam.lr = config.lr_bayesian;
    return run_stage(model, data, config, master_seed, out_dir, stage, adam, resume_from);
}

}  // namespace cmbclean::train
