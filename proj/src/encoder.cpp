#include "voxboost/encoder.hpp"

#include <cmath>
#include <numeric>

#include "voxboost/rng.hpp"

namespace voxboost {

int EncoderConfig::n_blocks() const {
    if (input_size < kFeatureEdge || input_size % kFeatureEdge != 0)
        throw ConfigError("encoder input_size must be 6 * 2^k, got " + std::to_string(input_size));
    int ratio = input_size / kFeatureEdge;
    int blocks = 0;
    while (ratio > 1) {
        if (ratio % 2) throw ConfigError("encoder input_size must be 6 * 2^k, got " + std::to_string(input_size));
        ratio /= 2;
        ++blocks;
    }
    return blocks;
}

void EncoderConfig::validate() const {
    const int blocks = n_blocks();
    if (blocks < 1) throw ConfigError("encoder needs at least one pooling block (input_size >= 12)");
    if (static_cast<int>(channels.size()) != blocks)
        throw ConfigError("encoder channel schedule has " + std::to_string(channels.size()) + " entries, input_size " +
                          std::to_string(input_size) + " needs " + std::to_string(blocks));
    for (int c : channels)
        if (c < 1) throw ConfigError("encoder channel counts must be positive");
    if (input_channels < 1) throw ConfigError("encoder input_channels must be positive");
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("encoder kernel must be odd and positive");
    if (head_outputs < 1) throw ConfigError("encoder head_outputs must be positive");
}

void SgdMomentumConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("encoder learning_rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("encoder momentum must be in [0, 1)");
    if (batch_size < 1) throw ConfigError("encoder batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("encoder epochs must be >= 0");
}

Volume<double> InputNormalization::apply(const Volume<float>& raw) const {
    if (raw.channels() != 2) throw InvalidInput("expected a 2-channel (intensity, label) volume");
    Volume<double> out = raw.cast<double>();
    auto m = out.matrix();
    m.row(0) = (m.row(0).array() - intensity_mean) * intensity_scale;
    m.row(1) *= label_scale;
    return out;
}

EncoderModel EncoderModel::initialize(const EncoderConfig& config, std::uint64_t seed) {
    config.validate();
    EncoderModel model;
    model.config = config;
    int in = config.input_channels;
    for (int c : config.channels) {
        model.layers.push_back(Conv3d<double>::same(in, c, config.kernel));
        model.layers.push_back(Conv3d<double>::same(c, c, config.kernel));
        in = c;
    }
    model.layers.emplace_back(in, config.head_outputs, EncoderConfig::kFeatureEdge, 0);

    Xoshiro256 rng(seed);
    for (auto& layer : model.layers) {
        const double k3 = std::pow(static_cast<double>(layer.kernel), 3);
        const double bound = std::sqrt(6.0 / ((layer.in_channels + layer.out_channels) * k3));
        for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = rng.uniform(-bound, bound);
    }
    return model;
}

std::size_t EncoderModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers) n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
    return n;
}

namespace {

void check_input(const EncoderModel& model, const Volume<double>& input) {
    const auto& cfg = model.config;
    if (input.channels() != cfg.input_channels || input.depth() != cfg.input_size ||
        input.height() != cfg.input_size || input.width() != cfg.input_size)
        throw InvalidInput("encoder input " + shape_string(input.dims()) + " does not match configured " +
                           std::to_string(cfg.input_channels) + "x" + std::to_string(cfg.input_size) + "^3");
}

// Runs the conv/relu/pool blocks and returns the last pooled map (edge 6).
Volume<double> run_blocks(const EncoderModel& model, const Volume<double>& input, ForwardCache* cache) {
    check_input(model, input);
    const std::size_t n_blocks = model.config.channels.size();
    if (cache) cache->blocks.resize(n_blocks);
    Volume<double> x = input;
    for (std::size_t b = 0; b < n_blocks; ++b) {
        Volume<double> hidden = relu_forward(conv3d_forward(x, model.layers[2 * b]));
        Volume<double> activated = relu_forward(conv3d_forward(hidden, model.layers[2 * b + 1]));
        PoolResult<double> pooled = maxpool3d_forward(activated);
        if (cache) {
            auto& slot = cache->blocks[b];
            slot.input = std::move(x);
            slot.hidden = std::move(hidden);
            slot.activated = std::move(activated);
            slot.argmax = std::move(pooled.argmax);
        }
        x = std::move(pooled.output);
    }
    return x;
}

} // namespace

Eigen::VectorXd forward(const EncoderModel& model, const Volume<double>& input, ForwardCache* cache) {
    Volume<double> features = run_blocks(model, input, cache);
    Volume<double> out = conv3d_forward(features, model.head());
    if (cache) cache->head_input = std::move(features);
    return out.data();
}

Eigen::MatrixXd forward(const EncoderModel& model, std::span<const Volume<double>> batch) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(batch.size()), model.config.head_outputs);
    for (std::size_t i = 0; i < batch.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = forward(model, batch[i]);
    return out;
}

EncoderParameters zero_parameters_like(const EncoderParameters& params) {
    EncoderParameters out;
    out.reserve(params.size());
    for (const auto& layer : params) out.push_back(layer.zeros_like());
    return out;
}

void backward(const EncoderModel& model, const ForwardCache& cache, const Eigen::VectorXd& grad_prediction,
              EncoderParameters& grads) {
    const std::size_t n_blocks = model.config.channels.size();
    if (cache.blocks.size() != n_blocks) throw InvalidInput("backward: cache does not match model");
    if (grads.size() != model.layers.size()) throw InvalidInput("backward: gradient holder does not match model");
    if (grad_prediction.size() != model.config.head_outputs) throw InvalidInput("backward: wrong gradient length");

    Volume<double> grad_out(model.config.head_outputs, 1, 1, 1);
    grad_out.data() = grad_prediction;
    auto head = conv3d_backward(grad_out, cache.head_input, model.head());
    grads.back().weight += head.weight;
    grads.back().bias += head.bias;
    Volume<double> g = std::move(head.input);

    for (std::size_t b = n_blocks; b-- > 0;) {
        const auto& slot = cache.blocks[b];
        g = maxpool3d_backward(g, slot.argmax, slot.activated.dims());
        g = relu_backward(g, slot.activated);
        auto second = conv3d_backward(g, slot.hidden, model.layers[2 * b + 1]);
        grads[2 * b + 1].weight += second.weight;
        grads[2 * b + 1].bias += second.bias;
        g = relu_backward(second.input, slot.hidden);
        auto first = conv3d_backward(g, slot.input, model.layers[2 * b]);
        grads[2 * b].weight += first.weight;
        grads[2 * b].bias += first.bias;
        g = std::move(first.input);
    }
}

LossAndGradient mse_multi_loss(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target) {
    if (prediction.rows() != target.rows() || prediction.cols() != target.cols())
        throw InvalidInput("mse_multi_loss: shape mismatch");
    if (prediction.size() == 0) throw InvalidInput("mse_multi_loss: empty batch");
    const double count = static_cast<double>(prediction.size());
    LossAndGradient out;
    const Eigen::MatrixXd diff = prediction - target;
    out.loss = diff.squaredNorm() / count;
    out.gradient = (2.0 / count) * diff;
    return out;
}

void sgd_momentum_step(EncoderParameters& params, const EncoderParameters& grads, EncoderParameters& buffers,
                       double learning_rate, double momentum) {
    if (params.size() != grads.size() || params.size() != buffers.size())
        throw InvalidInput("sgd_momentum_step: parameter lists differ in length");
    for (std::size_t i = 0; i < params.size(); ++i) {
        sgd_momentum_step(params[i].weight, grads[i].weight, buffers[i].weight, learning_rate, momentum);
        sgd_momentum_step(params[i].bias, grads[i].bias, buffers[i].bias, learning_rate, momentum);
    }
}

double evaluate_encoder(const EncoderModel& model, std::span<const Volume<double>> inputs,
                        const Eigen::MatrixXd& targets) {
    if (inputs.empty()) throw InvalidInput("evaluate_encoder: empty dataset");
    if (targets.rows() != static_cast<Eigen::Index>(inputs.size()) || targets.cols() != model.config.head_outputs)
        throw InvalidInput("evaluate_encoder: target shape mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i)
        total += (forward(model, inputs[i]) - targets.row(static_cast<Eigen::Index>(i)).transpose()).squaredNorm();
    return total / static_cast<double>(targets.size());
}

TrainResult train(EncoderModel model, std::span<const Volume<double>> train_inputs,
                  const Eigen::MatrixXd& train_targets, std::span<const Volume<double>> val_inputs,
                  const Eigen::MatrixXd& val_targets, const SgdMomentumConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    if (train_inputs.empty() || val_inputs.empty()) throw InvalidInput("train: empty training or validation set");
    if (train_targets.rows() != static_cast<Eigen::Index>(train_inputs.size()))
        throw InvalidInput("train: training targets do not match inputs");

    TrainResult result;
    EpochLog initial{0, evaluate_encoder(model, train_inputs, train_targets),
                     evaluate_encoder(model, val_inputs, val_targets)};
    result.log.push_back(initial);
    result.best = model;
    if (on_epoch) on_epoch(initial);
    double best_val = initial.val_mse;

    EncoderParameters buffers = zero_parameters_like(model.layers);
    std::vector<std::size_t> order(train_inputs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Xoshiro256 rng(config.seed);
    const auto outputs = static_cast<double>(model.config.head_outputs);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            const double count = static_cast<double>(end - start) * outputs;
            EncoderParameters grads = zero_parameters_like(model.layers);
            ForwardCache cache;
            for (std::size_t i = start; i < end; ++i) {
                const auto sample = order[i];
                const Eigen::VectorXd pred = forward(model, train_inputs[sample], &cache);
                const Eigen::VectorXd diff = pred - train_targets.row(static_cast<Eigen::Index>(sample)).transpose();
                loss_sum += diff.squaredNorm();
                backward(model, cache, (2.0 / count) * diff, grads);
            }
            sgd_momentum_step(model.layers, grads, buffers, config.learning_rate, config.momentum);
        }
        EpochLog entry{epoch, loss_sum / (static_cast<double>(order.size()) * outputs),
                       evaluate_encoder(model, val_inputs, val_targets)};
        result.log.push_back(entry);
        if (on_epoch) on_epoch(entry);
        if (entry.val_mse < best_val) {
            best_val = entry.val_mse;
            result.best = model;
            result.best_epoch = epoch;
        }
    }
    return result;
}

Eigen::VectorXd extract_features(const EncoderModel& model, const Volume<double>& input, int scale) {
    if (scale != EncoderConfig::kFeatureEdge && scale != EncoderConfig::kFeatureEdge / 2)
        throw InvalidInput("extract_features: scale must be 6 or 3, got " + std::to_string(scale));
    Volume<double> map = run_blocks(model, input, nullptr);
    if (scale == EncoderConfig::kFeatureEdge / 2) map = maxpool3d_forward(map).output;
    return map.data();
}

std::size_t feature_length(const EncoderConfig& config, int scale) {
    return static_cast<std::size_t>(config.feature_channels()) * static_cast<std::size_t>(scale * scale * scale);
}

} // namespace voxboost
