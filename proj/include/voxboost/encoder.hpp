#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "voxboost/layers.hpp"
#include "voxboost/volume.hpp"

namespace voxboost {

/// Fully convolutional encoder geometry. Each block is two same-padded
/// kernel^3 convolutions with ReLU followed by a 2^3 max pool; the head is a
/// single unpadded convolution spanning the final 6^3 map.
struct EncoderConfig {
    static constexpr int kFeatureEdge = 6;

    int input_size = 24;
    int input_channels = 2;
    std::vector<int> channels{8, 8};  // one entry per block
    int kernel = 3;
    int head_outputs = 123;

    /// log2(input_size / 6); throws ConfigError when input_size is not 6 * 2^k.
    int n_blocks() const;
    void validate() const;
    int feature_channels() const { return channels.back(); }

    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct SgdMomentumConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    int batch_size = 4;
    int epochs = 15;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Per-channel affine map applied to raw volumes before they reach the encoder.
struct InputNormalization {
    double intensity_mean = 0.0;
    double intensity_scale = 1.0;  // 1 / std
    double label_scale = 1.0 / 3.0;

    Volume<double> apply(const Volume<float>& raw) const;
};

using EncoderParameters = std::vector<Conv3d<double>>;

/// Layer order: block0.conv_a, block0.conv_b, block1.conv_a, ..., head.
struct EncoderModel {
    EncoderConfig config;
    InputNormalization normalization;
    EncoderParameters layers;

    /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
    static EncoderModel initialize(const EncoderConfig& config, std::uint64_t seed);

    const Conv3d<double>& head() const { return layers.back(); }
    std::size_t parameter_count() const;
};

/// What backward() needs from one forward pass.
struct ForwardCache {
    struct Block {
        Volume<double> input;       // conv_a input
        Volume<double> hidden;      // relu(conv_a) = conv_b input
        Volume<double> activated;   // relu(conv_b) = pool input
        PoolIndices argmax;
    };
    std::vector<Block> blocks;
    Volume<double> head_input;
};

Eigen::VectorXd forward(const EncoderModel& model, const Volume<double>& input, ForwardCache* cache = nullptr);

/// Predictions for a batch, one row per sample.
Eigen::MatrixXd forward(const EncoderModel& model, std::span<const Volume<double>> batch);

/// Accumulates d(loss)/d(parameters) into `grads` given d(loss)/d(prediction).
void backward(const EncoderModel& model, const ForwardCache& cache, const Eigen::VectorXd& grad_prediction,
              EncoderParameters& grads);

EncoderParameters zero_parameters_like(const EncoderParameters& params);

struct LossAndGradient {
    double loss = 0.0;
    Eigen::MatrixXd gradient;
};

/// Mean of squared differences over batch x outputs; gradient 2 (pred - target) / count.
LossAndGradient mse_multi_loss(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target);

/// One momentum step over every layer's weight and bias.
void sgd_momentum_step(EncoderParameters& params, const EncoderParameters& grads, EncoderParameters& buffers,
                       double learning_rate, double momentum);

struct EpochLog {
    int epoch = 0;
    double train_mse = 0.0;
    double val_mse = 0.0;
};

struct TrainResult {
    EncoderModel best;
    int best_epoch = 0;
    std::vector<EpochLog> log;  // entry 0 evaluates the initial model
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Minibatch SGD with momentum. Shuffles the training set every epoch with
/// the config seed; the last partial batch is kept. Epoch 0 is the initial
/// model, evaluated on both sets; later epochs log the mean minibatch loss
/// as train_mse. Returns the snapshot with the lowest validation MSE,
/// earliest epoch on ties.
TrainResult train(EncoderModel model, std::span<const Volume<double>> train_inputs,
                  const Eigen::MatrixXd& train_targets, std::span<const Volume<double>> val_inputs,
                  const Eigen::MatrixXd& val_targets, const SgdMomentumConfig& config,
                  const EpochCallback& on_epoch = {});

/// Mean squared error of the encoder over a whole set, in sample order.
double evaluate_encoder(const EncoderModel& model, std::span<const Volume<double>> inputs,
                        const Eigen::MatrixXd& targets);

/// Flattened channel-major feature map at edge 6 (last block output) or
/// edge 3 (one further 2^3 max pool).
Eigen::VectorXd extract_features(const EncoderModel& model, const Volume<double>& input, int scale);

std::size_t feature_length(const EncoderConfig& config, int scale);

// Checkpoint "vxenc v1": ASCII manifest of the config, normalisation and
// layer shapes terminated by "end\n", then little-endian float64 blobs
// (weight then bias for each layer, in layer order).
void save_encoder(std::ostream& out, const EncoderModel& model);
void save_encoder(const std::filesystem::path& path, const EncoderModel& model);
EncoderModel load_encoder(std::istream& in);
EncoderModel load_encoder(const std::filesystem::path& path);

} // namespace voxboost
