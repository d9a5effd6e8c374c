#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "esm/geometry.hpp"
#include "esm/grid.hpp"

namespace esm {

using Embedding = Eigen::VectorXd;

struct DenseLayer {
    Eigen::MatrixXd weights;  // out x in
    Eigen::VectorXd bias;     // out
};

// Feedforward place encoder; every layer is affine followed by tanh.
struct EncoderParams {
    std::vector<DenseLayer> layers;

    int input_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weights.cols()); }
    int output_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().weights.rows()); }
    bool all_finite() const;
};

struct EncoderShape {
    int input_dim = 0;
    std::vector<int> hidden{256, 256};
    int output_dim = 128;
};

// Xavier-uniform weights, zero biases.
EncoderParams make_encoder(const EncoderShape& shape, std::uint64_t seed);
EncoderParams zero_encoder(const EncoderShape& shape);

// Length of pooled_features() for a 32x32 view.
int pooled_feature_dim();

// Elementwise max over the four quarter-turn rotations of the view about the
// agent cell, restricted to one fundamental domain of the rotation group.
Eigen::VectorXd pooled_features(const Grid& view);

Embedding forward(const EncoderParams& params, const Eigen::VectorXd& features);
Embedding encode_place(const EncoderParams& params, const Grid& view);

// Mean over dimensions of squared differences.
double embedding_distance(const Embedding& a, const Embedding& b);

enum class LossForm {
    Corrected,  // e^{-D(a,n)} / (e^{-D(a,p)} + e^{-D(a,n)})
    Literal,    // e^{-D(a,p)} / (e^{-D(a,p)} + e^{-D(a,n)})
};

double triplet_loss(const Embedding& anchor, const Embedding& positive, const Embedding& negative,
                    LossForm form = LossForm::Corrected);

struct Triplet {
    Eigen::VectorXd anchor;
    Eigen::VectorXd positive;
    Eigen::VectorXd negative;
    long t_anchor = 0;
    long t_positive = 0;
    long t_negative = 0;
};

// Gradient record with the same layout as EncoderParams.
struct Gradients {
    std::vector<DenseLayer> layers;
};

// Mean triplet loss over the batch and its exact gradient w.r.t. every parameter.
double loss_gradients(const EncoderParams& params, std::span<const Triplet> batch, LossForm form,
                      Gradients& grads);

double mean_triplet_loss(const EncoderParams& params, std::span<const Triplet> batch,
                         LossForm form);

struct HistoryEntry {
    Pose pose;
    Grid view;
    long t = 0;
};

// Anchors are visited in random order; each anchor with a positive (within
// eps_pos, at least `gap` steps apart) and a negative (beyond eps_neg) yields
// one triplet. max_triplets == 0 means no cap.
std::vector<Triplet> mine_triplets(std::span<const HistoryEntry> history, double eps_pos,
                                   double eps_neg, long gap, Rng& rng,
                                   std::size_t max_triplets = 0);

enum class Optimizer { Adam, Momentum };

struct TrainConfig {
    double learning_rate = 0.002;
    Optimizer optimizer = Optimizer::Adam;
    double momentum = 0.5;  // Adam beta1, or the heavy-ball coefficient
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t batch_size = 16;
    int epochs = 30;
    std::uint64_t seed = 0;
    LossForm loss_form = LossForm::Corrected;
};

struct TrainResult {
    EncoderParams params;
    std::vector<double> epoch_loss;  // mean minibatch loss per epoch
    double initial_loss = 0.0;       // mean loss over the dataset before training
};

TrainResult train_encoder(const EncoderParams& init, std::span<const Triplet> dataset,
                          const TrainConfig& cfg);

std::string encoder_to_json(const EncoderParams& params);
EncoderParams encoder_from_json(const std::string& text);
void save_encoder(const EncoderParams& params, const std::string& path);
EncoderParams load_encoder(const std::string& path);

}  // namespace esm
