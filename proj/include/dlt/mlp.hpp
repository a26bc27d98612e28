#pragma once

#include "dlt/matrix.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dlt {

struct DenseLayer {
    Matrix weight;             // out x in
    std::vector<double> bias;  // out
};

// Feed-forward softmax classifier with rectifier hidden layers. Value-like:
// copy freely, mutate only through sgd_step.
struct MlpModel {
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const { return layers.front().weight.cols; }
    std::size_t class_count() const { return layers.back().weight.rows; }

    // Checks the layer dimension chain and parameter finiteness.
    void validate() const;
};

// Glorot-uniform weights, zero biases. Hidden may be empty (linear model).
MlpModel make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                  std::size_t classes, std::uint64_t seed);

// Softmax output for one input.
std::vector<double> forward(const MlpModel& model, const std::vector<double>& x);

// Softmax outputs for a batch, one row per sample.
Matrix forward_batch(const MlpModel& model, const Matrix& X);

// -sum_c y_c log(max(p_c, 1e-12)). y must be exactly one-hot.
double cross_entropy(const std::vector<double>& probs,
                     const std::vector<double>& one_hot);

// Same formula for soft targets (mixup, pseudo-labels); no one-hot check.
double cross_entropy_soft(const std::vector<double>& probs,
                          const std::vector<double>& target);

double mse_loss(const std::vector<double>& probs,
                const std::vector<double>& target);

enum class LossKind { CrossEntropy, MeanSquaredError };

// Per-sample losses for a batch of softmax outputs against target rows.
std::vector<double> per_sample_losses(const Matrix& probs, const Matrix& targets,
                                      LossKind kind);

struct Gradients {
    std::vector<Matrix> weight;
    std::vector<std::vector<double>> bias;

    static Gradients zeros_like(const MlpModel& model);
    // this += scale * other
    void add_scaled(const Gradients& other, double scale);
};

// Parameter gradients of (1/n) * sum_i weights[i] * loss(model(x_i), target_i).
// Targets are probability rows (one-hot or soft).
Gradients backward(const MlpModel& model, const Matrix& X, const Matrix& targets,
                   LossKind kind, const std::vector<double>& weights);

// Parameter gradients of KL(uniform || mean softmax output over rows of X).
Gradients backward_uniform_reg(const MlpModel& model, const Matrix& X);

struct SgdState {
    double learning_rate = 0.0;
    double momentum = 0.0;
    double weight_decay = 0.0;
    std::vector<Matrix> velocity_w;
    std::vector<std::vector<double>> velocity_b;

    static SgdState init(const MlpModel& model, double lr, double momentum,
                         double weight_decay);
};

// v <- momentum*v + grad + weight_decay*param; param <- param - lr*v.
void sgd_step(MlpModel& model, SgdState& state, const Gradients& grads);

// d cross_entropy(model(x), y) / dx, exact.
std::vector<double> input_gradient(const MlpModel& model,
                                   const std::vector<double>& x,
                                   const std::vector<double>& one_hot);

// Versioned binary checkpoint; exact round trip.
void save_model(const MlpModel& model, const std::string& path);
MlpModel load_model(const std::string& path);

} // namespace dlt
