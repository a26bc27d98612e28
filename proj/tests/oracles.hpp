#pragma once

// Independent test oracles. These recompute expected values through a
// different route than the implementation under test: losses via forward
// passes only (for finite-difference gradients), quantiles via a full sort,
// and mixture draws with known parameters.

#include "dlt/mlp.hpp"
#include "dlt/rng.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace oracle {

// Mean weighted batch loss computed from forward passes only.
inline double batch_loss(const dlt::MlpModel& model, const dlt::Matrix& X,
                         const dlt::Matrix& targets, dlt::LossKind kind,
                         const std::vector<double>& weights) {
    const dlt::Matrix probs = dlt::forward_batch(model, X);
    const std::vector<double> losses = dlt::per_sample_losses(probs, targets, kind);
    double sum = 0.0;
    for (std::size_t i = 0; i < losses.size(); ++i) sum += weights[i] * losses[i];
    return sum / static_cast<double>(losses.size());
}

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

inline double rel_error(double analytic, double numeric) {
    const double denom =
        std::max({std::abs(analytic), std::abs(numeric), 1e-4});
    return std::abs(analytic - numeric) / denom;
}

// Central finite differences over every parameter of the model.
inline GradCheckResult finite_difference_check(
    dlt::MlpModel model, const dlt::Matrix& X, const dlt::Matrix& targets,
    dlt::LossKind kind, const std::vector<double>& weights, double step) {
    const dlt::Gradients grads = dlt::backward(model, X, targets, kind, weights);
    GradCheckResult result;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        for (std::size_t i = 0; i < model.layers[l].weight.data.size(); ++i) {
            double& p = model.layers[l].weight.data[i];
            const double saved = p;
            p = saved + step;
            const double up = batch_loss(model, X, targets, kind, weights);
            p = saved - step;
            const double down = batch_loss(model, X, targets, kind, weights);
            p = saved;
            const double fd = (up - down) / (2.0 * step);
            result.max_rel_error = std::max(
                result.max_rel_error, rel_error(grads.weight[l].data[i], fd));
            ++result.checked;
        }
        for (std::size_t i = 0; i < model.layers[l].bias.size(); ++i) {
            double& p = model.layers[l].bias[i];
            const double saved = p;
            p = saved + step;
            const double up = batch_loss(model, X, targets, kind, weights);
            p = saved - step;
            const double down = batch_loss(model, X, targets, kind, weights);
            p = saved;
            const double fd = (up - down) / (2.0 * step);
            result.max_rel_error =
                std::max(result.max_rel_error, rel_error(grads.bias[l][i], fd));
            ++result.checked;
        }
    }
    return result;
}

// Central finite differences for the input gradient of the cross-entropy.
inline GradCheckResult input_gradient_check(const dlt::MlpModel& model,
                                            std::vector<double> x,
                                            const std::vector<double>& one_hot,
                                            double step) {
    const std::vector<double> grad = dlt::input_gradient(model, x, one_hot);
    GradCheckResult result;
    for (std::size_t d = 0; d < x.size(); ++d) {
        const double saved = x[d];
        x[d] = saved + step;
        const double up = dlt::cross_entropy(dlt::forward(model, x), one_hot);
        x[d] = saved - step;
        const double down = dlt::cross_entropy(dlt::forward(model, x), one_hot);
        x[d] = saved;
        const double fd = (up - down) / (2.0 * step);
        result.max_rel_error =
            std::max(result.max_rel_error, rel_error(grad[d], fd));
        ++result.checked;
    }
    return result;
}

// A random small model plus a matching random batch with soft targets.
struct RandomProblem {
    dlt::MlpModel model;
    dlt::Matrix X;
    dlt::Matrix targets;
    std::vector<double> weights;
};

inline RandomProblem random_problem(std::uint64_t seed) {
    dlt::Rng rng = dlt::make_rng(seed);
    std::uniform_int_distribution<std::size_t> dim_dist(2, 5);
    std::uniform_int_distribution<std::size_t> depth_dist(0, 2);
    std::uniform_int_distribution<std::size_t> classes_dist(2, 4);
    std::uniform_int_distribution<std::size_t> batch_dist(1, 6);
    std::normal_distribution<double> input_dist(0.0, 1.0);
    std::uniform_real_distribution<double> weight_dist(0.3, 2.0);
    std::uniform_real_distribution<double> target_dist(0.05, 1.0);

    RandomProblem p;
    const std::size_t dim = dim_dist(rng);
    const std::size_t classes = classes_dist(rng);
    std::vector<std::size_t> hidden;
    for (std::size_t l = depth_dist(rng); l > 0; --l) hidden.push_back(dim_dist(rng) + 1);
    p.model = dlt::make_mlp(dim, hidden, classes, seed ^ 0x5eed);
    // Randomize biases as well; zero biases can park a rectifier exactly on
    // its kink, where finite differences are meaningless.
    std::uniform_real_distribution<double> jitter(-0.5, 0.5);
    for (dlt::DenseLayer& layer : p.model.layers) {
        for (double& w : layer.weight.data) w += jitter(rng);
        for (double& b : layer.bias) b += jitter(rng);
    }

    const std::size_t n = batch_dist(rng);
    p.X = dlt::Matrix(n, dim);
    for (double& v : p.X.data) v = input_dist(rng);
    p.targets = dlt::Matrix(n, classes);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            p.targets(i, c) = target_dist(rng);
            sum += p.targets(i, c);
        }
        for (std::size_t c = 0; c < classes; ++c) p.targets(i, c) /= sum;
    }
    p.weights.resize(n);
    for (double& w : p.weights) w = weight_dist(rng);
    return p;
}

// Nearest-rank quantile through a full sort.
inline double sorted_quantile(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    std::size_t rank =
        static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
    if (rank == 0) rank = 1;
    if (rank > values.size()) rank = values.size();
    return values[rank - 1];
}

} // namespace oracle
