#pragma once

#include "dlt/mlp.hpp"
#include "dlt/rng.hpp"

#include <cstddef>
#include <vector>

namespace dlt {

// One batch partitioned by loss threshold.
struct BatchSplit {
    std::vector<std::size_t> clean_ids;
    std::vector<std::size_t> noisy_ids;
    double threshold = 0.0;
};

struct SslWeights {
    double lambda_n = 25.0;       // weight of the noisy-side loss
    double lambda_r = 1.0;        // weight of the uniform-prior regularizer
    double temperature = 0.5;     // sharpening T
    std::size_t k_augment = 2;    // views per sample
    double mix_fraction = 0.5;    // portion of clean views offered for mixing
    double beta_alpha = 4.0;      // Beta(alpha, alpha) for mixup lambda
    double augment_strength = 0.1;

    void validate() const;
};

// clean = losses <= threshold (inclusive), noisy = the rest.
BatchSplit split_batch(const std::vector<std::size_t>& sample_ids,
                       const std::vector<double>& losses, double threshold);

// Temperature-scaled renormalization: p_c^(1/T) / sum_k p_k^(1/T).
std::vector<double> sharpen(const std::vector<double>& probs,
                            double temperature);

// Average the model's outputs over the views, then sharpen.
std::vector<double> pseudo_label(const MlpModel& model,
                                 const std::vector<std::vector<double>>& views,
                                 double temperature);

struct MixedSample {
    std::vector<double> x;
    std::vector<double> y;
};

// Convex combination lambda*(x1,y1) + (1-lambda)*(x2,y2).
MixedSample mixup(const std::vector<double>& x1, const std::vector<double>& y1,
                  const std::vector<double>& x2, const std::vector<double>& y2,
                  double lambda);

// max(l, 1-l) for l ~ Beta(alpha, alpha): the first mixup component dominates.
double draw_mixup_lambda(Rng& rng, double beta_alpha);

// KL(uniform || mean_prediction), denominators clamped at 1e-12.
double reg_loss(const std::vector<double>& mean_prediction);

// l_clean + lambda_n * l_noisy + lambda_r * l_reg.
double total_loss(double l_clean, double l_noisy, double l_reg, double lambda_n,
                  double lambda_r);

} // namespace dlt
