#include "dlt/ssl.hpp"

#include "dlt/errors.hpp"
#include "dlt/matrix.hpp"

#include <cmath>

namespace dlt {

void SslWeights::validate() const {
    if (lambda_n < 0.0 || lambda_r < 0.0)
        throw ContractError("ssl: loss weights must be >= 0");
    if (temperature <= 0.0) throw ContractError("ssl: temperature must be > 0");
    if (k_augment == 0) throw ContractError("ssl: k_augment must be >= 1");
    if (mix_fraction < 0.0 || mix_fraction > 1.0)
        throw ContractError("ssl: mix_fraction must be in [0,1]");
    if (beta_alpha <= 0.0) throw ContractError("ssl: beta_alpha must be > 0");
    if (augment_strength < 0.0)
        throw ContractError("ssl: augment_strength must be >= 0");
}

BatchSplit split_batch(const std::vector<std::size_t>& sample_ids,
                       const std::vector<double>& losses, double threshold) {
    if (sample_ids.size() != losses.size())
        throw ShapeError("split_batch: ids and losses differ in length");
    if (!std::isfinite(threshold))
        throw ContractError("split_batch: threshold must be finite");
    BatchSplit split;
    split.threshold = threshold;
    for (std::size_t j = 0; j < losses.size(); ++j) {
        if (losses[j] <= threshold)
            split.clean_ids.push_back(sample_ids[j]);
        else
            split.noisy_ids.push_back(sample_ids[j]);
    }
    return split;
}

std::vector<double> sharpen(const std::vector<double>& probs,
                            double temperature) {
    if (temperature <= 0.0) throw ContractError("sharpen: temperature must be > 0");
    const double inv_t = 1.0 / temperature;
    std::vector<double> out(probs.size());
    double sum = 0.0;
    for (std::size_t c = 0; c < probs.size(); ++c) {
        if (probs[c] < 0.0)
            throw ContractError("sharpen: negative probability");
        out[c] = std::pow(probs[c], inv_t);
        sum += out[c];
    }
    if (sum <= 0.0) throw ContractError("sharpen: all probabilities are zero");
    for (double& v : out) v /= sum;
    return out;
}

std::vector<double> pseudo_label(const MlpModel& model,
                                 const std::vector<std::vector<double>>& views,
                                 double temperature) {
    if (views.empty()) throw ContractError("pseudo_label: need at least one view");
    Matrix X(views.size(), views.front().size());
    for (std::size_t v = 0; v < views.size(); ++v) {
        if (views[v].size() != X.cols)
            throw ShapeError("pseudo_label: views differ in dimension");
        std::copy(views[v].begin(), views[v].end(), X.row(v));
    }
    Matrix probs = forward_batch(model, X);
    std::vector<double> mean(probs.cols, 0.0);
    for (std::size_t c = 0; c < probs.cols; ++c) {
        double sum = 0.0;
        for (std::size_t v = 0; v < probs.rows; ++v) sum += probs(v, c);
        mean[c] = sum / static_cast<double>(probs.rows);
    }
    return sharpen(mean, temperature);
}

MixedSample mixup(const std::vector<double>& x1, const std::vector<double>& y1,
                  const std::vector<double>& x2, const std::vector<double>& y2,
                  double lambda) {
    if (x1.size() != x2.size() || y1.size() != y2.size())
        throw ShapeError("mixup: operand sizes differ");
    if (lambda < 0.0 || lambda > 1.0)
        throw ContractError("mixup: lambda must be in [0,1]");
    MixedSample m;
    m.x.resize(x1.size());
    m.y.resize(y1.size());
    for (std::size_t d = 0; d < x1.size(); ++d)
        m.x[d] = lambda * x1[d] + (1.0 - lambda) * x2[d];
    for (std::size_t c = 0; c < y1.size(); ++c)
        m.y[c] = lambda * y1[c] + (1.0 - lambda) * y2[c];
    return m;
}

double draw_mixup_lambda(Rng& rng, double beta_alpha) {
    if (beta_alpha <= 0.0)
        throw ContractError("draw_mixup_lambda: beta_alpha must be > 0");
    std::gamma_distribution<double> gamma(beta_alpha, 1.0);
    const double g1 = gamma(rng);
    const double g2 = gamma(rng);
    const double l = (g1 + g2 > 0.0) ? g1 / (g1 + g2) : 0.5;
    return std::max(l, 1.0 - l);
}

double reg_loss(const std::vector<double>& mean_prediction) {
    if (mean_prediction.empty()) throw ContractError("reg_loss: empty input");
    const double pi = 1.0 / static_cast<double>(mean_prediction.size());
    double kl = 0.0;
    for (double p : mean_prediction)
        kl += pi * std::log(pi / std::max(p, 1e-12));
    return kl;
}

double total_loss(double l_clean, double l_noisy, double l_reg, double lambda_n,
                  double lambda_r) {
    return l_clean + lambda_n * l_noisy + lambda_r * l_reg;
}

} // namespace dlt
