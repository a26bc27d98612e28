#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dlt {

// Two-component 1-D Gaussian mixture; after fitting, component 1 is the one
// with the smaller mean.
struct GaussianMixture2 {
    double weight1 = 0.5;
    double weight2 = 0.5;
    double mean1 = 0.0;
    double mean2 = 0.0;
    double var1 = 1.0;
    double var2 = 1.0;
};

struct GmmFit {
    GaussianMixture2 mixture;
    std::vector<double> log_likelihoods;  // one entry per EM iteration
    std::size_t iterations = 0;
};

// EM from a median-split initialization. The seed is accepted for interface
// stability (reserved for randomized restarts); the fit itself is
// deterministic and invariant to input order.
GmmFit fit_gmm2(const std::vector<double>& values, std::size_t max_iter,
                double tol, std::uint64_t seed);

// Posterior probability of the smaller-mean component at `value`.
double posterior_clean(const GaussianMixture2& gmm, double value);

struct EstimationResult {
    std::vector<double> phi;  // posterior of the small-difference component
    double theta = 0.5;
    std::size_t n_clean = 0;
    double estimated_rate = 0.0;
    GaussianMixture2 mixture;
};

// Fit a mixture to loss differences and threshold the clean posterior:
// n_clean = |{phi_i >= theta}|, rate = 1 - n_clean / N.
EstimationResult estimate_noise_rate(const std::vector<double>& diffs,
                                     double theta);

// JSON rendering with a phi histogram summary.
std::string estimation_to_json(const EstimationResult& result);

} // namespace dlt
