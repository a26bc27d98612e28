#include "dlt/gmm.hpp"

#include "dlt/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace dlt {

namespace {

constexpr double kVarianceFloor = 1e-6;
constexpr double kDensityFloor = 1e-300;
constexpr double kWeightFloor = 1e-8;

double normal_pdf(double x, double mean, double var) {
    const double d = x - mean;
    return std::exp(-0.5 * d * d / var) /
           std::sqrt(2.0 * std::numbers::pi * var);
}

struct HalfStats {
    double mean;
    double var;
};

HalfStats moments(const double* begin, const double* end) {
    const std::size_t n = static_cast<std::size_t>(end - begin);
    double mean = 0.0;
    for (const double* p = begin; p != end; ++p) mean += *p;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const double* p = begin; p != end; ++p) {
        const double d = *p - mean;
        var += d * d;
    }
    var /= static_cast<double>(n);
    return {mean, std::max(var, kVarianceFloor)};
}

} // namespace

GmmFit fit_gmm2(const std::vector<double>& values, std::size_t max_iter,
                double tol, std::uint64_t /*seed*/) {
    const std::size_t n = values.size();
    if (n < 4) throw ContractError("fit_gmm2: need at least 4 values");
    for (double v : values)
        if (!std::isfinite(v)) throw NumericError("fit_gmm2: non-finite value");
    if (max_iter == 0) throw ContractError("fit_gmm2: max_iter must be >= 1");

    // EM runs on a sorted copy so the fit cannot depend on input order.
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    const double range = sorted.back() - sorted.front();
    if (range <= 1e-12 * std::max(1.0, std::abs(sorted.back())))
        throw DegeneracyError(
            "fit_gmm2: all values are (nearly) equal; two-component mixture is "
            "unidentifiable");

    const std::size_t half = n / 2;
    HalfStats lo = moments(sorted.data(), sorted.data() + half);
    HalfStats hi = moments(sorted.data() + half, sorted.data() + n);

    GaussianMixture2 mix;
    mix.weight1 = static_cast<double>(half) / static_cast<double>(n);
    mix.weight2 = 1.0 - mix.weight1;
    mix.mean1 = lo.mean;
    mix.mean2 = hi.mean;
    mix.var1 = lo.var;
    mix.var2 = hi.var;

    GmmFit fit;
    std::vector<double> resp(n);
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        // E-step.
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double a1 = std::max(
                mix.weight1 * normal_pdf(sorted[i], mix.mean1, mix.var1),
                kDensityFloor);
            const double a2 = std::max(
                mix.weight2 * normal_pdf(sorted[i], mix.mean2, mix.var2),
                kDensityFloor);
            resp[i] = a1 / (a1 + a2);
            ll += std::log(a1 + a2);
        }
        fit.log_likelihoods.push_back(ll);
        fit.iterations = iter + 1;
        if (iter > 0 && ll - prev_ll < tol) break;
        prev_ll = ll;

        // M-step.
        double r1 = 0.0, m1 = 0.0, m2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            r1 += resp[i];
            m1 += resp[i] * sorted[i];
            m2 += (1.0 - resp[i]) * sorted[i];
        }
        const double r2 = static_cast<double>(n) - r1;
        const double d1 = std::max(r1, 1e-12);
        const double d2 = std::max(r2, 1e-12);
        mix.mean1 = m1 / d1;
        mix.mean2 = m2 / d2;
        double v1 = 0.0, v2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e1 = sorted[i] - mix.mean1;
            const double e2 = sorted[i] - mix.mean2;
            v1 += resp[i] * e1 * e1;
            v2 += (1.0 - resp[i]) * e2 * e2;
        }
        mix.var1 = std::max(v1 / d1, kVarianceFloor);
        mix.var2 = std::max(v2 / d2, kVarianceFloor);
        mix.weight1 = std::clamp(r1 / static_cast<double>(n), kWeightFloor,
                                 1.0 - kWeightFloor);
        mix.weight2 = 1.0 - mix.weight1;
    }

    if (mix.mean1 > mix.mean2) {
        std::swap(mix.mean1, mix.mean2);
        std::swap(mix.var1, mix.var2);
        std::swap(mix.weight1, mix.weight2);
    }
    if (mix.mean2 - mix.mean1 <= 1e-6 * std::max(1.0, std::abs(mix.mean1)))
        throw DegeneracyError("fit_gmm2: components collapsed onto one mean");
    fit.mixture = mix;
    return fit;
}

double posterior_clean(const GaussianMixture2& gmm, double value) {
    const double a1 =
        std::max(gmm.weight1 * normal_pdf(value, gmm.mean1, gmm.var1),
                 kDensityFloor * gmm.weight1);
    const double a2 =
        std::max(gmm.weight2 * normal_pdf(value, gmm.mean2, gmm.var2),
                 kDensityFloor * gmm.weight2);
    return a1 / (a1 + a2);
}

EstimationResult estimate_noise_rate(const std::vector<double>& diffs,
                                     double theta) {
    if (theta < 0.0 || theta > 1.0)
        throw ContractError("estimate_noise_rate: theta must be in [0,1]");
    GmmFit fit = fit_gmm2(diffs, 200, 1e-6, 0);
    EstimationResult result;
    result.theta = theta;
    result.mixture = fit.mixture;
    result.phi.resize(diffs.size());
    for (std::size_t i = 0; i < diffs.size(); ++i) {
        result.phi[i] = posterior_clean(fit.mixture, diffs[i]);
        if (result.phi[i] >= theta) ++result.n_clean;
    }
    result.estimated_rate = 1.0 - static_cast<double>(result.n_clean) /
                                      static_cast<double>(diffs.size());
    return result;
}

std::string estimation_to_json(const EstimationResult& result) {
    nlohmann::json j;
    j["theta"] = result.theta;
    j["n"] = result.phi.size();
    j["n_clean"] = result.n_clean;
    j["estimated_rate"] = result.estimated_rate;
    j["mixture"] = {
        {"weights", {result.mixture.weight1, result.mixture.weight2}},
        {"means", {result.mixture.mean1, result.mixture.mean2}},
        {"variances", {result.mixture.var1, result.mixture.var2}},
    };
    constexpr int kBins = 20;
    std::vector<std::size_t> counts(kBins, 0);
    for (double p : result.phi) {
        int bin = static_cast<int>(p * kBins);
        if (bin >= kBins) bin = kBins - 1;
        if (bin < 0) bin = 0;
        counts[static_cast<std::size_t>(bin)]++;
    }
    std::vector<double> edges(kBins + 1);
    for (int b = 0; b <= kBins; ++b)
        edges[static_cast<std::size_t>(b)] = static_cast<double>(b) / kBins;
    j["phi_histogram"] = {{"edges", edges}, {"counts", counts}};
    return j.dump(2);
}

} // namespace dlt
