#pragma once

#include <Eigen/Dense>
#include <functional>
#include <span>
#include <vector>

#include "mixis/common.hpp"
#include "mixis/densities.hpp"
#include "mixis/simplex.hpp"

namespace mixis {

// The two control-variate estimator forms. Tilde subtracts beta'h inside the
// importance weight and adds beta'theta back outside; Hat folds the feature
// means into the weighted term. They coincide when the empirical mean of
// p/q_alpha is exactly one, and always differ by (beta'theta/n) sum(p/q - 1).
enum class CvKind { Tilde, Hat };

// Coefficients for density-ratio control features: beta_j multiplies
// h_j = q_j/p, theta_j is its known mean under p (one when supports line up).
struct ControlCoefficients {
    Eigen::VectorXd beta;
    Eigen::VectorXd theta;

    static ControlCoefficients with_unit_means(Eigen::VectorXd beta) {
        Eigen::VectorXd theta = Eigen::VectorXd::Ones(beta.size());
        return {std::move(beta), std::move(theta)};
    }
};

struct EstimateReport {
    double estimate = 0.0;
    // Estimated variance of `estimate` itself (already divided by n).
    double variance_estimate = 0.0;
    int n = 0;
};

// Plain self-normalized-free importance sampling: mean of f*p/q over draws
// from q. Arrays must be aligned per sample; q must be positive everywhere.
EstimateReport importance_estimate(std::span<const double> f_values,
                                   std::span<const double> p_values,
                                   std::span<const double> q_values);

// Mixture importance sampling off cached samples: mean of f*p/q_alpha.
EstimateReport mixture_estimate(std::span<const WeightedSample> samples,
                                const MixtureWeights& alpha);

// Control-variate mixture estimate of the given kind at fixed coefficients.
// The variance_estimate is the sample variance of the adjusted per-sample
// terms divided by n; callers holding a regression fit may prefer its
// intercept variance.
EstimateReport cv_estimate(CvKind kind, std::span<const WeightedSample> samples,
                           const MixtureWeights& alpha,
                           const ControlCoefficients& coefficients);

// Maps tilde coefficients to hat coefficients that reproduce the tilde
// estimate exactly when the family carries a defensive component and all
// theta_j = 1: gamma_j = beta_j - alpha_j * sum(beta).
Eigen::VectorXd gamma_from_beta(const Eigen::VectorXd& beta,
                                const MixtureWeights& alpha);

// Weighting functions omega_j for multiple importance sampling. Balance
// reproduces the stratified mixture estimate exactly; Power uses
// omega_j proportional to q_j^r; Indicator puts all weight on one stratum.
struct PartitionOfUnity {
    enum class Kind { Balance, Power, Indicator, Custom };

    Kind kind = Kind::Balance;
    double power_exponent = 2.0;
    int indicator_component = 0;
    // Custom: full omega vector at a sample point.
    std::function<Eigen::VectorXd(const WeightedSample&)> custom;

    static PartitionOfUnity balance() { return {Kind::Balance, 2.0, 0, nullptr}; }
    static PartitionOfUnity power(double exponent) {
        return {Kind::Power, exponent, 0, nullptr};
    }
    static PartitionOfUnity indicator(int component) {
        return {Kind::Indicator, 2.0, component, nullptr};
    }
    static PartitionOfUnity custom_weights(
        std::function<Eigen::VectorXd(const WeightedSample&)> fn) {
        return {Kind::Custom, 2.0, 0, std::move(fn)};
    }
};

// Multiple importance sampling over per-component strata (counts are the
// stratum sizes). Verifies the partition-of-unity invariants at every
// sampled point: weights sum to one wherever p > 0, and omega_j vanishes
// wherever q_j does. For the balance heuristic the per-point coefficient
// reduces to p/(n q_alpha) with alpha_j = n_j/n, making the estimate
// bit-identical to mixture_estimate on the same stratum-ordered samples.
EstimateReport multiple_is_estimate(const std::vector<std::vector<WeightedSample>>& strata,
                                    const PartitionOfUnity& omega);

// Splits a flat stratum-tagged sample list into per-component strata,
// preserving order (the inverse of how draw_mixture lays out samples).
std::vector<std::vector<WeightedSample>> partition_by_stratum(
    std::span<const WeightedSample> samples, int num_components);

}  // namespace mixis
