#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <vector>

#include "mixis/densities.hpp"
#include "mixis/estimators.hpp"

namespace mixis {

// Outcome of fitting control-variate coefficients on a sample.
struct ControlFitResult {
    ControlCoefficients coefficients;  // beta in full component space
    // The regression intercept equals the control-variate estimate at the
    // fitted beta; its squared standard error is the preferred variance
    // estimate for that estimate.
    double intercept = 0.0;
    double intercept_variance = 0.0;
    int rank = 0;  // of the [1 | predictors] design
    std::vector<int> dropped_columns;  // 0-based component indices removed a priori
    bool degenerate = false;           // all predictor columns numerically zero
};

// Least-squares fit of the control coefficients on cached samples drawn from
// the alpha-mixture (unweighted LS is the right weighting for draws from
// q_alpha). Tilde regresses f*p/q_alpha on the features h_j*p/q_alpha; hat
// uses (h_j - theta_j)*p/q_alpha. Both designs carry an intercept, predictors
// are shifted so the intercept equals the estimator value at the fitted beta.
//
// A defensive component's hat feature is identically zero, so that column is
// dropped a priori (coefficient zero, index recorded). Rank deficiency - the
// exact tilde collinearity sum_j alpha_j h_j p/q_alpha = 1 included - is
// resolved by minimum-norm least squares: singular values below
// machine-epsilon * max-singular-value * n are treated as zero. If every
// predictor column is numerically zero the fit degenerates to beta = 0.
ControlFitResult fit_control_coefficients(CvKind kind,
                                          std::span<const WeightedSample> samples,
                                          const MixtureWeights& alpha,
                                          const Eigen::VectorXd& theta,
                                          std::optional<int> defensive_index);

inline ControlFitResult fit_control_coefficients(CvKind kind,
                                                 std::span<const WeightedSample> samples,
                                                 const MixtureWeights& alpha,
                                                 std::optional<int> defensive_index) {
    return fit_control_coefficients(kind, samples, alpha,
                                    Eigen::VectorXd::Ones(alpha.size()),
                                    defensive_index);
}

}  // namespace mixis
