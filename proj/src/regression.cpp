#include "mixis/regression.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <limits>
#include <string>

namespace mixis {

ControlFitResult fit_control_coefficients(CvKind kind,
                                          std::span<const WeightedSample> samples,
                                          const MixtureWeights& alpha,
                                          const Eigen::VectorXd& theta,
                                          std::optional<int> defensive_index) {
    Eigen::Index num_components = alpha.size();
    Eigen::Index n = static_cast<Eigen::Index>(samples.size());
    if (n < 2) {
        fail(ErrorCode::InvalidArgument,
             "fit_control_coefficients: need at least two samples");
    }
    if (theta.size() != num_components) {
        fail(ErrorCode::DimensionMismatch,
             "fit_control_coefficients: theta length does not match component count");
    }
    if (defensive_index &&
        (*defensive_index < 0 || *defensive_index >= num_components)) {
        fail(ErrorCode::InvalidArgument,
             "fit_control_coefficients: defensive index out of range");
    }

    ControlFitResult result;
    std::vector<int> active;
    active.reserve(static_cast<std::size_t>(num_components));
    for (int j = 0; j < num_components; ++j) {
        if (kind == CvKind::Hat && defensive_index && j == *defensive_index) {
            result.dropped_columns.push_back(j);
        } else {
            active.push_back(j);
        }
    }
    Eigen::Index k = static_cast<Eigen::Index>(active.size());

    Eigen::VectorXd response(n);
    Eigen::MatrixXd predictors(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        const WeightedSample& sample = samples[i];
        if (sample.q_densities.size() != num_components) {
            fail(ErrorCode::DimensionMismatch,
                 "fit_control_coefficients: sample caches a different component count");
        }
        double q_alpha = mixture_density_cached(sample.q_densities, alpha);
        if (!(q_alpha > 0.0)) {
            fail(ErrorCode::ZeroDensityAtSample,
                 "fit_control_coefficients: mixture density vanished at a sample");
        }
        double weight = sample.p_density / q_alpha;
        response[i] = sample.f_value * weight;
        for (Eigen::Index c = 0; c < k; ++c) {
            int j = active[static_cast<std::size_t>(c)];
            double h_j = sample.p_density > 0.0
                             ? sample.q_densities[j] / sample.p_density
                             : 0.0;
            // Shift so the fitted intercept is the estimator value at beta.
            predictors(i, c) = kind == CvKind::Tilde
                                   ? h_j * weight - theta[j]
                                   : (h_j - theta[j]) * weight;
        }
    }

    double max_abs = k > 0 ? predictors.cwiseAbs().maxCoeff() : 0.0;
    if (k == 0 || max_abs <= 1e-300) {
        // Nothing to regress on: fall back to beta = 0 and the plain mean.
        result.degenerate = true;
        result.coefficients = ControlCoefficients{
            Eigen::VectorXd::Zero(num_components), theta};
        double mean = response.mean();
        result.intercept = mean;
        if (n > 1) {
            result.intercept_variance =
                (response.array() - mean).square().sum() /
                (static_cast<double>(n - 1) * static_cast<double>(n));
        }
        result.rank = 1;
        return result;
    }

    // Minimum-norm least squares on the full [1 | predictors] design.
    Eigen::MatrixXd design(n, k + 1);
    design.col(0) = Eigen::VectorXd::Ones(n);
    design.rightCols(k) = predictors;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(design,
                                       Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(std::numeric_limits<double>::epsilon() *
                     static_cast<double>(n));
    Eigen::VectorXd solution = svd.solve(response);
    result.rank = static_cast<int>(svd.rank());

    result.intercept = solution[0];
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(num_components);
    for (Eigen::Index c = 0; c < k; ++c) {
        beta[active[static_cast<std::size_t>(c)]] = solution[c + 1];
    }
    result.coefficients = ControlCoefficients{std::move(beta), theta};

    // Residual variance and the intercept entry of (A'A)^+ give the squared
    // standard error of the intercept (= of the control-variate estimate).
    Eigen::VectorXd residuals = response - design * solution;
    Eigen::Index dof = n - svd.rank();
    double sigma2 = dof > 0 ? residuals.squaredNorm() / static_cast<double>(dof) : 0.0;
    double gram_inv_00 = 0.0;
    double sv_cutoff = svd.threshold() * svd.singularValues()[0];
    for (Eigen::Index r = 0; r < svd.singularValues().size(); ++r) {
        double sv = svd.singularValues()[r];
        if (sv > sv_cutoff) {
            double loading = svd.matrixV()(0, r) / sv;
            gram_inv_00 += loading * loading;
        }
    }
    result.intercept_variance = sigma2 * gram_inv_00;
    return result;
}

}  // namespace mixis
