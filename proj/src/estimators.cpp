#include "mixis/estimators.hpp"

#include <cmath>
#include <string>

namespace mixis {

namespace {

// Mean and sample-variance-of-the-mean over per-sample terms, accumulated in
// index order with compensation.
EstimateReport report_from_terms(const std::vector<double>& terms) {
    EstimateReport report;
    report.n = static_cast<int>(terms.size());
    if (terms.empty()) {
        fail(ErrorCode::InvalidArgument, "estimator: no samples");
    }
    CompensatedSum total;
    for (double t : terms) total.add(t);
    report.estimate = total.value() / static_cast<double>(report.n);
    if (report.n > 1) {
        CompensatedSum squares;
        for (double t : terms) {
            double centered = t - report.estimate;
            squares.add(centered * centered);
        }
        report.variance_estimate = squares.value() /
                                   (static_cast<double>(report.n - 1) *
                                    static_cast<double>(report.n));
    }
    return report;
}

double cached_mixture_density_checked(const WeightedSample& sample,
                                      const MixtureWeights& alpha, const char* where) {
    double q_alpha = mixture_density_cached(sample.q_densities, alpha);
    if (!(q_alpha > 0.0)) {
        fail(ErrorCode::ZeroDensityAtSample,
             std::string(where) + ": mixture density vanished at a sample point");
    }
    return q_alpha;
}

}  // namespace

EstimateReport importance_estimate(std::span<const double> f_values,
                                   std::span<const double> p_values,
                                   std::span<const double> q_values) {
    if (f_values.size() != p_values.size() || f_values.size() != q_values.size()) {
        fail(ErrorCode::DimensionMismatch,
             "importance_estimate: f, p, q arrays differ in length");
    }
    std::vector<double> terms(f_values.size());
    for (std::size_t i = 0; i < f_values.size(); ++i) {
        if (!(q_values[i] > 0.0)) {
            fail(ErrorCode::ZeroDensityAtSample,
                 "importance_estimate: proposal density is not positive at sample " +
                     std::to_string(i));
        }
        terms[i] = f_values[i] * p_values[i] / q_values[i];
    }
    return report_from_terms(terms);
}

EstimateReport mixture_estimate(std::span<const WeightedSample> samples,
                                const MixtureWeights& alpha) {
    std::vector<double> terms(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        double q_alpha =
            cached_mixture_density_checked(samples[i], alpha, "mixture_estimate");
        terms[i] = samples[i].f_value * samples[i].p_density / q_alpha;
    }
    return report_from_terms(terms);
}

EstimateReport cv_estimate(CvKind kind, std::span<const WeightedSample> samples,
                           const MixtureWeights& alpha,
                           const ControlCoefficients& coefficients) {
    if (coefficients.beta.size() != alpha.size() ||
        coefficients.theta.size() != alpha.size()) {
        fail(ErrorCode::DimensionMismatch,
             "cv_estimate: coefficient length does not match the component count");
    }
    double beta_dot_theta = coefficients.beta.dot(coefficients.theta);
    std::vector<double> terms(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const WeightedSample& sample = samples[i];
        double q_alpha = cached_mixture_density_checked(sample, alpha, "cv_estimate");
        // beta' h with h_j = q_j / p, defined as zero where p vanishes.
        double beta_dot_h = sample.p_density > 0.0
                                ? coefficients.beta.dot(sample.q_densities) /
                                      sample.p_density
                                : 0.0;
        double weight = sample.p_density / q_alpha;
        if (kind == CvKind::Tilde) {
            terms[i] = (sample.f_value - beta_dot_h) * weight + beta_dot_theta;
        } else {
            terms[i] = (sample.f_value - beta_dot_h + beta_dot_theta) * weight;
        }
    }
    return report_from_terms(terms);
}

Eigen::VectorXd gamma_from_beta(const Eigen::VectorXd& beta,
                                const MixtureWeights& alpha) {
    if (beta.size() != alpha.size()) {
        fail(ErrorCode::DimensionMismatch,
             "gamma_from_beta: beta length does not match the component count");
    }
    double beta_sum = beta.sum();
    return beta - beta_sum * alpha.values();
}

std::vector<std::vector<WeightedSample>> partition_by_stratum(
    std::span<const WeightedSample> samples, int num_components) {
    std::vector<std::vector<WeightedSample>> strata(
        static_cast<std::size_t>(num_components));
    for (const WeightedSample& sample : samples) {
        if (!sample.stratum || *sample.stratum < 0 || *sample.stratum >= num_components) {
            fail(ErrorCode::InvalidArgument,
                 "partition_by_stratum: sample lacks a valid stratum tag");
        }
        strata[static_cast<std::size_t>(*sample.stratum)].push_back(sample);
    }
    return strata;
}

namespace {

Eigen::VectorXd partition_weights(const PartitionOfUnity& omega,
                                  const WeightedSample& sample,
                                  const Eigen::VectorXd& counts_over_n) {
    Eigen::Index num_components = sample.q_densities.size();
    switch (omega.kind) {
        case PartitionOfUnity::Kind::Balance: {
            double denom = counts_over_n.dot(sample.q_densities);
            Eigen::VectorXd w = Eigen::VectorXd::Zero(num_components);
            if (denom > 0.0) {
                for (Eigen::Index j = 0; j < num_components; ++j) {
                    w[j] = counts_over_n[j] * sample.q_densities[j] / denom;
                }
            }
            return w;
        }
        case PartitionOfUnity::Kind::Power: {
            Eigen::VectorXd powered(num_components);
            double total = 0.0;
            for (Eigen::Index j = 0; j < num_components; ++j) {
                powered[j] = sample.q_densities[j] > 0.0
                                 ? std::pow(sample.q_densities[j], omega.power_exponent)
                                 : 0.0;
                total += powered[j];
            }
            if (total > 0.0) powered /= total;
            return powered;
        }
        case PartitionOfUnity::Kind::Indicator: {
            Eigen::VectorXd w = Eigen::VectorXd::Zero(num_components);
            w[omega.indicator_component] = 1.0;
            return w;
        }
        case PartitionOfUnity::Kind::Custom: {
            Eigen::VectorXd w = omega.custom(sample);
            if (w.size() != num_components) {
                fail(ErrorCode::DimensionMismatch,
                     "multiple_is_estimate: custom partition returned wrong length");
            }
            return w;
        }
    }
    fail(ErrorCode::InvalidArgument, "multiple_is_estimate: unknown partition kind");
}

void check_partition_invariants(const Eigen::VectorXd& w, const WeightedSample& sample) {
    for (Eigen::Index j = 0; j < w.size(); ++j) {
        if (sample.q_densities[j] == 0.0 && std::abs(w[j]) > 1e-12) {
            fail(ErrorCode::PartitionInvariantViolation,
                 "multiple_is_estimate: omega_" + std::to_string(j + 1) +
                     " is nonzero where q_" + std::to_string(j + 1) + " vanishes");
        }
    }
    if (sample.p_density > 0.0 && std::abs(w.sum() - 1.0) > 1e-9) {
        fail(ErrorCode::PartitionInvariantViolation,
             "multiple_is_estimate: partition weights sum to " + std::to_string(w.sum()) +
                 " at a point where p > 0");
    }
}

}  // namespace

EstimateReport multiple_is_estimate(const std::vector<std::vector<WeightedSample>>& strata,
                                    const PartitionOfUnity& omega) {
    int num_components = static_cast<int>(strata.size());
    if (num_components == 0) {
        fail(ErrorCode::InvalidArgument, "multiple_is_estimate: no strata");
    }
    Eigen::VectorXd counts(num_components);
    int n_total = 0;
    for (int j = 0; j < num_components; ++j) {
        if (strata[j].empty()) {
            fail(ErrorCode::InsufficientReplicates,
                 "multiple_is_estimate: stratum " + std::to_string(j + 1) + " is empty");
        }
        counts[j] = static_cast<double>(strata[j].size());
        n_total += static_cast<int>(strata[j].size());
    }
    // Same construction mixture_estimate callers use, so the balance-kind
    // fold is term-for-term identical to the mixture fold.
    MixtureWeights alpha = MixtureWeights::renormalized(counts);
    double n_as_double = static_cast<double>(n_total);

    bool is_balance = omega.kind == PartitionOfUnity::Kind::Balance;
    CompensatedSum total;
    double variance_of_mean = 0.0;
    for (int j = 0; j < num_components; ++j) {
        std::vector<double> stratum_terms(strata[j].size());
        for (std::size_t i = 0; i < strata[j].size(); ++i) {
            const WeightedSample& sample = strata[j][i];
            if (static_cast<int>(sample.q_densities.size()) != num_components) {
                fail(ErrorCode::DimensionMismatch,
                     "multiple_is_estimate: sample caches a different component count");
            }
            Eigen::VectorXd w = partition_weights(omega, sample, alpha.values());
            check_partition_invariants(w, sample);
            if (!(sample.q_densities[j] > 0.0)) {
                fail(ErrorCode::ZeroDensityAtSample,
                     "multiple_is_estimate: q_" + std::to_string(j + 1) +
                         " vanished at one of its own samples");
            }
            // Stratum-j term omega_j * f * p / q_j; used for the variance
            // estimate, and for the estimate itself in the general kinds.
            stratum_terms[i] =
                w[j] * sample.f_value * sample.p_density / sample.q_densities[j];
            if (is_balance) {
                // Balance collapses to the mixture coefficient p/(n q_alpha)
                // per point, independent of stratum; folding exactly that
                // expression keeps the estimate bit-identical to
                // mixture_estimate on the same stratum-ordered samples.
                double q_alpha = cached_mixture_density_checked(sample, alpha,
                                                                "multiple_is_estimate");
                total.add(sample.f_value * sample.p_density / q_alpha);
            } else {
                total.add(stratum_terms[i] / counts[j]);
            }
        }
        // This stratum's contribution to the variance of the estimate:
        // sample variance of its terms over n_j draws.
        CompensatedSum stratum_sum;
        for (double t : stratum_terms) stratum_sum.add(t);
        double stratum_mean = stratum_sum.value() / counts[j];
        if (strata[j].size() > 1) {
            CompensatedSum squares;
            for (double t : stratum_terms) {
                double centered = t - stratum_mean;
                squares.add(centered * centered);
            }
            variance_of_mean += squares.value() / ((counts[j] - 1.0) * counts[j]);
        }
    }

    EstimateReport report;
    report.n = n_total;
    report.estimate = is_balance ? total.value() / n_as_double : total.value();
    report.variance_estimate = variance_of_mean;
    return report;
}

}  // namespace mixis
