#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "mixis/common.hpp"
#include "mixis/densities.hpp"
#include "mixis/estimators.hpp"
#include "mixis/simplex.hpp"

namespace mixis::oracle {

// Finite sample space on which every estimator's mean and variance can be
// computed by exact enumeration. Sized for exhaustive cross-checks (tens of
// atoms), not for production problems.
struct DiscreteSpace {
    Eigen::VectorXd p;  // nominal pmf over atoms, length M
    Eigen::MatrixXd q;  // proposal pmfs, one row per component (J x M)
    Eigen::VectorXd f;  // integrand values at the atoms

    int atoms() const noexcept { return static_cast<int>(p.size()); }
    int components() const noexcept { return static_cast<int>(q.rows()); }

    // Shape and pmf checks; raises ShapeMismatch / InvalidArgument.
    void validate() const;
    // True when q_j is positive at every atom carrying f*p mass, i.e. when
    // importance sampling from q_j alone is unbiased.
    bool covers_integrand(int j) const;
};

// Which estimator's exact variance to compute. All variances are per-sample
// (n = 1 normalization); for MultipleIs the total count plays the role of n.
struct VarianceSpec {
    enum class Kind { Plain, Is, Mixture, MixtureCv, Stratified, StratifiedCv, MultipleIs };

    Kind kind = Kind::Plain;
    int proposal = 0;                            // Is
    std::optional<MixtureWeights> alpha;         // Mixture*/Stratified*
    Eigen::VectorXd beta;                        // *Cv
    CvKind cv_kind = CvKind::Hat;                // *Cv
    Eigen::MatrixXd omega;                       // MultipleIs, J x M
    std::vector<int> counts;                     // MultipleIs

    static VarianceSpec plain() { return {}; }
    static VarianceSpec is(int proposal_index);
    static VarianceSpec mixture(MixtureWeights alpha);
    static VarianceSpec mixture_cv(MixtureWeights alpha, Eigen::VectorXd beta,
                                   CvKind kind);
    static VarianceSpec stratified(MixtureWeights alpha);
    static VarianceSpec stratified_cv(MixtureWeights alpha, Eigen::VectorXd beta,
                                      CvKind kind);
    static VarianceSpec multiple_is(Eigen::MatrixXd omega, std::vector<int> counts);
};

// Exact integral of f under p.
double exact_mu(const DiscreteSpace& space);

// Exact feature means theta_j = E_p[q_j/p] (sum of q_j over the support of
// p); equal to one for every j exactly when no q_j mass escapes p's support.
Eigen::VectorXd exact_theta(const DiscreteSpace& space);

// Exact per-sample variance of the selected estimator. Raises
// SupportViolation when the spec's unbiasedness conditions fail: Is needs
// q > 0 on the f*p support; mixture kinds need q_alpha > 0 on the f*p
// support; control-variate kinds additionally need p > 0 wherever any q_j
// is, and q_alpha > 0 wherever p is, so the feature means are exact.
double exact_variance(const DiscreteSpace& space, const VarianceSpec& spec);

struct OptimalBeta {
    Eigen::VectorXd beta;
    double variance;  // minimized per-sample variance at beta
};

// Exact variance-minimizing control coefficients for the mixture estimator
// of the given kind: minimum-norm solution of the population normal
// equations (eigenvalues of the feature Gram below machine-epsilon * max * J
// treated as zero). Pass a one-hot alpha for a single-proposal family.
OptimalBeta exact_optimal_beta(const DiscreteSpace& space, const MixtureWeights& alpha,
                               CvKind kind);

// Exact mean square of the weight-optimization criterion in the solver's
// sign convention: sum_m (f p + beta'(q - p))^2 / q_alpha. Equals the
// control-variate second moment sigma^2 + mu^2 with the estimator-side beta
// negated. `beta` spans all J components.
double exact_ms_criterion(const DiscreteSpace& space, const MixtureWeights& alpha,
                          const Eigen::VectorXd& beta);

// Bridges a discrete space into the sampling stack (pmf proposals, pmf
// nominal, table-lookup integrand) so pipelines can run end to end on
// oracle-checkable problems.
struct DiscreteProblem {
    ProposalFamily family;
    DensityModel p;
    Integrand f;
};
DiscreteProblem to_sampling_problem(const DiscreteSpace& space,
                                    std::optional<int> defensive_index);

}  // namespace mixis::oracle
