#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "mixis/common.hpp"
#include "mixis/rng.hpp"
#include "mixis/simplex.hpp"

namespace mixis {

// A probability density (or finite pmf) that can be evaluated in log space
// and sampled from a counter-based stream.
class Density {
  public:
    virtual ~Density() = default;
    virtual int dimension() const noexcept = 0;
    // Natural-log density; -inf where the density vanishes.
    virtual double log_density(const Eigen::VectorXd& x) const = 0;
    virtual Eigen::VectorXd draw(RngStream& stream) const = 0;

    double density(const Eigen::VectorXd& x) const { return std::exp(log_density(x)); }
};

using DensityModel = std::shared_ptr<const Density>;

// Multivariate normal. The covariance is factorized once at construction
// (lower-triangular Cholesky); evaluation solves against the factor and
// sampling maps iid standard normals through it.
class GaussianDensity final : public Density {
  public:
    GaussianDensity(Eigen::VectorXd mean, const Eigen::MatrixXd& covariance);

    int dimension() const noexcept override { return static_cast<int>(mean_.size()); }
    double log_density(const Eigen::VectorXd& x) const override;
    Eigen::VectorXd draw(RngStream& stream) const override;

    const Eigen::VectorXd& mean() const noexcept { return mean_; }

    static DensityModel make(Eigen::VectorXd mean, const Eigen::MatrixXd& covariance) {
        return std::make_shared<GaussianDensity>(std::move(mean), covariance);
    }
    static DensityModel make_isotropic(Eigen::VectorXd mean, double variance);

  private:
    Eigen::VectorXd mean_;
    Eigen::MatrixXd chol_lower_;
    double log_norm_constant_;
};

// Finite pmf over atoms 0..M-1, represented as 1-d points holding the atom
// index. Exists so discrete oracle problems can run through the exact same
// sampling, estimation, and optimization code paths as continuous ones.
class DiscretePmf final : public Density {
  public:
    explicit DiscretePmf(Eigen::VectorXd probabilities);

    int dimension() const noexcept override { return 1; }
    double log_density(const Eigen::VectorXd& x) const override;
    Eigen::VectorXd draw(RngStream& stream) const override;

    const Eigen::VectorXd& probabilities() const noexcept { return probabilities_; }
    int atom_index(const Eigen::VectorXd& x) const;

    static DensityModel make(Eigen::VectorXd probabilities) {
        return std::make_shared<DiscretePmf>(std::move(probabilities));
    }

  private:
    Eigen::VectorXd probabilities_;
    std::vector<double> cdf_;
};

// Proposal list q_1..q_J, optionally flagging one component as defensive
// (identical to the nominal density p, which bounds the weight p/q_alpha by
// 1/alpha_defensive). Build through `make_proposal_family` so the defensive
// claim is verified.
struct ProposalFamily {
    std::vector<DensityModel> proposals;
    std::optional<int> defensive_index;  // 0-based

    int size() const noexcept { return static_cast<int>(proposals.size()); }
};

// Verifies shapes, and when defensive_index is set spot-checks that the
// flagged proposal evaluates identically to p at random points (relative
// 1e-12); raises ShapeMismatch / InvalidArgument otherwise.
ProposalFamily make_proposal_family(std::vector<DensityModel> proposals,
                                    std::optional<int> defensive_index,
                                    const DensityModel& p);

// One draw with everything the estimators need cached: integrand value,
// nominal density, and all J proposal densities. `stratum` records the
// component the point was drawn from.
struct WeightedSample {
    Eigen::VectorXd point;
    double f_value = 0.0;
    double p_density = 0.0;
    Eigen::VectorXd q_densities;
    std::optional<int> stratum;
};

using Integrand = std::function<double(const Eigen::VectorXd&)>;

// q_alpha(x) = sum_j alpha_j q_j(x), computed from component log-densities;
// when any component log-density drops below -700 the sum is taken with a
// max-shifted log-sum-exp to dodge underflow.
double mixture_density(const ProposalFamily& family, const MixtureWeights& alpha,
                       const Eigen::VectorXd& x);

// Same mixture sum evaluated from densities already cached on a sample.
// Estimators share this helper so folds that must agree bit-for-bit do.
inline double mixture_density_cached(const Eigen::VectorXd& q_densities,
                                     const MixtureWeights& alpha) {
    return q_densities.dot(alpha.values());
}

// Density-ratio control features h_j(x) = q_j(x)/p(x), zero where p is. With
// full support overlap each feature has expectation one under p.
Eigen::VectorXd control_features(const ProposalFamily& family, const DensityModel& p,
                                 const Eigen::VectorXd& x);

// Integer stratum sizes for n draws under alpha: largest-remainder rounding,
// ties broken toward lower index. Sizes sum to n and differ from n*alpha_j
// by at most one.
std::vector<int> stratified_allocation(const MixtureWeights& alpha, int n);

// Draws n points from the alpha-mixture with all densities cached. When
// `stratified` is true each component j receives its allocated count, drawn
// from stream.child(j); otherwise component indices are drawn iid from alpha
// off the stream directly. Raises ZeroDensityAtSample if the mixture density
// vanishes at a drawn point.
std::vector<WeightedSample> draw_mixture(const ProposalFamily& family,
                                         const DensityModel& p, const Integrand& f,
                                         const MixtureWeights& alpha, int n,
                                         RngStream& stream, bool stratified);

}  // namespace mixis
