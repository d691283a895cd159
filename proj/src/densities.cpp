#include "mixis/densities.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace mixis {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}  // namespace

GaussianDensity::GaussianDensity(Eigen::VectorXd mean, const Eigen::MatrixXd& covariance)
    : mean_(std::move(mean)) {
    if (covariance.rows() != mean_.size() || covariance.cols() != mean_.size()) {
        fail(ErrorCode::DimensionMismatch,
             "GaussianDensity: covariance is " + std::to_string(covariance.rows()) + "x" +
                 std::to_string(covariance.cols()) + " but mean has dimension " +
                 std::to_string(mean_.size()));
    }
    Eigen::LLT<Eigen::MatrixXd> llt(covariance);
    if (llt.info() != Eigen::Success) {
        fail(ErrorCode::InvalidArgument,
             "GaussianDensity: covariance is not symmetric positive definite");
    }
    chol_lower_ = llt.matrixL();
    double log_det_half = chol_lower_.diagonal().array().log().sum();
    log_norm_constant_ =
        -0.5 * static_cast<double>(mean_.size()) * kLogTwoPi - log_det_half;
}

double GaussianDensity::log_density(const Eigen::VectorXd& x) const {
    if (x.size() != mean_.size()) {
        fail(ErrorCode::DimensionMismatch,
             "GaussianDensity: point has dimension " + std::to_string(x.size()) +
                 ", expected " + std::to_string(mean_.size()));
    }
    Eigen::VectorXd z =
        chol_lower_.triangularView<Eigen::Lower>().solve(x - mean_);
    return log_norm_constant_ - 0.5 * z.squaredNorm();
}

Eigen::VectorXd GaussianDensity::draw(RngStream& stream) const {
    Eigen::VectorXd z(mean_.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = stream.next_normal();
    return mean_ + chol_lower_ * z;
}

DensityModel GaussianDensity::make_isotropic(Eigen::VectorXd mean, double variance) {
    if (!(variance > 0.0)) {
        fail(ErrorCode::InvalidArgument, "GaussianDensity: variance must be positive");
    }
    Eigen::Index d = mean.size();
    return make(std::move(mean), variance * Eigen::MatrixXd::Identity(d, d));
}

DiscretePmf::DiscretePmf(Eigen::VectorXd probabilities)
    : probabilities_(std::move(probabilities)) {
    if (probabilities_.size() == 0) {
        fail(ErrorCode::InvalidArgument, "DiscretePmf: no atoms");
    }
    double total = 0.0;
    for (Eigen::Index m = 0; m < probabilities_.size(); ++m) {
        if (!(probabilities_[m] >= 0.0)) {
            fail(ErrorCode::InvalidArgument, "DiscretePmf: negative probability at atom " +
                                                 std::to_string(m));
        }
        total += probabilities_[m];
    }
    if (std::abs(total - 1.0) > 1e-9) {
        fail(ErrorCode::InvalidArgument,
             "DiscretePmf: probabilities sum to " + std::to_string(total));
    }
    cdf_.resize(probabilities_.size());
    std::partial_sum(probabilities_.begin(), probabilities_.end(), cdf_.begin());
    cdf_.back() = 1.0;
}

int DiscretePmf::atom_index(const Eigen::VectorXd& x) const {
    if (x.size() != 1) {
        fail(ErrorCode::DimensionMismatch,
             "DiscretePmf: points are 1-d atom indices, got dimension " +
                 std::to_string(x.size()));
    }
    double rounded = std::nearbyint(x[0]);
    if (rounded < 0.0 || rounded >= static_cast<double>(probabilities_.size()) ||
        std::abs(x[0] - rounded) > 1e-9) {
        fail(ErrorCode::InvalidArgument,
             "DiscretePmf: point " + std::to_string(x[0]) + " is not an atom index");
    }
    return static_cast<int>(rounded);
}

double DiscretePmf::log_density(const Eigen::VectorXd& x) const {
    double prob = probabilities_[atom_index(x)];
    return prob > 0.0 ? std::log(prob) : kNegInf;
}

Eigen::VectorXd DiscretePmf::draw(RngStream& stream) const {
    double u = stream.next_uniform();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    auto index = std::min<std::ptrdiff_t>(it - cdf_.begin(),
                                          static_cast<std::ptrdiff_t>(cdf_.size()) - 1);
    Eigen::VectorXd point(1);
    point[0] = static_cast<double>(index);
    return point;
}

ProposalFamily make_proposal_family(std::vector<DensityModel> proposals,
                                    std::optional<int> defensive_index,
                                    const DensityModel& p) {
    if (proposals.empty()) {
        fail(ErrorCode::InvalidArgument, "make_proposal_family: no proposals");
    }
    if (!p) {
        fail(ErrorCode::InvalidArgument, "make_proposal_family: null nominal density");
    }
    int dim = p->dimension();
    for (std::size_t j = 0; j < proposals.size(); ++j) {
        if (!proposals[j]) {
            fail(ErrorCode::InvalidArgument,
                 "make_proposal_family: null proposal at index " + std::to_string(j));
        }
        if (proposals[j]->dimension() != dim) {
            fail(ErrorCode::ShapeMismatch,
                 "make_proposal_family: proposal " + std::to_string(j) + " has dimension " +
                     std::to_string(proposals[j]->dimension()) + ", nominal has " +
                     std::to_string(dim));
        }
    }
    if (defensive_index) {
        int d = *defensive_index;
        if (d < 0 || d >= static_cast<int>(proposals.size())) {
            fail(ErrorCode::InvalidArgument,
                 "make_proposal_family: defensive index " + std::to_string(d) +
                     " out of range");
        }
        if (proposals[d].get() != p.get()) {
            // Distinct objects: spot-check agreement at points drawn from p.
            RngStream probe(0x6d69786973u);
            for (int trial = 0; trial < 16; ++trial) {
                Eigen::VectorXd x = p->draw(probe);
                double lp = p->log_density(x);
                double lq = proposals[d]->log_density(x);
                if (std::abs(lq - lp) > 1e-12 * (1.0 + std::abs(lp))) {
                    fail(ErrorCode::InvalidArgument,
                         "make_proposal_family: defensive proposal does not match the "
                         "nominal density (log-density " +
                             std::to_string(lq) + " vs " + std::to_string(lp) + ")");
                }
            }
        }
    }
    return ProposalFamily{std::move(proposals), defensive_index};
}

double mixture_density(const ProposalFamily& family, const MixtureWeights& alpha,
                       const Eigen::VectorXd& x) {
    if (alpha.size() != family.size()) {
        fail(ErrorCode::DimensionMismatch,
             "mixture_density: " + std::to_string(alpha.size()) + " weights for " +
                 std::to_string(family.size()) + " proposals");
    }
    Eigen::VectorXd logs(family.size());
    double max_log = kNegInf;
    for (int j = 0; j < family.size(); ++j) {
        logs[j] = family.proposals[j]->log_density(x);
        if (logs[j] > max_log) max_log = logs[j];
    }
    if (max_log == kNegInf) return 0.0;
    if (max_log >= -700.0) {
        double total = 0.0;
        for (int j = 0; j < family.size(); ++j) {
            total += alpha[j] * std::exp(logs[j]);
        }
        return total;
    }
    // Deep underflow region: shift by the max log before exponentiating.
    double shifted = 0.0;
    for (int j = 0; j < family.size(); ++j) {
        if (logs[j] == kNegInf) continue;
        shifted += alpha[j] * std::exp(logs[j] - max_log);
    }
    return std::exp(max_log) * shifted;
}

Eigen::VectorXd control_features(const ProposalFamily& family, const DensityModel& p,
                                 const Eigen::VectorXd& x) {
    Eigen::VectorXd features = Eigen::VectorXd::Zero(family.size());
    double p_value = p->density(x);
    if (p_value <= 0.0) return features;
    for (int j = 0; j < family.size(); ++j) {
        features[j] = family.proposals[j]->density(x) / p_value;
    }
    return features;
}

std::vector<int> stratified_allocation(const MixtureWeights& alpha, int n) {
    if (n < 0) {
        fail(ErrorCode::InvalidArgument, "stratified_allocation: negative sample count");
    }
    Eigen::Index num_components = alpha.size();
    std::vector<int> counts(num_components);
    std::vector<std::pair<double, Eigen::Index>> remainders(num_components);
    int allocated = 0;
    for (Eigen::Index j = 0; j < num_components; ++j) {
        double target = static_cast<double>(n) * alpha[j];
        counts[j] = static_cast<int>(std::floor(target));
        allocated += counts[j];
        remainders[j] = {target - std::floor(target), j};
    }
    // Hand the leftover draws to the largest fractional parts, lower index
    // first on ties, so the allocation is deterministic.
    std::sort(remainders.begin(), remainders.end(),
              [](const auto& a, const auto& b) {
                  if (a.first != b.first) return a.first > b.first;
                  return a.second < b.second;
              });
    int leftover = n - allocated;
    for (int i = 0; i < leftover; ++i) {
        ++counts[remainders[static_cast<std::size_t>(i) % remainders.size()].second];
    }
    return counts;
}

namespace {

WeightedSample cache_sample(const ProposalFamily& family, const DensityModel& p,
                            const Integrand& f, const MixtureWeights& alpha,
                            Eigen::VectorXd point, int stratum) {
    WeightedSample sample;
    sample.q_densities.resize(family.size());
    for (int j = 0; j < family.size(); ++j) {
        sample.q_densities[j] = family.proposals[j]->density(point);
    }
    double q_alpha = mixture_density_cached(sample.q_densities, alpha);
    if (!(q_alpha > 0.0)) {
        fail(ErrorCode::ZeroDensityAtSample,
             "draw_mixture: mixture density vanished at a drawn point (component " +
                 std::to_string(stratum + 1) + ")");
    }
    sample.p_density = p->density(point);
    sample.f_value = f(point);
    sample.stratum = stratum;
    sample.point = std::move(point);
    return sample;
}

}  // namespace

std::vector<WeightedSample> draw_mixture(const ProposalFamily& family,
                                         const DensityModel& p, const Integrand& f,
                                         const MixtureWeights& alpha, int n,
                                         RngStream& stream, bool stratified) {
    if (alpha.size() != family.size()) {
        fail(ErrorCode::DimensionMismatch,
             "draw_mixture: " + std::to_string(alpha.size()) + " weights for " +
                 std::to_string(family.size()) + " proposals");
    }
    std::vector<WeightedSample> samples;
    samples.reserve(static_cast<std::size_t>(n));
    if (stratified) {
        std::vector<int> counts = stratified_allocation(alpha, n);
        for (int j = 0; j < family.size(); ++j) {
            RngStream stratum_stream = stream.child(static_cast<std::uint64_t>(j));
            for (int i = 0; i < counts[j]; ++i) {
                samples.push_back(cache_sample(family, p, f, alpha,
                                               family.proposals[j]->draw(stratum_stream),
                                               j));
            }
        }
    } else {
        const Eigen::VectorXd& weights = alpha.values();
        for (int i = 0; i < n; ++i) {
            double u = stream.next_uniform();
            int j = 0;
            double cumulative = weights[0];
            while (u > cumulative && j + 1 < family.size()) {
                cumulative += weights[++j];
            }
            samples.push_back(
                cache_sample(family, p, f, alpha, family.proposals[j]->draw(stream), j));
        }
    }
    return samples;
}

}  // namespace mixis
