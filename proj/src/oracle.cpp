#include "mixis/oracle.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <string>

namespace mixis::oracle {

namespace {

void check_pmf(const Eigen::VectorXd& pmf, const std::string& label) {
    double total = 0.0;
    for (Eigen::Index m = 0; m < pmf.size(); ++m) {
        if (!(pmf[m] >= 0.0)) {
            fail(ErrorCode::InvalidArgument,
                 label + " has a negative entry at atom " + std::to_string(m));
        }
        total += pmf[m];
    }
    if (std::abs(total - 1.0) > 1e-9) {
        fail(ErrorCode::InvalidArgument,
             label + " sums to " + std::to_string(total) + ", expected 1");
    }
}

Eigen::VectorXd mixture_pmf(const DiscreteSpace& space, const MixtureWeights& alpha) {
    if (alpha.size() != space.components()) {
        fail(ErrorCode::DimensionMismatch,
             "oracle: alpha has " + std::to_string(alpha.size()) + " components, space has " +
                 std::to_string(space.components()));
    }
    return space.q.transpose() * alpha.values();
}

// Raises unless the given sampling density is positive at every atom with
// f*p mass, the condition for the importance estimator to be unbiased and
// its variance formula to be meaningful.
void require_integrand_coverage(const DiscreteSpace& space,
                                const Eigen::VectorXd& density,
                                const std::string& label) {
    for (int m = 0; m < space.atoms(); ++m) {
        if (space.f[m] * space.p[m] != 0.0 && !(density[m] > 0.0)) {
            fail(ErrorCode::SupportViolation,
                 label + " vanishes at atom " + std::to_string(m) +
                     " where f*p does not; the estimator is biased there");
        }
    }
}

// The two support conditions under which the control-feature means are
// exactly one and the control-variate estimators are unbiased.
void require_family_support(const DiscreteSpace& space, const Eigen::VectorXd& q_alpha) {
    for (int m = 0; m < space.atoms(); ++m) {
        if (!(space.p[m] > 0.0)) {
            for (int j = 0; j < space.components(); ++j) {
                if (space.q(j, m) > 0.0) {
                    fail(ErrorCode::SupportViolation,
                         "proposal " + std::to_string(j + 1) + " has mass at atom " +
                             std::to_string(m) + " outside the support of p");
                }
            }
        }
        if (space.p[m] > 0.0 && !(q_alpha[m] > 0.0)) {
            fail(ErrorCode::SupportViolation,
                 "the alpha-mixture vanishes at atom " + std::to_string(m) +
                     " inside the support of p");
        }
    }
}

// Per-atom term of the control-variate estimator of the given kind, for
// atoms inside the support of the mixture.
double cv_term(const DiscreteSpace& space, const Eigen::VectorXd& q_alpha,
               const Eigen::VectorXd& beta, const Eigen::VectorXd& theta, CvKind kind,
               int m) {
    double beta_dot_h = 0.0;
    if (space.p[m] > 0.0) {
        for (int j = 0; j < space.components(); ++j) {
            beta_dot_h += beta[j] * (space.q(j, m) / space.p[m]);
        }
    }
    double beta_dot_theta = beta.dot(theta);
    double weight = space.p[m] / q_alpha[m];
    if (kind == CvKind::Tilde) {
        return (space.f[m] - beta_dot_h) * weight + beta_dot_theta;
    }
    return (space.f[m] - beta_dot_h + beta_dot_theta) * weight;
}

// Mean and per-sample variance of a generic per-atom term under a sampling
// pmf, by exact enumeration over the pmf's support.
struct Moments {
    double mean = 0.0;
    double variance = 0.0;
};

template <typename TermFn>
Moments enumerate_moments(const Eigen::VectorXd& pmf, int atoms, TermFn&& term) {
    CompensatedSum first;
    CompensatedSum second;
    for (int m = 0; m < atoms; ++m) {
        if (!(pmf[m] > 0.0)) continue;
        double t = term(m);
        first.add(pmf[m] * t);
        second.add(pmf[m] * t * t);
    }
    Moments moments;
    moments.mean = first.value();
    moments.variance = second.value() - moments.mean * moments.mean;
    return moments;
}

}  // namespace

void DiscreteSpace::validate() const {
    if (p.size() == 0) {
        fail(ErrorCode::InvalidArgument, "DiscreteSpace: no atoms");
    }
    if (q.cols() != p.size() || f.size() != p.size()) {
        fail(ErrorCode::ShapeMismatch,
             "DiscreteSpace: p has " + std::to_string(p.size()) + " atoms, q is " +
                 std::to_string(q.rows()) + "x" + std::to_string(q.cols()) +
                 ", f has " + std::to_string(f.size()));
    }
    if (q.rows() == 0) {
        fail(ErrorCode::InvalidArgument, "DiscreteSpace: no proposals");
    }
    check_pmf(p, "DiscreteSpace: p");
    for (int j = 0; j < components(); ++j) {
        check_pmf(q.row(j).transpose(), "DiscreteSpace: q_" + std::to_string(j + 1));
    }
    for (int m = 0; m < atoms(); ++m) {
        if (!std::isfinite(f[m])) {
            fail(ErrorCode::InvalidArgument,
                 "DiscreteSpace: f is not finite at atom " + std::to_string(m));
        }
    }
}

bool DiscreteSpace::covers_integrand(int j) const {
    for (int m = 0; m < atoms(); ++m) {
        if (f[m] * p[m] != 0.0 && !(q(j, m) > 0.0)) return false;
    }
    return true;
}

VarianceSpec VarianceSpec::is(int proposal_index) {
    VarianceSpec spec;
    spec.kind = Kind::Is;
    spec.proposal = proposal_index;
    return spec;
}

VarianceSpec VarianceSpec::mixture(MixtureWeights alpha) {
    VarianceSpec spec;
    spec.kind = Kind::Mixture;
    spec.alpha = std::move(alpha);
    return spec;
}

VarianceSpec VarianceSpec::mixture_cv(MixtureWeights alpha, Eigen::VectorXd beta,
                                      CvKind kind) {
    VarianceSpec spec;
    spec.kind = Kind::MixtureCv;
    spec.alpha = std::move(alpha);
    spec.beta = std::move(beta);
    spec.cv_kind = kind;
    return spec;
}

VarianceSpec VarianceSpec::stratified(MixtureWeights alpha) {
    VarianceSpec spec;
    spec.kind = Kind::Stratified;
    spec.alpha = std::move(alpha);
    return spec;
}

VarianceSpec VarianceSpec::stratified_cv(MixtureWeights alpha, Eigen::VectorXd beta,
                                         CvKind kind) {
    VarianceSpec spec;
    spec.kind = Kind::StratifiedCv;
    spec.alpha = std::move(alpha);
    spec.beta = std::move(beta);
    spec.cv_kind = kind;
    return spec;
}

VarianceSpec VarianceSpec::multiple_is(Eigen::MatrixXd omega, std::vector<int> counts) {
    VarianceSpec spec;
    spec.kind = Kind::MultipleIs;
    spec.omega = std::move(omega);
    spec.counts = std::move(counts);
    return spec;
}

double exact_mu(const DiscreteSpace& space) {
    space.validate();
    CompensatedSum total;
    for (int m = 0; m < space.atoms(); ++m) {
        total.add(space.f[m] * space.p[m]);
    }
    return total.value();
}

Eigen::VectorXd exact_theta(const DiscreteSpace& space) {
    space.validate();
    Eigen::VectorXd theta(space.components());
    for (int j = 0; j < space.components(); ++j) {
        CompensatedSum total;
        for (int m = 0; m < space.atoms(); ++m) {
            if (space.p[m] > 0.0) total.add(space.q(j, m));
        }
        theta[j] = total.value();
    }
    return theta;
}

double exact_variance(const DiscreteSpace& space, const VarianceSpec& spec) {
    space.validate();

    switch (spec.kind) {
        case VarianceSpec::Kind::Plain: {
            double mu = exact_mu(space);
            CompensatedSum total;
            for (int m = 0; m < space.atoms(); ++m) {
                double centered = space.f[m] - mu;
                total.add(space.p[m] * centered * centered);
            }
            return total.value();
        }

        case VarianceSpec::Kind::Is: {
            if (spec.proposal < 0 || spec.proposal >= space.components()) {
                fail(ErrorCode::InvalidArgument,
                     "exact_variance: proposal index out of range");
            }
            Eigen::VectorXd q_row = space.q.row(spec.proposal).transpose();
            require_integrand_coverage(space, q_row,
                                       "q_" + std::to_string(spec.proposal + 1));
            Moments moments = enumerate_moments(
                q_row, space.atoms(),
                [&](int m) { return space.f[m] * space.p[m] / q_row[m]; });
            return moments.variance;
        }

        case VarianceSpec::Kind::Mixture: {
            Eigen::VectorXd q_alpha = mixture_pmf(space, *spec.alpha);
            require_integrand_coverage(space, q_alpha, "the alpha-mixture");
            Moments moments = enumerate_moments(
                q_alpha, space.atoms(),
                [&](int m) { return space.f[m] * space.p[m] / q_alpha[m]; });
            return moments.variance;
        }

        case VarianceSpec::Kind::MixtureCv: {
            if (spec.beta.size() != space.components()) {
                fail(ErrorCode::DimensionMismatch,
                     "exact_variance: beta length does not match component count");
            }
            Eigen::VectorXd q_alpha = mixture_pmf(space, *spec.alpha);
            require_family_support(space, q_alpha);
            require_integrand_coverage(space, q_alpha, "the alpha-mixture");
            Eigen::VectorXd theta = exact_theta(space);
            Moments moments = enumerate_moments(
                q_alpha, space.atoms(), [&](int m) {
                    return cv_term(space, q_alpha, spec.beta, theta, spec.cv_kind, m);
                });
            return moments.variance;
        }

        case VarianceSpec::Kind::Stratified:
        case VarianceSpec::Kind::StratifiedCv: {
            bool with_cv = spec.kind == VarianceSpec::Kind::StratifiedCv;
            if (with_cv && spec.beta.size() != space.components()) {
                fail(ErrorCode::DimensionMismatch,
                     "exact_variance: beta length does not match component count");
            }
            Eigen::VectorXd q_alpha = mixture_pmf(space, *spec.alpha);
            require_integrand_coverage(space, q_alpha, "the alpha-mixture");
            Eigen::VectorXd theta;
            if (with_cv) {
                require_family_support(space, q_alpha);
                theta = exact_theta(space);
            }
            // Proportional allocation: variance is the alpha-weighted sum of
            // within-stratum variances of the per-sample term.
            CompensatedSum total;
            for (int j = 0; j < space.components(); ++j) {
                double weight = (*spec.alpha)[j];
                if (!(weight > 0.0)) continue;
                Eigen::VectorXd q_row = space.q.row(j).transpose();
                Moments moments = enumerate_moments(
                    q_row, space.atoms(), [&](int m) {
                        if (with_cv) {
                            return cv_term(space, q_alpha, spec.beta, theta,
                                           spec.cv_kind, m);
                        }
                        return space.f[m] * space.p[m] / q_alpha[m];
                    });
                total.add(weight * moments.variance);
            }
            return total.value();
        }

        case VarianceSpec::Kind::MultipleIs: {
            if (spec.omega.rows() != space.components() ||
                spec.omega.cols() != space.atoms()) {
                fail(ErrorCode::ShapeMismatch,
                     "exact_variance: omega must be J x M");
            }
            if (static_cast<int>(spec.counts.size()) != space.components()) {
                fail(ErrorCode::DimensionMismatch,
                     "exact_variance: counts length does not match component count");
            }
            int n_total = 0;
            for (int j = 0; j < space.components(); ++j) {
                if (spec.counts[j] < 1) {
                    fail(ErrorCode::InvalidArgument,
                         "exact_variance: stratum " + std::to_string(j + 1) +
                             " has no samples");
                }
                n_total += spec.counts[j];
            }
            for (int m = 0; m < space.atoms(); ++m) {
                double weight_sum = 0.0;
                for (int j = 0; j < space.components(); ++j) {
                    if (space.q(j, m) == 0.0 && std::abs(spec.omega(j, m)) > 1e-12) {
                        fail(ErrorCode::PartitionInvariantViolation,
                             "exact_variance: omega_" + std::to_string(j + 1) +
                                 " is nonzero at atom " + std::to_string(m) +
                                 " where q_" + std::to_string(j + 1) + " vanishes");
                    }
                    weight_sum += spec.omega(j, m);
                }
                if (space.p[m] > 0.0 && std::abs(weight_sum - 1.0) > 1e-12) {
                    fail(ErrorCode::PartitionInvariantViolation,
                         "exact_variance: partition weights sum to " +
                             std::to_string(weight_sum) + " at atom " +
                             std::to_string(m));
                }
            }
            CompensatedSum total;
            for (int j = 0; j < space.components(); ++j) {
                Eigen::VectorXd q_row = space.q.row(j).transpose();
                Moments moments = enumerate_moments(
                    q_row, space.atoms(), [&](int m) {
                        return spec.omega(j, m) * space.f[m] * space.p[m] / q_row[m];
                    });
                total.add(static_cast<double>(n_total) /
                          static_cast<double>(spec.counts[j]) * moments.variance);
            }
            return total.value();
        }
    }
    fail(ErrorCode::InvalidArgument, "exact_variance: unknown spec kind");
}

OptimalBeta exact_optimal_beta(const DiscreteSpace& space, const MixtureWeights& alpha,
                               CvKind kind) {
    space.validate();
    Eigen::VectorXd q_alpha = mixture_pmf(space, alpha);
    require_family_support(space, q_alpha);
    require_integrand_coverage(space, q_alpha, "the alpha-mixture");
    Eigen::VectorXd theta = exact_theta(space);
    int num_components = space.components();

    // Population regression of the base term t = f p / q_alpha on the
    // centered features u under q_alpha; the optimum is the minimum-norm
    // solution of Cov(u) beta = Cov(u, t).
    auto feature = [&](int j, int m) {
        double h = space.p[m] > 0.0 ? space.q(j, m) / space.p[m] : 0.0;
        double weight = space.p[m] / q_alpha[m];
        return kind == CvKind::Tilde ? h * weight - theta[j]
                                     : (h - theta[j]) * weight;
    };
    auto base = [&](int m) { return space.f[m] * space.p[m] / q_alpha[m]; };

    Eigen::VectorXd mean_u = Eigen::VectorXd::Zero(num_components);
    double mean_t = 0.0;
    {
        std::vector<CompensatedSum> sums(static_cast<std::size_t>(num_components));
        CompensatedSum t_sum;
        for (int m = 0; m < space.atoms(); ++m) {
            if (!(q_alpha[m] > 0.0)) continue;
            for (int j = 0; j < num_components; ++j) {
                sums[static_cast<std::size_t>(j)].add(q_alpha[m] * feature(j, m));
            }
            t_sum.add(q_alpha[m] * base(m));
        }
        for (int j = 0; j < num_components; ++j) {
            mean_u[j] = sums[static_cast<std::size_t>(j)].value();
        }
        mean_t = t_sum.value();
    }

    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(num_components, num_components);
    Eigen::VectorXd cross = Eigen::VectorXd::Zero(num_components);
    double base_variance = 0.0;
    {
        std::vector<CompensatedSum> gram_sums(
            static_cast<std::size_t>(num_components * num_components));
        std::vector<CompensatedSum> cross_sums(static_cast<std::size_t>(num_components));
        CompensatedSum t2_sum;
        for (int m = 0; m < space.atoms(); ++m) {
            if (!(q_alpha[m] > 0.0)) continue;
            double t_centered = base(m) - mean_t;
            Eigen::VectorXd u(num_components);
            for (int j = 0; j < num_components; ++j) u[j] = feature(j, m) - mean_u[j];
            for (int j = 0; j < num_components; ++j) {
                for (int l = 0; l <= j; ++l) {
                    gram_sums[static_cast<std::size_t>(j * num_components + l)].add(
                        q_alpha[m] * u[j] * u[l]);
                }
                cross_sums[static_cast<std::size_t>(j)].add(q_alpha[m] * u[j] *
                                                            t_centered);
            }
            t2_sum.add(q_alpha[m] * t_centered * t_centered);
        }
        for (int j = 0; j < num_components; ++j) {
            for (int l = 0; l <= j; ++l) {
                double value =
                    gram_sums[static_cast<std::size_t>(j * num_components + l)].value();
                gram(j, l) = value;
                gram(l, j) = value;
            }
            cross[j] = cross_sums[static_cast<std::size_t>(j)].value();
        }
        base_variance = t2_sum.value();
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigensolver(gram);
    const Eigen::VectorXd& eigenvalues = eigensolver.eigenvalues();
    double cutoff = eigenvalues.cwiseAbs().maxCoeff() *
                    static_cast<double>(num_components) *
                    std::numeric_limits<double>::epsilon();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(num_components);
    for (int r = 0; r < num_components; ++r) {
        if (eigenvalues[r] > cutoff) {
            Eigen::VectorXd v = eigensolver.eigenvectors().col(r);
            beta += v * (v.dot(cross) / eigenvalues[r]);
        }
    }

    OptimalBeta result;
    result.variance = base_variance - cross.dot(beta);
    result.beta = std::move(beta);
    return result;
}

double exact_ms_criterion(const DiscreteSpace& space, const MixtureWeights& alpha,
                          const Eigen::VectorXd& beta) {
    space.validate();
    if (beta.size() != space.components()) {
        fail(ErrorCode::DimensionMismatch,
             "exact_ms_criterion: beta length does not match component count");
    }
    Eigen::VectorXd q_alpha = mixture_pmf(space, alpha);
    CompensatedSum total;
    for (int m = 0; m < space.atoms(); ++m) {
        double numerator = space.f[m] * space.p[m];
        for (int j = 0; j < space.components(); ++j) {
            numerator += beta[j] * (space.q(j, m) - space.p[m]);
        }
        if (!(q_alpha[m] > 0.0)) {
            if (numerator != 0.0) {
                fail(ErrorCode::SupportViolation,
                     "exact_ms_criterion: the alpha-mixture vanishes at atom " +
                         std::to_string(m) + " where the criterion numerator does not");
            }
            continue;
        }
        total.add(numerator * numerator / q_alpha[m]);
    }
    return total.value();
}

DiscreteProblem to_sampling_problem(const DiscreteSpace& space,
                                    std::optional<int> defensive_index) {
    space.validate();
    DensityModel p = DiscretePmf::make(space.p);
    std::vector<DensityModel> proposals;
    proposals.reserve(static_cast<std::size_t>(space.components()));
    for (int j = 0; j < space.components(); ++j) {
        proposals.push_back(DiscretePmf::make(space.q.row(j).transpose()));
    }
    Eigen::VectorXd f = space.f;
    int atoms = space.atoms();
    Integrand integrand = [f, atoms](const Eigen::VectorXd& x) {
        int index = static_cast<int>(std::nearbyint(x[0]));
        if (x.size() != 1 || index < 0 || index >= atoms) {
            fail(ErrorCode::InvalidArgument,
                 "discrete integrand: point is not an atom index");
        }
        return f[index];
    };
    ProposalFamily family =
        make_proposal_family(std::move(proposals), defensive_index, p);
    return DiscreteProblem{std::move(family), std::move(p), std::move(integrand)};
}

}  // namespace mixis::oracle
