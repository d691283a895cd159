#include <doctest.h>

#include <cmath>
#include <vector>

#include "mixis/oracle.hpp"

using namespace mixis;
using oracle::DiscreteSpace;
using oracle::VarianceSpec;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> values) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (double x : values) v[i++] = x;
    return v;
}

DiscreteSpace make_space(std::initializer_list<double> p,
                         std::initializer_list<std::initializer_list<double>> q,
                         std::initializer_list<double> f) {
    DiscreteSpace space;
    space.p = vec(p);
    space.q.resize(static_cast<Eigen::Index>(q.size()), space.p.size());
    Eigen::Index j = 0;
    for (const auto& row : q) space.q.row(j++) = vec(row).transpose();
    space.f = vec(f);
    return space;
}

// Two atoms, f*p = (0, 1): everything below is computable by hand.
DiscreteSpace two_atom() {
    return make_space({0.5, 0.5}, {{0.25, 0.75}, {0.75, 0.25}}, {0.0, 2.0});
}

template <typename Fn>
ErrorCode thrown_code(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_SUITE("oracle") {

TEST_CASE("mean, feature means, and validation") {
    DiscreteSpace space = two_atom();
    CHECK(oracle::exact_mu(space) == 1.0);
    CHECK(oracle::exact_theta(space) == vec({1.0, 1.0}));
    CHECK(space.covers_integrand(0));
    CHECK(space.covers_integrand(1));

    // Mass escaping the support of p shows up in theta.
    DiscreteSpace escaped = make_space({1.0, 0.0}, {{0.5, 0.5}}, {1.0, 7.0});
    CHECK(oracle::exact_theta(escaped) == vec({0.5}));

    CHECK(thrown_code([&] {
              DiscreteSpace bad = two_atom();
              bad.p = vec({0.5, 0.4});
              bad.validate();
          }) == ErrorCode::InvalidArgument);
    CHECK(thrown_code([&] {
              DiscreteSpace bad = two_atom();
              bad.f = vec({0.0});
              bad.validate();
          }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("hand-checked exact variances") {
    DiscreteSpace space = two_atom();

    // Var_p(f) = E[f^2] - mu^2 = 2 - 1.
    CHECK(oracle::exact_variance(space, VarianceSpec::plain()) == doctest::Approx(1.0));
    // Terms f*p/q_1 = (0, 4/3) under q_1: 4/3 - 1 = 1/3.
    CHECK(oracle::exact_variance(space, VarianceSpec::is(0)) ==
          doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    // The half-half mixture of the two proposals is exactly p.
    MixtureWeights half = MixtureWeights::uniform(2);
    CHECK(oracle::exact_variance(space, VarianceSpec::mixture(half)) ==
          doctest::Approx(1.0).epsilon(1e-14));
    // Proportional stratification removes the between-stratum part: 0.75.
    CHECK(oracle::exact_variance(space, VarianceSpec::stratified(half)) ==
          doctest::Approx(0.75).epsilon(1e-14));

    CHECK(thrown_code([&] { oracle::exact_variance(space, VarianceSpec::is(2)); }) ==
          ErrorCode::InvalidArgument);
}

TEST_CASE("balance-weighted multiple importance sampling matches stratification") {
    DiscreteSpace space = two_atom();
    MixtureWeights half = MixtureWeights::uniform(2);
    Eigen::VectorXd q_alpha = space.q.transpose() * half.values();
    Eigen::MatrixXd omega(2, 2);
    for (int j = 0; j < 2; ++j)
        for (int m = 0; m < 2; ++m)
            omega(j, m) = half[j] * space.q(j, m) / q_alpha[m];

    double mis = oracle::exact_variance(space, VarianceSpec::multiple_is(omega, {1, 1}));
    CHECK(mis == doctest::Approx(0.75).epsilon(1e-14));

    Eigen::MatrixXd bad = omega;
    bad(0, 0) += 0.1;
    CHECK(thrown_code([&] {
              oracle::exact_variance(space, VarianceSpec::multiple_is(bad, {1, 1}));
          }) == ErrorCode::PartitionInvariantViolation);
    CHECK(thrown_code([&] {
              oracle::exact_variance(space, VarianceSpec::multiple_is(omega, {1, 0}));
          }) == ErrorCode::InvalidArgument);
}

TEST_CASE("disjoint proposals admit a zero-variance control fit") {
    DiscreteSpace space = make_space({0.5, 0.5}, {{1.0, 0.0}, {0.0, 1.0}}, {0.0, 2.0});
    MixtureWeights half = MixtureWeights::uniform(2);

    oracle::OptimalBeta best = oracle::exact_optimal_beta(space, half, CvKind::Tilde);
    CHECK(best.beta[0] == doctest::Approx(-0.5).epsilon(1e-13));
    CHECK(best.beta[1] == doctest::Approx(0.5).epsilon(1e-13));
    CHECK(best.variance == doctest::Approx(0.0).scale(1.0).epsilon(1e-13));

    for (CvKind kind : {CvKind::Tilde, CvKind::Hat}) {
        double var = oracle::exact_variance(
            space, VarianceSpec::mixture_cv(half, vec({-0.5, 0.5}), kind));
        CHECK(var == doctest::Approx(0.0).scale(1.0).epsilon(1e-13));
    }
}

TEST_CASE("single defensive component pins beta to zero") {
    DiscreteSpace space = make_space({0.5, 0.5}, {{0.5, 0.5}}, {0.0, 2.0});
    MixtureWeights one = MixtureWeights::uniform(1);
    oracle::OptimalBeta best = oracle::exact_optimal_beta(space, one, CvKind::Hat);
    CHECK(best.beta == vec({0.0}));
    CHECK(best.variance == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("support violations are reported, not silently mispriced") {
    DiscreteSpace space = two_atom();
    // One-hot weight on a proposal missing the f*p support.
    DiscreteSpace gap = make_space({0.5, 0.5}, {{1.0, 0.0}, {0.0, 1.0}}, {0.0, 2.0});
    CHECK(thrown_code([&] { oracle::exact_variance(gap, VarianceSpec::is(0)); }) ==
          ErrorCode::SupportViolation);
    CHECK(thrown_code([&] {
              oracle::exact_variance(
                  gap, VarianceSpec::mixture(MixtureWeights::renormalized(vec({1.0, 0.0}))));
          }) == ErrorCode::SupportViolation);

    // Control-variate kinds are stricter: proposal mass outside p's support
    // breaks the unit feature means even when plain mixture IS is fine.
    DiscreteSpace escaped =
        make_space({1.0, 0.0}, {{0.5, 0.5}, {1.0, 0.0}}, {1.0, 0.0});
    MixtureWeights half = MixtureWeights::uniform(2);
    CHECK(oracle::exact_variance(escaped, VarianceSpec::mixture(half)) ==
          doctest::Approx(1.0 / 3.0).epsilon(1e-13));
    CHECK(thrown_code([&] {
              oracle::exact_variance(
                  escaped, VarianceSpec::mixture_cv(half, vec({0.1, 0.1}), CvKind::Hat));
          }) == ErrorCode::SupportViolation);
    CHECK_FALSE(gap.covers_integrand(0));
    CHECK(gap.covers_integrand(1));
}

TEST_CASE("mean-square criterion matches the hand computation and the variance identity") {
    DiscreteSpace space = make_space({0.5, 0.5}, {{1.0, 0.0}, {0.0, 1.0}}, {0.0, 2.0});
    MixtureWeights half = MixtureWeights::uniform(2);

    // Solver-side beta is the negated estimator-side beta.
    Eigen::VectorXd solver_beta = vec({0.5, -0.5});
    double criterion = oracle::exact_ms_criterion(space, half, solver_beta);
    CHECK(criterion == doctest::Approx(1.0).epsilon(1e-14));

    double var = oracle::exact_variance(
        space, VarianceSpec::mixture_cv(half, vec({-0.5, 0.5}), CvKind::Hat));
    double mu = oracle::exact_mu(space);
    CHECK(criterion == doctest::Approx(var + mu * mu).epsilon(1e-12));

    // Zero coefficients reduce the criterion to the plain second moment.
    CHECK(oracle::exact_ms_criterion(space, half, vec({0.0, 0.0})) ==
          doctest::Approx(oracle::exact_variance(space, VarianceSpec::mixture(half)) +
                          mu * mu)
              .epsilon(1e-12));

    CHECK(thrown_code([&] {
              oracle::exact_ms_criterion(
                  space, MixtureWeights::renormalized(vec({1.0, 0.0})), vec({0.0, 0.3}));
          }) == ErrorCode::SupportViolation);
}

TEST_CASE("sampling through the bridged problem reproduces the exact moments") {
    DiscreteSpace space =
        make_space({0.4, 0.3, 0.2, 0.1},
                   {{0.1, 0.4, 0.3, 0.2}, {0.3, 0.1, 0.4, 0.2}}, {1.0, -2.0, 0.5, 3.0});
    oracle::DiscreteProblem problem = oracle::to_sampling_problem(space, std::nullopt);
    MixtureWeights alpha = MixtureWeights::renormalized(vec({0.4, 0.6}));

    RngStream stream(31);
    auto samples = draw_mixture(problem.family, problem.p, problem.f, alpha, 5000,
                                stream, false);
    for (int i = 0; i < 5; ++i) {
        int atom = static_cast<int>(samples[static_cast<std::size_t>(i)].point[0]);
        // Densities round-trip through log space, costing at most a few ulp.
        CHECK(samples[static_cast<std::size_t>(i)].p_density ==
              doctest::Approx(space.p[atom]).epsilon(1e-14));
        CHECK(samples[static_cast<std::size_t>(i)].q_densities[0] ==
              doctest::Approx(space.q(0, atom)).epsilon(1e-14));
        CHECK(samples[static_cast<std::size_t>(i)].f_value == space.f[atom]);
    }

    EstimateReport report = mixture_estimate(samples, alpha);
    double exact_var = oracle::exact_variance(space, VarianceSpec::mixture(alpha));
    CHECK(std::abs(report.estimate - oracle::exact_mu(space)) <
          5.0 * std::sqrt(exact_var / 5000.0));
    double scaled = report.variance_estimate * 5000.0;
    CHECK(scaled == doctest::Approx(exact_var).epsilon(0.25));

    CHECK(thrown_code([&] { problem.f(vec({9.0})); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("replicated stratified estimates concentrate at the stratified variance") {
    DiscreteSpace space = two_atom();
    oracle::DiscreteProblem problem = oracle::to_sampling_problem(space, std::nullopt);
    MixtureWeights half = MixtureWeights::uniform(2);

    const int replicates = 800;
    const int n = 100;
    RngStream root(32);
    std::vector<double> estimates;
    estimates.reserve(replicates);
    for (int r = 0; r < replicates; ++r) {
        RngStream stream = root.child(static_cast<std::uint64_t>(r));
        auto samples =
            draw_mixture(problem.family, problem.p, problem.f, half, n, stream, true);
        estimates.push_back(mixture_estimate(samples, half).estimate);
    }
    double mean = 0.0;
    for (double e : estimates) mean += e;
    mean /= replicates;
    double s2 = 0.0;
    for (double e : estimates) s2 += (e - mean) * (e - mean);
    s2 /= (replicates - 1.0);

    double exact = oracle::exact_variance(space, VarianceSpec::stratified(half));
    // 5 sigma for the sampling noise of a variance over 800 near-normal draws.
    double tolerance = 5.0 * std::sqrt(2.0 / (replicates - 1.0)) * exact;
    CHECK(std::abs(s2 * n - exact) < tolerance);
    CHECK(std::abs(mean - 1.0) < 5.0 * std::sqrt(exact / (n * replicates)));
}

}  // TEST_SUITE
