#include <doctest.h>

#include <string>

#include "mixis/simplex.hpp"

using namespace mixis;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> values) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (double x : values) v[i++] = x;
    return v;
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

TEST_SUITE("simplex") {

TEST_CASE("uniform weights split one evenly") {
    MixtureWeights w = MixtureWeights::uniform(4);
    CHECK(w.size() == 4);
    for (int j = 0; j < 4; ++j) CHECK(w[j] == 0.25);
}

TEST_CASE("renormalized scales positive vectors to unit sum") {
    MixtureWeights w = MixtureWeights::renormalized(vec({2.0, 1.0, 1.0}));
    CHECK(w[0] == 0.5);
    CHECK(w[1] == 0.25);
    CHECK(w[2] == 0.25);
}

TEST_CASE("renormalized rejects negative entries and zero totals") {
    CHECK(thrown_code([] { MixtureWeights::renormalized(vec({0.5, -0.1})); }) ==
          ErrorCode::NonFeasible);
    CHECK(thrown_code([] { MixtureWeights::renormalized(vec({0.0, 0.0})); }) ==
          ErrorCode::ZeroVector);
}

TEST_CASE("validate_weights enforces strict floors naming the component") {
    ConstraintSet constraints = ConstraintSet::uniform_floor(2, 0.1);
    MixtureWeights ok = validate_weights(vec({0.7, 0.3}), constraints);
    CHECK(ok[0] == doctest::Approx(0.7));
    try {
        validate_weights(vec({1.0, 0.0}), constraints);
        FAIL("expected a floor violation");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonFeasible);
        CHECK(std::string(e.what()).find('2') != std::string::npos);
    }
}

TEST_CASE("validate_weights caps the sum at one plus eta") {
    ConstraintSet constraints = ConstraintSet::unconstrained(2);
    CHECK(thrown_code([&] { validate_weights(vec({0.8, 0.4}), constraints); }) ==
          ErrorCode::NonFeasible);
    constraints.eta = 0.25;
    MixtureWeights w = validate_weights(vec({0.8, 0.4}), constraints);
    CHECK(w[0] == doctest::Approx(2.0 / 3.0));  // renormalized to unit sum
}

TEST_CASE("interior point equalizes all barrier gaps") {
    SUBCASE("no floors") {
        Eigen::VectorXd a = initial_interior_point(ConstraintSet::unconstrained(3));
        for (int j = 0; j < 3; ++j) CHECK(a[j] == 0.25);  // delta = 1/4
        CHECK(1.0 - a.sum() == doctest::Approx(0.25));
    }
    SUBCASE("uniform floors") {
        ConstraintSet c = ConstraintSet::uniform_floor(5, 0.01);
        Eigen::VectorXd a = initial_interior_point(c);
        double delta = (1.0 - 0.05) / 6.0;
        for (int j = 0; j < 5; ++j) CHECK(a[j] == doctest::Approx(0.01 + delta));
    }
    SUBCASE("infeasible floors") {
        CHECK(thrown_code([] {
                  initial_interior_point(ConstraintSet::uniform_floor(2, 0.5));
              }) == ErrorCode::Infeasible);
    }
}

TEST_CASE("floor penalty factor matches the closed form") {
    // Two of five weights sit below the floor: (1 - 3 eps) / (1 - 5 eps).
    Eigen::VectorXd alpha = vec({0.005, 0.005, 0.4, 0.3, 0.29});
    CHECK(epsilon_penalty_factor(alpha, 0.01) == doctest::Approx(0.97 / 0.95).epsilon(1e-12));
    // No weight below the floor: no inflation.
    CHECK(epsilon_penalty_factor(vec({0.5, 0.5}), 0.1) == doctest::Approx(1.0));
    // Two of three weights below the floor: (1 - eps)/(1 - 3 eps).
    CHECK(epsilon_penalty_factor(vec({0.1, 0.1, 0.8}), 0.2) ==
          doctest::Approx(0.8 / 0.4).epsilon(1e-12));
}

TEST_CASE("floor penalty factor rejects eps outside (0, 1/J)") {
    Eigen::VectorXd alpha = vec({0.5, 0.5});
    CHECK(thrown_code([&] { epsilon_penalty_factor(alpha, 0.0); }) ==
          ErrorCode::EpsilonTooLarge);
    CHECK(thrown_code([&] { epsilon_penalty_factor(alpha, 0.5); }) ==
          ErrorCode::EpsilonTooLarge);
}

}  // TEST_SUITE
