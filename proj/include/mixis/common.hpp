#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>

namespace mixis {

// Machine-readable failure categories. Every throwing operation in the
// library raises Error with one of these codes so callers (and the C API)
// can branch without parsing messages.
enum class ErrorCode {
    InvalidArgument,
    DimensionMismatch,
    ShapeMismatch,
    NonFeasible,
    Infeasible,
    ZeroVector,
    EpsilonTooLarge,
    ZeroDensityAtSample,
    NonPositiveDenominator,
    InfeasiblePoint,
    SupportViolation,
    PartitionInvariantViolation,
    InsufficientReplicates,
    NumericalBreakdown,
    Io,
};

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

// Neumaier-compensated accumulator. Estimator and oracle sums run through
// this in a fixed index order so results do not depend on scheduling and
// keep enough accuracy for the 1e-10..1e-12 cross-check tolerances.
class CompensatedSum {
  public:
    void add(double x) noexcept {
        double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }

    double value() const noexcept { return sum_ + comp_; }

  private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double compensated_total(std::span<const double> xs) noexcept {
    CompensatedSum acc;
    for (double x : xs) acc.add(x);
    return acc.value();
}

}  // namespace mixis
