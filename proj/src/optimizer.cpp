#include "mixis/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace mixis {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Median of the absolute values of a matrix block.
double median_abs(const Eigen::MatrixXd& block) {
    if (block.size() == 0) return 0.0;
    std::vector<double> vals(block.size());
    Eigen::Map<Eigen::ArrayXd>(vals.data(), block.size()) =
        block.reshaped().array().abs();
    auto mid = vals.begin() + vals.size() / 2;
    std::nth_element(vals.begin(), mid, vals.end());
    if (vals.size() % 2 == 1) return *mid;
    double hi = *mid;
    double lo = *std::max_element(vals.begin(), mid);
    return 0.5 * (lo + hi);
}

double condition_number(const Eigen::MatrixXd& h) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) return kInf;
    const Eigen::ArrayXd mags = es.eigenvalues().array().abs();
    double lo = mags.minCoeff();
    double hi = mags.maxCoeff();
    if (lo <= 0.0) return kInf;
    return hi / lo;
}

// Barrier value only (no derivatives); +inf when the point leaves the
// strictly feasible region, which makes the backtracking line search handle
// feasibility and descent uniformly.
double barrier_value_or_inf(const ProblemData& problem, const Eigen::VectorXd& alpha,
                            const Eigen::VectorXd& beta, double rho) {
    const Eigen::VectorXd& floors = problem.constraints.floors;
    double slack = 1.0 + problem.constraints.eta - alpha.sum();
    if (slack <= 0.0) return kInf;
    double log_terms = std::log(slack);
    for (int j = 0; j < alpha.size(); ++j) {
        double gap = alpha[j] - floors[j];
        if (gap <= 0.0) return kInf;
        log_terms += std::log(gap);
    }
    Eigen::ArrayXd denom = (problem.z * alpha).array();
    if ((denom <= 0.0).any()) return kInf;
    Eigen::ArrayXd resid = problem.y.array();
    if (beta.size() > 0) resid -= (problem.x * beta).array();
    CompensatedSum f0;
    for (int i = 0; i < problem.n(); ++i) f0.add(resid[i] * resid[i] / denom[i]);
    return f0.value() - rho * log_terms;
}

struct NewtonStepResult {
    Eigen::VectorXd direction;
    double decrement_sq = 0.0;  // -g'delta, the squared Newton decrement
    bool preconditioned = false;
    bool ok = false;
};

// Regularized Newton direction: solve (H + tau I) delta = -g, escalating tau
// from a trace-scaled seed until the factorization succeeds and the
// direction descends. Optionally conditions through the beta-block scaling.
NewtonStepResult newton_direction(const Eigen::MatrixXd& hessian,
                                  const Eigen::VectorXd& gradient,
                                  int num_components, const BarrierConfig& config) {
    NewtonStepResult result;
    const int dim = static_cast<int>(gradient.size());

    Eigen::VectorXd scale = Eigen::VectorXd::Ones(dim);
    if (config.use_preconditioner) {
        if (auto beta_scale = precondition(hessian, num_components)) {
            scale.tail(dim - num_components).setConstant(*beta_scale);
            result.preconditioned = true;
        }
    }
    const Eigen::MatrixXd h_scaled =
        scale.asDiagonal() * hessian * scale.asDiagonal();
    const Eigen::VectorXd g_scaled = scale.asDiagonal() * gradient;

    double trace = h_scaled.trace();
    double tau_seed = 1e-12 * std::abs(trace) / dim;
    if (!(tau_seed > 0.0)) tau_seed = 1e-12;

    double tau = 0.0;
    for (int attempt = 0; attempt <= config.max_regularization_escalations; ++attempt) {
        Eigen::MatrixXd h_reg = h_scaled;
        h_reg.diagonal().array() += tau;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(h_reg);
        if (ldlt.info() == Eigen::Success) {
            Eigen::VectorXd step = ldlt.solve(-g_scaled);
            double decrement_sq = -g_scaled.dot(step);
            if (step.allFinite() && decrement_sq >= 0.0) {
                result.direction = scale.asDiagonal() * step;
                result.decrement_sq = decrement_sq;
                result.ok = true;
                return result;
            }
        }
        tau = (tau == 0.0) ? tau_seed : tau * 10.0;
    }
    return result;
}

void write_row(std::ostream& out, const Eigen::VectorXd& row) {
    char buf[64];
    for (int i = 0; i < row.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", row[i]);
        out << '\t' << buf;
    }
}

}  // namespace

void ProblemData::validate() const {
    const int rows = n();
    const int j = num_components();
    const int k = num_covariates();
    if (rows == 0 || j == 0) fail(ErrorCode::ShapeMismatch, "empty problem data");
    if (x.rows() != rows && k > 0)
        fail(ErrorCode::ShapeMismatch, "x row count does not match y");
    if (z.rows() != rows) fail(ErrorCode::ShapeMismatch, "z row count does not match y");
    if (constraints.floors.size() != j)
        fail(ErrorCode::ShapeMismatch, "floor count does not match z columns");
    if ((constraints.floors.array() < 0.0).any())
        fail(ErrorCode::NonFeasible, "component floors must be nonnegative");
    if (constraints.eta < 0.0) fail(ErrorCode::NonFeasible, "eta must be nonnegative");
    if (!z.allFinite() || (z.array() < 0.0).any())
        fail(ErrorCode::InvalidArgument, "z must be finite and nonnegative");
    if (!y.allFinite() || (k > 0 && !x.allFinite()))
        fail(ErrorCode::InvalidArgument, "y and x must be finite");
    for (int i = 0; i < rows; ++i) {
        if (z.row(i).maxCoeff() <= 0.0)
            fail(ErrorCode::NonPositiveDenominator,
                 "sample row " + std::to_string(i + 1) +
                     " has zero density under every component");
    }
    initial_interior_point(constraints);  // raises Infeasible when floors fill the simplex
}

double objective(const ProblemData& problem, const Eigen::VectorXd& alpha,
                 const Eigen::VectorXd& beta) {
    if (alpha.size() != problem.num_components())
        fail(ErrorCode::ShapeMismatch, "alpha length does not match problem");
    if (beta.size() != problem.num_covariates())
        fail(ErrorCode::ShapeMismatch, "beta length does not match problem");
    Eigen::ArrayXd denom = (problem.z * alpha).array();
    for (int i = 0; i < denom.size(); ++i) {
        if (!(denom[i] > 0.0))
            fail(ErrorCode::NonPositiveDenominator,
                 "candidate mixture density is not positive at sample row " +
                     std::to_string(i + 1));
    }
    Eigen::ArrayXd resid = problem.y.array();
    if (beta.size() > 0) resid -= (problem.x * beta).array();
    CompensatedSum total;
    for (int i = 0; i < resid.size(); ++i) total.add(resid[i] * resid[i] / denom[i]);
    return total.value();
}

BarrierEval barrier_value_grad_hess(const ProblemData& problem,
                                    const Eigen::VectorXd& alpha,
                                    const Eigen::VectorXd& beta, double rho) {
    const int j = problem.num_components();
    const int k = problem.num_covariates();
    const int dim = j + k;
    const Eigen::VectorXd& floors = problem.constraints.floors;

    Eigen::VectorXd gaps = alpha - floors;
    double slack = 1.0 + problem.constraints.eta - alpha.sum();
    if ((gaps.array() <= 0.0).any() || slack <= 0.0)
        fail(ErrorCode::NonFeasible, "barrier evaluation requires a strictly feasible alpha");

    Eigen::VectorXd d = problem.z * alpha;
    Eigen::VectorXd r = problem.y;
    if (k > 0) r -= problem.x * beta;
    Eigen::ArrayXd inv_d = d.array().inverse();
    Eigen::ArrayXd r2_d2 = r.array().square() * inv_d.square();

    BarrierEval eval;
    CompensatedSum f0;
    for (int i = 0; i < problem.n(); ++i) f0.add(r[i] * r[i] * inv_d[i]);
    eval.value = f0.value() - rho * (gaps.array().log().sum() + std::log(slack));

    eval.gradient.resize(dim);
    eval.gradient.head(j) = -(problem.z.transpose() * r2_d2.matrix());
    eval.gradient.head(j) -= (rho * gaps.array().inverse()).matrix();
    eval.gradient.head(j).array() += rho / slack;
    if (k > 0)
        eval.gradient.tail(k) =
            -2.0 * (problem.x.transpose() * (r.array() * inv_d).matrix());

    eval.hessian.setZero(dim, dim);
    Eigen::MatrixXd zw = r2_d2.cwiseProduct(inv_d).matrix().asDiagonal() * problem.z;
    eval.hessian.topLeftCorner(j, j).noalias() = 2.0 * problem.z.transpose() * zw;
    eval.hessian.topLeftCorner(j, j) +=
        (rho * gaps.array().square().inverse()).matrix().asDiagonal();
    eval.hessian.topLeftCorner(j, j).array() += rho / (slack * slack);
    if (k > 0) {
        Eigen::MatrixXd xw = (r.array() * inv_d.square()).matrix().asDiagonal() * problem.x;
        eval.hessian.topRightCorner(j, k).noalias() = 2.0 * problem.z.transpose() * xw;
        eval.hessian.bottomLeftCorner(k, j) = eval.hessian.topRightCorner(j, k).transpose();
        Eigen::MatrixXd xd = inv_d.matrix().asDiagonal() * problem.x;
        eval.hessian.bottomRightCorner(k, k).noalias() = 2.0 * problem.x.transpose() * xd;
    }
    return eval;
}

std::optional<double> precondition(const Eigen::MatrixXd& hessian, int num_components) {
    const int dim = static_cast<int>(hessian.rows());
    const int k = dim - num_components;
    if (k <= 0) return std::nullopt;
    double med_alpha = median_abs(hessian.topLeftCorner(num_components, num_components));
    double med_beta = median_abs(hessian.bottomRightCorner(k, k));
    if (!(med_alpha > 0.0) || !(med_beta > 0.0)) return std::nullopt;
    double scale = std::sqrt(med_alpha / med_beta);
    if (!std::isfinite(scale) || scale == 1.0) return std::nullopt;

    Eigen::VectorXd diag = Eigen::VectorXd::Ones(dim);
    diag.tail(k).setConstant(scale);
    Eigen::MatrixXd scaled = diag.asDiagonal() * hessian * diag.asDiagonal();
    if (condition_number(scaled) < condition_number(hessian)) return scale;
    return std::nullopt;
}

Solution solve(const ProblemData& problem, const BarrierConfig& config) {
    problem.validate();
    const int j = problem.num_components();
    const int k = problem.num_covariates();

    Eigen::VectorXd alpha = initial_interior_point(problem.constraints);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);

    Solution sol;
    sol.status = SolveStatus::MaxIterationsExceeded;

    double f0 = objective(problem, alpha, beta);
    double rho = f0 / (j + 1);
    if (!(rho > 0.0)) rho = 1e-8;

    auto finish = [&](SolveStatus status, bool certified, double rho_now) {
        sol.status = status;
        sol.certified = certified;
        sol.diagnostics.final_rho = rho_now;
        sol.diagnostics.gap_bound = (j + 1) * rho_now;
        sol.diagnostics.pre_normalization_objective = objective(problem, alpha, beta);
        sol.alpha = MixtureWeights::renormalized(alpha);
        sol.beta = beta;
        sol.objective = objective(problem, sol.alpha.values(), beta);
        return sol;
    };

    // f0 is a sum of squares over positive denominators, so zero is already
    // the global minimum; certify immediately.
    if (f0 <= 1e-300) return finish(SolveStatus::Certified, true, rho);

    for (int stage = 0; stage < config.max_barrier_stages; ++stage) {
        sol.diagnostics.barrier_stages = stage + 1;
        bool stalled = false;

        int iter = 0;
        for (; iter < config.max_newton_iterations; ++iter) {
            BarrierEval eval = barrier_value_grad_hess(problem, alpha, beta, rho);
            if (eval.gradient.lpNorm<Eigen::Infinity>() <
                config.gradient_tolerance * (1.0 + std::abs(eval.value)))
                break;

            NewtonStepResult step = newton_direction(eval.hessian, eval.gradient, j, config);
            if (!step.ok) return finish(SolveStatus::NumericalBreakdown, false, rho);
            if (step.preconditioned) ++sol.diagnostics.preconditioned_steps;
            if (0.5 * step.decrement_sq < config.newton_decrement_tolerance) break;

            double slope = eval.gradient.dot(step.direction);
            double t = 1.0;
            bool accepted = false;
            for (int halvings = 0; halvings <= config.max_backtrack_steps; ++halvings) {
                Eigen::VectorXd alpha_try = alpha + t * step.direction.head(j);
                Eigen::VectorXd beta_try = beta + t * step.direction.tail(k);
                double value_try = barrier_value_or_inf(problem, alpha_try, beta_try, rho);
                if (value_try <= eval.value + config.armijo_slope * t * slope) {
                    alpha = std::move(alpha_try);
                    beta = std::move(beta_try);
                    accepted = true;
                    break;
                }
                t *= config.backtrack_factor;
                ++sol.diagnostics.backtracking_steps;
            }
            ++sol.diagnostics.newton_iterations;
            if (!accepted) {
                stalled = true;  // no decrease found at machine scale
                break;
            }
        }
        if (iter == config.max_newton_iterations && !stalled)
            return finish(SolveStatus::MaxIterationsExceeded, false, rho);

        f0 = objective(problem, alpha, beta);
        if (f0 <= 1e-300) return finish(SolveStatus::Certified, true, rho);
        if ((j + 1) * rho < config.certificate_tolerance * f0)
            return finish(SolveStatus::Certified, true, rho);
        if (stalled && 0.5 * rho * (j + 1) < 1e-300)
            return finish(SolveStatus::NumericalBreakdown, false, rho);
        rho /= config.rho_divisor;
    }
    return finish(SolveStatus::MaxIterationsExceeded, false, rho);
}

ProblemData assemble_problem(std::span<const WeightedSample> pilot,
                             const MixtureWeights& alpha_pilot, bool use_cv,
                             std::optional<int> defensive_index,
                             const ConstraintSet& constraints,
                             std::span<const double> multiplicities) {
    const int n = static_cast<int>(pilot.size());
    if (n == 0) fail(ErrorCode::InvalidArgument, "pilot sample is empty");
    const int j = static_cast<int>(alpha_pilot.size());
    if (!multiplicities.empty() && static_cast<int>(multiplicities.size()) != n)
        fail(ErrorCode::ShapeMismatch, "multiplicity count does not match pilot size");
    if (defensive_index && (*defensive_index < 0 || *defensive_index >= j))
        fail(ErrorCode::InvalidArgument, "defensive index out of range");

    ProblemData problem;
    problem.constraints = constraints;
    problem.y.resize(n);
    problem.z.resize(n, j);

    std::vector<int> cv_columns;
    if (use_cv) {
        for (int c = 0; c < j; ++c)
            if (!defensive_index || c != *defensive_index) cv_columns.push_back(c);
    }
    const int k = static_cast<int>(cv_columns.size());
    problem.x.resize(n, k);

    for (int i = 0; i < n; ++i) {
        const WeightedSample& s = pilot[i];
        if (static_cast<int>(s.q_densities.size()) != j)
            fail(ErrorCode::ShapeMismatch, "sample density cache does not match alpha");
        double q_mix = mixture_density_cached(s.q_densities, alpha_pilot);
        if (!(q_mix > 0.0))
            fail(ErrorCode::ZeroDensityAtSample,
                 "pilot mixture density vanishes at sample " + std::to_string(i + 1));
        double mult = multiplicities.empty() ? 1.0 : multiplicities[i];
        if (!(mult > 0.0))
            fail(ErrorCode::InvalidArgument, "row multiplicities must be positive");
        double sqrt_w = std::sqrt(mult / q_mix);
        problem.y[i] = s.f_value * s.p_density * sqrt_w;
        problem.z.row(i) = s.q_densities.transpose();
        for (int c = 0; c < k; ++c)
            problem.x(i, c) = (s.p_density - s.q_densities[cv_columns[c]]) * sqrt_w;
    }
    problem.column_components = cv_columns;

    if (k > 0) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(problem.x);
        qr.setThreshold(std::numeric_limits<double>::epsilon() * n);
        int rank = static_cast<int>(qr.rank());
        if (rank < k) {
            // Keep the QR pivot columns (a maximal independent set), drop the rest.
            std::vector<int> keep(qr.colsPermutation().indices().data(),
                                  qr.colsPermutation().indices().data() + rank);
            std::sort(keep.begin(), keep.end());
            Eigen::MatrixXd pruned(n, rank);
            std::vector<int> kept_components;
            std::vector<bool> kept_mask(k, false);
            for (int c = 0; c < rank; ++c) {
                pruned.col(c) = problem.x.col(keep[c]);
                kept_components.push_back(cv_columns[keep[c]]);
                kept_mask[keep[c]] = true;
            }
            for (int c = 0; c < k; ++c)
                if (!kept_mask[c]) problem.dropped_columns.push_back(cv_columns[c]);
            problem.x = std::move(pruned);
            problem.column_components = std::move(kept_components);
        }
    }
    problem.validate();
    return problem;
}

ProblemData stack_multi_integrand(std::span<const ProblemData> problems,
                                  std::span<const double> weights) {
    if (problems.empty()) fail(ErrorCode::InvalidArgument, "no problems to stack");
    if (weights.size() != problems.size())
        fail(ErrorCode::ShapeMismatch, "one stacking weight per problem required");
    const ProblemData& base = problems[0];
    int total_k = 0;
    for (size_t idx = 0; idx < problems.size(); ++idx) {
        const ProblemData& p = problems[idx];
        if (!(weights[idx] > 0.0))
            fail(ErrorCode::InvalidArgument, "stacking weights must be positive");
        if (p.n() != base.n() || p.num_components() != base.num_components())
            fail(ErrorCode::ShapeMismatch, "stacked problems must share sample and family sizes");
        if (p.z != base.z)
            fail(ErrorCode::ShapeMismatch, "stacked problems must share the density matrix z");
        if (p.constraints.floors != base.constraints.floors ||
            p.constraints.eta != base.constraints.eta)
            fail(ErrorCode::ShapeMismatch, "stacked problems must share constraints");
        total_k += p.num_covariates();
    }

    const int n = base.n();
    const int rows = n * static_cast<int>(problems.size());
    ProblemData stacked;
    stacked.constraints = base.constraints;
    stacked.y.resize(rows);
    stacked.x.setZero(rows, total_k);
    stacked.z.resize(rows, base.num_components());

    int row0 = 0, col0 = 0;
    for (size_t idx = 0; idx < problems.size(); ++idx) {
        const ProblemData& p = problems[idx];
        double s = std::sqrt(weights[idx]);
        stacked.y.segment(row0, n) = s * p.y;
        stacked.z.middleRows(row0, n) = p.z;
        if (p.num_covariates() > 0)
            stacked.x.block(row0, col0, n, p.num_covariates()) = s * p.x;
        for (int c : p.column_components) stacked.column_components.push_back(c);
        for (int c : p.dropped_columns) stacked.dropped_columns.push_back(c);
        row0 += n;
        col0 += p.num_covariates();
    }
    stacked.validate();
    return stacked;
}

void save_problem(const ProblemData& problem, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::Io, "cannot open " + path + " for writing");
    out << "mixis-problem 1\n";
    out << problem.n() << ' ' << problem.num_components() << ' '
        << problem.num_covariates() << '\n';
    char buf[64];
    for (int j = 0; j < problem.num_components(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", problem.constraints.floors[j]);
        out << (j ? "\t" : "") << buf;
    }
    out << '\n';
    std::snprintf(buf, sizeof(buf), "%.17g", problem.constraints.eta);
    out << buf << '\n';
    for (int i = 0; i < problem.n(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", problem.y[i]);
        out << buf;
        if (problem.num_covariates() > 0) write_row(out, problem.x.row(i).transpose());
        write_row(out, problem.z.row(i).transpose());
        out << '\n';
    }
    if (!out) fail(ErrorCode::Io, "failed writing " + path);
}

ProblemData load_problem(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open " + path);

    auto next_line = [&](std::string& line) {
        while (std::getline(in, line)) {
            size_t pos = line.find_first_not_of(" \t\r");
            if (pos == std::string::npos) continue;
            if (line[pos] == '#') continue;
            return true;
        }
        return false;
    };

    std::string line;
    if (!next_line(line)) fail(ErrorCode::Io, "empty problem file " + path);
    {
        std::istringstream hdr(line);
        std::string magic;
        int version = 0;
        hdr >> magic >> version;
        if (magic != "mixis-problem" || version != 1)
            fail(ErrorCode::Io, "unrecognized problem header in " + path);
    }

    int n = 0, j = 0, k = 0;
    if (!next_line(line)) fail(ErrorCode::Io, "missing size line in " + path);
    {
        std::istringstream sizes(line);
        if (!(sizes >> n >> j >> k) || n <= 0 || j <= 0 || k < 0)
            fail(ErrorCode::Io, "invalid size line in " + path);
    }

    ProblemData problem;
    problem.constraints.floors.resize(j);
    if (!next_line(line)) fail(ErrorCode::Io, "missing floor line in " + path);
    {
        std::istringstream floors(line);
        for (int c = 0; c < j; ++c)
            if (!(floors >> problem.constraints.floors[c]))
                fail(ErrorCode::Io, "invalid floor line in " + path);
    }
    if (!next_line(line)) fail(ErrorCode::Io, "missing eta line in " + path);
    {
        std::istringstream eta(line);
        if (!(eta >> problem.constraints.eta))
            fail(ErrorCode::Io, "invalid eta line in " + path);
    }

    problem.y.resize(n);
    problem.x.resize(n, k);
    problem.z.resize(n, j);
    for (int i = 0; i < n; ++i) {
        if (!next_line(line))
            fail(ErrorCode::Io, "missing data row " + std::to_string(i + 1) + " in " + path);
        std::istringstream row(line);
        bool ok = static_cast<bool>(row >> problem.y[i]);
        for (int c = 0; ok && c < k; ++c) ok = static_cast<bool>(row >> problem.x(i, c));
        for (int c = 0; ok && c < j; ++c) ok = static_cast<bool>(row >> problem.z(i, c));
        if (!ok)
            fail(ErrorCode::Io, "invalid data row " + std::to_string(i + 1) + " in " + path);
    }
    problem.column_components.resize(k);
    for (int c = 0; c < k; ++c) problem.column_components[c] = c;
    problem.validate();
    return problem;
}

}  // namespace mixis
