/**
 * @file qp.hpp
 * @brief Dense convex quadratic programming.
 *
 * Canonical form:
 *
 *   minimize    1/2 z'Hz + g'z
 *   subject to  A_eq z  = b_eq
 *               A_in z <= b_in
 *               lb <= z <= ub
 *
 * solve() runs a Mehrotra predictor-corrector primal-dual interior-point
 * iteration on the dense problem. Problems here are small (tens to a few
 * hundred variables), so everything is plain column-major Eigen with LU
 * factorizations per iteration.
 */

#pragma once

#include <Eigen/Dense>

#include <limits>
#include <optional>

#include "srlmpc/vehicle.hpp"

namespace srlmpc {

struct QpProblem {
    Eigen::MatrixXd H;     ///< n x n, symmetric positive semidefinite
    Eigen::VectorXd g;     ///< n
    Eigen::MatrixXd A_eq;  ///< p x n (p may be 0)
    Eigen::VectorXd b_eq;  ///< p
    Eigen::MatrixXd A_in;  ///< m x n, rows A_in z <= b_in (m may be 0)
    Eigen::VectorXd b_in;  ///< m
    Eigen::VectorXd lb;    ///< n, -inf allowed
    Eigen::VectorXd ub;    ///< n, +inf allowed

    int num_vars() const { return static_cast<int>(g.size()); }

    /// Throws ValidationError on dimension mismatch, asymmetric H
    /// (tolerance 1e-12 relative), lb > ub, or an H eigenvalue below -1e-8.
    void validate() const;
};

enum class QpStatus { optimal, infeasible, iteration_limit };

/// Multipliers for the four constraint groups. All inequality multipliers
/// are nonnegative at a KKT point.
struct QpMultipliers {
    Eigen::VectorXd eq;     ///< equality rows
    Eigen::VectorXd in;     ///< inequality rows
    Eigen::VectorXd lower;  ///< lb - z <= 0
    Eigen::VectorXd upper;  ///< z - ub <= 0
};

/// Scaled residual norms of the KKT conditions; all three are <= the solver
/// tolerance at a point reported optimal. Norms are infinity norms divided
/// by a problem-magnitude scale (never below 1), so the values are relative.
struct KktResiduals {
    double stationarity = std::numeric_limits<double>::infinity();
    double primal = std::numeric_limits<double>::infinity();
    double complementarity = std::numeric_limits<double>::infinity();

    double max() const { return std::max(stationarity, std::max(primal, complementarity)); }
};

struct QpSolution {
    QpStatus status = QpStatus::iteration_limit;
    Eigen::VectorXd z;
    double objective = std::numeric_limits<double>::quiet_NaN();
    KktResiduals residuals;
    QpMultipliers multipliers;
    int iterations = 0;
};

struct QpSettings {
    double tol = 1e-8;
    int max_iter = 200;
    /// Skip the O(n^3) convexity check inside solve(). Used on hot paths
    /// where the same H has already been validated once.
    bool skip_convexity_check = false;
};

/// Evaluates the scaled KKT residual norms at an arbitrary candidate point.
/// Pure computation; does not require feasibility.
KktResiduals kkt_residuals(const QpProblem& problem, const Eigen::VectorXd& z,
                           const QpMultipliers& multipliers);

/// Solves the QP. Reports optimal only after kkt_residuals() confirms every
/// scaled residual is within settings.tol. An infeasible problem is reported
/// as a status (complementarity converges while the primal residual stays
/// bounded away from zero, or the dual iterate diverges), never as an
/// exception. Throws ValidationError for malformed problems.
QpSolution solve(const QpProblem& problem, const QpSettings& settings = {},
                 const std::optional<Eigen::VectorXd>& z0 = {});

}  // namespace srlmpc
