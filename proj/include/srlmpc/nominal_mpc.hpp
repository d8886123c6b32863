/**
 * @file nominal_mpc.hpp
 * @brief Finite-horizon platooning MPC assuming an up-to-date leader
 *        prediction: gap tracking, control effort, a 1-norm terminal gap
 *        penalty and the linearized time-to-collision constraint, condensed
 *        into a dense QP over the input sequence.
 */

#pragma once

#include <Eigen/Dense>

#include <optional>
#include <vector>

#include "srlmpc/qp.hpp"
#include "srlmpc/vehicle.hpp"

namespace srlmpc {

/// Objective weights. gap_tracking and ref_tracking act on the squared gap
/// deviation per step (the default reference is the leader shifted back by
/// the reference gap, so the two terms coincide and simply add). effort acts
/// on squared acceleration, terminal on the 1-norm terminal gap deviation.
struct MpcWeights {
    double gap_tracking = 1.0;
    double ref_tracking = 0.0;
    double effort = 1.0;
    double terminal = 5.0;

    /// All weights nonnegative, at least one of the running weights positive.
    void validate() const;
};

/// Affine map from the stacked input vector to predicted positions and
/// velocities over a horizon:
///   position(k) = pos.row(k) u + pos0(k),  velocity(k) = vel.row(k) u + vel0(k)
/// Exact for the saturating dynamics as long as every predicted velocity
/// stays nonnegative, which the builders enforce with explicit rows.
struct InputToStateMap {
    Eigen::MatrixXd pos;   ///< (N+1) x N
    Eigen::MatrixXd vel;   ///< (N+1) x N
    Eigen::VectorXd pos0;  ///< N+1
    Eigen::VectorXd vel0;  ///< N+1

    static InputToStateMap build(const VehicleState& x0, int horizon, double dt);
};

struct NominalParams {
    int horizon = 70;
    double dt = 0.2;
    double gap_ref = 10.0;
    double ttc_min = 2.0;
    InputBounds bounds;
    double v_max = std::numeric_limits<double>::infinity();
};

struct NominalPlan {
    Trajectory trajectory;  ///< rolled out through step(); horizon()+1 states
    double objective = 0.0;  ///< running + terminal cost evaluated on the rollout
    QpSolution qp;           ///< solver diagnostics
};

/// Builds the condensed QP. Decision vector: N inputs, plus one epigraph
/// variable for the 1-norm terminal cost when weights.terminal > 0.
/// The TTC rows use gap(k) - ttc_min*(v_ego(k) - v_lead(k)) >= 0, which is
/// valid in both branches of the time-to-collision definition.
/// leader[k] must be the predicted leader state k steps after x0;
/// leader.size() >= horizon + 1 or a ValidationError is thrown.
QpProblem build_nominal_problem(const VehicleState& x0,
                                const std::vector<VehicleState>& leader,
                                const MpcWeights& weights, const NominalParams& params,
                                const InputToStateMap& map);

/// Running + terminal cost of a trajectory against a leader prediction:
///   sum_k (gap_tracking + ref_tracking) * gapdev(k)^2  (k = 1..N)
/// + sum_k effort * u(k)^2                              (k = 0..N-1)
/// + terminal * |gapdev(N)|
double nominal_objective(const Trajectory& traj, const std::vector<VehicleState>& leader,
                         const MpcWeights& weights, double gap_ref);

/// Solves the nominal problem and rolls the optimal inputs out through
/// step(). Returns nullopt when the QP reports infeasible (no feasible
/// trajectory) or fails to converge.
std::optional<NominalPlan> solve_nominal(const VehicleState& x0,
                                         const std::vector<VehicleState>& leader,
                                         const MpcWeights& weights,
                                         const NominalParams& params);

}  // namespace srlmpc
