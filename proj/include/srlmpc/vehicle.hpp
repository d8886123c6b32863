/**
 * @file vehicle.hpp
 * @brief Discrete-time longitudinal point-mass dynamics, input saturation and
 *        the time-to-collision safety measure shared by all controllers.
 */

#pragma once

#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace srlmpc {

/// Thrown when an argument violates a documented precondition.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Longitudinal state of one vehicle: arc-length position [m], speed [m/s].
/// Speed never goes negative; vehicles in this scenario do not reverse.
struct VehicleState {
    double position = 0.0;
    double velocity = 0.0;
};

/// Scalar longitudinal acceleration command [m/s^2].
struct ControlInput {
    double acceleration = 0.0;
};

struct InputBounds {
    double u_min = -6.0;
    double u_max = 6.0;

    bool contains(double u, double tol = 1e-9) const {
        return u >= u_min - tol && u <= u_max + tol;
    }
};

/// Position interval where the channel degrades when both vehicles occupy it
/// at the same step. Bounds are inclusive.
struct DeadZone {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double position) const { return position >= lo && position <= hi; }
};

/// Which side of the dead zone the follower is constrained to while the
/// leader occupies it. The follower trails the leader in this scenario, so
/// `behind` is the default.
enum class ZoneBranch { behind, ahead };

struct ZoneRule {
    DeadZone zone;
    double margin = 1.0;
    ZoneBranch branch = ZoneBranch::behind;
};

/// A rollout: states[k] is the state at step origin_time + k, inputs[k] the
/// command held over [k, k+1). inputs.size() == states.size() - 1.
struct Trajectory {
    int origin_time = 0;
    int iteration = 0;
    double dt = 0.2;
    std::vector<VehicleState> states;
    std::vector<ControlInput> inputs;

    int horizon() const { return static_cast<int>(inputs.size()); }
};

/// Exact double-integrator update for a piecewise-constant input:
///   position' = position + velocity*dt + u*dt^2/2
///   velocity' = max(0, velocity + u*dt)
/// Throws ValidationError on nonfinite arguments or dt <= 0.
VehicleState step(const VehicleState& state, const ControlInput& input, double dt);

/// Rolls out step() over an input sequence. Empty input sequence yields a
/// single-state trajectory.
Trajectory simulate(const VehicleState& x0, const std::vector<ControlInput>& inputs, double dt);

/// Time to collision: gap / closing speed, +inf when the ego is not closing.
/// Requires lead.position >= ego.position.
double time_to_collision(const VehicleState& ego, const VehicleState& lead);

/// Residual threshold under which a state pair counts as consistent with
/// step().
inline constexpr double kDynamicsResidualTol = 1e-10;

/// Outcome of the independent trajectory audit. Checks re-derive every
/// quantity from the raw state/input sequences; nothing is taken from the
/// solver that produced the trajectory.
struct FeasibilityReport {
    bool dynamics_ok = true;
    bool bounds_ok = true;
    bool ttc_ok = true;
    bool zone_ok = true;
    double max_dynamics_residual = 0.0;
    std::string detail;

    bool ok() const { return dynamics_ok && bounds_ok && ttc_ok && zone_ok; }
};

/// Audits a trajectory against the constraint set it was planned under.
///
/// leader[k] must be the leader state at the same step as traj.states[k];
/// the leader sequence must cover the whole trajectory. TTC and zone checks
/// apply from step 1 on (the initial state is given, not chosen). The TTC
/// check uses the form gap >= ttc_min * (v_ego - v_lead), which is equivalent
/// to time_to_collision() >= ttc_min in both branches. `zone_rule`, when set,
/// is the half-space rule the trajectory was planned under: while the leader
/// is inside the zone the follower must hold the chosen side of it.
FeasibilityReport validate_trajectory(const Trajectory& traj,
                                      const std::vector<VehicleState>& leader,
                                      const InputBounds& bounds,
                                      double ttc_min,
                                      const std::optional<ZoneRule>& zone_rule = {},
                                      double tol = 1e-6);

}  // namespace srlmpc
