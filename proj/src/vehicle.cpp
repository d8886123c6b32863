#include "srlmpc/vehicle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace srlmpc {

VehicleState step(const VehicleState& state, const ControlInput& input, double dt) {
    if (!std::isfinite(state.position) || !std::isfinite(state.velocity) ||
        !std::isfinite(input.acceleration)) {
        throw ValidationError("step: nonfinite state or input");
    }
    if (!(dt > 0.0)) {
        throw ValidationError("step: dt must be positive");
    }
    const double u = input.acceleration;
    VehicleState next;
    next.position = state.position + state.velocity * dt + 0.5 * u * dt * dt;
    next.velocity = std::max(0.0, state.velocity + u * dt);
    return next;
}

Trajectory simulate(const VehicleState& x0, const std::vector<ControlInput>& inputs, double dt) {
    Trajectory traj;
    traj.dt = dt;
    traj.states.reserve(inputs.size() + 1);
    traj.inputs = inputs;
    traj.states.push_back(x0);
    VehicleState x = x0;
    for (const ControlInput& u : inputs) {
        x = step(x, u, dt);
        traj.states.push_back(x);
    }
    return traj;
}

double time_to_collision(const VehicleState& ego, const VehicleState& lead) {
    const double gap = lead.position - ego.position;
    if (gap < 0.0) {
        throw ValidationError("time_to_collision: lead vehicle is behind the ego vehicle");
    }
    if (lead.velocity >= ego.velocity) {
        return std::numeric_limits<double>::infinity();
    }
    return gap / (ego.velocity - lead.velocity);
}

FeasibilityReport validate_trajectory(const Trajectory& traj,
                                      const std::vector<VehicleState>& leader,
                                      const InputBounds& bounds,
                                      double ttc_min,
                                      const std::optional<ZoneRule>& zone_rule,
                                      double tol) {
    FeasibilityReport report;
    std::ostringstream detail;

    if (traj.states.size() != traj.inputs.size() + 1) {
        report.dynamics_ok = false;
        report.detail = "states/inputs length mismatch";
        return report;
    }
    if (leader.size() < traj.states.size()) {
        report.ttc_ok = false;
        report.detail = "leader sequence shorter than trajectory";
        return report;
    }

    for (std::size_t k = 0; k < traj.inputs.size(); ++k) {
        const VehicleState predicted = step(traj.states[k], traj.inputs[k], traj.dt);
        const double res = std::max(std::abs(predicted.position - traj.states[k + 1].position),
                                    std::abs(predicted.velocity - traj.states[k + 1].velocity));
        report.max_dynamics_residual = std::max(report.max_dynamics_residual, res);
        if (res > kDynamicsResidualTol) {
            report.dynamics_ok = false;
            detail << "dynamics residual " << res << " at step " << k << "; ";
        }
        if (!bounds.contains(traj.inputs[k].acceleration, tol)) {
            report.bounds_ok = false;
            detail << "input " << traj.inputs[k].acceleration << " out of bounds at step " << k
                   << "; ";
        }
    }

    for (std::size_t k = 1; k < traj.states.size(); ++k) {
        const VehicleState& ego = traj.states[k];
        const VehicleState& lead = leader[k];
        const double gap = lead.position - ego.position;
        if (gap - ttc_min * (ego.velocity - lead.velocity) < -tol || gap < -tol) {
            report.ttc_ok = false;
            detail << "ttc violated at step " << k << " (gap " << gap << "); ";
        }
        if (zone_rule && zone_rule->zone.contains(lead.position)) {
            const ZoneRule& rule = *zone_rule;
            const bool held = rule.branch == ZoneBranch::behind
                                  ? ego.position <= rule.zone.lo - rule.margin + tol
                                  : ego.position >= rule.zone.hi + rule.margin - tol;
            if (!held) {
                report.zone_ok = false;
                detail << "zone rule violated at step " << k << " (pos " << ego.position << "); ";
            }
        }
    }

    report.detail = detail.str();
    return report;
}

}  // namespace srlmpc
