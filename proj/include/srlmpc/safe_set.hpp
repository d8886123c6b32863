/**
 * @file safe_set.hpp
 * @brief Dynamic safe set: states of previously completed feasible
 *        trajectories, grouped by iteration, each carrying a cost-to-go used
 *        for terminal-state selection. Includes both cost-to-go recursions
 *        (stage-cost only, and communication-augmented).
 */

#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "srlmpc/channel.hpp"
#include "srlmpc/nominal_mpc.hpp"
#include "srlmpc/vehicle.hpp"

namespace srlmpc {

/// One stored state: which iteration it came from, its step offset within
/// that trajectory, the input applied there (NaN at the trajectory end) and
/// its cost-to-go.
struct SafeSetEntry {
    int iteration = 0;
    int eta = 0;
    VehicleState state;
    double cost_to_go = 0.0;
    double input = std::numeric_limits<double>::quiet_NaN();
};

/// Full context of one stored iteration, kept for audits and replay.
struct StoredTrajectory {
    Trajectory trajectory;
    std::vector<VehicleState> leader;  ///< prediction the trajectory was validated against
    std::optional<ZoneRule> zone_rule;  ///< constraint it was planned under, if any
    DeliveryProfile omega;              ///< predicted delivery profile used for cost-to-go
    bool has_cost_to_go = false;
};

/// Append-only per-iteration store. Only trajectories that pass the
/// feasibility audit are admitted; cost-to-go values are attached once the
/// delivery profile for the trajectory is known.
class DynamicSafeSet {
public:
    /// Inserts a validated trajectory as the next iteration and returns its
    /// iteration index. Throws ValidationError when the report is negative;
    /// the set is left unchanged in that case.
    int insert(const Trajectory& traj, const FeasibilityReport& report,
               std::vector<VehicleState> leader, std::optional<ZoneRule> zone_rule);

    /// Attaches cost-to-go values (one per stored state) and the profile
    /// they were computed from.
    void assign_cost_to_go(int iteration, const std::vector<double>& q, DeliveryProfile omega);

    /// Every stored entry with eta <= effective_horizon, across all
    /// iterations. Empty when the set is empty. Requires cost-to-go values
    /// to be assigned everywhere.
    std::vector<SafeSetEntry> candidates(int effective_horizon) const;

    /// Number of stored iterations (L).
    int iterations() const { return static_cast<int>(entries_.size()); }

    /// Total stored entries.
    std::size_t size() const;

    const StoredTrajectory& stored(int iteration) const;
    const std::vector<SafeSetEntry>& entries(int iteration) const;

    /// Caps memory: when the total entry count exceeds max_entries, older
    /// iterations are thinned to the lowest-q entry per eta. The most recent
    /// iteration is never touched. max_entries must cover one full
    /// trajectory. Off unless called.
    void prune(std::size_t max_entries);

    /// Line-oriented text format, one entry per line:
    ///   iteration eta position velocity cost_to_go
    void save(std::ostream& out) const;

    /// Rebuilds entries from the text format. Trajectory context is not part
    /// of the format, so a loaded set supports candidate queries only.
    static DynamicSafeSet load(std::istream& in);

private:
    std::vector<std::vector<SafeSetEntry>> entries_;
    std::vector<StoredTrajectory> stored_;
};

/// Stage costs used for cost-to-go and for the short-horizon objective:
///   z(k) = gap_tracking * gapdev(k+1)^2 + effort * u(k)^2.
/// leader[k] aligns with traj.states[k].
std::vector<double> stage_costs(const Trajectory& traj, const std::vector<VehicleState>& leader,
                                const MpcWeights& weights, double gap_ref);

/// Terminal cost-to-go: terminal weight times the 1-norm gap deviation.
double terminal_gap_cost(const VehicleState& state, const VehicleState& leader,
                         const MpcWeights& weights, double gap_ref);

/// Backward recursion q(k) = z(k) + q(k+1), q(N) = terminal_q.
/// Stage costs must be nonnegative.
std::vector<double> compute_cost_to_go(const Trajectory& traj,
                                       const std::vector<double>& stage_costs,
                                       double terminal_q);

/// Communication-augmented recursion:
///   q(k) = sum_{j>=k} alpha^(j-k) * omega(j) + sum_{j>=k} z(j) + terminal_q
/// with omega covering every trajectory step and dropped entries costed at
/// omega_max. alpha must lie in (0, 1).
std::vector<double> compute_cost_to_go_with_comm(const Trajectory& traj,
                                                 const std::vector<double>& stage_costs,
                                                 const DeliveryProfile& omega, double alpha,
                                                 double terminal_q, double omega_max);

}  // namespace srlmpc
