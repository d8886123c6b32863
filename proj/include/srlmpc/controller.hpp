/**
 * @file controller.hpp
 * @brief Short-range learning MPC: a nominal full-horizon plan seeds a
 *        dynamic safe set, then each iteration walks a shortened receding
 *        horizon through the episode, solving one convex QP per safe-set
 *        candidate to select the terminal state exactly, with
 *        communication-aware cost-to-go and a dead-zone position constraint.
 *
 * Candidate enumeration is the hot loop: the QPs are independent, so the
 * parallel kernel distributes them over OpenMP threads. A serial reference
 * kernel is kept and the two are required to select identically.
 */

#pragma once

#include <optional>
#include <vector>

#include "srlmpc/channel.hpp"
#include "srlmpc/nominal_mpc.hpp"
#include "srlmpc/safe_set.hpp"
#include "srlmpc/vehicle.hpp"

namespace srlmpc {

/// Raised when no feasible trajectory exists at startup.
class FeasibilityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SrLmpcConfig {
    int horizon_n = 70;         ///< outer horizon N [steps]
    int horizon_nu = 60;        ///< short horizon nu < N [steps]
    double dt = 0.2;
    MpcWeights weights;
    InputBounds bounds;
    double gap_ref = 10.0;
    double ttc_min = 2.0;
    double v_max = std::numeric_limits<double>::infinity();
    double alpha = 0.9;         ///< delivery-time discount, in (0, 1)
    double omega_max = 10.0;    ///< finite cost stand-in for dropped packets [s]
    double conv_tol = 1e-3;     ///< relative improvement threshold
    int max_iterations = 30;
    std::optional<ZoneRule> zone_rule;  ///< dead-zone constraint, if active
    bool parallel = true;       ///< OpenMP candidate enumeration

    void validate() const;
};

/// Forbidden position interval for the follower at one step.
struct ForbiddenInterval {
    int step = 0;
    double lo = 0.0;
    double hi = 0.0;
};

/// Steps in [first_step, last_step] where the leader occupies the zone; the
/// follower's forbidden interval there is the zone itself.
std::vector<ForbiddenInterval> update_dead_zone(const std::vector<VehicleState>& leader,
                                                const DeadZone& zone, int first_step,
                                                int last_step);

/// Solution of one short-horizon subproblem. states[0] is the start state;
/// the final state equals the selected safe-set entry up to solver tolerance.
struct SubproblemResult {
    std::vector<VehicleState> states;  ///< nu + 1 states over [tau, tau+nu]
    std::vector<ControlInput> inputs;  ///< nu inputs
    int selected_iteration = -1;
    int selected_eta = -1;
    double objective = 0.0;      ///< running cost + selected cost-to-go
    double running_cost = 0.0;
    double terminal_pin_error = 0.0;
    int feasible_candidates = 0;
    int infeasible_candidates = 0;
};

/// Base problem for one subproblem window; only the terminal equality
/// right-hand side varies across candidates.
struct TerminalCandidateProblem {
    QpProblem base;           ///< A_eq carries the 2 terminal-pin rows
    InputToStateMap map;
    int tau = 0;
    int nu = 0;

    static TerminalCandidateProblem build(const VehicleState& x_start, int tau,
                                          const std::vector<VehicleState>& leader,
                                          const std::vector<ForbiddenInterval>& forbidden,
                                          const SrLmpcConfig& cfg);

    /// Necessary reachability conditions; candidates failing them cannot
    /// yield a feasible QP and are skipped without a solve.
    bool reachable(const SafeSetEntry& entry, const SrLmpcConfig& cfg) const;

    QpProblem for_candidate(const SafeSetEntry& entry) const;
};

/// Outcome of the candidate sweep. Comparable objectives use the QP value
/// plus the candidate cost-to-go; the running-cost constant is shared by all
/// candidates of one window so the ordering is exact.
struct EnumerationResult {
    int best_index = -1;  ///< into the candidate vector, -1 when none feasible
    double best_key = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_inputs;
    int feasible = 0;
    int infeasible = 0;
};

/// Serial reference kernel. Ties on the objective break toward the lowest
/// (iteration, eta).
EnumerationResult enumerate_candidates_serial(const TerminalCandidateProblem& problem,
                                              const std::vector<SafeSetEntry>& candidates,
                                              const SrLmpcConfig& cfg);

/// OpenMP kernel; selects identically to the serial reference for any thread
/// count (per-candidate work is order-independent and the reduction uses the
/// same total order).
EnumerationResult enumerate_candidates_parallel(const TerminalCandidateProblem& problem,
                                                const std::vector<SafeSetEntry>& candidates,
                                                const SrLmpcConfig& cfg);

/// Solves one short-horizon subproblem by exact enumeration over the
/// candidate terminal states. Returns nullopt when every candidate is
/// infeasible.
std::optional<SubproblemResult> solve_subproblem(const VehicleState& x_start, int tau,
                                                 const std::vector<VehicleState>& leader,
                                                 const std::vector<SafeSetEntry>& candidates,
                                                 const std::vector<ForbiddenInterval>& forbidden,
                                                 const SrLmpcConfig& cfg);

struct TauDiagnostics {
    int tau = 0;
    int selected_iteration = -1;
    int selected_eta = -1;
    double objective = 0.0;
    int feasible_candidates = 0;
    int infeasible_candidates = 0;
};

struct IterationRecord {
    int iteration = 0;
    Trajectory trajectory;
    DeliveryProfile omega;      ///< predicted profile for this trajectory
    double cost = 0.0;          ///< J: communication-augmented cost-to-go at step 0
    double cost_plain = 0.0;    ///< stage costs + terminal only
    std::vector<TauDiagnostics> subproblems;
    int saturation_steps = 0;
    int dropout_steps = 0;
    int both_in_zone_steps = 0;
};

/// True once the relative improvement falls within conv_tol or the iteration
/// cap is reached. history holds [J^0, J^1, ...]; at least one completed
/// iteration (two entries) is required.
bool check_convergence(const std::vector<double>& history, double conv_tol, int max_iterations);

/// Runs one full iteration: snapshots the candidates, walks tau through
/// 0..N-nu applying the first input of each subproblem, completes the tail
/// from the final window, audits and stores the trajectory, and attaches its
/// communication-augmented cost-to-go. Returns nullopt (set unchanged) when
/// any window has no feasible candidate.
std::optional<IterationRecord> run_iteration(int iteration, DynamicSafeSet& ds,
                                             const VehicleState& x0,
                                             const std::vector<VehicleState>& leader,
                                             const ChannelPredictor& predictor,
                                             const SrLmpcConfig& cfg,
                                             int effective_horizon);

struct SrLmpcResult {
    IterationRecord seed;  ///< iteration 0: the nominal full-horizon plan
    std::vector<IterationRecord> iterations;
    bool converged = false;
    double first_input = 0.0;  ///< input the vehicle applies after convergence
    DynamicSafeSet safe_set;

    const IterationRecord& final_record() const {
        return iterations.empty() ? seed : iterations.back();
    }
};

/// Full pipeline: nominal seed, iterate until convergence or the cap.
/// leader[k] is the predicted leader state k steps ahead; it must cover the
/// outer horizon. Throws FeasibilityError when the nominal problem is
/// infeasible at the start.
SrLmpcResult run(const VehicleState& x0, const std::vector<VehicleState>& leader,
                 const ChannelPredictor& predictor, const SrLmpcConfig& cfg);

}  // namespace srlmpc
