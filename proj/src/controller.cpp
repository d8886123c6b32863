#include "srlmpc/controller.hpp"

#include <algorithm>
#include <cmath>

#ifdef SRLMPC_HAVE_OPENMP
#include <omp.h>
#endif

namespace srlmpc {

void SrLmpcConfig::validate() const {
    if (!(dt > 0.0)) throw ValidationError("config: dt must be positive");
    if (!(horizon_nu > 0 && horizon_nu < horizon_n)) {
        throw ValidationError("config: require 0 < nu < N");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("config: alpha must lie in (0, 1)");
    if (!(conv_tol > 0.0)) throw ValidationError("config: convergence tolerance must be positive");
    if (max_iterations < 1) throw ValidationError("config: at least one iteration required");
    if (!(omega_max > 0.0)) throw ValidationError("config: omega_max must be positive");
    if (!(bounds.u_min < bounds.u_max)) throw ValidationError("config: input bounds out of order");
    if (zone_rule && !(zone_rule->zone.lo < zone_rule->zone.hi)) {
        throw ValidationError("config: dead zone bounds out of order");
    }
    weights.validate();
}

std::vector<ForbiddenInterval> update_dead_zone(const std::vector<VehicleState>& leader,
                                                const DeadZone& zone, int first_step,
                                                int last_step) {
    if (first_step < 0 || last_step >= static_cast<int>(leader.size())) {
        throw ValidationError("update_dead_zone: step range outside the leader prediction");
    }
    std::vector<ForbiddenInterval> out;
    for (int k = first_step; k <= last_step; ++k) {
        if (zone.contains(leader[k].position)) {
            out.push_back({k, zone.lo, zone.hi});
        }
    }
    return out;
}

TerminalCandidateProblem TerminalCandidateProblem::build(
    const VehicleState& x_start, int tau, const std::vector<VehicleState>& leader,
    const std::vector<ForbiddenInterval>& forbidden, const SrLmpcConfig& cfg) {
    const int nu = cfg.horizon_nu;
    if (static_cast<int>(leader.size()) < tau + nu + 1) {
        throw ValidationError("subproblem: leader prediction shorter than the window");
    }

    TerminalCandidateProblem prob;
    prob.tau = tau;
    prob.nu = nu;
    prob.map = InputToStateMap::build(x_start, nu, cfg.dt);
    const InputToStateMap& map = prob.map;

    QpProblem& qp = prob.base;
    qp.H.setZero(nu, nu);
    qp.g.setZero(nu);
    const double track_w = cfg.weights.gap_tracking;
    for (int j = 1; j <= nu; ++j) {
        const double a = leader[tau + j].position - cfg.gap_ref - map.pos0[j];
        qp.H += 2.0 * track_w * map.pos.row(j).transpose() * map.pos.row(j);
        qp.g += -2.0 * track_w * a * map.pos.row(j).transpose();
    }
    qp.H.diagonal().array() += 2.0 * cfg.weights.effort;

    int zone_rows = 0;
    for (const ForbiddenInterval& f : forbidden) {
        if (f.step > tau && f.step <= tau + nu) ++zone_rows;
    }
    const bool bound_v = cfg.v_max < std::numeric_limits<double>::infinity();
    const int rows = nu /*ttc*/ + nu /*v>=0*/ + (bound_v ? nu : 0) + zone_rows;
    qp.A_in.setZero(rows, nu);
    qp.b_in.setZero(rows);
    int r = 0;
    for (int j = 1; j <= nu; ++j, ++r) {
        qp.A_in.row(r) = map.pos.row(j) + cfg.ttc_min * map.vel.row(j);
        qp.b_in[r] = leader[tau + j].position - map.pos0[j] -
                     cfg.ttc_min * (map.vel0[j] - leader[tau + j].velocity);
    }
    for (int j = 1; j <= nu; ++j, ++r) {
        qp.A_in.row(r) = -map.vel.row(j);
        qp.b_in[r] = map.vel0[j];
    }
    if (bound_v) {
        for (int j = 1; j <= nu; ++j, ++r) {
            qp.A_in.row(r) = map.vel.row(j);
            qp.b_in[r] = cfg.v_max - map.vel0[j];
        }
    }
    const ZoneBranch branch = cfg.zone_rule ? cfg.zone_rule->branch : ZoneBranch::behind;
    const double margin = cfg.zone_rule ? cfg.zone_rule->margin : 0.0;
    for (const ForbiddenInterval& f : forbidden) {
        if (f.step <= tau || f.step > tau + nu) continue;
        const int j = f.step - tau;
        if (branch == ZoneBranch::behind) {
            qp.A_in.row(r) = map.pos.row(j);
            qp.b_in[r] = f.lo - margin - map.pos0[j];
        } else {
            qp.A_in.row(r) = -map.pos.row(j);
            qp.b_in[r] = map.pos0[j] - (f.hi + margin);
        }
        ++r;
    }

    qp.A_eq.setZero(2, nu);
    qp.A_eq.row(0) = map.pos.row(nu);
    qp.A_eq.row(1) = map.vel.row(nu);
    qp.b_eq.setZero(2);
    qp.lb = Eigen::VectorXd::Constant(nu, cfg.bounds.u_min);
    qp.ub = Eigen::VectorXd::Constant(nu, cfg.bounds.u_max);
    qp.validate();
    return prob;
}

bool TerminalCandidateProblem::reachable(const SafeSetEntry& entry,
                                         const SrLmpcConfig& cfg) const {
    constexpr double tol = 1e-6;
    const double dt = cfg.dt;
    const double v0 = map.vel0[0];
    const double vf = entry.state.velocity;
    const double u_acc = cfg.bounds.u_max;
    const double u_brk = -cfg.bounds.u_min;
    if (vf < -tol || vf > v0 + nu * dt * u_acc + tol || vf < v0 - nu * dt * u_brk - tol) {
        return false;
    }
    if (cfg.v_max < std::numeric_limits<double>::infinity() && vf > cfg.v_max + tol) {
        return false;
    }
    // Exact bounds on the terminal position given the velocity pin: every
    // feasible velocity profile satisfies
    //   max(0, v0 - u_brk k dt, vf - u_acc (nu-k) dt) <= v(k)
    //                     <= min(v0 + u_acc k dt, vf + u_brk (nu-k) dt, v_max)
    // and p(nu) - p(0) = dt * sum_k v(k) + dt (vf - v0) / 2 over k = 0..nu-1.
    double lo_sum = 0.0, hi_sum = 0.0;
    for (int k = 0; k < nu; ++k) {
        lo_sum += std::max({0.0, v0 - u_brk * k * dt, vf - u_acc * (nu - k) * dt});
        double hi = std::min(v0 + u_acc * k * dt, vf + u_brk * (nu - k) * dt);
        if (cfg.v_max < std::numeric_limits<double>::infinity()) hi = std::min(hi, cfg.v_max);
        hi_sum += hi;
    }
    const double shift = 0.5 * dt * (vf - v0);
    const double dp = entry.state.position - map.pos0[0];
    return dp >= lo_sum * dt + shift - tol && dp <= hi_sum * dt + shift + tol;
}

QpProblem TerminalCandidateProblem::for_candidate(const SafeSetEntry& entry) const {
    QpProblem qp = base;
    qp.b_eq[0] = entry.state.position - map.pos0[nu];
    qp.b_eq[1] = entry.state.velocity - map.vel0[nu];
    return qp;
}

namespace {

/// Strict total order on (objective key, iteration, eta).
bool candidate_better(double key_a, const SafeSetEntry& a, double key_b, const SafeSetEntry& b) {
    if (key_a != key_b) return key_a < key_b;
    if (a.iteration != b.iteration) return a.iteration < b.iteration;
    return a.eta < b.eta;
}

struct CandidateEval {
    bool feasible = false;
    double key = std::numeric_limits<double>::infinity();
    Eigen::VectorXd z;
};

CandidateEval eval_candidate(QpProblem& scratch, const TerminalCandidateProblem& prob,
                             const SafeSetEntry& entry, const SrLmpcConfig& cfg) {
    CandidateEval out;
    if (!prob.reachable(entry, cfg)) return out;
    scratch.b_eq[0] = entry.state.position - prob.map.pos0[prob.nu];
    scratch.b_eq[1] = entry.state.velocity - prob.map.vel0[prob.nu];
    QpSettings settings;
    settings.skip_convexity_check = true;
    const QpSolution sol = solve(scratch, settings);
    if (sol.status != QpStatus::optimal) return out;
    out.feasible = true;
    out.key = sol.objective + entry.cost_to_go;
    out.z = sol.z;
    return out;
}

}  // namespace

EnumerationResult enumerate_candidates_serial(const TerminalCandidateProblem& problem,
                                              const std::vector<SafeSetEntry>& candidates,
                                              const SrLmpcConfig& cfg) {
    EnumerationResult result;
    QpProblem scratch = problem.base;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const CandidateEval eval = eval_candidate(scratch, problem, candidates[i], cfg);
        if (!eval.feasible) {
            ++result.infeasible;
            continue;
        }
        ++result.feasible;
        if (result.best_index < 0 ||
            candidate_better(eval.key, candidates[i], result.best_key,
                             candidates[result.best_index])) {
            result.best_index = static_cast<int>(i);
            result.best_key = eval.key;
            result.best_inputs = eval.z;
        }
    }
    return result;
}

EnumerationResult enumerate_candidates_parallel(const TerminalCandidateProblem& problem,
                                                const std::vector<SafeSetEntry>& candidates,
                                                const SrLmpcConfig& cfg) {
#ifndef SRLMPC_HAVE_OPENMP
    return enumerate_candidates_serial(problem, candidates, cfg);
#else
    const int n = static_cast<int>(candidates.size());
    const int threads = std::max(1, omp_get_max_threads());
    std::vector<EnumerationResult> locals(threads);

#pragma omp parallel num_threads(threads)
    {
        const int tid = omp_get_thread_num();
        EnumerationResult& mine = locals[tid];
        QpProblem scratch = problem.base;
#pragma omp for schedule(dynamic, 4)
        for (int i = 0; i < n; ++i) {
            const CandidateEval eval = eval_candidate(scratch, problem, candidates[i], cfg);
            if (!eval.feasible) {
                ++mine.infeasible;
                continue;
            }
            ++mine.feasible;
            if (mine.best_index < 0 ||
                candidate_better(eval.key, candidates[i], mine.best_key,
                                 candidates[mine.best_index])) {
                mine.best_index = i;
                mine.best_key = eval.key;
                mine.best_inputs = eval.z;
            }
        }
    }

    EnumerationResult result;
    for (const EnumerationResult& local : locals) {
        result.feasible += local.feasible;
        result.infeasible += local.infeasible;
        if (local.best_index < 0) continue;
        if (result.best_index < 0 ||
            candidate_better(local.best_key, candidates[local.best_index], result.best_key,
                             candidates[result.best_index])) {
            result.best_index = local.best_index;
            result.best_key = local.best_key;
            result.best_inputs = local.best_inputs;
        }
    }
    return result;
#endif
}

std::optional<SubproblemResult> solve_subproblem(const VehicleState& x_start, int tau,
                                                 const std::vector<VehicleState>& leader,
                                                 const std::vector<SafeSetEntry>& candidates,
                                                 const std::vector<ForbiddenInterval>& forbidden,
                                                 const SrLmpcConfig& cfg) {
    if (candidates.empty()) return std::nullopt;
    const TerminalCandidateProblem problem =
        TerminalCandidateProblem::build(x_start, tau, leader, forbidden, cfg);
    const EnumerationResult enumeration =
        cfg.parallel ? enumerate_candidates_parallel(problem, candidates, cfg)
                     : enumerate_candidates_serial(problem, candidates, cfg);
    if (enumeration.best_index < 0) return std::nullopt;
    const SafeSetEntry& winner = candidates[enumeration.best_index];

    // Tighten the winner so the terminal pin holds as a hard equality.
    QpProblem pinned = problem.for_candidate(winner);
    QpSettings tight;
    tight.tol = 1e-11;
    tight.max_iter = 100;
    tight.skip_convexity_check = true;
    const QpSolution refined = solve(pinned, tight, enumeration.best_inputs);
    const Eigen::VectorXd& z =
        refined.status == QpStatus::optimal ? refined.z : enumeration.best_inputs;

    const int nu = cfg.horizon_nu;
    std::vector<ControlInput> inputs(nu);
    for (int j = 0; j < nu; ++j) {
        inputs[j].acceleration = std::min(std::max(z[j], cfg.bounds.u_min), cfg.bounds.u_max);
    }
    Trajectory window = simulate(x_start, inputs, cfg.dt);

    SubproblemResult result;
    result.states = window.states;
    result.inputs = window.inputs;
    result.selected_iteration = winner.iteration;
    result.selected_eta = winner.eta;
    result.feasible_candidates = enumeration.feasible;
    result.infeasible_candidates = enumeration.infeasible;
    result.terminal_pin_error =
        std::max(std::abs(window.states[nu].position - winner.state.position),
                 std::abs(window.states[nu].velocity - winner.state.velocity));

    const std::vector<VehicleState> leader_window(leader.begin() + tau,
                                                  leader.begin() + tau + nu + 1);
    double running = 0.0;
    for (double zc : stage_costs(window, leader_window, cfg.weights, cfg.gap_ref)) {
        running += zc;
    }
    result.running_cost = running;
    result.objective = running + winner.cost_to_go;
    return result;
}

bool check_convergence(const std::vector<double>& history, double conv_tol,
                       int max_iterations) {
    if (history.size() < 2) {
        throw ValidationError("check_convergence: at least one completed iteration required");
    }
    const double last = history.back();
    const double prev = history[history.size() - 2];
    const int completed = static_cast<int>(history.size()) - 1;
    if (completed >= max_iterations) return true;
    return std::abs(last - prev) <= conv_tol * std::max(1.0, std::abs(prev));
}

namespace {

IterationRecord make_record(int iteration, Trajectory traj,
                            const std::vector<VehicleState>& leader,
                            const ChannelPredictor& predictor, const SrLmpcConfig& cfg) {
    IterationRecord rec;
    rec.iteration = iteration;
    rec.omega = predictor(traj.states, leader, traj.origin_time);

    const std::vector<double> z = stage_costs(traj, leader, cfg.weights, cfg.gap_ref);
    const double q_n = terminal_gap_cost(traj.states.back(), leader[traj.horizon()],
                                         cfg.weights, cfg.gap_ref);
    rec.cost_plain = compute_cost_to_go(traj, z, q_n).front();
    rec.cost = compute_cost_to_go_with_comm(traj, z, rec.omega, cfg.alpha, q_n, cfg.omega_max)
                   .front();

    for (const ControlInput& u : traj.inputs) {
        if (u.acceleration >= cfg.bounds.u_max - 1e-6 ||
            u.acceleration <= cfg.bounds.u_min + 1e-6) {
            ++rec.saturation_steps;
        }
    }
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        const int step = traj.origin_time + static_cast<int>(k);
        if (rec.omega.dropped(step)) ++rec.dropout_steps;
        if (cfg.zone_rule && cfg.zone_rule->zone.contains(traj.states[k].position) &&
            cfg.zone_rule->zone.contains(leader[k].position)) {
            ++rec.both_in_zone_steps;
        }
    }
    rec.trajectory = std::move(traj);
    return rec;
}

}  // namespace

std::optional<IterationRecord> run_iteration(int iteration, DynamicSafeSet& ds,
                                             const VehicleState& x0,
                                             const std::vector<VehicleState>& leader,
                                             const ChannelPredictor& predictor,
                                             const SrLmpcConfig& cfg,
                                             int effective_horizon) {
    const int N = cfg.horizon_n;
    const int nu = cfg.horizon_nu;
    const std::vector<SafeSetEntry> candidates = ds.candidates(effective_horizon);
    if (candidates.empty()) return std::nullopt;

    std::vector<ForbiddenInterval> forbidden;
    if (cfg.zone_rule) {
        forbidden = update_dead_zone(leader, cfg.zone_rule->zone, 0, N);
    }

    std::vector<VehicleState> states{x0};
    std::vector<ControlInput> inputs;
    std::vector<TauDiagnostics> diags;
    std::optional<SubproblemResult> last;
    VehicleState x = x0;
    for (int tau = 0; tau <= N - nu; ++tau) {
        auto res = solve_subproblem(x, tau, leader, candidates, forbidden, cfg);
        if (!res) return std::nullopt;
        inputs.push_back(res->inputs[0]);
        x = res->states[1];
        states.push_back(x);
        diags.push_back({tau, res->selected_iteration, res->selected_eta, res->objective,
                         res->feasible_candidates, res->infeasible_candidates});
        last = std::move(res);
    }
    // The executed prefix covers tau = 0..N-nu; the final window's remaining
    // plan completes the trajectory out to step N, ending on the selected
    // stored state.
    for (int j = 1; j < nu; ++j) {
        inputs.push_back(last->inputs[j]);
        states.push_back(last->states[j + 1]);
    }

    Trajectory traj;
    traj.origin_time = 0;
    traj.iteration = iteration;
    traj.dt = cfg.dt;
    traj.states = std::move(states);
    traj.inputs = std::move(inputs);

    const FeasibilityReport report =
        validate_trajectory(traj, leader, cfg.bounds, cfg.ttc_min, cfg.zone_rule);
    if (!report.ok()) return std::nullopt;
    ds.insert(traj, report, leader, cfg.zone_rule);

    IterationRecord rec = make_record(iteration, std::move(traj), leader, predictor, cfg);
    rec.subproblems = std::move(diags);
    ds.assign_cost_to_go(iteration, [&] {
        const std::vector<double> z =
            stage_costs(rec.trajectory, leader, cfg.weights, cfg.gap_ref);
        const double q_n = terminal_gap_cost(rec.trajectory.states.back(),
                                             leader[rec.trajectory.horizon()], cfg.weights,
                                             cfg.gap_ref);
        return compute_cost_to_go_with_comm(rec.trajectory, z, rec.omega, cfg.alpha, q_n,
                                            cfg.omega_max);
    }(), rec.omega);
    return rec;
}

SrLmpcResult run(const VehicleState& x0, const std::vector<VehicleState>& leader,
                 const ChannelPredictor& predictor, const SrLmpcConfig& cfg) {
    cfg.validate();
    const int N = cfg.horizon_n;
    if (static_cast<int>(leader.size()) < N + 1) {
        throw ValidationError("run: leader prediction shorter than the outer horizon");
    }
    const std::vector<VehicleState> lead(leader.begin(), leader.begin() + N + 1);

    NominalParams params;
    params.horizon = N;
    params.dt = cfg.dt;
    params.gap_ref = cfg.gap_ref;
    params.ttc_min = cfg.ttc_min;
    params.bounds = cfg.bounds;
    params.v_max = cfg.v_max;
    auto nominal = solve_nominal(x0, lead, cfg.weights, params);
    if (!nominal) {
        throw FeasibilityError("run: nominal problem infeasible at the start state");
    }

    SrLmpcResult result;
    Trajectory seed_traj = nominal->trajectory;
    seed_traj.iteration = 0;
    const FeasibilityReport seed_report =
        validate_trajectory(seed_traj, lead, cfg.bounds, cfg.ttc_min, std::nullopt);
    result.safe_set.insert(seed_traj, seed_report, lead, std::nullopt);
    result.seed = make_record(0, std::move(seed_traj), lead, predictor, cfg);
    result.safe_set.assign_cost_to_go(0, [&] {
        const std::vector<double> z =
            stage_costs(result.seed.trajectory, lead, cfg.weights, cfg.gap_ref);
        const double q_n = terminal_gap_cost(result.seed.trajectory.states.back(), lead[N],
                                             cfg.weights, cfg.gap_ref);
        return compute_cost_to_go_with_comm(result.seed.trajectory, z, result.seed.omega,
                                            cfg.alpha, q_n, cfg.omega_max);
    }(), result.seed.omega);

    std::vector<double> history{result.seed.cost};
    for (int L = 1; L <= cfg.max_iterations; ++L) {
        auto rec = run_iteration(L, result.safe_set, x0, lead, predictor, cfg, N);
        if (!rec) break;
        history.push_back(rec->cost);
        result.iterations.push_back(std::move(*rec));
        if (check_convergence(history, cfg.conv_tol, cfg.max_iterations)) {
            result.converged = true;
            break;
        }
    }
    result.first_input = result.final_record().trajectory.inputs.front().acceleration;
    return result;
}

}  // namespace srlmpc
