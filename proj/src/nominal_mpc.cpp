#include "srlmpc/nominal_mpc.hpp"

#include <algorithm>
#include <cmath>

namespace srlmpc {

void MpcWeights::validate() const {
    if (gap_tracking < 0.0 || ref_tracking < 0.0 || effort < 0.0 || terminal < 0.0) {
        throw ValidationError("weights must be nonnegative");
    }
    if (gap_tracking + ref_tracking + effort <= 0.0) {
        throw ValidationError("at least one running weight must be positive");
    }
}

InputToStateMap InputToStateMap::build(const VehicleState& x0, int horizon, double dt) {
    if (horizon < 1) throw ValidationError("horizon must be at least 1");
    if (!(dt > 0.0)) throw ValidationError("dt must be positive");
    InputToStateMap m;
    m.pos.setZero(horizon + 1, horizon);
    m.vel.setZero(horizon + 1, horizon);
    m.pos0.resize(horizon + 1);
    m.vel0.resize(horizon + 1);
    for (int k = 0; k <= horizon; ++k) {
        m.pos0[k] = x0.position + k * dt * x0.velocity;
        m.vel0[k] = x0.velocity;
        for (int j = 0; j < k; ++j) {
            m.vel(k, j) = dt;
            m.pos(k, j) = dt * dt * (k - j - 0.5);
        }
    }
    return m;
}

QpProblem build_nominal_problem(const VehicleState& x0,
                                const std::vector<VehicleState>& leader,
                                const MpcWeights& weights, const NominalParams& params,
                                const InputToStateMap& map) {
    weights.validate();
    const int N = params.horizon;
    if (static_cast<int>(leader.size()) < N + 1) {
        throw ValidationError("leader prediction shorter than the horizon");
    }
    if (x0.position > leader[0].position) {
        throw ValidationError("follower starts ahead of the leader");
    }

    const bool use_terminal = weights.terminal > 0.0;
    const int n = N + (use_terminal ? 1 : 0);
    const double track_w = weights.gap_tracking + weights.ref_tracking;

    QpProblem qp;
    qp.H.setZero(n, n);
    qp.g.setZero(n);

    // Running cost. gapdev(k) = a_k - pos.row(k) u with
    // a_k = leader_pos(k) - gap_ref - pos0(k).
    for (int k = 1; k <= N; ++k) {
        const double a = leader[k].position - params.gap_ref - map.pos0[k];
        qp.H.topLeftCorner(N, N) +=
            2.0 * track_w * map.pos.row(k).transpose() * map.pos.row(k);
        qp.g.head(N) += -2.0 * track_w * a * map.pos.row(k).transpose();
    }
    qp.H.diagonal().head(N).array() += 2.0 * weights.effort;

    const bool bound_v = params.v_max < std::numeric_limits<double>::infinity();
    const int rows = N /*ttc*/ + N /*v>=0*/ + (bound_v ? N : 0) + (use_terminal ? 2 : 0);
    qp.A_in.setZero(rows, n);
    qp.b_in.setZero(rows);
    int r = 0;
    for (int k = 1; k <= N; ++k, ++r) {
        // gap(k) >= ttc_min * (v_ego(k) - v_lead(k))
        qp.A_in.row(r).head(N) = map.pos.row(k) + params.ttc_min * map.vel.row(k);
        qp.b_in[r] = leader[k].position - map.pos0[k] -
                     params.ttc_min * (map.vel0[k] - leader[k].velocity);
    }
    for (int k = 1; k <= N; ++k, ++r) {
        qp.A_in.row(r).head(N) = -map.vel.row(k);
        qp.b_in[r] = map.vel0[k];
    }
    if (bound_v) {
        for (int k = 1; k <= N; ++k, ++r) {
            qp.A_in.row(r).head(N) = map.vel.row(k);
            qp.b_in[r] = params.v_max - map.vel0[k];
        }
    }
    if (use_terminal) {
        // Epigraph for terminal * |gapdev(N)|: e >= +-gapdev(N).
        const double a = leader[N].position - params.gap_ref - map.pos0[N];
        qp.A_in.row(r).head(N) = -map.pos.row(N);
        qp.A_in(r, N) = -1.0;
        qp.b_in[r] = -a;
        ++r;
        qp.A_in.row(r).head(N) = map.pos.row(N);
        qp.A_in(r, N) = -1.0;
        qp.b_in[r] = a;
        ++r;
        qp.g[N] = weights.terminal;
    }

    qp.A_eq.resize(0, n);
    qp.b_eq.resize(0);
    qp.lb = Eigen::VectorXd::Constant(n, params.bounds.u_min);
    qp.ub = Eigen::VectorXd::Constant(n, params.bounds.u_max);
    if (use_terminal) {
        qp.lb[N] = 0.0;
        qp.ub[N] = std::numeric_limits<double>::infinity();
    }
    return qp;
}

double nominal_objective(const Trajectory& traj, const std::vector<VehicleState>& leader,
                         const MpcWeights& weights, double gap_ref) {
    const int N = traj.horizon();
    const double track_w = weights.gap_tracking + weights.ref_tracking;
    double cost = 0.0;
    for (int k = 1; k <= N; ++k) {
        const double dev = leader[k].position - traj.states[k].position - gap_ref;
        cost += track_w * dev * dev;
    }
    for (int k = 0; k < N; ++k) {
        const double u = traj.inputs[k].acceleration;
        cost += weights.effort * u * u;
    }
    const double dev_n = leader[N].position - traj.states[N].position - gap_ref;
    cost += weights.terminal * std::abs(dev_n);
    return cost;
}

std::optional<NominalPlan> solve_nominal(const VehicleState& x0,
                                         const std::vector<VehicleState>& leader,
                                         const MpcWeights& weights,
                                         const NominalParams& params) {
    const InputToStateMap map = InputToStateMap::build(x0, params.horizon, params.dt);
    const QpProblem qp = build_nominal_problem(x0, leader, weights, params, map);
    const QpSolution sol = solve(qp);
    if (sol.status != QpStatus::optimal) {
        return std::nullopt;
    }

    std::vector<ControlInput> inputs(params.horizon);
    for (int k = 0; k < params.horizon; ++k) {
        inputs[k].acceleration =
            std::min(std::max(sol.z[k], params.bounds.u_min), params.bounds.u_max);
    }
    NominalPlan plan;
    plan.trajectory = simulate(x0, inputs, params.dt);
    plan.objective = nominal_objective(plan.trajectory, leader, weights, params.gap_ref);
    plan.qp = sol;
    return plan;
}

}  // namespace srlmpc
