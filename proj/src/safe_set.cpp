#include "srlmpc/safe_set.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace srlmpc {

int DynamicSafeSet::insert(const Trajectory& traj, const FeasibilityReport& report,
                           std::vector<VehicleState> leader,
                           std::optional<ZoneRule> zone_rule) {
    if (!report.ok()) {
        throw ValidationError("safe set: trajectory rejected by the feasibility audit: " +
                              report.detail);
    }
    const int iteration = static_cast<int>(entries_.size());
    std::vector<SafeSetEntry> entries;
    entries.reserve(traj.states.size());
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        SafeSetEntry e;
        e.iteration = iteration;
        e.eta = static_cast<int>(k);
        e.state = traj.states[k];
        e.input = k < traj.inputs.size() ? traj.inputs[k].acceleration
                                         : std::numeric_limits<double>::quiet_NaN();
        entries.push_back(e);
    }
    entries_.push_back(std::move(entries));
    StoredTrajectory st;
    st.trajectory = traj;
    st.leader = std::move(leader);
    st.zone_rule = std::move(zone_rule);
    stored_.push_back(std::move(st));
    return iteration;
}

void DynamicSafeSet::assign_cost_to_go(int iteration, const std::vector<double>& q,
                                       DeliveryProfile omega) {
    if (iteration < 0 || iteration >= iterations()) {
        throw ValidationError("safe set: unknown iteration");
    }
    auto& entries = entries_[iteration];
    if (q.size() != entries.size()) {
        throw ValidationError("safe set: one cost-to-go per stored state required");
    }
    for (std::size_t k = 0; k < entries.size(); ++k) {
        entries[k].cost_to_go = q[k];
    }
    stored_[iteration].omega = std::move(omega);
    stored_[iteration].has_cost_to_go = true;
}

std::vector<SafeSetEntry> DynamicSafeSet::candidates(int effective_horizon) const {
    std::vector<SafeSetEntry> out;
    for (int l = 0; l < iterations(); ++l) {
        if (!stored_[l].has_cost_to_go) {
            throw ValidationError("safe set: cost-to-go not assigned for iteration " +
                                  std::to_string(l));
        }
        for (const SafeSetEntry& e : entries_[l]) {
            if (e.eta <= effective_horizon) out.push_back(e);
        }
    }
    return out;
}

std::size_t DynamicSafeSet::size() const {
    std::size_t total = 0;
    for (const auto& v : entries_) total += v.size();
    return total;
}

const StoredTrajectory& DynamicSafeSet::stored(int iteration) const {
    if (iteration < 0 || iteration >= iterations()) {
        throw ValidationError("safe set: unknown iteration");
    }
    return stored_[iteration];
}

const std::vector<SafeSetEntry>& DynamicSafeSet::entries(int iteration) const {
    if (iteration < 0 || iteration >= iterations()) {
        throw ValidationError("safe set: unknown iteration");
    }
    return entries_[iteration];
}

void DynamicSafeSet::prune(std::size_t max_entries) {
    if (entries_.empty() || size() <= max_entries) return;
    if (max_entries < entries_.back().size()) {
        throw ValidationError("safe set: prune cap smaller than one trajectory");
    }
    // Lowest cost-to-go per eta among the older iterations; the most recent
    // iteration is kept whole.
    std::map<int, SafeSetEntry> best;
    const int last = iterations() - 1;
    for (int l = 0; l < last; ++l) {
        for (const SafeSetEntry& e : entries_[l]) {
            auto [it, inserted] = best.try_emplace(e.eta, e);
            if (!inserted && e.cost_to_go < it->second.cost_to_go) it->second = e;
        }
    }
    for (int l = 0; l < last; ++l) {
        std::vector<SafeSetEntry> kept;
        for (const SafeSetEntry& e : entries_[l]) {
            const auto it = best.find(e.eta);
            if (it != best.end() && it->second.iteration == l &&
                it->second.eta == e.eta) {
                kept.push_back(e);
            }
        }
        entries_[l] = std::move(kept);
    }
}

void DynamicSafeSet::save(std::ostream& out) const {
    out << "# dynamic-safe-set v1: iteration eta position velocity cost_to_go\n";
    char buf[160];
    for (const auto& iteration : entries_) {
        for (const SafeSetEntry& e : iteration) {
            std::snprintf(buf, sizeof buf, "%d %d %.17g %.17g %.17g\n", e.iteration, e.eta,
                          e.state.position, e.state.velocity, e.cost_to_go);
            out << buf;
        }
    }
}

DynamicSafeSet DynamicSafeSet::load(std::istream& in) {
    DynamicSafeSet ds;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        SafeSetEntry e;
        if (!(ss >> e.iteration)) continue;
        if (!(ss >> e.eta >> e.state.position >> e.state.velocity >> e.cost_to_go)) {
            throw ValidationError("safe set: malformed line " + std::to_string(lineno));
        }
        while (ds.iterations() <= e.iteration) {
            ds.entries_.emplace_back();
            StoredTrajectory st;
            st.has_cost_to_go = true;  // values arrive with the entries
            ds.stored_.push_back(std::move(st));
        }
        ds.entries_[e.iteration].push_back(e);
    }
    return ds;
}

std::vector<double> stage_costs(const Trajectory& traj, const std::vector<VehicleState>& leader,
                                const MpcWeights& weights, double gap_ref) {
    if (leader.size() < traj.states.size()) {
        throw ValidationError("stage_costs: leader sequence shorter than trajectory");
    }
    std::vector<double> z(traj.inputs.size());
    for (std::size_t k = 0; k < traj.inputs.size(); ++k) {
        const double dev = leader[k + 1].position - traj.states[k + 1].position - gap_ref;
        const double u = traj.inputs[k].acceleration;
        z[k] = weights.gap_tracking * dev * dev + weights.effort * u * u;
    }
    return z;
}

double terminal_gap_cost(const VehicleState& state, const VehicleState& leader,
                         const MpcWeights& weights, double gap_ref) {
    return weights.terminal * std::abs(leader.position - state.position - gap_ref);
}

std::vector<double> compute_cost_to_go(const Trajectory& traj,
                                       const std::vector<double>& stage_costs,
                                       double terminal_q) {
    if (stage_costs.size() != traj.inputs.size()) {
        throw ValidationError("cost-to-go: one stage cost per input required");
    }
    if (terminal_q < 0.0) throw ValidationError("cost-to-go: negative terminal cost");
    for (double z : stage_costs) {
        if (z < 0.0) throw ValidationError("cost-to-go: negative stage cost");
    }
    std::vector<double> q(traj.states.size());
    q.back() = terminal_q;
    for (auto k = static_cast<int>(stage_costs.size()) - 1; k >= 0; --k) {
        q[k] = stage_costs[k] + q[k + 1];
    }
    return q;
}

std::vector<double> compute_cost_to_go_with_comm(const Trajectory& traj,
                                                 const std::vector<double>& stage_costs,
                                                 const DeliveryProfile& omega, double alpha,
                                                 double terminal_q, double omega_max) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ValidationError("cost-to-go: discount alpha must lie in (0, 1)");
    }
    const int N = traj.horizon();
    if (!omega.covers(traj.origin_time) || !omega.covers(traj.origin_time + N)) {
        throw ValidationError("cost-to-go: delivery profile does not cover the trajectory");
    }
    const std::vector<double> plain = compute_cost_to_go(traj, stage_costs, terminal_q);
    std::vector<double> q(plain.size());
    double discounted = 0.0;  // sum_{j>=k} alpha^(j-k) omega(j), built backward
    for (int k = N; k >= 0; --k) {
        const double w = std::min(omega.at(traj.origin_time + k), omega_max);
        discounted = w + alpha * discounted;
        q[k] = plain[k] + discounted;
    }
    return q;
}

}  // namespace srlmpc
