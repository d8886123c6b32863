#include "srlmpc/channel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace srlmpc {

double DeliveryProfile::at(int step) const {
    if (!covers(step)) {
        throw ValidationError("delivery profile does not cover step " + std::to_string(step));
    }
    return values[static_cast<std::size_t>(step - first_step)];
}

namespace {

DeliveryProfile profile_from(const std::vector<VehicleState>& ego,
                             const std::vector<VehicleState>& leader, int first_step,
                             const std::function<double(const VehicleState&, const VehicleState&)>& f) {
    if (ego.size() != leader.size()) {
        throw ValidationError("predictor: ego and leader sequences differ in length");
    }
    DeliveryProfile p;
    p.first_step = first_step;
    p.values.reserve(ego.size());
    for (std::size_t k = 0; k < ego.size(); ++k) {
        p.values.push_back(f(ego[k], leader[k]));
    }
    return p;
}

}  // namespace

ChannelPredictor dead_zone_predictor(const DeadZone& zone, double base_omega) {
    if (!(zone.lo < zone.hi)) throw ValidationError("dead zone bounds out of order");
    if (!(base_omega > 0.0)) throw ValidationError("base delivery time must be positive");
    return [zone, base_omega](const std::vector<VehicleState>& ego,
                              const std::vector<VehicleState>& leader, int first_step) {
        return profile_from(ego, leader, first_step,
                            [&](const VehicleState& e, const VehicleState& l) {
                                return zone.contains(e.position) && zone.contains(l.position)
                                           ? kDroppedOmega
                                           : base_omega;
                            });
    };
}

ChannelPredictor constant_predictor(double base_omega) {
    if (!(base_omega > 0.0)) throw ValidationError("base delivery time must be positive");
    return [base_omega](const std::vector<VehicleState>& ego,
                        const std::vector<VehicleState>& leader, int first_step) {
        return profile_from(ego, leader, first_step,
                            [&](const VehicleState&, const VehicleState&) { return base_omega; });
    };
}

ChannelPredictor table_predictor(const std::string& path, double default_omega) {
    struct Row {
        double ego_lo, ego_hi, lead_lo, lead_hi, omega;
    };
    std::vector<Row> rows;
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open channel table: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        Row row{};
        std::string omega_tok;
        if (!(ss >> row.ego_lo)) continue;  // blank line
        if (!(ss >> row.ego_hi >> row.lead_lo >> row.lead_hi >> omega_tok)) {
            throw ValidationError("channel table: malformed line " + std::to_string(lineno));
        }
        row.omega = omega_tok == "dropped" ? kDroppedOmega : std::stod(omega_tok);
        rows.push_back(row);
    }
    return [rows, default_omega](const std::vector<VehicleState>& ego,
                                 const std::vector<VehicleState>& leader, int first_step) {
        return profile_from(ego, leader, first_step,
                            [&](const VehicleState& e, const VehicleState& l) {
                                for (const auto& r : rows) {
                                    if (e.position >= r.ego_lo && e.position < r.ego_hi &&
                                        l.position >= r.lead_lo && l.position < r.lead_hi) {
                                        return r.omega;
                                    }
                                }
                                return default_omega;
                            });
    };
}

std::vector<VehicleState> prune_stale(const LeaderPacket& packet, int now) {
    if (now < packet.send_time) {
        throw ValidationError("prune_stale: packet sent in the future");
    }
    if (now > packet.send_time + packet.horizon()) {
        throw ValidationError("prune_stale: packet fully stale, no usable prediction");
    }
    const auto offset = static_cast<std::size_t>(now - packet.send_time);
    return {packet.states.begin() + offset, packet.states.end()};
}

int effective_horizon(int now, int send_time, int N) {
    if (now < send_time || now > send_time + N) {
        throw ValidationError("effective_horizon: now outside [send_time, send_time + N]");
    }
    return N - (now - send_time);
}

double discounted_comm_cost(const DeliveryProfile& profile, double alpha, double omega_max) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ValidationError("discount alpha must lie in (0, 1)");
    }
    double cost = 0.0;
    double weight = 1.0;  // weight 1 on the final step, alpha^(last-k) before it
    for (auto it = profile.values.rbegin(); it != profile.values.rend(); ++it) {
        cost += weight * std::min(*it, omega_max);
        weight *= alpha;
    }
    return cost;
}

int delivery_delay_steps(double omega, double dt) {
    if (omega == kDroppedOmega) return std::numeric_limits<int>::max();
    if (omega < dt) throw ValidationError("delivery time below one sample period");
    return static_cast<int>(std::floor(omega / dt));
}

std::optional<LeaderPacket> simulate_reception(const std::vector<LeaderPacket>& packets,
                                               const std::vector<double>& realized_omega,
                                               int now, double dt) {
    if (packets.size() != realized_omega.size()) {
        throw ValidationError("simulate_reception: one delivery time per packet required");
    }
    std::optional<LeaderPacket> best;
    int prev_send = std::numeric_limits<int>::min();
    for (std::size_t i = 0; i < packets.size(); ++i) {
        if (packets[i].send_time < prev_send) {
            throw ValidationError("simulate_reception: packets must be sorted by send time");
        }
        prev_send = packets[i].send_time;
        if (realized_omega[i] == kDroppedOmega) continue;
        const int delay = delivery_delay_steps(realized_omega[i], dt);
        if (packets[i].send_time + delay <= now) {
            best = packets[i];  // sorted, so the last hit is the newest
        }
    }
    return best;
}

}  // namespace srlmpc
