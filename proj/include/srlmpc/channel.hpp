/**
 * @file channel.hpp
 * @brief V2V packet delivery model: per-step delivery times from a pluggable
 *        predictor, stale-state pruning, the effective horizon, discounted
 *        communication cost and reception simulation.
 */

#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "srlmpc/vehicle.hpp"

namespace srlmpc {

/// Sentinel delivery time for a packet that never arrives. Cost computations
/// substitute a finite penalty (omega_max); reception simulation treats the
/// packet as lost.
inline constexpr double kDroppedOmega = std::numeric_limits<double>::infinity();

/// Per-step packet delivery times [s] over a contiguous step range.
/// Finite values are at least one sample period; kDroppedOmega marks a drop.
struct DeliveryProfile {
    int first_step = 0;
    std::vector<double> values;

    int last_step() const { return first_step + static_cast<int>(values.size()) - 1; }
    bool covers(int step) const { return step >= first_step && step <= last_step(); }
    double at(int step) const;
    bool dropped(int step) const { return at(step) == kDroppedOmega; }
};

/// A leader trajectory prediction stamped with its send time. states[j] is
/// the predicted leader state at step send_time + j.
struct LeaderPacket {
    int send_time = 0;
    std::vector<VehicleState> states;

    int horizon() const { return static_cast<int>(states.size()) - 1; }
};

/// Maps aligned ego/leader state sequences to a delivery profile starting at
/// first_step. Implementations are deterministic for fixed inputs.
using ChannelPredictor = std::function<DeliveryProfile(
    const std::vector<VehicleState>& ego, const std::vector<VehicleState>& leader,
    int first_step)>;

/// Delivery time is base_omega except at steps where both vehicles are
/// inside the zone, which drop.
ChannelPredictor dead_zone_predictor(const DeadZone& zone, double base_omega);

/// Constant delivery time everywhere.
ChannelPredictor constant_predictor(double base_omega);

/// File-backed oracle: whitespace-separated rows
///   ego_lo ego_hi lead_lo lead_hi omega
/// ('#' comments allowed, omega may be "dropped"). The first row whose
/// position buckets contain (ego, lead) wins; default_omega elsewhere.
/// Lets an externally trained predictor drop in without code changes.
ChannelPredictor table_predictor(const std::string& path, double default_omega);

/// Removes the states the leader has already executed. Returns the states
/// for steps now..send_time+horizon. Throws when now precedes the send time
/// or the packet is fully stale (now > send_time + horizon).
std::vector<VehicleState> prune_stale(const LeaderPacket& packet, int now);

/// Usable prediction length after staleness: N - (now - send_time).
/// Requires send_time <= now <= send_time + N.
int effective_horizon(int now, int send_time, int N);

/// Discounted delivery-time sum with the largest weight on the final step:
///   sum_k alpha^(last-k) * omega(k),  0 < alpha < 1.
/// Dropped entries cost omega_max.
double discounted_comm_cost(const DeliveryProfile& profile, double alpha, double omega_max);

/// Number of whole sample periods a delivery time spans: delay j satisfies
/// j*dt <= omega < (j+1)*dt. Dropped deliveries never arrive.
int delivery_delay_steps(double omega, double dt);

/// Picks the newest packet already delivered at `now`, given the realized
/// delivery time of each send (one entry per packet, aligned). Packets must
/// be sorted by send time. Returns nullopt when nothing has arrived yet.
std::optional<LeaderPacket> simulate_reception(const std::vector<LeaderPacket>& packets,
                                               const std::vector<double>& realized_omega,
                                               int now, double dt);

}  // namespace srlmpc
