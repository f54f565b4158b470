#include "tslg/vehicle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tslg {

FollowerModel follower_from_string(const std::string& s) {
  if (s == "idm" || s == "idm_surrogate") return FollowerModel::kIdmSurrogate;
  if (s == "acc_aeb") return FollowerModel::kAccAeb;
  throw std::invalid_argument("unknown follower model: " + s);
}

std::string to_string(FollowerModel m) {
  return m == FollowerModel::kIdmSurrogate ? "idm" : "acc_aeb";
}

std::optional<double> idm_accel(double v_ego, double range, double range_rate,
                                const IdmParams& p) {
  const double gap = range - p.length;
  if (gap <= 0.0) return std::nullopt;
  const double desired =
      p.s0 + v_ego * p.t_headway + v_ego * range_rate / (2.0 * std::sqrt(p.alpha * p.b));
  const double u =
      p.alpha * (1.0 - std::pow(v_ego / p.beta, p.c) - (desired / gap) * (desired / gap));
  return std::clamp(u, p.a_min, p.a_max);
}

std::optional<double> ettc(double range, double range_rate, double rel_accel) {
  if (range <= 0.0) throw std::domain_error("ettc requires positive range");
  if (std::abs(rel_accel) < 1e-6) {
    if (range_rate < 0.0) return -range / range_rate;
    return std::nullopt;
  }
  const double disc = range_rate * range_rate - 2.0 * rel_accel * range;
  if (disc < 0.0) return std::nullopt;
  const double t = (-range_rate - std::sqrt(disc)) / rel_accel;
  if (t <= 0.0) return std::nullopt;
  return t;
}

std::optional<double> acc_aeb_accel(double v_ego, double range, double range_rate,
                                    double rel_accel, const AccAebParams& p) {
  if (range - p.acc.length <= 0.0) return std::nullopt;
  const auto t = ettc(range, range_rate, rel_accel);
  if (t && *t < p.aeb_trigger_s) return p.acc.a_min;
  return idm_accel(v_ego, range, range_rate, p.acc);
}

double mnp_ettc(const Trajectory& traj, double u_i) {
  if (traj.points.empty()) throw std::invalid_argument("empty trajectory");
  double best = 1.0;
  for (size_t i = 0; i < traj.points.size(); ++i) {
    const double r = traj.range(i);
    if (r <= 0.0) {
      best = 0.0;
      break;
    }
    const auto t = ettc(r, traj.range_rate(i), traj.rel_accel(i));
    const double np = t ? *t / u_i : 1.0;
    best = std::min(best, np);
  }
  return std::clamp(best, 0.0, 1.0);
}

double mobil_utility(double u_after, double u_before, double u_new_after, double u_new_before,
                     double u_old_after, double u_old_before, double politeness) {
  return u_after - u_before +
         politeness * (u_new_after - u_new_before + u_old_after - u_old_before);
}

namespace {

const IdmParams& follower_params(FollowerModel m, const CaseConfig& config) {
  return m == FollowerModel::kIdmSurrogate ? config.idm : config.cav.acc;
}

struct FollowerState {
  double prev_accel = 0.0;
  bool aeb_latched = false;
};

// Gaps at or below the model's length floor saturate to maximal braking; the
// accident itself is decided by d_acci in the simulation loops.
double follower_accel(FollowerModel m, double v_ego, double range, double range_rate,
                      double lead_accel, FollowerState& state, const CaseConfig& config) {
  if (m == FollowerModel::kIdmSurrogate) {
    return idm_accel(v_ego, range, range_rate, config.idm).value_or(config.idm.a_min);
  }
  const AccAebParams& p = config.cav;
  if (range - p.acc.length <= 0.0) {
    state.aeb_latched = true;
    return p.acc.a_min;
  }
  const auto t = ettc(range, range_rate, lead_accel - state.prev_accel);
  const bool trigger = t && *t < p.aeb_trigger_s;
  state.aeb_latched = trigger || (state.aeb_latched && range_rate < 0.0);
  if (state.aeb_latched) return p.acc.a_min;
  return idm_accel(v_ego, range, range_rate, p.acc).value_or(p.acc.a_min);
}

}  // namespace

Trajectory simulate_cutin(double range0, double range_rate0, FollowerModel follower,
                          const CaseConfig& config) {
  const IdmParams& p = follower_params(follower, config);
  const double dt = config.cutin.dt_sim;
  const int steps = static_cast<int>(std::llround(config.cutin.episode_s / dt));

  Trajectory traj;
  traj.dt = dt;
  double p_ego = 0.0, v_ego = config.cutin.ego_v0;
  double p_lead = range0;
  const double v_lead = v_ego + range_rate0;
  FollowerState state;

  for (int k = 0; k <= steps; ++k) {
    const double range = p_lead - p_ego;
    const double range_rate = v_lead - v_ego;
    TrajectoryPoint pt;
    pt.ego = {p_ego, v_ego, 0.0};
    pt.lead = {p_lead, v_lead, 0.0};
    if (range < p.d_acci) {
      traj.points.push_back(pt);
      traj.accident = true;
      return traj;
    }
    const double u = follower_accel(follower, v_ego, range, range_rate, 0.0, state, config);
    pt.ego.acceleration = u;
    traj.points.push_back(pt);
    if (k == steps) break;
    p_ego += v_ego * dt;
    p_lead += v_lead * dt;
    v_ego = std::clamp(v_ego + u * dt, p.v_min, p.v_max);
    state.prev_accel = u;
  }
  return traj;
}

EpochResult step_epoch(double v_bv, double range, double range_rate, double u_lead,
                       FollowerModel follower, const CaseConfig& config) {
  const IdmParams& p = follower_params(follower, config);
  const double dt = config.cf.dt_sim;
  const int steps = static_cast<int>(std::llround(config.cf.epoch_s / dt));
  double v_ego = v_bv - range_rate;
  double gap = range;
  FollowerState state;
  for (int k = 0; k < steps; ++k) {
    if (gap < p.d_acci) return {v_bv, gap, v_bv - v_ego, true};
    const double u = follower_accel(follower, v_ego, gap, v_bv - v_ego, u_lead, state, config);
    gap += (v_bv - v_ego) * dt;
    v_bv = std::clamp(v_bv + u_lead * dt, config.cf.v_lo, config.cf.v_hi);
    v_ego = std::clamp(v_ego + u * dt, p.v_min, p.v_max);
    state.prev_accel = u;
  }
  if (gap < p.d_acci) return {v_bv, gap, v_bv - v_ego, true};
  return {v_bv, gap, v_bv - v_ego, false};
}

Trajectory simulate_car_following(double v_bv0, double range0, double range_rate0,
                                  std::span<const double> lead_actions, FollowerModel follower,
                                  const CaseConfig& config) {
  const IdmParams& p = follower_params(follower, config);
  const double dt = config.cf.dt_sim;
  const int inner = static_cast<int>(std::llround(config.cf.epoch_s / dt));

  Trajectory traj;
  traj.dt = dt;
  double v_bv = v_bv0;
  double v_ego = v_bv0 - range_rate0;
  double p_ego = 0.0, p_lead = range0;
  FollowerState state;

  for (size_t epoch = 0; epoch < lead_actions.size(); ++epoch) {
    const double u_lead = lead_actions[epoch];
    for (int k = 0; k < inner; ++k) {
      const double range = p_lead - p_ego;
      TrajectoryPoint pt;
      pt.ego = {p_ego, v_ego, 0.0};
      pt.lead = {p_lead, v_bv, u_lead};
      if (range < p.d_acci) {
        traj.points.push_back(pt);
        traj.accident = true;
        return traj;
      }
      const double u = follower_accel(follower, v_ego, range, v_bv - v_ego, u_lead, state, config);
      pt.ego.acceleration = u;
      traj.points.push_back(pt);
      p_ego += v_ego * dt;
      p_lead += v_bv * dt;
      v_bv = std::clamp(v_bv + u_lead * dt, config.cf.v_lo, config.cf.v_hi);
      v_ego = std::clamp(v_ego + u * dt, p.v_min, p.v_max);
      state.prev_accel = u;
    }
  }
  TrajectoryPoint pt;
  pt.ego = {p_ego, v_ego, 0.0};
  pt.lead = {p_lead, v_bv, 0.0};
  traj.points.push_back(pt);
  if (p_lead - p_ego < p.d_acci) traj.accident = true;
  traj.truncated = !traj.accident;
  return traj;
}

}  // namespace tslg
