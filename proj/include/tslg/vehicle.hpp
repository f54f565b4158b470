#ifndef TSLG_VEHICLE_HPP
#define TSLG_VEHICLE_HPP

#include <optional>
#include <span>
#include <vector>

#include "tslg/core.hpp"

namespace tslg {

struct VehicleState {
  double position = 0.0;
  double velocity = 0.0;
  double acceleration = 0.0;  // applied over the step starting here
};

struct TrajectoryPoint {
  VehicleState ego;
  VehicleState lead;
};

struct Trajectory {
  double dt = 0.1;
  std::vector<TrajectoryPoint> points;
  bool accident = false;
  bool truncated = false;  // horizon exhausted before a terminal event

  double range(size_t i) const { return points[i].lead.position - points[i].ego.position; }
  double range_rate(size_t i) const { return points[i].lead.velocity - points[i].ego.velocity; }
  double rel_accel(size_t i) const {
    return points[i].lead.acceleration - points[i].ego.acceleration;
  }
};

enum class FollowerModel { kIdmSurrogate, kAccAeb };

FollowerModel follower_from_string(const std::string& s);
std::string to_string(FollowerModel m);

// IDM acceleration before clamping to [a_min, a_max]. Returns nullopt when
// the bumper gap range - length is not positive; the caller records a
// collision state.
std::optional<double> idm_accel(double v_ego, double range, double range_rate,
                                const IdmParams& p);

// Enhanced time to collision for the current range/range-rate/relative
// acceleration; nullopt when no positive collision time exists. Relative
// accelerations below 1e-6 in magnitude fall back to constant-speed TTC.
std::optional<double> ettc(double range, double range_rate, double rel_accel);

// ACC layer (IDM with its own headway) overridden by full braking when the
// ETTC drops below the trigger. rel_accel is the last applied relative
// acceleration, used to evaluate the trigger. Inside episode simulations the
// emergency braking latches until the gap stops closing.
std::optional<double> acc_aeb_accel(double v_ego, double range, double range_rate,
                                    double rel_accel, const AccAebParams& p);

// Minimal normalized positive ETTC over an episode, clamped to [0, 1].
// Steps without a positive ETTC count as safe (value 1).
double mnp_ettc(const Trajectory& traj, double u_i);

// Lane-change utility: direct gain plus politeness-weighted effect on the
// new and old followers.
double mobil_utility(double u_after, double u_before, double u_new_after, double u_new_before,
                     double u_old_after, double u_old_before, double politeness);

// Cut-in episode: lead appears at the given gap and holds constant speed,
// the follower reacts until accident or the configured horizon.
Trajectory simulate_cutin(double range0, double range_rate0, FollowerModel follower,
                          const CaseConfig& config);

// One 1 s decision epoch of the car-following case: the lead applies a
// constant acceleration (speed clamped to the state grid band) while the
// follower reacts at dt_sim. Returns the continuous end state.
struct EpochResult {
  double v_bv = 0.0;
  double range = 0.0;
  double range_rate = 0.0;
  bool collided = false;
};
EpochResult step_epoch(double v_bv, double range, double range_rate, double u_lead,
                       FollowerModel follower, const CaseConfig& config);

// Full car-following episode driven by an explicit action sequence.
Trajectory simulate_car_following(double v_bv0, double range0, double range_rate0,
                                  std::span<const double> lead_actions, FollowerModel follower,
                                  const CaseConfig& config);

}  // namespace tslg

#endif  // TSLG_VEHICLE_HPP
