#ifndef TSLG_RL_HPP
#define TSLG_RL_HPP

#include <vector>

#include "tslg/core.hpp"
#include "tslg/vehicle.hpp"

namespace tslg {

enum class Zone : std::uint8_t { kCollision, kDangerous, kSafe };

// Partition of the car-following state grid: collision (range at or below
// d_acci), safe (the worst-case sustained braking of the lead cannot produce
// an accident), dangerous (the rest).
std::vector<Zone> classify_zones(const ScenarioSpace& space, const CaseConfig& config);

// Finite MDP over the dangerous states with deterministic transitions into
// either another dangerous state or an absorbing outcome. The car-following
// builder fills it from one-epoch surrogate simulations; tests build small
// instances directly.
struct MdpTable {
  enum class Outcome : std::int8_t { kNext, kCollision, kSafe };
  struct Edge {
    Outcome outcome = Outcome::kSafe;
    std::int32_t next = -1;  // slot index when outcome == kNext
  };

  int n_actions = 0;
  int horizon = 0;
  std::vector<std::int64_t> states;          // dangerous state cells, sorted
  std::vector<Edge> edges;                   // slot * n_actions + action
  std::vector<std::vector<double>> p_action; // P(u|s) per slot
  std::vector<double> p_state;               // P(s) per slot

  int slot_of(std::int64_t state) const;
  const Edge& edge(int slot, int action) const {
    return edges[static_cast<size_t>(slot) * static_cast<size_t>(n_actions) +
                 static_cast<size_t>(action)];
  }
};

MdpTable build_cf_mdp(const ScenarioSpace& space, const std::vector<Zone>& zones,
                      const ExposureModel& exposure, const CaseConfig& config);

// Q(s, u) rows over the dangerous slots; values live in [0, 1] and are
// exactly zero for transitions into the safe zone.
struct QTable {
  int n_actions = 0;
  std::vector<std::vector<double>> q;  // per slot

  double value(int slot, int action) const {
    return q[static_cast<size_t>(slot)][static_cast<size_t>(action)];
  }
  double sum_row(int slot) const;
};

struct TdResult {
  QTable q;
  std::int64_t steps = 0;
  double final_window_max_delta = 0.0;
  bool converged = false;
};

// Temporal-difference training: episodes start from uniformly sampled
// dangerous states and apply uniformly sampled actions; each visit updates
// Q(s,u) += alpha * ((sum_u' Q(s',u')) P(u|s) - Q(s,u)) with terminal
// backups 1 (collision) and 0 (safe or horizon exhausted). Stops when the
// largest |delta| over a window of updates falls below delta0. Throws after
// step_cap updates without convergence.
TdResult td_train(const MdpTable& mdp, double alpha_lr, double delta0, std::uint64_t seed,
                  std::int64_t step_cap, std::int64_t window);

// Independent fixed-point solver: sweeps slots in decreasing
// distance-to-terminal order and iterates until the residual is at floating
// point noise. Tolerates self-loops; throws if some state never drains to a
// terminal.
QTable backward_induction_q(const MdpTable& mdp);

// P(S|s1) = sum_u Q(s1, u) per slot.
std::vector<double> accident_prob_by_root(const MdpTable& mdp, const QTable& q);

// Posterior root distribution P(s1|S) over dangerous slots.
std::vector<double> posterior_initial(const MdpTable& mdp, const QTable& q);

// Posterior action distribution P(u|s,S) at one dangerous slot; throws when
// no action can reach the collision zone from there.
std::vector<double> posterior_action(const MdpTable& mdp, const QTable& q, int slot);

// Complete root-to-terminal branch: realized actions from a dangerous root.
struct Branch {
  int root_slot = 0;
  std::vector<int> actions;
};

// Scenario criticality V(x) = P(S) P(x|S) with P(x|S) decomposed into the
// posterior chain. Zero for branches that end in the safe zone or exhaust
// the horizon without a collision.
double branch_criticality(const MdpTable& mdp, const QTable& q, const Branch& branch,
                          double p_s);

// Plain Monte Carlo estimate of the accident probability P(S) of the
// surrogate under the naturalistic exposure.
double monte_carlo_ps(const ScenarioSpace& space, const std::vector<Zone>& zones,
                      const ExposureModel& exposure, const CaseConfig& config,
                      std::int64_t episodes, std::uint64_t seed);

// Tree-form library: converged Q-table plus the zone map it was trained on.
struct TreeLibrary {
  CaseId case_id = CaseId::kCarFollowing;
  int horizon = 0;
  MdpTable mdp;
  QTable q;

  json to_json() const;
  static TreeLibrary from_json(const json& j);
  void save(const std::string& path) const;
  static TreeLibrary load(const std::string& path);
};

// Convenience: nearest-cell state for continuous (v_bv, range, range_rate);
// nullopt when the range exceeds the grid (safe) in which case the caller
// treats the state as safe-terminal.
std::optional<std::int64_t> discretize_state(const ScenarioSpace& space, double v_bv,
                                             double range, double range_rate);

}  // namespace tslg

#endif  // TSLG_RL_HPP
