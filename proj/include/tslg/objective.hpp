#ifndef TSLG_OBJECTIVE_HPP
#define TSLG_OBJECTIVE_HPP

#include <array>
#include <functional>
#include <optional>

#include "tslg/core.hpp"
#include "tslg/ndd.hpp"
#include "tslg/vehicle.hpp"

namespace tslg {

// Normalized RMS distance from a point to an axis-aligned hyper-rectangle;
// the minimum over the set is attained at the per-dimension clamp.
double distance_to_common_set(std::span<const double> x, const CommonSet& omega,
                              std::span<const double> u_f, int m_d);

// Critical-scenario threshold m / N(X).
double gamma_threshold(int m, std::int64_t total_count);

// V(x) = P(S|x) P(x); deterministic surrogates give a 0/1 event indicator.
double criticality(int sm_event, double exposure_prob);

// Auxiliary objective for the cut-in case: mnpETTC of the surrogate episode
// plus weighted distance to the common set.
double cutin_objective(std::int64_t cell, const ScenarioSpace& space, const CommonSet& omega,
                       const CaseConfig& config);

// ---- highway exit -------------------------------------------------------

// Piecewise-linear background-vehicle track: constant speed until the
// follower closes within d_cf of its leader, then locked to the leader's
// speed.
struct BvTrack {
  double p0 = 0.0;
  double v0 = 0.0;
  double match_t = std::numeric_limits<double>::infinity();
  double match_p = 0.0;
  double match_v = 0.0;

  double pos(double t) const;
  double vel(double t) const;
};

std::array<BvTrack, 2> bv_tracks(const std::array<double, 4>& x, double d_cf);

// Lane-change candidate grid with per-cell feasibility. A cell is feasible
// when some point of its (t, p) box is reachable under the acceleration and
// speed envelope and keeps a time gap of at least t_min to both BV tracks.
struct FeasibleZone {
  int nt = 0;
  int np = 0;
  double dt = 0.1;
  double dp = 5.0;
  std::vector<std::uint8_t> flags;

  bool at(int j, int k) const { return flags[static_cast<size_t>(j * np + k)] != 0; }
  int count() const;
  double area() const { return count() * dt * dp; }
  int components() const;  // 4-connected feasible components
};

FeasibleZone feasible_zone(const std::array<double, 4>& x, const CaseConfig& config);

double highway_objective(const std::array<double, 4>& x, const FeasibleZone& zone,
                         const CommonSet& omega, std::span<const double> u_f,
                         const CaseConfig& config);

// Deterministic exit planner: enumerates constant-acceleration profiles and
// lane-change times, scores feasible candidates with the MOBIL utility and
// executes the best one.
struct ExitPlan {
  bool success = false;
  double t = 0.0;
  double p = 0.0;
  double accel = 0.0;
  double utility = 0.0;
};

struct ExitPlannerParams {
  std::vector<double> accels;
  double politeness = 0.1;
  double t_min_gap = 0.5;
};

ExitPlan exit_attempt(const std::array<double, 4>& x, const ExitPlannerParams& planner,
                      const CaseConfig& config);
ExitPlan sm_exit_attempt(const std::array<double, 4>& x, const CaseConfig& config);
ExitPlan cav_exit_attempt(const std::array<double, 4>& x, const CaseConfig& config);

// ---- library search -----------------------------------------------------

// Multi-start greedy descent on the auxiliary objective over the one-step
// grid neighborhood, then flood fill over axis neighbors gated on V > gamma.
// Ties in the descent break toward the lowest cell index. Deterministic for
// a fixed seed.
struct SearchDiagnostics {
  std::int64_t descent_steps = 0;
  std::int64_t evaluated = 0;
  bool empty_warning = false;
};

GridLibrary search_library(const ScenarioSpace& space,
                           const std::function<double(std::int64_t)>& objective,
                           const std::function<double(std::int64_t)>& criticality_fn,
                           int starts, double gamma, std::uint64_t seed, CaseId case_id,
                           SearchDiagnostics* diag = nullptr);

// Exhaustive {x : V(x) > gamma}; oracle counterpart of search_library.
std::vector<std::pair<std::int64_t, double>> exhaustive_critical_set(
    const ScenarioSpace& space, const std::function<double(std::int64_t)>& criticality_fn,
    double gamma);

// ---- case drivers -------------------------------------------------------

struct CutinContext {
  ScenarioSpace space;
  ExposureModel exposure;
  CommonSet omega;
  CaseConfig config;

  static CutinContext make(const ExposureModel& exposure, const CaseConfig& config);
  int sm_accident(std::int64_t cell) const;   // P(S|x) indicator
  int cav_accident(std::int64_t cell) const;  // P(A|x) indicator
  double objective(std::int64_t cell) const;
  double criticality_of(std::int64_t cell) const;
  GridLibrary build_library(SearchDiagnostics* diag = nullptr) const;
};

struct HighwayContext {
  ScenarioSpace space;
  ExposureModel exposure;  // grid kind over the 4-D scenario grid
  CommonSet omega;
  std::vector<double> u_f;
  CaseConfig config;

  // cf_exposure: mdp-kind model built from the shared car-following NDD
  static HighwayContext make(const ExposureModel& cf_exposure, const CaseConfig& config);
  std::array<double, 4> scenario(std::int64_t cell) const;
  int sm_failure(std::int64_t cell) const;
  int cav_failure(std::int64_t cell) const;
  double objective(std::int64_t cell) const;
  double criticality_of(std::int64_t cell) const;
  GridLibrary build_library(SearchDiagnostics* diag = nullptr) const;
};

// P(x) over the highway grid: uniform initial position of the leading BV
// times the car-following frequency of (v1, R, v2), normalized over the grid.
ExposureModel build_highway_exposure(const ExposureModel& cf_exposure,
                                     const ScenarioSpace& highway_space,
                                     const ScenarioSpace& cf_space);

}  // namespace tslg

#endif  // TSLG_OBJECTIVE_HPP
