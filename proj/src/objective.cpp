#include "tslg/objective.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "tslg/rng.hpp"

namespace tslg {

double distance_to_common_set(std::span<const double> x, const CommonSet& omega,
                              std::span<const double> u_f, int m_d) {
  if (x.size() != omega.bounds.size() || x.size() != u_f.size())
    throw std::invalid_argument("distance rank mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    if (!(u_f[i] > 0.0)) throw std::invalid_argument("normalization factor must be positive");
    const auto& [lo, hi] = omega.bounds[i];
    const double d = std::max({lo - x[i], x[i] - hi, 0.0});
    acc += (d / u_f[i]) * (d / u_f[i]);
  }
  return std::sqrt(acc / static_cast<double>(m_d));
}

double gamma_threshold(int m, std::int64_t total_count) {
  if (m < 1) throw std::invalid_argument("exploration constant must be >= 1");
  if (total_count <= 0) throw std::invalid_argument("empty scenario space");
  return static_cast<double>(m) / static_cast<double>(total_count);
}

double criticality(int sm_event, double exposure_prob) {
  return sm_event ? exposure_prob : 0.0;
}

double cutin_objective(std::int64_t cell, const ScenarioSpace& space, const CommonSet& omega,
                       const CaseConfig& config) {
  const auto values = space.values_of(cell);
  const Trajectory traj = simulate_cutin(values[0], values[1], FollowerModel::kIdmSurrogate, config);
  const double challenge = mnp_ettc(traj, config.cutin.u_i);
  const std::array<double, 2> u_f = {config.cutin.u_f_range, config.cutin.u_f_range_rate};
  return challenge + config.cutin.weight * distance_to_common_set(values, omega, u_f, 2);
}

// ---- highway exit -------------------------------------------------------

double BvTrack::pos(double t) const {
  if (t < match_t) return p0 + v0 * t;
  return match_p + match_v * (t - match_t);
}

double BvTrack::vel(double t) const { return t < match_t ? v0 : match_v; }

std::array<BvTrack, 2> bv_tracks(const std::array<double, 4>& x, double d_cf) {
  BvTrack a{x[0], x[1]};
  BvTrack b{x[2], x[3]};
  BvTrack* lead = a.p0 >= b.p0 ? &a : &b;
  BvTrack* follow = a.p0 >= b.p0 ? &b : &a;
  const double gap0 = lead->p0 - follow->p0;
  if (gap0 <= d_cf) {
    follow->match_t = 0.0;
    follow->match_p = follow->p0;
    follow->match_v = lead->v0;
  } else if (follow->v0 > lead->v0) {
    const double t = (gap0 - d_cf) / (follow->v0 - lead->v0);
    follow->match_t = t;
    follow->match_p = follow->p0 + follow->v0 * t;
    follow->match_v = lead->v0;
  }
  return {a, b};
}

namespace {

// Double-integrator reachability envelope from (p=0, v=v0) with speed floor
// and ceiling.
struct ReachEnvelope {
  double v0, a_min, a_max, v_lo, v_hi;

  double lo(double t) const {
    const double t1 = (v0 - v_lo) / -a_min;
    if (t <= t1) return v0 * t + 0.5 * a_min * t * t;
    const double p1 = v0 * t1 + 0.5 * a_min * t1 * t1;
    return p1 + v_lo * (t - t1);
  }
  double hi(double t) const {
    const double t2 = (v_hi - v0) / a_max;
    if (t <= t2) return v0 * t + 0.5 * a_max * t * t;
    const double p2 = v0 * t2 + 0.5 * a_max * t2 * t2;
    return p2 + v_hi * (t - t2);
  }
};

struct Interval {
  double lo, hi;
  bool empty() const { return lo > hi; }
};

// Remove the open interval (wlo, whi) from each segment; touching endpoints
// stay feasible because the gap rule is inclusive.
void subtract_wall(std::vector<Interval>& segments, double wlo, double whi) {
  std::vector<Interval> out;
  out.reserve(segments.size() + 1);
  for (const auto& seg : segments) {
    if (whi <= seg.lo || wlo >= seg.hi) {
      out.push_back(seg);
      continue;
    }
    if (seg.lo <= wlo) out.push_back({seg.lo, wlo});
    if (whi <= seg.hi) out.push_back({whi, seg.hi});
  }
  segments = std::move(out);
}

constexpr int kTauSamples = 21;

bool cell_feasible(int j, int k, const std::array<BvTrack, 2>& tracks,
                   const ReachEnvelope& env, const HighwayParams& hw) {
  const double t_c = j * hw.dt;
  const double p_c = k * hw.dp;
  const double t_lo = std::max(0.0, t_c - hw.dt / 2);
  const double t_hi = std::min(hw.t_max, t_c + hw.dt / 2);
  const double p_lo = std::max(0.0, p_c - hw.dp / 2);
  const double p_hi = std::min(hw.exit_l, p_c + hw.dp / 2);
  for (int s = 0; s < kTauSamples; ++s) {
    const double tau = t_lo + (t_hi - t_lo) * s / (kTauSamples - 1);
    std::vector<Interval> segments{{std::max(env.lo(tau), p_lo), std::min(env.hi(tau), p_hi)}};
    if (segments[0].empty()) continue;
    for (const auto& track : tracks) {
      const double margin = hw.t_min_gap * track.vel(tau);
      const double c = track.pos(tau);
      subtract_wall(segments, c - margin, c + margin);
      if (segments.empty()) break;
    }
    for (const auto& seg : segments) {
      if (!seg.empty()) return true;
    }
  }
  return false;
}

}  // namespace

int FeasibleZone::count() const {
  int n = 0;
  for (auto f : flags) n += f != 0;
  return n;
}

int FeasibleZone::components() const {
  std::vector<std::uint8_t> seen(flags.size(), 0);
  int components = 0;
  for (int j = 0; j < nt; ++j) {
    for (int k = 0; k < np; ++k) {
      const size_t idx = static_cast<size_t>(j * np + k);
      if (!flags[idx] || seen[idx]) continue;
      ++components;
      std::deque<std::pair<int, int>> queue{{j, k}};
      seen[idx] = 1;
      while (!queue.empty()) {
        const auto [cj, ck] = queue.front();
        queue.pop_front();
        constexpr int dj[] = {1, -1, 0, 0};
        constexpr int dk[] = {0, 0, 1, -1};
        for (int d = 0; d < 4; ++d) {
          const int nj = cj + dj[d], nk = ck + dk[d];
          if (nj < 0 || nj >= nt || nk < 0 || nk >= np) continue;
          const size_t nidx = static_cast<size_t>(nj * np + nk);
          if (!flags[nidx] || seen[nidx]) continue;
          seen[nidx] = 1;
          queue.emplace_back(nj, nk);
        }
      }
    }
  }
  return components;
}

FeasibleZone feasible_zone(const std::array<double, 4>& x, const CaseConfig& config) {
  const HighwayParams& hw = config.highway;
  FeasibleZone zone;
  zone.dt = hw.dt;
  zone.dp = hw.dp;
  zone.nt = static_cast<int>(std::llround(hw.t_max / hw.dt)) + 1;
  zone.np = static_cast<int>(std::llround(hw.exit_l / hw.dp)) + 1;
  zone.flags.assign(static_cast<size_t>(zone.nt * zone.np), 0);
  const auto tracks = bv_tracks(x, hw.d_cf);
  const ReachEnvelope env{hw.v0, hw.a_min, hw.a_max, hw.v_env_min, hw.v_env_max};
  for (int j = 0; j < zone.nt; ++j) {
    for (int k = 0; k < zone.np; ++k) {
      if (cell_feasible(j, k, tracks, env, hw))
        zone.flags[static_cast<size_t>(j * zone.np + k)] = 1;
    }
  }
  return zone;
}

double highway_objective(const std::array<double, 4>& x, const FeasibleZone& zone,
                         const CommonSet& omega, std::span<const double> u_f,
                         const CaseConfig& config) {
  return zone.area() / config.highway.u_s +
         config.highway.weight * distance_to_common_set(x, omega, u_f, 4);
}

namespace {

double free_road_idm(double v, const IdmParams& p) {
  return std::clamp(p.alpha * (1.0 - std::pow(v / p.beta, p.c)), p.a_min, p.a_max);
}

double idm_or_floor(double v, double gap, double closing, const IdmParams& p) {
  const auto u = idm_accel(v, gap, closing, p);
  return u ? *u : p.a_min;
}

// Constant-acceleration profile with the envelope's speed clamps.
struct AccelProfile {
  double v0, a, v_lo, v_hi;

  double vel(double t) const { return std::clamp(v0 + a * t, v_lo, v_hi); }
  double pos(double t) const {
    if (a == 0.0) return v0 * t;
    const double bound = a > 0 ? v_hi : v_lo;
    const double t_clamp = (bound - v0) / a;
    if (t <= t_clamp) return v0 * t + 0.5 * a * t * t;
    const double p_clamp = v0 * t_clamp + 0.5 * a * t_clamp * t_clamp;
    return p_clamp + bound * (t - t_clamp);
  }
};

}  // namespace

ExitPlan exit_attempt(const std::array<double, 4>& x, const ExitPlannerParams& planner,
                      const CaseConfig& config) {
  const HighwayParams& hw = config.highway;
  const auto tracks = bv_tracks(x, hw.d_cf);
  const int nt = static_cast<int>(std::llround(hw.t_max / hw.dt)) + 1;

  ExitPlan best;
  for (double a : planner.accels) {
    const AccelProfile profile{hw.v0, a, hw.v_env_min, hw.v_env_max};
    for (int j = 0; j < nt; ++j) {
      const double t = j * hw.dt;
      const double p = profile.pos(t);
      if (p > hw.exit_l) break;  // passed the off-ramp without changing lane
      bool safe = true;
      for (const auto& track : tracks) {
        if (std::abs(p - track.pos(t)) < planner.t_min_gap * track.vel(t)) {
          safe = false;
          break;
        }
      }
      if (!safe) continue;

      // MOBIL utility of merging at (t, p): the CAV's own lane is empty, so
      // the old-follower terms vanish.
      const double v_cav = profile.vel(t);
      const BvTrack* leader = nullptr;
      const BvTrack* follower = nullptr;
      for (const auto& track : tracks) {
        if (track.pos(t) > p) {
          if (!leader || track.pos(t) < leader->pos(t)) leader = &track;
        } else {
          if (!follower || track.pos(t) > follower->pos(t)) follower = &track;
        }
      }
      const IdmParams& idm = config.idm;
      const double u_before = free_road_idm(v_cav, idm);
      const double u_after =
          leader ? idm_or_floor(v_cav, leader->pos(t) - p, leader->vel(t) - v_cav, idm)
                 : u_before;
      double u_new_before = 0.0, u_new_after = 0.0;
      if (follower) {
        const double v_f = follower->vel(t);
        u_new_before = leader ? idm_or_floor(v_f, leader->pos(t) - follower->pos(t),
                                             leader->vel(t) - v_f, idm)
                              : free_road_idm(v_f, idm);
        u_new_after = idm_or_floor(v_f, p - follower->pos(t), v_cav - v_f, idm);
      }
      const double utility = mobil_utility(u_after, u_before, u_new_after, u_new_before, 0.0,
                                           0.0, planner.politeness);
      if (!best.success || utility > best.utility + 1e-12) {
        best = {true, t, p, a, utility};
      }
    }
  }
  return best;
}

ExitPlan sm_exit_attempt(const std::array<double, 4>& x, const CaseConfig& config) {
  return exit_attempt(
      x, {config.highway.sm_accels, config.highway.sm_politeness, config.highway.t_min_gap},
      config);
}

ExitPlan cav_exit_attempt(const std::array<double, 4>& x, const CaseConfig& config) {
  return exit_attempt(x,
                      {config.highway.cav_accels, config.highway.cav_politeness,
                       config.highway.cav_t_min_gap},
                      config);
}

// ---- library search -----------------------------------------------------

GridLibrary search_library(const ScenarioSpace& space,
                           const std::function<double(std::int64_t)>& objective,
                           const std::function<double(std::int64_t)>& criticality_fn,
                           int starts, double gamma, std::uint64_t seed, CaseId case_id,
                           SearchDiagnostics* diag) {
  if (starts < 1) throw std::invalid_argument("need at least one start");
  const std::int64_t total = space.total_count();
  Rng rng(seed);

  std::unordered_map<std::int64_t, double> j_cache;
  auto j_of = [&](std::int64_t cell) {
    auto it = j_cache.find(cell);
    if (it != j_cache.end()) return it->second;
    const double v = objective(cell);
    j_cache.emplace(cell, v);
    if (diag) ++diag->evaluated;
    return v;
  };

  const int rank = space.rank();
  auto neighbors = [&](std::int64_t cell, std::vector<std::int64_t>& out) {
    out.clear();
    const auto coords = space.coords_of(cell);
    auto tmp = coords;
    for (int d = 0; d < rank; ++d) {
      for (int delta : {-1, 1}) {
        const int c = coords[static_cast<size_t>(d)] + delta;
        if (c < 0 || c >= space.dim(d).count()) continue;
        tmp[static_cast<size_t>(d)] = c;
        out.push_back(space.index_of(tmp));
      }
      tmp[static_cast<size_t>(d)] = coords[static_cast<size_t>(d)];
    }
  };

  // phase 1: greedy descent paths
  std::set<std::int64_t> visited;
  std::vector<std::int64_t> nbrs;
  for (int s = 0; s < starts; ++s) {
    std::int64_t cell = static_cast<std::int64_t>(rng.uniform_below(static_cast<std::uint64_t>(total)));
    double best_j = j_of(cell);
    visited.insert(cell);
    for (;;) {
      neighbors(cell, nbrs);
      std::int64_t next = -1;
      double next_j = best_j;
      for (std::int64_t n : nbrs) {
        const double jn = j_of(n);
        if (jn < next_j) {
          next = n;
          next_j = jn;
        } else if (next != -1 && jn == next_j && n < next) {
          next = n;
        }
      }
      if (next < 0) break;
      cell = next;
      best_j = next_j;
      visited.insert(cell);
      if (diag) ++diag->descent_steps;
    }
  }

  // phase 2: flood fill over V > gamma seeded from every visited cell and
  // its axis neighbors
  std::map<std::int64_t, double> members;
  std::unordered_set<std::int64_t> checked;
  std::deque<std::int64_t> queue;
  auto consider = [&](std::int64_t cell) {
    if (!checked.insert(cell).second) return;
    const double v = criticality_fn(cell);
    if (v > gamma) {
      members.emplace(cell, v);
      queue.push_back(cell);
    }
  };
  for (std::int64_t cell : visited) {
    consider(cell);
    neighbors(cell, nbrs);
    for (std::int64_t n : nbrs) consider(n);
  }
  while (!queue.empty()) {
    const std::int64_t cell = queue.front();
    queue.pop_front();
    neighbors(cell, nbrs);
    for (std::int64_t n : nbrs) consider(n);
  }

  GridLibrary lib;
  lib.case_id = case_id;
  lib.space = space;
  lib.gamma = gamma;
  double w = 0.0;
  for (const auto& [cell, v] : members) {
    lib.entries.emplace_back(cell, v);
    w += v;
  }
  lib.w = w;
  if (lib.entries.empty() && diag) diag->empty_warning = true;
  return lib;
}

std::vector<std::pair<std::int64_t, double>> exhaustive_critical_set(
    const ScenarioSpace& space, const std::function<double(std::int64_t)>& criticality_fn,
    double gamma) {
  std::vector<std::pair<std::int64_t, double>> out;
  for (std::int64_t cell = 0; cell < space.total_count(); ++cell) {
    const double v = criticality_fn(cell);
    if (v > gamma) out.emplace_back(cell, v);
  }
  return out;
}

// ---- case drivers -------------------------------------------------------

CutinContext CutinContext::make(const ExposureModel& exposure, const CaseConfig& config) {
  CutinContext ctx;
  ctx.config = config;
  ctx.space = build_space(config);
  ctx.exposure = exposure;
  ctx.omega = extract_common_set(exposure, config.cutin.common_threshold);
  return ctx;
}

int CutinContext::sm_accident(std::int64_t cell) const {
  const auto v = space.values_of(cell);
  return simulate_cutin(v[0], v[1], FollowerModel::kIdmSurrogate, config).accident ? 1 : 0;
}

int CutinContext::cav_accident(std::int64_t cell) const {
  const auto v = space.values_of(cell);
  return simulate_cutin(v[0], v[1], FollowerModel::kAccAeb, config).accident ? 1 : 0;
}

double CutinContext::objective(std::int64_t cell) const {
  return cutin_objective(cell, space, omega, config);
}

double CutinContext::criticality_of(std::int64_t cell) const {
  return criticality(sm_accident(cell), exposure.prob(cell));
}

GridLibrary CutinContext::build_library(SearchDiagnostics* diag) const {
  const double gamma = gamma_threshold(config.cutin.gamma_m, space.total_count());
  return search_library(
      space, [this](std::int64_t c) { return objective(c); },
      [this](std::int64_t c) { return criticality_of(c); }, config.cutin.search_starts, gamma,
      config.seed, CaseId::kCutIn, diag);
}

ExposureModel build_highway_exposure(const ExposureModel& cf_exposure,
                                     const ScenarioSpace& highway_space,
                                     const ScenarioSpace& cf_space) {
  if (cf_exposure.kind != ExposureModel::Kind::kMdp)
    throw std::invalid_argument("highway exposure needs the car-following state histogram");
  ExposureModel model;
  model.kind = ExposureModel::Kind::kGrid;
  model.space = highway_space;

  const auto& p01 = highway_space.dim(0);
  const auto& v01 = highway_space.dim(1);
  const auto& p02 = highway_space.dim(2);
  const auto& v02 = highway_space.dim(3);
  double total = 0.0;
  std::vector<double> state(3);
  std::array<int, 4> coords{};
  for (int ip1 = 0; ip1 < p01.count(); ++ip1) {
    for (int iv1 = 0; iv1 < v01.count(); ++iv1) {
      for (int ip2 = 0; ip2 < p02.count(); ++ip2) {
        const double range = p01.value(ip1) - p02.value(ip2);
        for (int iv2 = 0; iv2 < v02.count(); ++iv2) {
          state[0] = v01.value(iv1);
          state[1] = range;
          state[2] = v01.value(iv1) - v02.value(iv2);
          const auto cf_cell = cf_space.locate(state);
          if (!cf_cell) continue;
          const double p = cf_exposure.state_prob(*cf_cell);
          if (p <= 0.0) continue;
          coords = {ip1, iv1, ip2, iv2};
          model.mass[highway_space.index_of(coords)] = p;
          total += p;
        }
      }
    }
  }
  if (total <= 0.0) throw std::runtime_error("highway exposure has no support");
  for (auto& [cell, m] : model.mass) m /= total;
  return model;
}

HighwayContext HighwayContext::make(const ExposureModel& cf_exposure, const CaseConfig& config) {
  HighwayContext ctx;
  ctx.config = config;
  ctx.space = build_space(config);
  CaseConfig cf_config = CaseConfig::car_following();
  cf_config.cf = config.cf;
  ctx.exposure = build_highway_exposure(cf_exposure, ctx.space, build_space(cf_config));
  // the rectangle construction is too coarse in four dimensions; use the most
  // frequent scenario as the common set
  ctx.omega = most_frequent_cell_set(ctx.exposure);
  ctx.u_f = normalization_factors(ctx.exposure, ctx.omega);
  return ctx;
}

std::array<double, 4> HighwayContext::scenario(std::int64_t cell) const {
  const auto v = space.values_of(cell);
  return {v[0], v[1], v[2], v[3]};
}

int HighwayContext::sm_failure(std::int64_t cell) const {
  return sm_exit_attempt(scenario(cell), config).success ? 0 : 1;
}

int HighwayContext::cav_failure(std::int64_t cell) const {
  return cav_exit_attempt(scenario(cell), config).success ? 0 : 1;
}

double HighwayContext::objective(std::int64_t cell) const {
  const auto x = scenario(cell);
  const FeasibleZone zone = feasible_zone(x, config);
  return highway_objective(x, zone, omega, u_f, config);
}

double HighwayContext::criticality_of(std::int64_t cell) const {
  return criticality(sm_failure(cell), exposure.prob(cell));
}

GridLibrary HighwayContext::build_library(SearchDiagnostics* diag) const {
  const double gamma = gamma_threshold(config.highway.gamma_m, space.total_count());
  return search_library(
      space, [this](std::int64_t c) { return objective(c); },
      [this](std::int64_t c) { return criticality_of(c); }, config.highway.search_starts, gamma,
      config.seed, CaseId::kHighwayExit, diag);
}

}  // namespace tslg
