#include "tslg/rl.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <stdexcept>

#include "tslg/rng.hpp"

namespace tslg {

std::optional<std::int64_t> discretize_state(const ScenarioSpace& space, double v_bv,
                                             double range, double range_rate) {
  const auto& v_dim = space.dim(0);
  const auto& r_dim = space.dim(1);
  const auto& rd_dim = space.dim(2);
  // nearest-cell rounding; ranges beyond the grid belong to the safe zone
  const int r_cell = static_cast<int>(std::llround((range - r_dim.lower) / r_dim.step)) - 1;
  if (r_cell >= r_dim.count()) return std::nullopt;
  const int v_cell = std::clamp(
      static_cast<int>(std::llround((v_bv - v_dim.lower) / v_dim.step)), 0, v_dim.count() - 1);
  const int rd_cell = std::clamp(
      static_cast<int>(std::llround((range_rate - rd_dim.lower) / rd_dim.step)), 0,
      rd_dim.count() - 1);
  const std::array<int, 3> coords{v_cell, std::max(r_cell, 0), rd_cell};
  return space.index_of(coords);
}

std::vector<Zone> classify_zones(const ScenarioSpace& space, const CaseConfig& config) {
  const std::int64_t total = space.total_count();
  std::vector<Zone> zones(static_cast<size_t>(total), Zone::kSafe);
  const int epochs =
      static_cast<int>(std::llround(config.cf.worst_case_rollout_s / config.cf.epoch_s));
  for (std::int64_t cell = 0; cell < total; ++cell) {
    const auto v = space.values_of(cell);
    if (v[1] <= config.idm.d_acci + 1e-9) {
      zones[static_cast<size_t>(cell)] = Zone::kCollision;
      continue;
    }
    double v_bv = v[0], range = v[1], range_rate = v[2];
    bool collided = false;
    for (int k = 0; k < epochs && !collided; ++k) {
      const auto r = step_epoch(v_bv, range, range_rate, config.cf.u_lo,
                                FollowerModel::kIdmSurrogate, config);
      v_bv = r.v_bv;
      range = r.range;
      range_rate = r.range_rate;
      collided = r.collided;
    }
    zones[static_cast<size_t>(cell)] = collided ? Zone::kDangerous : Zone::kSafe;
  }
  return zones;
}

int MdpTable::slot_of(std::int64_t state) const {
  const auto it = std::lower_bound(states.begin(), states.end(), state);
  if (it == states.end() || *it != state) return -1;
  return static_cast<int>(it - states.begin());
}

MdpTable build_cf_mdp(const ScenarioSpace& space, const std::vector<Zone>& zones,
                      const ExposureModel& exposure, const CaseConfig& config) {
  MdpTable mdp;
  const Dimension u_axis = action_axis(config.cf);
  mdp.n_actions = u_axis.count();
  mdp.horizon = config.cf.horizon;
  for (std::int64_t cell = 0; cell < space.total_count(); ++cell) {
    if (zones[static_cast<size_t>(cell)] == Zone::kDangerous) mdp.states.push_back(cell);
  }
  const size_t n = mdp.states.size();
  mdp.edges.resize(n * static_cast<size_t>(mdp.n_actions));
  mdp.p_action.resize(n);
  mdp.p_state.resize(n);
  for (size_t slot = 0; slot < n; ++slot) {
    const std::int64_t cell = mdp.states[slot];
    const auto v = space.values_of(cell);
    mdp.p_action[slot] = exposure.action_probs(cell);
    mdp.p_state[slot] = exposure.state_prob(cell);
    for (int a = 0; a < mdp.n_actions; ++a) {
      const auto r = step_epoch(v[0], v[1], v[2], u_axis.value(a),
                                FollowerModel::kIdmSurrogate, config);
      MdpTable::Edge edge;
      if (r.collided) {
        edge.outcome = MdpTable::Outcome::kCollision;
      } else {
        const auto next = discretize_state(space, r.v_bv, r.range, r.range_rate);
        if (!next) {
          edge.outcome = MdpTable::Outcome::kSafe;
        } else {
          switch (zones[static_cast<size_t>(*next)]) {
            case Zone::kCollision: edge.outcome = MdpTable::Outcome::kCollision; break;
            case Zone::kSafe: edge.outcome = MdpTable::Outcome::kSafe; break;
            case Zone::kDangerous:
              edge.outcome = MdpTable::Outcome::kNext;
              edge.next = mdp.slot_of(*next);
              break;
          }
        }
      }
      mdp.edges[slot * static_cast<size_t>(mdp.n_actions) + static_cast<size_t>(a)] = edge;
    }
  }
  return mdp;
}

double QTable::sum_row(int slot) const {
  double s = 0.0;
  for (double v : q[static_cast<size_t>(slot)]) s += v;
  return s;
}

namespace {

QTable initial_q(const MdpTable& mdp) {
  QTable q;
  q.n_actions = mdp.n_actions;
  q.q.resize(mdp.states.size());
  for (size_t slot = 0; slot < mdp.states.size(); ++slot) {
    auto& row = q.q[slot];
    row.resize(static_cast<size_t>(mdp.n_actions));
    for (int a = 0; a < mdp.n_actions; ++a) {
      // transitions into the safe zone are pruned to exactly zero; everything
      // else starts from the naturalistic prior P(u|s)
      const auto& e = mdp.edge(static_cast<int>(slot), a);
      row[static_cast<size_t>(a)] = e.outcome == MdpTable::Outcome::kSafe
                                        ? 0.0
                                        : mdp.p_action[slot][static_cast<size_t>(a)];
    }
  }
  return q;
}

}  // namespace

TdResult td_train(const MdpTable& mdp, double alpha_lr, double delta0, std::uint64_t seed,
                  std::int64_t step_cap, std::int64_t window) {
  if (mdp.states.empty()) throw std::invalid_argument("no dangerous states to train on");
  TdResult result;
  result.q = initial_q(mdp);
  QTable& q = result.q;
  Rng rng(seed);
  const int n_slots = static_cast<int>(mdp.states.size());

  double window_max = 0.0;
  std::int64_t in_window = 0;
  while (result.steps < step_cap) {
    int slot = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(n_slots)));
    for (int epoch = 0; epoch < mdp.horizon; ++epoch) {
      const int a = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(mdp.n_actions)));
      const auto& e = mdp.edge(slot, a);
      double target;
      int next_slot = -1;
      switch (e.outcome) {
        case MdpTable::Outcome::kCollision:
          target = mdp.p_action[static_cast<size_t>(slot)][static_cast<size_t>(a)];
          break;
        case MdpTable::Outcome::kSafe:
          target = 0.0;
          break;
        case MdpTable::Outcome::kNext:
          target = q.sum_row(e.next) * mdp.p_action[static_cast<size_t>(slot)][static_cast<size_t>(a)];
          next_slot = e.next;
          break;
      }
      double& cur = q.q[static_cast<size_t>(slot)][static_cast<size_t>(a)];
      const double delta = target - cur;
      cur += alpha_lr * delta;
      ++result.steps;
      window_max = std::max(window_max, std::abs(delta));
      if (++in_window >= window) {
        result.final_window_max_delta = window_max;
        if (window_max < delta0) {
          result.converged = true;
          return result;
        }
        window_max = 0.0;
        in_window = 0;
      }
      if (next_slot < 0) break;
      slot = next_slot;
    }
  }
  throw std::runtime_error("td_train failed to converge within " + std::to_string(step_cap) +
                           " updates (last window max |delta| " +
                           std::to_string(result.final_window_max_delta) + ")");
}

QTable backward_induction_q(const MdpTable& mdp) {
  const int n = static_cast<int>(mdp.states.size());
  const int na = mdp.n_actions;

  // order slots by BFS distance to any absorbing outcome on the reversed graph
  std::vector<std::vector<std::int32_t>> rev(static_cast<size_t>(n));
  std::vector<int> dist(static_cast<size_t>(n), -1);
  std::deque<int> queue;
  for (int slot = 0; slot < n; ++slot) {
    bool terminal_adjacent = false;
    for (int a = 0; a < na; ++a) {
      const auto& e = mdp.edge(slot, a);
      if (e.outcome == MdpTable::Outcome::kNext) {
        rev[static_cast<size_t>(e.next)].push_back(slot);
      } else {
        terminal_adjacent = true;
      }
    }
    if (terminal_adjacent) {
      dist[static_cast<size_t>(slot)] = 1;
      queue.push_back(slot);
    }
  }
  std::vector<int> order;
  order.reserve(static_cast<size_t>(n));
  while (!queue.empty()) {
    const int slot = queue.front();
    queue.pop_front();
    order.push_back(slot);
    for (int p : rev[static_cast<size_t>(slot)]) {
      if (dist[static_cast<size_t>(p)] < 0) {
        dist[static_cast<size_t>(p)] = dist[static_cast<size_t>(slot)] + 1;
        queue.push_back(p);
      }
    }
  }
  if (static_cast<int>(order.size()) != n)
    throw std::runtime_error("state graph has states that never drain to a terminal");

  std::vector<double> b(static_cast<size_t>(n), 0.0);
  for (int sweep = 0; sweep < 10000; ++sweep) {
    double residual = 0.0;
    for (int slot : order) {
      double fixed = 0.0;
      double self_p = 0.0;
      for (int a = 0; a < na; ++a) {
        const auto& e = mdp.edge(slot, a);
        const double pu = mdp.p_action[static_cast<size_t>(slot)][static_cast<size_t>(a)];
        switch (e.outcome) {
          case MdpTable::Outcome::kCollision: fixed += pu; break;
          case MdpTable::Outcome::kSafe: break;
          case MdpTable::Outcome::kNext:
            if (e.next == slot) {
              self_p += pu;
            } else {
              fixed += b[static_cast<size_t>(e.next)] * pu;
            }
            break;
        }
      }
      if (self_p >= 1.0) throw std::runtime_error("absorbing self-loop without terminal drain");
      const double updated = fixed / (1.0 - self_p);
      residual = std::max(residual, std::abs(updated - b[static_cast<size_t>(slot)]));
      b[static_cast<size_t>(slot)] = updated;
    }
    if (residual < 1e-15) break;
  }

  QTable q;
  q.n_actions = na;
  q.q.resize(static_cast<size_t>(n));
  for (int slot = 0; slot < n; ++slot) {
    auto& row = q.q[static_cast<size_t>(slot)];
    row.resize(static_cast<size_t>(na));
    for (int a = 0; a < na; ++a) {
      const auto& e = mdp.edge(slot, a);
      const double pu = mdp.p_action[static_cast<size_t>(slot)][static_cast<size_t>(a)];
      switch (e.outcome) {
        case MdpTable::Outcome::kCollision: row[static_cast<size_t>(a)] = pu; break;
        case MdpTable::Outcome::kSafe: row[static_cast<size_t>(a)] = 0.0; break;
        case MdpTable::Outcome::kNext:
          row[static_cast<size_t>(a)] = b[static_cast<size_t>(e.next)] * pu;
          break;
      }
    }
  }
  return q;
}

std::vector<double> accident_prob_by_root(const MdpTable& mdp, const QTable& q) {
  std::vector<double> b(mdp.states.size());
  for (size_t slot = 0; slot < mdp.states.size(); ++slot)
    b[slot] = q.sum_row(static_cast<int>(slot));
  return b;
}

std::vector<double> posterior_initial(const MdpTable& mdp, const QTable& q) {
  std::vector<double> post = accident_prob_by_root(mdp, q);
  double z = 0.0;
  for (size_t slot = 0; slot < post.size(); ++slot) {
    post[slot] *= mdp.p_state[slot];
    z += post[slot];
  }
  if (z <= 0.0)
    throw std::runtime_error("all-zero posterior: the surrogate never reaches the collision zone");
  for (double& p : post) p /= z;
  return post;
}

std::vector<double> posterior_action(const MdpTable& mdp, const QTable& q, int slot) {
  const double z = q.sum_row(slot);
  if (z <= 0.0) throw std::runtime_error("posterior_action on a state with zero accident mass");
  std::vector<double> post(q.q[static_cast<size_t>(slot)]);
  for (double& p : post) p /= z;
  return post;
}

double branch_criticality(const MdpTable& mdp, const QTable& q, const Branch& branch,
                          double p_s) {
  if (branch.actions.empty()) return 0.0;
  const auto b = accident_prob_by_root(mdp, q);
  double z = 0.0;
  for (size_t slot = 0; slot < b.size(); ++slot) z += b[slot] * mdp.p_state[slot];
  if (z <= 0.0) return 0.0;

  int slot = branch.root_slot;
  if (b[static_cast<size_t>(slot)] <= 0.0) return 0.0;
  double v = p_s * b[static_cast<size_t>(slot)] * mdp.p_state[static_cast<size_t>(slot)] / z;
  for (size_t k = 0; k < branch.actions.size(); ++k) {
    const int a = branch.actions[k];
    const double bs = b[static_cast<size_t>(slot)];
    if (bs <= 0.0) return 0.0;
    v *= q.value(slot, a) / bs;
    const auto& e = mdp.edge(slot, a);
    switch (e.outcome) {
      case MdpTable::Outcome::kCollision:
        return k + 1 == branch.actions.size() ? v : 0.0;
      case MdpTable::Outcome::kSafe:
        return 0.0;
      case MdpTable::Outcome::kNext:
        slot = e.next;
        break;
    }
  }
  return 0.0;  // horizon exhausted inside the dangerous zone
}

double monte_carlo_ps(const ScenarioSpace& space, const std::vector<Zone>& zones,
                      const ExposureModel& exposure, const CaseConfig& config,
                      std::int64_t episodes, std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("need at least one episode");
  // root CDF over P(s)
  std::vector<std::pair<std::int64_t, double>> cdf;
  cdf.reserve(exposure.state_mass.size());
  double acc = 0.0;
  for (const auto& [cell, m] : exposure.state_mass) {
    acc += m;
    cdf.emplace_back(cell, acc);
  }
  if (cdf.empty()) throw std::invalid_argument("empty state exposure");
  const double total = acc;

  const Dimension u_axis = action_axis(config.cf);
  Rng rng(seed);
  std::int64_t hits = 0;
  for (std::int64_t i = 0; i < episodes; ++i) {
    const double r = rng.uniform() * total;
    auto it = std::lower_bound(cdf.begin(), cdf.end(), r,
                               [](const auto& e, double x) { return e.second < x; });
    if (it == cdf.end()) it = std::prev(cdf.end());
    std::int64_t cell = it->first;
    if (zones[static_cast<size_t>(cell)] == Zone::kCollision) {
      ++hits;
      continue;
    }
    if (zones[static_cast<size_t>(cell)] == Zone::kSafe) continue;
    for (int epoch = 0; epoch < config.cf.horizon; ++epoch) {
      const auto probs = exposure.action_probs(cell);
      double pick = rng.uniform();
      int a = 0;
      for (; a < static_cast<int>(probs.size()) - 1; ++a) {
        pick -= probs[static_cast<size_t>(a)];
        if (pick < 0.0) break;
      }
      const auto values = space.values_of(cell);
      const auto res = step_epoch(values[0], values[1], values[2], u_axis.value(a),
                                  FollowerModel::kIdmSurrogate, config);
      if (res.collided) {
        ++hits;
        break;
      }
      const auto next = discretize_state(space, res.v_bv, res.range, res.range_rate);
      if (!next) break;  // drifted past the range grid: safe
      if (zones[static_cast<size_t>(*next)] == Zone::kCollision) {
        ++hits;
        break;
      }
      if (zones[static_cast<size_t>(*next)] == Zone::kSafe) break;
      cell = *next;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(episodes);
}

json TreeLibrary::to_json() const {
  json zones_j;
  zones_j["dangerous"] = mdp.states;
  zones_j["collision"] = "range <= d_acci";
  json edges_j = json::array();
  json q_j = json::array();
  json pa_j = json::array();
  for (size_t slot = 0; slot < mdp.states.size(); ++slot) {
    json row = json::array();
    for (int a = 0; a < mdp.n_actions; ++a) {
      const auto& e = mdp.edge(static_cast<int>(slot), a);
      switch (e.outcome) {
        case MdpTable::Outcome::kCollision: row.push_back(-2); break;
        case MdpTable::Outcome::kSafe: row.push_back(-1); break;
        case MdpTable::Outcome::kNext: row.push_back(e.next); break;
      }
    }
    edges_j.push_back(std::move(row));
    q_j.push_back(q.q[slot]);
    pa_j.push_back(mdp.p_action[slot]);
  }
  return {{"kind", "tree"},
          {"case", to_string(case_id)},
          {"horizon", horizon},
          {"n_actions", mdp.n_actions},
          {"zones", zones_j},
          {"q_table", q_j},
          {"edges", edges_j},
          {"p_action", pa_j},
          {"p_state", mdp.p_state}};
}

TreeLibrary TreeLibrary::from_json(const json& j) {
  TreeLibrary lib;
  lib.case_id = case_from_string(j.at("case").get<std::string>());
  lib.horizon = j.at("horizon").get<int>();
  lib.mdp.horizon = lib.horizon;
  lib.mdp.n_actions = j.at("n_actions").get<int>();
  lib.mdp.states = j.at("zones").at("dangerous").get<std::vector<std::int64_t>>();
  const auto& edges_j = j.at("edges");
  const auto& q_j = j.at("q_table");
  const auto& pa_j = j.at("p_action");
  lib.mdp.p_state = j.at("p_state").get<std::vector<double>>();
  lib.q.n_actions = lib.mdp.n_actions;
  for (size_t slot = 0; slot < lib.mdp.states.size(); ++slot) {
    for (const auto& col : edges_j.at(slot)) {
      const int code = col.get<int>();
      MdpTable::Edge e;
      if (code == -2) {
        e.outcome = MdpTable::Outcome::kCollision;
      } else if (code == -1) {
        e.outcome = MdpTable::Outcome::kSafe;
      } else {
        e.outcome = MdpTable::Outcome::kNext;
        e.next = code;
      }
      lib.mdp.edges.push_back(e);
    }
    lib.q.q.push_back(q_j.at(slot).get<std::vector<double>>());
    lib.mdp.p_action.push_back(pa_j.at(slot).get<std::vector<double>>());
  }
  return lib;
}

void TreeLibrary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json().dump() << "\n";
}

TreeLibrary TreeLibrary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  json j;
  in >> j;
  return from_json(j);
}

}  // namespace tslg
