#include "tslg/ndd.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "tslg/rng.hpp"

namespace tslg {

bool CommonSet::contains(std::span<const double> values) const {
  if (values.size() != bounds.size()) throw std::invalid_argument("common set rank mismatch");
  for (size_t i = 0; i < bounds.size(); ++i) {
    if (values[i] < bounds[i].first - 1e-12 || values[i] > bounds[i].second + 1e-12) return false;
  }
  return true;
}

namespace {

double truncated_gaussian(Rng& rng, double mean, double sigma, double lo, double hi) {
  for (;;) {
    const double x = mean + sigma * rng.gaussian();
    if (x > lo && x < hi) return x;
  }
}

// Cut-in mixture, three truncated components with bin-aligned supports:
//   core  (0.755): R ~ N(13, 3.4) on (4, 90], Rdot ~ N(0, 0.55) on [-0.6, 0.6]
//   plate (0.220): R ~ N(10, 5)   on (4, 90], Rdot ~ U[-2.9, 2.9]
//   block (0.025): R ~ U(4, 14],  Rdot ~ U[-9.0, -5.8]  (fast approaches)
// The core puts the histogram mode in the cell holding (14, 0); the plate
// sets the high-frequency contour just inside +-3 m/s; the block is a small
// plateau of hard-braking approaches sitting between the library threshold
// and the common-set threshold.
EventRecord synth_cutin(Rng& rng) {
  EventRecord e;
  e.kind = EventRecord::Kind::kCutIn;
  const double roll = rng.uniform();
  if (roll < 0.755) {
    e.a = truncated_gaussian(rng, 13.0, 3.4, 4.0, 90.0);
    e.b = truncated_gaussian(rng, 0.0, 0.55, -0.6, 0.6);
  } else if (roll < 0.975) {
    e.a = truncated_gaussian(rng, 10.0, 5.0, 4.0, 90.0);
    e.b = -2.9 + 5.8 * rng.uniform();
  } else {
    e.a = 4.0 + 10.0 * rng.uniform();
    e.b = -9.0 + 3.2 * rng.uniform();
  }
  return e;
}

EventRecord synth_trajectory_point(Rng& rng, const CarFollowingParams& cf) {
  EventRecord e;
  e.kind = EventRecord::Kind::kTrajectory;
  e.a = truncated_gaussian(rng, 30.0, 4.0, cf.v_lo, cf.v_hi);        // v_lead
  e.b = truncated_gaussian(rng, 45.0, 22.0, 1.5, cf.r_hi + 0.49);    // range
  const double rdot = truncated_gaussian(rng, 0.0, 1.8, cf.rdot_lo, cf.rdot_hi);
  e.c = e.a - rdot;                                                  // v_follow
  return e;
}

EventRecord synth_free_driving(Rng& rng, const CarFollowingParams& cf) {
  EventRecord e;
  e.kind = EventRecord::Kind::kFreeDriving;
  e.a = truncated_gaussian(rng, 30.0, 5.0, cf.v_lo, cf.v_hi);
  const double u = truncated_gaussian(rng, 0.0, 0.6, cf.u_lo - cf.u_step / 2,
                                      cf.u_hi + cf.u_step / 2);
  const double snapped = std::clamp(std::round(u / cf.u_step) * cf.u_step, cf.u_lo, cf.u_hi);
  e.b = snapped;
  return e;
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::vector<EventRecord> synth_events(const CaseConfig& config, std::int64_t n,
                                      std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("event count must be >= 1");
  Rng rng(seed);
  std::vector<EventRecord> events;
  events.reserve(static_cast<size_t>(n));
  if (config.case_id == CaseId::kCutIn) {
    for (std::int64_t i = 0; i < n; ++i) events.push_back(synth_cutin(rng));
    return events;
  }
  // car-following and highway-exit share the same data: alternate trajectory
  // points and free-driving pairs
  for (std::int64_t i = 0; i < n; ++i) {
    if (i % 2 == 0) {
      events.push_back(synth_trajectory_point(rng, config.cf));
    } else {
      events.push_back(synth_free_driving(rng, config.cf));
    }
  }
  return events;
}

void write_events_csv(const std::string& path, CaseId case_id,
                      const std::vector<EventRecord>& events) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  if (case_id == CaseId::kCutIn) {
    out << "r,r_dot\n";
    for (const auto& e : events) out << format_double(e.a) << "," << format_double(e.b) << "\n";
    return;
  }
  out << "kind,v_lead,r,v_follow,v,u\n";
  for (const auto& e : events) {
    if (e.kind == EventRecord::Kind::kTrajectory) {
      out << "traj," << format_double(e.a) << "," << format_double(e.b) << ","
          << format_double(e.c) << ",,\n";
    } else {
      out << "free,,,," << format_double(e.a) << "," << format_double(e.b) << "\n";
    }
  }
}

std::vector<EventRecord> read_events_csv(const std::string& path, CaseId case_id) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty event file " + path);
  std::vector<EventRecord> events;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    EventRecord e;
    if (case_id == CaseId::kCutIn) {
      if (fields.size() < 2) throw std::runtime_error("malformed cut-in record: " + line);
      e.kind = EventRecord::Kind::kCutIn;
      e.a = std::stod(fields[0]);
      e.b = std::stod(fields[1]);
    } else {
      if (fields.size() < 2) throw std::runtime_error("malformed record: " + line);
      if (fields[0] == "traj") {
        e.kind = EventRecord::Kind::kTrajectory;
        e.a = std::stod(fields[1]);
        e.b = std::stod(fields[2]);
        e.c = std::stod(fields[3]);
      } else if (fields[0] == "free") {
        e.kind = EventRecord::Kind::kFreeDriving;
        e.a = std::stod(fields[4]);
        e.b = std::stod(fields[5]);
      } else {
        throw std::runtime_error("unknown record kind: " + fields[0]);
      }
    }
    events.push_back(e);
  }
  return events;
}

HistogramResult build_histogram(const std::vector<EventRecord>& events,
                                const ScenarioSpace& space) {
  if (events.empty()) throw std::invalid_argument("no events to bin");
  HistogramResult result;
  result.model.kind = ExposureModel::Kind::kGrid;
  result.model.space = space;
  std::map<std::int64_t, std::int64_t> counts;
  std::int64_t kept = 0;
  std::vector<double> values(2);
  for (const auto& e : events) {
    values[0] = e.a;
    values[1] = e.b;
    const auto cell = space.locate(values);
    if (!cell) {
      ++result.rejected;
      continue;
    }
    ++counts[*cell];
    ++kept;
  }
  if (kept == 0) throw std::runtime_error("all events fall outside the scenario space");
  for (const auto& [cell, n] : counts) {
    result.model.mass[cell] = static_cast<double>(n) / static_cast<double>(kept);
  }
  return result;
}

CommonSet extract_common_set(const ExposureModel& model, double threshold) {
  const int rank = model.space.rank();
  std::vector<double> lo(static_cast<size_t>(rank), std::numeric_limits<double>::infinity());
  std::vector<double> hi(static_cast<size_t>(rank), -std::numeric_limits<double>::infinity());
  bool any = false;
  for (const auto& [cell, m] : model.mass) {
    if (m <= threshold) continue;
    any = true;
    const auto values = model.space.values_of(cell);
    for (int d = 0; d < rank; ++d) {
      lo[static_cast<size_t>(d)] = std::min(lo[static_cast<size_t>(d)], values[static_cast<size_t>(d)]);
      hi[static_cast<size_t>(d)] = std::max(hi[static_cast<size_t>(d)], values[static_cast<size_t>(d)]);
    }
  }
  if (!any) throw std::runtime_error("no cell above the common-set threshold");
  CommonSet omega;
  for (int d = 0; d < rank; ++d)
    omega.bounds.emplace_back(lo[static_cast<size_t>(d)], hi[static_cast<size_t>(d)]);
  return omega;
}

CommonSet most_frequent_cell_set(const ExposureModel& model) {
  const std::int64_t cell = argmax_cell(model);
  const auto values = model.space.values_of(cell);
  CommonSet omega;
  for (double v : values) omega.bounds.emplace_back(v, v);
  return omega;
}

std::vector<double> normalization_factors(const ExposureModel& model, const CommonSet& omega) {
  const int rank = model.space.rank();
  if (static_cast<int>(omega.bounds.size()) != rank)
    throw std::invalid_argument("common set rank mismatch");
  std::vector<double> factors(static_cast<size_t>(rank), 0.0);
  for (int d = 0; d < rank; ++d) {
    const auto& dim = model.space.dim(d);
    const auto& [lo, hi] = omega.bounds[static_cast<size_t>(d)];
    double max_dist = 0.0;
    for (int i = 0; i < dim.count(); ++i) {
      const double v = dim.value(i);
      max_dist = std::max(max_dist, std::max(lo - v, v - hi));
    }
    factors[static_cast<size_t>(d)] = std::max(std::ceil(max_dist - 1e-9), 1.0);
  }
  return factors;
}

ExposureModel mdp_exposure(const std::vector<EventRecord>& events, const ScenarioSpace& space,
                           const CarFollowingParams& cf) {
  ExposureModel model;
  model.kind = ExposureModel::Kind::kMdp;
  model.space = space;
  const Dimension u_axis = action_axis(cf);
  model.action_count = u_axis.count();

  std::map<std::int64_t, std::int64_t> state_counts;
  std::map<int, std::vector<std::int64_t>> action_counts;
  std::int64_t n_states = 0;
  bool saw_free = false;
  std::vector<double> values(3);
  for (const auto& e : events) {
    if (e.kind == EventRecord::Kind::kTrajectory) {
      values[0] = e.a;          // v_lead
      values[1] = e.b;          // range
      values[2] = e.a - e.c;    // range rate = v_lead - v_follow
      const auto cell = space.locate(values);
      if (!cell) continue;
      ++state_counts[*cell];
      ++n_states;
    } else if (e.kind == EventRecord::Kind::kFreeDriving) {
      const auto v_cell = space.dim(0).locate(e.a);
      const auto u_cell = u_axis.locate(e.b);
      if (!v_cell || !u_cell) continue;
      auto& row = action_counts[*v_cell];
      if (row.empty()) row.assign(static_cast<size_t>(model.action_count), 0);
      ++row[static_cast<size_t>(*u_cell)];
      saw_free = true;
    }
  }
  if (n_states == 0 || !saw_free)
    throw std::invalid_argument("mdp exposure needs both trajectory points and free-driving pairs");
  for (const auto& [cell, n] : state_counts) {
    model.state_mass[cell] = static_cast<double>(n) / static_cast<double>(n_states);
  }
  for (const auto& [v_cell, row] : action_counts) {
    std::int64_t total = 0;
    for (auto n : row) total += n;
    std::vector<double> probs(row.size());
    for (size_t i = 0; i < row.size(); ++i)
      probs[i] = static_cast<double>(row[i]) / static_cast<double>(total);
    model.action_mass[v_cell] = std::move(probs);
  }
  return model;
}

std::int64_t argmax_cell(const ExposureModel& model) {
  if (model.mass.empty() && model.state_mass.empty())
    throw std::runtime_error("empty exposure model");
  const auto& m = model.mass.empty() ? model.state_mass : model.mass;
  std::int64_t best = m.begin()->first;
  double best_mass = m.begin()->second;
  for (const auto& [cell, p] : m) {
    if (p > best_mass) {
      best = cell;
      best_mass = p;
    }
  }
  return best;
}

}  // namespace tslg
