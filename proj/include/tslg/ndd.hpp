#ifndef TSLG_NDD_HPP
#define TSLG_NDD_HPP

#include <string>
#include <vector>

#include "tslg/core.hpp"

namespace tslg {

// One naturalistic-driving observation. Cut-in events carry the range and
// range rate at the cut-in moment. Car-following (and highway-exit) data mix
// two record kinds: trajectory points (v_lead, range, v_follow) and
// free-driving pairs (v, u).
struct EventRecord {
  enum class Kind { kCutIn, kTrajectory, kFreeDriving };
  Kind kind = Kind::kCutIn;
  double a = 0.0;  // cutin: range | trajectory: v_lead | free: v
  double b = 0.0;  // cutin: range rate | trajectory: range | free: u
  double c = 0.0;  // trajectory: v_follow
};

// Axis-aligned hyper-rectangle of high-exposure scenarios, in cell-value
// coordinates.
struct CommonSet {
  std::vector<std::pair<double, double>> bounds;  // per-dimension [lo, hi]

  bool contains(std::span<const double> values) const;
};

// Synthetic stand-in for proprietary naturalistic data. Deterministic for a
// fixed seed. Cut-in records follow a truncated bivariate normal mixture with
// mode near (range 14 m, range rate 0); car-following data mixes trajectory
// points with free-driving pairs whose acceleration follows a truncated
// discretized normal on [-4, 2] centered at 0. Generator parameters are
// versioned below so published numbers stay reproducible.
inline constexpr const char* kSyntheticNddVersion = "synth-ndd-v1";

std::vector<EventRecord> synth_events(const CaseConfig& config, std::int64_t n,
                                      std::uint64_t seed);

void write_events_csv(const std::string& path, CaseId case_id,
                      const std::vector<EventRecord>& events);
std::vector<EventRecord> read_events_csv(const std::string& path, CaseId case_id);

struct HistogramResult {
  ExposureModel model;
  std::int64_t rejected = 0;  // events outside the space bounds
};

// Normalized frequency over the grid; throws on an empty event list.
HistogramResult build_histogram(const std::vector<EventRecord>& events,
                                const ScenarioSpace& space);

// Minimal bounding hyper-rectangle of all cells with mass above threshold.
CommonSet extract_common_set(const ExposureModel& model, double threshold);

// Degenerate common set: the single most frequent cell. Used for cases where
// the rectangle construction is too coarse.
CommonSet most_frequent_cell_set(const ExposureModel& model);

// Per-dimension max distance from any feasible cell to the common set,
// rounded up to integer table precision; zero distances clamp to 1.
std::vector<double> normalization_factors(const ExposureModel& model, const CommonSet& omega);

// State histogram P(s) plus per-speed action mass P(u|s) for the MDP case.
ExposureModel mdp_exposure(const std::vector<EventRecord>& events, const ScenarioSpace& space,
                           const CarFollowingParams& cf);

std::int64_t argmax_cell(const ExposureModel& model);

}  // namespace tslg

#endif  // TSLG_NDD_HPP
