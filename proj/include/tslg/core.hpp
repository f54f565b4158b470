#ifndef TSLG_CORE_HPP
#define TSLG_CORE_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace tslg {

using json = nlohmann::json;

enum class CaseId { kCutIn, kHighwayExit, kCarFollowing };

std::string to_string(CaseId id);
CaseId case_from_string(const std::string& s);

// One axis of a discretized scenario grid. Closed dimensions carry values
// lower, lower+step, ..., upper with cells centered on those values.
// Half-open dimensions cover (lower, upper] with values lower+step, ..., upper.
struct Dimension {
  std::string name;
  double lower = 0.0;
  double upper = 0.0;
  double step = 1.0;
  bool half_open = false;

  int count() const;
  double value(int i) const;
  // cell index containing v, or nullopt when v falls outside the axis
  std::optional<int> locate(double v) const;
};

// Hyper-rectangular grid of decision variables plus the fixed environment
// parameters that stay constant over a campaign.
class ScenarioSpace {
 public:
  ScenarioSpace() = default;
  explicit ScenarioSpace(std::vector<Dimension> dims,
                         std::map<std::string, double> fixed_params = {});

  int rank() const { return static_cast<int>(dims_.size()); }
  const Dimension& dim(int i) const { return dims_[static_cast<size_t>(i)]; }
  const std::vector<Dimension>& dims() const { return dims_; }
  const std::map<std::string, double>& fixed_params() const { return fixed_params_; }
  std::int64_t total_count() const { return total_; }

  std::int64_t index_of(std::span<const int> coords) const;
  std::vector<int> coords_of(std::int64_t index) const;
  std::vector<double> values_of(std::int64_t index) const;
  std::optional<std::int64_t> locate(std::span<const double> values) const;
  bool contains(std::int64_t index) const { return index >= 0 && index < total_; }

  json to_json() const;
  static ScenarioSpace from_json(const json& j);

 private:
  std::vector<Dimension> dims_;
  std::map<std::string, double> fixed_params_;
  std::vector<std::int64_t> strides_;
  std::int64_t total_ = 1;
};

// Empirical probability mass over a scenario grid. The mdp variant adds a
// state histogram P(s) and per-speed-bucket action mass P(u|s); the latter is
// keyed by the leading vehicle's speed cell, matching the Markov assumption
// that the lead acceleration depends only on its current speed.
class ExposureModel {
 public:
  enum class Kind { kGrid, kMdp };

  Kind kind = Kind::kGrid;
  ScenarioSpace space;
  std::map<std::int64_t, double> mass;

  // mdp extras
  std::map<std::int64_t, double> state_mass;            // P(s), keyed by state cell
  std::map<int, std::vector<double>> action_mass;       // speed cell -> P(u|.) row
  int action_count = 0;

  // stored mass for a cell, 0 when absent; throws std::domain_error outside
  double prob(std::int64_t cell) const;
  double state_prob(std::int64_t state) const;
  // P(u|s) row for a state; uniform fallback when the speed bucket is unseen
  std::vector<double> action_probs(std::int64_t state) const;

  void validate() const;
};

// Grid-form critical-scenario library: cells with criticality above gamma
// plus the normalization W = sum of stored criticalities.
struct GridLibrary {
  CaseId case_id = CaseId::kCutIn;
  ScenarioSpace space;
  double gamma = 0.0;
  double w = 0.0;
  std::vector<std::pair<std::int64_t, double>> entries;  // sorted by cell

  bool contains(std::int64_t cell) const;
  void validate() const;

  json to_json() const;
  static GridLibrary from_json(const json& j);
  void save(const std::string& path) const;
  static GridLibrary load(const std::string& path);
};

struct IdmParams {
  double alpha = 2.0;   // maximum acceleration term
  double beta = 18.0;   // desired speed [m/s]
  double c = 4.0;       // free-flow exponent
  double s0 = 2.0;      // jam distance [m]
  double length = 4.0;  // vehicle length offset [m]
  double t_headway = 1.0;
  double b = 3.0;       // comfortable braking
  double v_min = 2.0;
  double v_max = 40.0;
  double a_min = -4.0;
  double a_max = 2.0;
  double d_acci = 1.0;  // accident range threshold [m]
};

struct AccAebParams {
  IdmParams acc;               // ACC layer, IDM family with shorter headway
  double aeb_trigger_s = 1.5;  // full braking below this ETTC
};

struct CutInParams {
  double u_i = 100.0;            // ETTC normalization
  double u_f_range = 18.0;       // distance normalization, range axis
  double u_f_range_rate = 20.0;  // distance normalization, range-rate axis
  double weight = 1.0;
  double common_threshold = 1e-3;
  double episode_s = 10.0;
  double dt_sim = 0.1;
  double ego_v0 = 18.0;  // the surrogate's desired speed: cut-ins meet a settled follower
  int search_starts = 50;
  int gamma_m = 1;
};

struct HighwayParams {
  double p0 = 0.0;
  double v0 = 30.0;
  double d_cf = 2.0;
  double dt = 0.1;   // lane-change time grid [s]
  double dp = 5.0;   // lane-change position grid [m]
  double t_max = 10.0;
  double exit_l = 200.0;
  double a_min = -4.0;
  double a_max = 2.0;
  double v_env_min = 20.0;  // speed envelope for the reachability boundary
  double v_env_max = 40.0;
  double t_min_gap = 0.5;
  double u_s = 500.0;
  double weight = 1.0;
  int search_starts = 100;
  int gamma_m = 1;
  std::vector<double> sm_accels = {-4.0, -2.0, 0.0, 2.0};
  double sm_politeness = 0.1;
  std::vector<double> cav_accels = {-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0};
  double cav_politeness = 0.5;
  double cav_t_min_gap = 0.8;
};

struct CarFollowingParams {
  double v_lo = 20.0, v_hi = 40.0, v_step = 1.0;
  double r_hi = 115.0, r_step = 1.0;  // range axis is (0, r_hi]
  double rdot_lo = -10.0, rdot_hi = 8.0, rdot_step = 1.0;
  double u_lo = -4.0, u_hi = 2.0, u_step = 0.2;
  int horizon = 30;          // decision epochs
  double epoch_s = 1.0;
  double dt_sim = 0.1;
  double alpha_lr = 0.2;
  double delta0 = 1e-10;
  std::int64_t td_step_cap = 30'000'000;
  std::int64_t td_window = 1'000'000;
  std::int64_t ps_episodes = 1'000'000;  // Monte Carlo episodes for P(S)
  double worst_case_rollout_s = 60.0;
};

struct EvalParams {
  double epsilon = 0.05;
  double beta = 0.3;
  double z_alpha = 1.96;  // 95% confidence
  int min_tests = 30;
  std::int64_t max_tests = 5'000'000;
};

// Every per-case constant in one place, default values matching the
// published calibration for each case study.
struct CaseConfig {
  CaseId case_id = CaseId::kCutIn;
  std::uint64_t seed = 1;
  IdmParams idm;        // surrogate model
  AccAebParams cav;     // simulated vehicle under test
  CutInParams cutin;
  HighwayParams highway;
  CarFollowingParams cf;
  EvalParams eval;

  static CaseConfig cut_in();
  static CaseConfig highway_exit();
  static CaseConfig car_following();
  static CaseConfig defaults(CaseId id);

  json to_json() const;
  static CaseConfig from_json(const json& j);
};

// Grid for the case's decision variables (cut-in and highway-exit) or the
// MDP state grid (car-following).
ScenarioSpace build_space(const CaseConfig& config);

// Action axis of the car-following MDP.
Dimension action_axis(const CarFollowingParams& cf);

}  // namespace tslg

#endif  // TSLG_CORE_HPP
