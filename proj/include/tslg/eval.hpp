#ifndef TSLG_EVAL_HPP
#define TSLG_EVAL_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tslg/core.hpp"
#include "tslg/rl.hpp"
#include "tslg/rng.hpp"

namespace tslg {

// One sampled test scenario with its importance weight P(x)/Pbar(x).
struct SampleDraw {
  std::int64_t cell = -1;
  double ratio = 0.0;
  bool explored = false;  // drawn from the epsilon mass
};

// Epsilon-greedy sampler over a grid library: mass (1-eps) V(x)/W inside the
// library, eps/(N - N_phi) spread uniformly outside.
class GridSampler {
 public:
  GridSampler(const GridLibrary& library, const ExposureModel& exposure, double epsilon);

  double pbar(std::int64_t cell) const;
  SampleDraw draw(Rng& rng) const;
  double total_mass() const;  // diagnostic, sums over the whole space
  std::int64_t off_library_count() const { return off_count_; }

 private:
  const GridLibrary* lib_;
  const ExposureModel* exposure_;
  double epsilon_;
  std::int64_t total_cells_ = 0;
  std::int64_t off_count_ = 0;
  std::vector<double> cdf_;  // over library entries
};

struct TraceRow {
  std::int64_t test_index = 0;
  std::string scenario_id;
  double weight = 0.0;
  int indicator = 0;
  double mu_hat = 0.0;
  double half_width = 0.0;
};

struct EvaluationReport {
  std::vector<TraceRow> trace;
  double mu = 0.0;
  double variance = 0.0;     // sample variance of the weighted terms
  double half_width = std::numeric_limits<double>::infinity();
  std::int64_t n = 0;
  bool converged = false;
  double beta = 0.0;
  double z_alpha = 1.96;

  json to_json() const;
  void write_trace_csv(const std::string& path) const;
};

// Incremental Eq-7 estimator with the relative-half-width stopping rule.
class Estimator {
 public:
  Estimator(const EvalParams& eval) : eval_(eval) {}

  // returns the updated half-width after folding one weighted indicator
  double add(double weighted_term);
  double mu() const { return mu_; }
  double variance() const;          // sample variance of terms
  double half_width() const;        // z * sigma / (sqrt(n) * mu)
  std::int64_t n() const { return n_; }
  bool should_stop() const;

 private:
  EvalParams eval_;
  std::int64_t n_ = 0;
  double mu_ = 0.0;
  double m2_ = 0.0;
};

struct CampaignOptions {
  std::uint64_t seed = 1;
  int workers = 1;
  std::optional<std::int64_t> fixed_n;  // run exactly this many tests
  std::optional<std::int64_t> max_tests;
};

using GridIndicator = std::function<int(std::int64_t)>;

EvaluationReport run_grid_campaign(const GridSampler& sampler, const ExposureModel& exposure,
                                   const GridIndicator& indicator, const EvalParams& eval,
                                   const CampaignOptions& options);

// Naive baseline: sample straight from the naturalistic exposure.
EvaluationReport naive_grid_campaign(const ExposureModel& exposure,
                                     const GridIndicator& indicator, const EvalParams& eval,
                                     const CampaignOptions& options);

// Exact weighted sum over every cell; refuses spaces above the cap.
double exhaustive_truth(const ScenarioSpace& space, const GridIndicator& indicator,
                        const ExposureModel& exposure, std::int64_t cap = 200000);

struct OracleRefusal : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- car-following (tree) campaigns --------------------------------------

// One decision epoch as seen by the campaign: the next observed state cell,
// or a collision.
struct TreeStep {
  std::optional<std::int64_t> next;  // nullopt: drifted past the grid (safe)
  bool collided = false;
};

struct TreeCampaignInputs {
  const MdpTable* mdp = nullptr;
  const QTable* q = nullptr;
  const std::vector<Zone>* zones = nullptr;
  const ExposureModel* exposure = nullptr;
  const ScenarioSpace* space = nullptr;
  const CaseConfig* config = nullptr;
  // test hook: table-driven dynamics instead of the vehicle simulation
  std::function<TreeStep(std::int64_t state, int action)> kernel;
};

EvaluationReport run_tree_campaign(const TreeCampaignInputs& in, FollowerModel cav,
                                   const EvalParams& eval, const CampaignOptions& options);

EvaluationReport naive_tree_campaign(const TreeCampaignInputs& in, FollowerModel cav,
                                     const EvalParams& eval, const CampaignOptions& options);

}  // namespace tslg

#endif  // TSLG_EVAL_HPP
