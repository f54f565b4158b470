#include "tslg/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <future>
#include <stdexcept>
#include <unordered_set>

#include "tslg/vehicle.hpp"

namespace tslg {

GridSampler::GridSampler(const GridLibrary& library, const ExposureModel& exposure,
                         double epsilon)
    : lib_(&library), exposure_(&exposure), epsilon_(epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must be in (0,1)");
  if (library.entries.empty()) throw std::invalid_argument("empty library");
  if (!(library.w > 0.0)) throw std::invalid_argument("library normalization must be positive");
  total_cells_ = library.space.total_count();
  off_count_ = total_cells_ - static_cast<std::int64_t>(library.entries.size());
  if (off_count_ <= 0) throw std::invalid_argument("library covers the whole space");
  cdf_.reserve(library.entries.size());
  double acc = 0.0;
  for (const auto& [cell, v] : library.entries) {
    acc += v;
    cdf_.push_back(acc);
  }
}

double GridSampler::pbar(std::int64_t cell) const {
  auto it = std::lower_bound(lib_->entries.begin(), lib_->entries.end(), cell,
                             [](const auto& e, std::int64_t c) { return e.first < c; });
  if (it != lib_->entries.end() && it->first == cell) {
    return (1.0 - epsilon_) * it->second / lib_->w;
  }
  return epsilon_ / static_cast<double>(off_count_);
}

SampleDraw GridSampler::draw(Rng& rng) const {
  SampleDraw d;
  if (rng.uniform() < 1.0 - epsilon_) {
    const double r = rng.uniform() * cdf_.back();
    const size_t idx = static_cast<size_t>(
        std::lower_bound(cdf_.begin(), cdf_.end(), r) - cdf_.begin());
    const size_t safe_idx = std::min(idx, cdf_.size() - 1);
    d.cell = lib_->entries[safe_idx].first;
    d.explored = false;
  } else {
    // uniform over the complement; rejection against library membership
    for (;;) {
      const std::int64_t cell =
          static_cast<std::int64_t>(rng.uniform_below(static_cast<std::uint64_t>(total_cells_)));
      if (!lib_->contains(cell)) {
        d.cell = cell;
        break;
      }
    }
    d.explored = true;
  }
  d.ratio = exposure_->prob(d.cell) / pbar(d.cell);
  return d;
}

double GridSampler::total_mass() const {
  double in_lib = 0.0;
  for (const auto& [cell, v] : lib_->entries) in_lib += (1.0 - epsilon_) * v / lib_->w;
  return in_lib + static_cast<double>(off_count_) * (epsilon_ / static_cast<double>(off_count_));
}

double Estimator::add(double weighted_term) {
  ++n_;
  const double delta = weighted_term - mu_;
  mu_ += delta / static_cast<double>(n_);
  m2_ += delta * (weighted_term - mu_);
  return half_width();
}

double Estimator::variance() const {
  if (n_ < 2) return 0.0;
  return m2_ / static_cast<double>(n_ - 1);
}

double Estimator::half_width() const {
  if (n_ < 2 || mu_ <= 0.0) return std::numeric_limits<double>::infinity();
  return eval_.z_alpha * std::sqrt(variance() / static_cast<double>(n_)) / mu_;
}

bool Estimator::should_stop() const {
  return n_ >= eval_.min_tests && half_width() <= eval_.beta;
}

json EvaluationReport::to_json() const {
  return {{"mu_hat", mu},
          {"variance", variance},
          {"half_width", std::isfinite(half_width) ? json(half_width) : json("inf")},
          {"n", n},
          {"converged", converged},
          {"beta", beta},
          {"z_alpha", z_alpha}};
}

namespace {

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

void EvaluationReport::write_trace_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "test_index,scenario_id,weight,indicator,mu_hat,half_width\n";
  for (const auto& row : trace) {
    out << row.test_index << "," << row.scenario_id << "," << fmt(row.weight) << ","
        << row.indicator << "," << fmt(row.mu_hat) << ","
        << (std::isfinite(row.half_width) ? fmt(row.half_width) : "inf") << "\n";
  }
}

namespace {

// Runs the draw -> test -> fold loop. Draws happen sequentially on the rng;
// indicators evaluate in deterministic batches so worker count never changes
// the result.
EvaluationReport drive_campaign(const std::function<SampleDraw(Rng&)>& draw,
                                const GridIndicator& indicator, const EvalParams& eval,
                                const CampaignOptions& options) {
  EvaluationReport report;
  report.beta = eval.beta;
  report.z_alpha = eval.z_alpha;
  Estimator est(eval);
  Rng rng(options.seed);

  const std::int64_t cap = options.fixed_n ? *options.fixed_n
                                           : options.max_tests.value_or(eval.max_tests);
  const int workers = std::max(1, options.workers);
  const std::int64_t batch = workers == 1 ? 1 : 256;

  std::vector<SampleDraw> draws;
  std::vector<int> results;
  bool done = false;
  while (!done && est.n() < cap) {
    const std::int64_t want = std::min<std::int64_t>(batch, cap - est.n());
    draws.clear();
    for (std::int64_t i = 0; i < want; ++i) draws.push_back(draw(rng));
    results.assign(draws.size(), 0);
    if (workers == 1) {
      for (size_t i = 0; i < draws.size(); ++i) results[i] = indicator(draws[i].cell);
    } else {
      std::vector<std::future<void>> futures;
      const size_t chunk = (draws.size() + static_cast<size_t>(workers) - 1) /
                           static_cast<size_t>(workers);
      for (int w = 0; w < workers; ++w) {
        const size_t lo = static_cast<size_t>(w) * chunk;
        const size_t hi = std::min(draws.size(), lo + chunk);
        if (lo >= hi) break;
        futures.push_back(std::async(std::launch::async, [&, lo, hi] {
          for (size_t i = lo; i < hi; ++i) results[i] = indicator(draws[i].cell);
        }));
      }
      for (auto& f : futures) f.get();
    }
    for (size_t i = 0; i < draws.size(); ++i) {
      const double term = draws[i].ratio * results[i];
      est.add(term);
      report.trace.push_back({est.n(), std::to_string(draws[i].cell), draws[i].ratio,
                              results[i], est.mu(), est.half_width()});
      if (!options.fixed_n && est.should_stop()) {
        done = true;
        break;
      }
    }
  }
  report.mu = est.mu();
  report.variance = est.variance();
  report.half_width = est.half_width();
  report.n = est.n();
  report.converged = options.fixed_n ? est.half_width() <= eval.beta : done;
  return report;
}

}  // namespace

EvaluationReport run_grid_campaign(const GridSampler& sampler, const ExposureModel& exposure,
                                   const GridIndicator& indicator, const EvalParams& eval,
                                   const CampaignOptions& options) {
  (void)exposure;  // ratios already folded into the sampler draws
  return drive_campaign([&sampler](Rng& rng) { return sampler.draw(rng); }, indicator, eval,
                        options);
}

EvaluationReport naive_grid_campaign(const ExposureModel& exposure,
                                     const GridIndicator& indicator, const EvalParams& eval,
                                     const CampaignOptions& options) {
  std::vector<std::pair<std::int64_t, double>> cells;
  cells.reserve(exposure.mass.size());
  double acc = 0.0;
  for (const auto& [cell, m] : exposure.mass) {
    acc += m;
    cells.emplace_back(cell, acc);
  }
  if (cells.empty()) throw std::invalid_argument("empty exposure");
  const double total = acc;
  auto draw = [&cells, total](Rng& rng) {
    const double r = rng.uniform() * total;
    auto it = std::lower_bound(cells.begin(), cells.end(), r,
                               [](const auto& e, double x) { return e.second < x; });
    if (it == cells.end()) it = std::prev(cells.end());
    return SampleDraw{it->first, 1.0, false};
  };
  return drive_campaign(draw, indicator, eval, options);
}

double exhaustive_truth(const ScenarioSpace& space, const GridIndicator& indicator,
                        const ExposureModel& exposure, std::int64_t cap) {
  if (space.total_count() > cap)
    throw OracleRefusal("space too large for exhaustive evaluation (" +
                        std::to_string(space.total_count()) + " cells, cap " +
                        std::to_string(cap) + ")");
  double total = 0.0;
  for (const auto& [cell, m] : exposure.mass) {
    if (m <= 0.0) continue;
    if (indicator(cell)) total += m;
  }
  return total;
}

// ---- tree campaigns -------------------------------------------------------

namespace {

struct TreeDrawResult {
  double ratio = 1.0;
  int indicator = 0;
  std::string scenario_id;
};

int pick_from(std::span<const double> probs, Rng& rng) {
  double r = rng.uniform();
  for (size_t i = 0; i + 1 < probs.size(); ++i) {
    r -= probs[i];
    if (r < 0.0) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

// Campaign driver for the tree case. The BV policy follows the epsilon-mixed
// posterior (or the plain exposure for the baseline) conditioned on the
// observed, re-discretized state of the vehicle under test; the likelihood
// ratio accumulates per realized step.
class TreeCampaign {
 public:
  TreeCampaign(const TreeCampaignInputs& in, FollowerModel cav, double epsilon, bool greedy)
      : in_(in), cav_(cav), epsilon_(epsilon), greedy_(greedy), u_axis_(action_axis(in.config->cf)),
        n_actions_(in.mdp->n_actions) {
    if (greedy_) {
      posterior_ = posterior_initial(*in_.mdp, *in_.q);
      posterior_cdf_.reserve(posterior_.size());
      double acc = 0.0;
      for (double p : posterior_) {
        acc += p;
        posterior_cdf_.push_back(acc);
      }
      action_posteriors_.resize(in_.mdp->states.size());
    } else {
      double acc = 0.0;
      root_cdf_.reserve(in_.exposure->state_mass.size());
      for (const auto& [cell, m] : in_.exposure->state_mass) {
        acc += m;
        root_cdf_.emplace_back(cell, acc);
      }
      if (root_cdf_.empty()) throw std::invalid_argument("empty state exposure");
    }
  }

  TreeDrawResult episode(Rng& rng) {
    const auto& space = *in_.space;
    const auto& zones = *in_.zones;
    const auto& exposure = *in_.exposure;
    const auto& mdp = *in_.mdp;
    const CaseConfig& config = *in_.config;
    const std::int64_t n_states = space.total_count();
    TreeDrawResult out;

    std::int64_t root;
    double pbar_root;
    if (greedy_) {
      if (rng.uniform() < 1.0 - epsilon_) {
        const double r = rng.uniform() * posterior_cdf_.back();
        const size_t slot = std::min<size_t>(
            static_cast<size_t>(std::lower_bound(posterior_cdf_.begin(), posterior_cdf_.end(), r) -
                                posterior_cdf_.begin()),
            posterior_cdf_.size() - 1);
        root = mdp.states[slot];
      } else {
        root = static_cast<std::int64_t>(rng.uniform_below(static_cast<std::uint64_t>(n_states)));
      }
      const int slot = mdp.slot_of(root);
      const double post_mass = slot >= 0 ? posterior_[static_cast<size_t>(slot)] : 0.0;
      pbar_root = (1.0 - epsilon_) * post_mass + epsilon_ / static_cast<double>(n_states);
    } else {
      const double r = rng.uniform() * root_cdf_.back().second;
      auto it = std::lower_bound(root_cdf_.begin(), root_cdf_.end(), r,
                                 [](const auto& e, double x) { return e.second < x; });
      if (it == root_cdf_.end()) it = std::prev(root_cdf_.end());
      root = it->first;
      pbar_root = exposure.state_prob(root);
    }
    const double p_root = exposure.state_prob(root);
    out.ratio = pbar_root > 0.0 ? p_root / pbar_root : 0.0;
    out.scenario_id = "s" + std::to_string(root);

    if (zones[static_cast<size_t>(root)] == Zone::kCollision) {
      out.indicator = 1;
      return out;
    }
    if (zones[static_cast<size_t>(root)] == Zone::kSafe) return out;

    std::int64_t cell = root;
    for (int epoch = 0; epoch < config.cf.horizon; ++epoch) {
      const std::vector<double> p_u = exposure.action_probs(cell);
      int a;
      double pbar_u;
      if (greedy_) {
        const std::vector<double>* post_u = action_posterior(cell);
        if (post_u) {
          if (rng.uniform() < 1.0 - epsilon_) {
            a = pick_from(*post_u, rng);
          } else {
            a = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(n_actions_)));
          }
          pbar_u = (1.0 - epsilon_) * (*post_u)[static_cast<size_t>(a)] +
                   epsilon_ / static_cast<double>(n_actions_);
        } else {
          // outside the table: uniform exploration fallback
          a = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(n_actions_)));
          pbar_u = 1.0 / static_cast<double>(n_actions_);
        }
      } else {
        a = pick_from(p_u, rng);
        pbar_u = p_u[static_cast<size_t>(a)];
      }
      out.ratio *= pbar_u > 0.0 ? p_u[static_cast<size_t>(a)] / pbar_u : 0.0;
      out.scenario_id += ":" + std::to_string(a);

      TreeStep step;
      if (in_.kernel) {
        step = in_.kernel(cell, a);
      } else {
        const auto values = space.values_of(cell);
        const auto res =
            step_epoch(values[0], values[1], values[2], u_axis_.value(a), cav_, config);
        step.collided = res.collided;
        if (!res.collided) step.next = discretize_state(space, res.v_bv, res.range, res.range_rate);
      }
      if (step.collided) {
        out.indicator = 1;
        return out;
      }
      if (!step.next) return out;  // past the range grid: safe
      if (zones[static_cast<size_t>(*step.next)] == Zone::kCollision) {
        out.indicator = 1;
        return out;
      }
      if (zones[static_cast<size_t>(*step.next)] == Zone::kSafe) return out;
      cell = *step.next;
    }
    return out;  // horizon exhausted without an accident
  }

 private:
  const std::vector<double>* action_posterior(std::int64_t cell) {
    const int slot = in_.mdp->slot_of(cell);
    if (slot < 0 || in_.q->sum_row(slot) <= 0.0) return nullptr;
    auto& cached = action_posteriors_[static_cast<size_t>(slot)];
    if (cached.empty()) cached = posterior_action(*in_.mdp, *in_.q, slot);
    return &cached;
  }

  TreeCampaignInputs in_;
  FollowerModel cav_;
  double epsilon_;
  bool greedy_;
  Dimension u_axis_;
  int n_actions_;
  std::vector<double> posterior_;
  std::vector<double> posterior_cdf_;
  std::vector<std::vector<double>> action_posteriors_;
  std::vector<std::pair<std::int64_t, double>> root_cdf_;
};

EvaluationReport drive_tree_campaign(const TreeCampaignInputs& in, FollowerModel cav,
                                     bool greedy, const EvalParams& eval,
                                     const CampaignOptions& options) {
  EvaluationReport report;
  report.beta = eval.beta;
  report.z_alpha = eval.z_alpha;
  Estimator est(eval);
  Rng rng(options.seed);
  TreeCampaign campaign(in, cav, eval.epsilon, greedy);
  const std::int64_t cap = options.fixed_n ? *options.fixed_n
                                           : options.max_tests.value_or(eval.max_tests);
  while (est.n() < cap) {
    const TreeDrawResult r = campaign.episode(rng);
    est.add(r.ratio * r.indicator);
    report.trace.push_back(
        {est.n(), r.scenario_id, r.ratio, r.indicator, est.mu(), est.half_width()});
    if (!options.fixed_n && est.should_stop()) break;
  }
  report.mu = est.mu();
  report.variance = est.variance();
  report.half_width = est.half_width();
  report.n = est.n();
  report.converged = options.fixed_n ? est.half_width() <= eval.beta : est.should_stop();
  return report;
}

}  // namespace

EvaluationReport run_tree_campaign(const TreeCampaignInputs& in, FollowerModel cav,
                                   const EvalParams& eval, const CampaignOptions& options) {
  return drive_tree_campaign(in, cav, true, eval, options);
}

EvaluationReport naive_tree_campaign(const TreeCampaignInputs& in, FollowerModel cav,
                                     const EvalParams& eval, const CampaignOptions& options) {
  return drive_tree_campaign(in, cav, false, eval, options);
}

}  // namespace tslg
