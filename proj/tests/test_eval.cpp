#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "tslg/eval.hpp"
#include "tslg/ndd.hpp"
#include "tslg/objective.hpp"

using namespace tslg;

namespace {

ScenarioSpace tiny_space(int n) {
  return ScenarioSpace({{"x", 0.0, static_cast<double>(n - 1), 1.0, false}});
}

ExposureModel uniform_exposure(const ScenarioSpace& space) {
  ExposureModel m;
  m.space = space;
  const double p = 1.0 / static_cast<double>(space.total_count());
  for (std::int64_t c = 0; c < space.total_count(); ++c) m.mass[c] = p;
  return m;
}

GridLibrary two_cell_library(const ScenarioSpace& space) {
  GridLibrary lib;
  lib.case_id = CaseId::kCutIn;
  lib.space = space;
  lib.gamma = 0.05;
  lib.entries = {{2, 0.3}, {7, 0.1}};
  lib.w = 0.4;
  return lib;
}

}  // namespace

TEST_CASE("estimator basics") {
  EvalParams eval;
  eval.min_tests = 2;
  Estimator est(eval);
  est.add(0.2);
  est.add(0.0);
  CHECK(est.mu() == doctest::Approx(0.1));

  Estimator flat(eval);
  for (int i = 0; i < 10; ++i) flat.add(0.5);
  CHECK(flat.variance() == doctest::Approx(0.0));
  CHECK(flat.half_width() == doctest::Approx(0.0));

  Estimator zero(eval);
  zero.add(0.0);
  zero.add(0.0);
  CHECK(std::isinf(zero.half_width()));
  CHECK(!zero.should_stop());
}

TEST_CASE("epsilon-greedy sampler masses") {
  const auto space = tiny_space(10);
  const auto exposure = uniform_exposure(space);
  const auto lib = two_cell_library(space);
  const GridSampler sampler(lib, exposure, 0.05);

  CHECK(sampler.pbar(2) == doctest::Approx(0.7125));
  CHECK(sampler.pbar(7) == doctest::Approx(0.2375));
  for (std::int64_t c : {0, 1, 3, 4, 5, 6, 8, 9})
    CHECK(sampler.pbar(c) == doctest::Approx(0.00625));
  CHECK(sampler.total_mass() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("uniform criticality gives uniform in-library mass") {
  const auto space = tiny_space(10);
  const auto exposure = uniform_exposure(space);
  GridLibrary lib;
  lib.case_id = CaseId::kCutIn;
  lib.space = space;
  lib.gamma = 0.0;
  lib.entries = {{1, 0.2}, {4, 0.2}, {8, 0.2}};
  lib.w = 0.6;
  const GridSampler sampler(lib, exposure, 0.1);
  for (std::int64_t c : {1, 4, 8}) CHECK(sampler.pbar(c) == doctest::Approx(0.9 / 3.0));
}

TEST_CASE("sampler draw ratios") {
  const auto space = tiny_space(2);
  ExposureModel exposure;
  exposure.space = space;
  exposure.mass = {{0, 0.9}, {1, 0.1}};
  GridLibrary lib;
  lib.case_id = CaseId::kCutIn;
  lib.space = space;
  lib.gamma = 0.0;
  lib.entries = {{0, 0.9}};
  lib.w = 0.9;
  const GridSampler sampler(lib, exposure, 0.1);
  Rng rng(5);
  bool saw_member = false, saw_explored = false;
  for (int i = 0; i < 200; ++i) {
    const auto d = sampler.draw(rng);
    if (d.cell == 0) {
      saw_member = true;
      CHECK(d.ratio == doctest::Approx(0.9 / 0.9));  // P(a) / 0.9
    } else {
      saw_explored = true;
      CHECK(d.explored);
      CHECK(d.ratio == doctest::Approx(0.1 / 0.1));
    }
  }
  CHECK(saw_member);
  CHECK(saw_explored);
}

TEST_CASE("zero-exposure explored cells contribute nothing") {
  const auto space = tiny_space(4);
  ExposureModel exposure;
  exposure.space = space;
  exposure.mass = {{0, 1.0}};  // all mass on the library cell
  GridLibrary lib;
  lib.case_id = CaseId::kCutIn;
  lib.space = space;
  lib.gamma = 0.0;
  lib.entries = {{0, 1.0}};
  lib.w = 1.0;
  const GridSampler sampler(lib, exposure, 0.3);
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const auto d = sampler.draw(rng);
    if (d.explored) CHECK(d.ratio == 0.0);
  }
}

TEST_CASE("draw frequencies match the sampler masses within 3 sigma") {
  const auto space = tiny_space(10);
  const auto exposure = uniform_exposure(space);
  const auto lib = two_cell_library(space);
  const GridSampler sampler(lib, exposure, 0.05);
  Rng rng(31);
  std::map<std::int64_t, std::int64_t> counts;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) ++counts[sampler.draw(rng).cell];
  for (std::int64_t c = 0; c < 10; ++c) {
    const double p = sampler.pbar(c);
    const double sigma = std::sqrt(p * (1.0 - p) * n);
    CHECK(std::abs(static_cast<double>(counts[c]) - p * n) <= 3.0 * sigma);
  }
}

TEST_CASE("weight identity: the mean importance ratio is one") {
  const auto space = tiny_space(10);
  const auto exposure = uniform_exposure(space);
  const auto lib = two_cell_library(space);
  const GridSampler sampler(lib, exposure, 0.05);
  Rng rng(17);
  const int n = 1000000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = sampler.draw(rng).ratio;
    sum += r;
    sum_sq += r * r;
  }
  const double mean = sum / n;
  const double sd = std::sqrt((sum_sq / n - mean * mean) / n);
  CHECK(std::abs(mean - 1.0) <= 3.0 * sd);
}

TEST_CASE("exhaustive truth") {
  const auto space = tiny_space(4);
  ExposureModel exposure;
  exposure.space = space;
  exposure.mass = {{0, 0.99}, {2, 0.01}};

  SUBCASE("single accident cell") {
    const double truth =
        exhaustive_truth(space, [](std::int64_t c) { return c == 2 ? 1 : 0; }, exposure);
    CHECK(truth == doctest::Approx(0.01));
  }
  SUBCASE("accident region disjoint from the support") {
    const double truth =
        exhaustive_truth(space, [](std::int64_t c) { return c == 3 ? 1 : 0; }, exposure);
    CHECK(truth == 0.0);
  }
  SUBCASE("refusal above the cap") {
    const auto big = build_space(CaseConfig::highway_exit());
    ExposureModel big_exposure;
    big_exposure.space = big;
    CHECK_THROWS_AS(exhaustive_truth(big, [](std::int64_t) { return 0; }, big_exposure),
                    OracleRefusal);
  }
}

TEST_CASE("stopping rule fires exactly at the threshold crossing") {
  const auto space = tiny_space(6);
  ExposureModel exposure;
  exposure.space = space;
  // accident cell carries a third of the mass so mu converges quickly
  exposure.mass = {{0, 2.0 / 3.0}, {1, 1.0 / 3.0}};
  EvalParams eval;
  eval.beta = 0.3;
  eval.min_tests = 30;
  CampaignOptions options;
  options.seed = 9;
  const auto report = naive_grid_campaign(
      exposure, [](std::int64_t c) { return c == 1 ? 1 : 0; }, eval, options);
  REQUIRE(report.converged);
  CHECK(report.half_width <= eval.beta);
  REQUIRE(report.n >= eval.min_tests);
  // the row before the stop was still above beta (or the minimum-n guard)
  const auto& trace = report.trace;
  REQUIRE(static_cast<std::int64_t>(trace.size()) == report.n);
  const auto& prev = trace[trace.size() - 2];
  if (prev.test_index >= eval.min_tests) CHECK(prev.half_width > eval.beta);
  // mu is the running mean at every prefix
  double acc = 0.0;
  for (const auto& row : trace) {
    acc += row.weight * row.indicator;
    CHECK(row.mu_hat == doctest::Approx(acc / static_cast<double>(row.test_index)));
  }
}

TEST_CASE("naive tests scale inversely with the accident rate") {
  EvalParams eval;
  eval.beta = 0.3;
  eval.min_tests = 10;
  auto mean_tests = [&](double p) {
    const auto space = tiny_space(2);
    ExposureModel exposure;
    exposure.space = space;
    exposure.mass = {{0, 1.0 - p}, {1, p}};
    double total = 0.0;
    const int runs = 20;
    for (int s = 0; s < runs; ++s) {
      CampaignOptions options;
      options.seed = 100 + static_cast<std::uint64_t>(s);
      const auto report = naive_grid_campaign(
          exposure, [](std::int64_t c) { return c == 1 ? 1 : 0; }, eval, options);
      total += static_cast<double>(report.n);
    }
    return total / runs;
  };
  const double n_dense = mean_tests(0.02);
  const double n_rare = mean_tests(0.002);
  const double ratio = n_rare / n_dense;
  CHECK(ratio > 4.0);
  CHECK(ratio < 30.0);
}

TEST_CASE("grid campaign is reproducible and worker-count independent") {
  const auto space = tiny_space(10);
  const auto exposure = uniform_exposure(space);
  const auto lib = two_cell_library(space);
  const GridSampler sampler(lib, exposure, 0.05);
  EvalParams eval;
  eval.beta = 0.3;
  auto indicator = [](std::int64_t c) { return c == 2 ? 1 : 0; };
  CampaignOptions a;
  a.seed = 4;
  CampaignOptions b;
  b.seed = 4;
  b.workers = 4;
  const auto ra = run_grid_campaign(sampler, exposure, indicator, eval, a);
  const auto rb = run_grid_campaign(sampler, exposure, indicator, eval, b);
  CHECK(ra.n == rb.n);
  CHECK(ra.mu == rb.mu);
  CHECK(ra.variance == rb.variance);
}

// ---- tree-case fixtures ---------------------------------------------------

namespace {

struct ToyTree {
  ScenarioSpace space{{{"s", 0.0, 3.0, 1.0, false}}};  // 4 states
  std::vector<Zone> zones{Zone::kDangerous, Zone::kDangerous, Zone::kSafe, Zone::kCollision};
  MdpTable mdp;
  QTable q;
  ExposureModel exposure;
  CaseConfig config = CaseConfig::car_following();

  ToyTree() {
    mdp.n_actions = 2;
    mdp.horizon = 3;
    mdp.states = {0, 1};
    mdp.edges.resize(4);
    // state 0: action 0 -> state 1, action 1 -> safe
    mdp.edges[0] = {MdpTable::Outcome::kNext, 1};
    mdp.edges[1] = {MdpTable::Outcome::kSafe, -1};
    // state 1: action 0 -> collision, action 1 -> safe
    mdp.edges[2] = {MdpTable::Outcome::kCollision, -1};
    mdp.edges[3] = {MdpTable::Outcome::kSafe, -1};
    mdp.p_action = {{0.6, 0.4}, {0.3, 0.7}};
    mdp.p_state = {0.05, 0.15};
    q = backward_induction_q(mdp);

    exposure.kind = ExposureModel::Kind::kMdp;
    exposure.space = space;
    exposure.action_count = 2;
    exposure.state_mass = {{0, 0.05}, {1, 0.15}, {2, 0.75}, {3, 0.05}};
    exposure.action_mass[0] = {0.6, 0.4};
    exposure.action_mass[1] = {0.3, 0.7};
    exposure.action_mass[2] = {0.5, 0.5};
    exposure.action_mass[3] = {0.5, 0.5};
    config.cf.horizon = 3;
  }

  TreeCampaignInputs inputs() {
    TreeCampaignInputs in;
    in.mdp = &mdp;
    in.q = &q;
    in.zones = &zones;
    in.exposure = &exposure;
    in.space = &space;
    in.config = &config;
    in.kernel = [this](std::int64_t state, int action) {
      TreeStep step;
      const int slot = mdp.slot_of(state);
      if (slot < 0) {  // exploring outside the table: drop to safe
        step.next = 2;
        return step;
      }
      const auto& e = mdp.edge(slot, action);
      switch (e.outcome) {
        case MdpTable::Outcome::kCollision: step.collided = true; break;
        case MdpTable::Outcome::kSafe: step.next = 2; break;
        case MdpTable::Outcome::kNext: step.next = mdp.states[static_cast<size_t>(e.next)]; break;
      }
      return step;
    };
    return in;
  }
};

}  // namespace

TEST_CASE("tree likelihood ratios match per-step enumeration exactly") {
  ToyTree toy;
  auto in = toy.inputs();
  EvalParams eval;
  eval.epsilon = 0.1;
  eval.beta = 0.2;
  CampaignOptions options;
  options.seed = 21;
  options.fixed_n = 4000;
  const auto report = run_tree_campaign(in, FollowerModel::kIdmSurrogate, eval, options);

  const auto posterior = posterior_initial(toy.mdp, toy.q);
  const double n_states = static_cast<double>(toy.space.total_count());
  const double n_actions = 2.0;
  for (const auto& row : report.trace) {
    // scenario ids look like s<root>:<a0>:<a1>...
    std::vector<std::int64_t> parts;
    std::string token;
    for (char ch : row.scenario_id) {
      if (ch == 's') continue;
      if (ch == ':') {
        parts.push_back(std::stoll(token));
        token.clear();
      } else {
        token += ch;
      }
    }
    parts.push_back(std::stoll(token));
    const std::int64_t root = parts[0];
    const int slot = toy.mdp.slot_of(root);
    const double post_mass = slot >= 0 ? posterior[static_cast<size_t>(slot)] : 0.0;
    double expected = toy.exposure.state_prob(root) /
                      ((1.0 - eval.epsilon) * post_mass + eval.epsilon / n_states);
    std::int64_t state = root;
    for (size_t i = 1; i < parts.size(); ++i) {
      const int a = static_cast<int>(parts[i]);
      const double p_u = toy.exposure.action_probs(state)[static_cast<size_t>(a)];
      const int s_slot = toy.mdp.slot_of(state);
      double pbar_u;
      if (s_slot >= 0 && toy.q.sum_row(s_slot) > 0.0) {
        const auto post_u = posterior_action(toy.mdp, toy.q, s_slot);
        pbar_u = (1.0 - eval.epsilon) * post_u[static_cast<size_t>(a)] + eval.epsilon / n_actions;
      } else {
        pbar_u = 1.0 / n_actions;
      }
      expected *= p_u / pbar_u;
      const auto step = in.kernel(state, a);
      if (step.collided) break;
      state = *step.next;
      if (toy.zones[static_cast<size_t>(state)] != Zone::kDangerous) break;
    }
    CHECK(row.weight == expected);  // bitwise: same product order
  }
}

TEST_CASE("tree campaign estimates the enumerated accident rate") {
  ToyTree toy;
  auto in = toy.inputs();
  // exhaustive truth over the toy tree: P(A) = P(s0) P(u0|s0) P(u0|s1)
  //   + P(s1) P(u0|s1) + P(s3)
  const double truth = 0.05 * 0.6 * 0.3 + 0.15 * 0.3 + 0.05;
  EvalParams eval;
  eval.epsilon = 0.1;
  eval.beta = 0.2;
  CampaignOptions options;
  options.seed = 33;
  options.fixed_n = 60000;
  const auto greedy = run_tree_campaign(in, FollowerModel::kIdmSurrogate, eval, options);
  CHECK(greedy.mu == doctest::Approx(truth).epsilon(0.05));
  const auto naive = naive_tree_campaign(in, FollowerModel::kIdmSurrogate, eval, options);
  CHECK(naive.mu == doctest::Approx(truth).epsilon(0.05));
}
