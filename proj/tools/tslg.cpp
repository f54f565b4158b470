#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "tslg/core.hpp"
#include "tslg/eval.hpp"
#include "tslg/manifest.hpp"
#include "tslg/ndd.hpp"
#include "tslg/objective.hpp"
#include "tslg/rl.hpp"
#include "tslg/vehicle.hpp"

namespace fs = std::filesystem;
using namespace tslg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNotConverged = 3;
constexpr int kExitOracleRefusal = 4;

std::string resolve_out(const std::string& path) {
  const char* dir = std::getenv("TSLG_OUT_DIR");
  if (!dir || *dir == '\0' || fs::path(path).is_absolute()) return path;
  fs::create_directories(dir);
  return (fs::path(dir) / path).string();
}

CaseConfig load_config(const std::string& case_name, const std::string& config_path,
                       std::uint64_t seed) {
  CaseConfig config;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot read config " + config_path);
    json j;
    in >> j;
    config = CaseConfig::from_json(j);
    if (to_string(config.case_id) != case_name)
      throw std::runtime_error("config case does not match --case");
  } else {
    config = CaseConfig::defaults(case_from_string(case_name));
  }
  config.seed = seed;
  return config;
}

ExposureModel grid_exposure_from_events(const CaseConfig& config, const std::string& events_path) {
  const auto events = read_events_csv(events_path, config.case_id);
  if (config.case_id == CaseId::kCutIn) {
    auto hist = build_histogram(events, build_space(config));
    if (hist.rejected > 0)
      std::cerr << "note: " << hist.rejected << " events outside the grid were dropped\n";
    return hist.model;
  }
  // highway exit: car-following records feed the 4-D scenario exposure
  CaseConfig cf_config = CaseConfig::car_following();
  cf_config.cf = config.cf;
  const auto cf_exposure = mdp_exposure(events, build_space(cf_config), config.cf);
  return build_highway_exposure(cf_exposure, build_space(config), build_space(cf_config));
}

struct TreeBundle {
  ScenarioSpace space;
  std::vector<Zone> zones;
  ExposureModel exposure;
};

TreeBundle tree_bundle(const CaseConfig& config, const std::string& events_path) {
  TreeBundle b;
  b.space = build_space(config);
  b.zones = classify_zones(b.space, config);
  const auto events = read_events_csv(events_path, config.case_id);
  b.exposure = mdp_exposure(events, b.space, config.cf);
  return b;
}

int cmd_gen_ndd(const std::string& case_name, std::int64_t n, std::uint64_t seed,
                const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  CaseConfig config = CaseConfig::defaults(case_from_string(case_name));
  config.seed = seed;
  const auto events = synth_events(config, n, seed);
  const std::string out_path = resolve_out(out);
  write_events_csv(out_path, config.case_id, events);

  RunManifest manifest;
  manifest.command = "gen-ndd";
  manifest.config = {{"case", case_name}, {"n", n}, {"generator", kSyntheticNddVersion}};
  manifest.seed = seed;
  manifest.add_output(out_path);
  manifest.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  manifest.save(out_path + ".manifest.json");
  std::cout << "wrote " << events.size() << " events to " << out_path << "\n";
  return kExitOk;
}

int cmd_build_lib(const std::string& case_name, const std::string& events_path,
                  const std::string& config_path, std::uint64_t seed, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  CaseConfig config = load_config(case_name, config_path, seed);
  const std::string out_path = resolve_out(out);

  RunManifest manifest;
  manifest.command = "build-lib";
  manifest.config = config.to_json();
  manifest.seed = seed;
  manifest.inputs.push_back(events_path);

  if (config.case_id == CaseId::kCarFollowing) {
    const TreeBundle b = tree_bundle(config, events_path);
    const MdpTable mdp = build_cf_mdp(b.space, b.zones, b.exposure, config);
    const TdResult td = td_train(mdp, config.cf.alpha_lr, config.cf.delta0, seed,
                                 config.cf.td_step_cap, config.cf.td_window);
    TreeLibrary lib;
    lib.case_id = config.case_id;
    lib.horizon = config.cf.horizon;
    lib.mdp = mdp;
    lib.q = td.q;
    lib.save(out_path);
    manifest.add_output(out_path);
    manifest.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest.save(out_path + ".manifest.json");
    std::cout << "dangerous states: " << mdp.states.size() << "\n"
              << "td updates: " << td.steps << "\n"
              << "library written to " << out_path << "\n";
    return kExitOk;
  }

  const ExposureModel exposure = grid_exposure_from_events(config, events_path);
  GridLibrary lib;
  SearchDiagnostics diag;
  if (config.case_id == CaseId::kCutIn) {
    const auto ctx = CutinContext::make(exposure, config);
    lib = ctx.build_library(&diag);
  } else {
    const auto ctx = HighwayContext::make(exposure, config);
    lib = ctx.build_library(&diag);
  }
  lib.save(out_path);
  manifest.add_output(out_path);
  manifest.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  manifest.save(out_path + ".manifest.json");
  if (diag.empty_warning) std::cerr << "warning: no cell exceeded gamma; library is empty\n";
  const double coverage =
      static_cast<double>(lib.entries.size()) / static_cast<double>(lib.space.total_count());
  std::cout << "library size: " << lib.entries.size() << "\n"
            << "gamma: " << lib.gamma << "\n"
            << "coverage: " << coverage * 100.0 << "%\n"
            << "library written to " << out_path << "\n";
  return kExitOk;
}

int cmd_evaluate(const std::string& case_name, const std::string& lib_path,
                 const std::string& events_path, const std::string& config_path,
                 std::uint64_t seed, int workers, const std::string& baseline,
                 const std::string& oracle, const std::string& cav_name,
                 const std::string& out, const std::string& trace,
                 std::int64_t max_tests_flag) {
  const auto t0 = std::chrono::steady_clock::now();
  CaseConfig config = load_config(case_name, config_path, seed);
  CampaignOptions options;
  options.seed = seed;
  options.workers = workers;
  if (max_tests_flag > 0) options.max_tests = max_tests_flag;
  const FollowerModel cav = follower_from_string(cav_name);

  RunManifest manifest;
  manifest.command = "evaluate";
  manifest.config = config.to_json();
  manifest.seed = seed;
  manifest.inputs.push_back(events_path);

  EvaluationReport report;
  if (config.case_id == CaseId::kCarFollowing) {
    const TreeBundle b = tree_bundle(config, events_path);
    const TreeLibrary lib = TreeLibrary::load(lib_path);
    if (lib.case_id != config.case_id) throw std::runtime_error("library/case mismatch");
    manifest.inputs.push_back(lib_path);
    TreeCampaignInputs in;
    in.mdp = &lib.mdp;
    in.q = &lib.q;
    in.zones = &b.zones;
    in.exposure = &b.exposure;
    in.space = &b.space;
    in.config = &config;
    report = baseline == "ndd" ? naive_tree_campaign(in, cav, config.eval, options)
                               : run_tree_campaign(in, cav, config.eval, options);
  } else {
    const ExposureModel exposure = grid_exposure_from_events(config, events_path);
    GridIndicator indicator;
    if (config.case_id == CaseId::kCutIn) {
      auto ctx = std::make_shared<CutinContext>(CutinContext::make(exposure, config));
      indicator = [ctx, cav](std::int64_t cell) {
        return cav == FollowerModel::kAccAeb ? ctx->cav_accident(cell) : ctx->sm_accident(cell);
      };
    } else {
      auto ctx = std::make_shared<HighwayContext>(HighwayContext::make(exposure, config));
      indicator = [ctx, cav](std::int64_t cell) {
        return cav == FollowerModel::kAccAeb ? ctx->cav_failure(cell) : ctx->sm_failure(cell);
      };
    }
    if (oracle == "exhaustive") {
      try {
        const double truth = exhaustive_truth(build_space(config), indicator, exposure);
        std::cout << "exhaustive truth: " << truth << "\n";
        return kExitOk;
      } catch (const OracleRefusal& e) {
        std::cerr << "oracle refusal: " << e.what() << "\n";
        return kExitOracleRefusal;
      }
    }
    if (baseline == "ndd") {
      report = naive_grid_campaign(exposure, indicator, config.eval, options);
    } else {
      const GridLibrary lib = GridLibrary::load(lib_path);
      if (lib.case_id != config.case_id) throw std::runtime_error("library/case mismatch");
      manifest.inputs.push_back(lib_path);
      const GridSampler sampler(lib, exposure, config.eval.epsilon);
      report = run_grid_campaign(sampler, exposure, indicator, config.eval, options);
    }
  }

  const std::string out_path = resolve_out(out);
  {
    std::ofstream o(out_path);
    if (!o) throw std::runtime_error("cannot write " + out_path);
    o << report.to_json().dump(2) << "\n";
  }
  manifest.add_output(out_path);
  const std::string trace_path = resolve_out(trace.empty() ? out + ".trace.csv" : trace);
  report.write_trace_csv(trace_path);
  manifest.add_output(trace_path);
  manifest.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  manifest.save(out_path + ".manifest.json");

  std::cout << "n: " << report.n << "\n"
            << "mu_hat: " << report.mu << "\n"
            << "half_width: " << report.half_width << "\n"
            << "converged: " << (report.converged ? "yes" : "no") << "\n";
  return report.converged ? kExitOk : kExitNotConverged;
}

int cmd_compare(const std::string& case_name, const std::string& lib_path,
                const std::string& events_path, const std::string& config_path,
                std::uint64_t seed, int workers) {
  CaseConfig config = load_config(case_name, config_path, seed);
  CampaignOptions options;
  options.seed = seed;
  options.workers = workers;
  const FollowerModel cav = FollowerModel::kAccAeb;

  EvaluationReport proposed, naive;
  if (config.case_id == CaseId::kCarFollowing) {
    const TreeBundle b = tree_bundle(config, events_path);
    const TreeLibrary lib = TreeLibrary::load(lib_path);
    TreeCampaignInputs in;
    in.mdp = &lib.mdp;
    in.q = &lib.q;
    in.zones = &b.zones;
    in.exposure = &b.exposure;
    in.space = &b.space;
    in.config = &config;
    proposed = run_tree_campaign(in, cav, config.eval, options);
    naive = naive_tree_campaign(in, cav, config.eval, options);
  } else {
    const ExposureModel exposure = grid_exposure_from_events(config, events_path);
    GridIndicator indicator;
    if (config.case_id == CaseId::kCutIn) {
      auto ctx = std::make_shared<CutinContext>(CutinContext::make(exposure, config));
      indicator = [ctx](std::int64_t cell) { return ctx->cav_accident(cell); };
    } else {
      auto ctx = std::make_shared<HighwayContext>(HighwayContext::make(exposure, config));
      indicator = [ctx](std::int64_t cell) { return ctx->cav_failure(cell); };
    }
    const GridLibrary lib = GridLibrary::load(lib_path);
    const GridSampler sampler(lib, exposure, config.eval.epsilon);
    proposed = run_grid_campaign(sampler, exposure, indicator, config.eval, options);
    naive = naive_grid_campaign(exposure, indicator, config.eval, options);
  }
  std::cout << "proposed: n=" << proposed.n << " mu=" << proposed.mu
            << " converged=" << (proposed.converged ? "yes" : "no") << "\n";
  std::cout << "naive:    n=" << naive.n << " mu=" << naive.mu
            << " converged=" << (naive.converged ? "yes" : "no") << "\n";
  if (proposed.n > 0) {
    std::cout << "acceleration: " << static_cast<double>(naive.n) / static_cast<double>(proposed.n)
              << "x\n";
  }
  return proposed.converged && naive.converged ? kExitOk : kExitNotConverged;
}

int cmd_inspect(const std::string& lib_path, const std::string& dump_config_case,
                const std::string& dump_config_out) {
  if (!dump_config_case.empty()) {
    const CaseConfig config = CaseConfig::defaults(case_from_string(dump_config_case));
    const std::string out = resolve_out(dump_config_out.empty()
                                            ? dump_config_case + "_config.json"
                                            : dump_config_out);
    std::ofstream o(out);
    if (!o) throw std::runtime_error("cannot write " + out);
    o << config.to_json().dump(2) << "\n";
    std::cout << "config written to " << out << "\n";
    return kExitOk;
  }
  if (lib_path.empty()) throw std::runtime_error("inspect needs --lib or --case");
  std::ifstream in(lib_path);
  if (!in) throw std::runtime_error("cannot read " + lib_path);
  json j;
  in >> j;
  if (j.at("kind") == "grid") {
    const GridLibrary lib = GridLibrary::from_json(j);
    lib.validate();
    double v_max = 0.0;
    for (const auto& [cell, v] : lib.entries) v_max = std::max(v_max, v);
    std::cout << "kind: grid\ncase: " << to_string(lib.case_id) << "\n"
              << "entries: " << lib.entries.size() << "\n"
              << "gamma: " << lib.gamma << "\nW: " << lib.w << "\nmax V: " << v_max << "\n"
              << "coverage: "
              << 100.0 * static_cast<double>(lib.entries.size()) /
                     static_cast<double>(lib.space.total_count())
              << "%\n";
  } else {
    const TreeLibrary lib = TreeLibrary::from_json(j);
    double q_sum = 0.0;
    for (size_t slot = 0; slot < lib.mdp.states.size(); ++slot)
      q_sum += lib.q.sum_row(static_cast<int>(slot));
    std::cout << "kind: tree\ncase: " << to_string(lib.case_id) << "\n"
              << "dangerous states: " << lib.mdp.states.size() << "\n"
              << "horizon: " << lib.horizon << "\n"
              << "mean P(S|s): " << q_sum / static_cast<double>(lib.mdp.states.size()) << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"testing-scenario library generation and evaluation"};
  app.require_subcommand(1);

  std::string case_name, events, config_path, out, trace, lib_path;
  std::string baseline, oracle, cav_name = "acc_aeb";
  std::string dump_case, dump_out;
  std::uint64_t seed = 1;
  std::int64_t n = 100000, max_tests = 0;
  int workers = 1;

  auto* gen = app.add_subcommand("gen-ndd", "generate synthetic naturalistic events");
  gen->add_option("--case", case_name, "cutin | highway_exit | car_following")->required();
  gen->add_option("--n", n, "number of events");
  gen->add_option("--seed", seed, "rng seed");
  gen->add_option("--out", out, "output csv")->required();

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--case", case_name)->required();
    cmd->add_option("--events", events, "event csv")->required();
    cmd->add_option("--config", config_path, "config json (defaults when omitted)");
    cmd->add_option("--seed", seed);
  };

  auto* build = app.add_subcommand("build-lib", "search or train the scenario library");
  add_common(build);
  build->add_option("--out", out, "library json")->required();

  auto* train = app.add_subcommand("train-rl", "alias of build-lib for the mdp case");
  add_common(train);
  train->add_option("--out", out, "library json")->required();

  auto* eval_cmd = app.add_subcommand("evaluate", "run an evaluation campaign");
  add_common(eval_cmd);
  eval_cmd->add_option("--lib", lib_path, "library json");
  eval_cmd->add_option("--out", out, "report json")->required();
  eval_cmd->add_option("--trace", trace, "trace csv (default: <out>.trace.csv)");
  eval_cmd->add_option("--cav", cav_name, "vehicle under test: acc_aeb | idm");
  eval_cmd->add_option("--baseline", baseline, "'ndd' for the naive baseline");
  eval_cmd->add_option("--oracle", oracle, "'exhaustive' prints the ground truth");
  eval_cmd->add_option("--workers", workers, "parallel simulation workers");
  eval_cmd->add_option("--max-tests", max_tests, "test cap override");

  auto* compare = app.add_subcommand("compare", "library campaign vs naive baseline");
  add_common(compare);
  compare->add_option("--lib", lib_path)->required();
  compare->add_option("--workers", workers);

  auto* inspect = app.add_subcommand("inspect", "dump library stats or default configs");
  inspect->add_option("--lib", lib_path);
  inspect->add_option("--case", dump_case, "write this case's default config");
  inspect->add_option("--out", dump_out, "config output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_ndd(case_name, n, seed, out);
    if (build->parsed() || train->parsed())
      return cmd_build_lib(case_name, events, config_path, seed, out);
    if (eval_cmd->parsed())
      return cmd_evaluate(case_name, lib_path, events, config_path, seed, workers, baseline,
                          oracle, cav_name, out, trace, max_tests);
    if (compare->parsed())
      return cmd_compare(case_name, lib_path, events, config_path, seed, workers);
    if (inspect->parsed()) return cmd_inspect(lib_path, dump_case, dump_out);
  } catch (const OracleRefusal& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOracleRefusal;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
