#include "tslg/core.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace tslg {

std::string to_string(CaseId id) {
  switch (id) {
    case CaseId::kCutIn: return "cutin";
    case CaseId::kHighwayExit: return "highway_exit";
    case CaseId::kCarFollowing: return "car_following";
  }
  throw std::invalid_argument("unknown case id");
}

CaseId case_from_string(const std::string& s) {
  if (s == "cutin") return CaseId::kCutIn;
  if (s == "highway_exit") return CaseId::kHighwayExit;
  if (s == "car_following") return CaseId::kCarFollowing;
  throw std::invalid_argument("unknown case id: " + s);
}

namespace {
// tolerant of the step not being exactly representable
constexpr double kGridEps = 1e-9;
}  // namespace

int Dimension::count() const {
  const int spans = static_cast<int>(std::floor((upper - lower) / step + kGridEps));
  return half_open ? spans : spans + 1;
}

double Dimension::value(int i) const {
  return half_open ? lower + (i + 1) * step : lower + i * step;
}

std::optional<int> Dimension::locate(double v) const {
  const int n = count();
  int i;
  if (half_open) {
    if (v <= lower + kGridEps) return std::nullopt;
    i = static_cast<int>(std::ceil((v - lower) / step - kGridEps)) - 1;
  } else {
    i = static_cast<int>(std::llround((v - lower) / step));
    if (i >= 0 && i < n && std::abs(v - value(i)) > step / 2 + kGridEps) return std::nullopt;
  }
  if (i < 0 || i >= n) return std::nullopt;
  return i;
}

ScenarioSpace::ScenarioSpace(std::vector<Dimension> dims,
                             std::map<std::string, double> fixed_params)
    : dims_(std::move(dims)), fixed_params_(std::move(fixed_params)) {
  if (dims_.empty()) throw std::invalid_argument("scenario space needs at least one dimension");
  for (const auto& d : dims_) {
    if (!(d.step > 0.0)) throw std::invalid_argument("dimension step must be positive: " + d.name);
    if (!(d.upper > d.lower)) throw std::invalid_argument("dimension bounds invalid: " + d.name);
  }
  strides_.assign(dims_.size(), 1);
  for (int i = static_cast<int>(dims_.size()) - 2; i >= 0; --i) {
    strides_[static_cast<size_t>(i)] =
        strides_[static_cast<size_t>(i) + 1] * dims_[static_cast<size_t>(i) + 1].count();
  }
  total_ = strides_[0] * dims_[0].count();
}

std::int64_t ScenarioSpace::index_of(std::span<const int> coords) const {
  if (coords.size() != dims_.size()) throw std::invalid_argument("coordinate rank mismatch");
  std::int64_t idx = 0;
  for (size_t i = 0; i < dims_.size(); ++i) {
    const int c = coords[i];
    if (c < 0 || c >= dims_[i].count()) throw std::domain_error("coordinate out of range");
    idx += strides_[i] * c;
  }
  return idx;
}

std::vector<int> ScenarioSpace::coords_of(std::int64_t index) const {
  if (!contains(index)) throw std::domain_error("cell index out of range");
  std::vector<int> coords(dims_.size());
  for (size_t i = 0; i < dims_.size(); ++i) {
    coords[i] = static_cast<int>(index / strides_[i]);
    index %= strides_[i];
  }
  return coords;
}

std::vector<double> ScenarioSpace::values_of(std::int64_t index) const {
  const auto coords = coords_of(index);
  std::vector<double> values(coords.size());
  for (size_t i = 0; i < coords.size(); ++i) values[i] = dims_[i].value(coords[i]);
  return values;
}

std::optional<std::int64_t> ScenarioSpace::locate(std::span<const double> values) const {
  if (values.size() != dims_.size()) throw std::invalid_argument("value rank mismatch");
  std::int64_t idx = 0;
  for (size_t i = 0; i < dims_.size(); ++i) {
    const auto c = dims_[i].locate(values[i]);
    if (!c) return std::nullopt;
    idx += strides_[i] * *c;
  }
  return idx;
}

json ScenarioSpace::to_json() const {
  json dims = json::array();
  for (const auto& d : dims_) {
    dims.push_back({{"name", d.name},
                    {"lower", d.lower},
                    {"upper", d.upper},
                    {"step", d.step},
                    {"half_open", d.half_open}});
  }
  return {{"dims", dims}, {"fixed_params", fixed_params_}};
}

ScenarioSpace ScenarioSpace::from_json(const json& j) {
  std::vector<Dimension> dims;
  for (const auto& dj : j.at("dims")) {
    dims.push_back({dj.at("name").get<std::string>(), dj.at("lower").get<double>(),
                    dj.at("upper").get<double>(), dj.at("step").get<double>(),
                    dj.at("half_open").get<bool>()});
  }
  std::map<std::string, double> fixed;
  if (j.contains("fixed_params")) fixed = j.at("fixed_params").get<std::map<std::string, double>>();
  return ScenarioSpace(std::move(dims), std::move(fixed));
}

double ExposureModel::prob(std::int64_t cell) const {
  if (!space.contains(cell)) throw std::domain_error("cell outside scenario space");
  const auto it = mass.find(cell);
  return it == mass.end() ? 0.0 : it->second;
}

double ExposureModel::state_prob(std::int64_t state) const {
  if (!space.contains(state)) throw std::domain_error("state outside space");
  const auto it = state_mass.find(state);
  return it == state_mass.end() ? 0.0 : it->second;
}

std::vector<double> ExposureModel::action_probs(std::int64_t state) const {
  if (!space.contains(state)) throw std::domain_error("state outside space");
  const int v_cell = space.coords_of(state)[0];
  const auto it = action_mass.find(v_cell);
  if (it == action_mass.end()) {
    // unobserved speed bucket: uniform over actions
    return std::vector<double>(static_cast<size_t>(action_count),
                               1.0 / static_cast<double>(action_count));
  }
  return it->second;
}

void ExposureModel::validate() const {
  double total = 0.0;
  for (const auto& [cell, m] : mass) {
    if (m < 0.0) throw std::runtime_error("negative exposure mass");
    if (!space.contains(cell)) throw std::runtime_error("exposure cell outside space");
    total += m;
  }
  if (kind == Kind::kGrid) {
    if (std::abs(total - 1.0) > 1e-9) throw std::runtime_error("grid exposure does not sum to 1");
    return;
  }
  double state_total = 0.0;
  for (const auto& [s, m] : state_mass) {
    if (m < 0.0) throw std::runtime_error("negative state mass");
    state_total += m;
  }
  if (std::abs(state_total - 1.0) > 1e-9) throw std::runtime_error("state mass does not sum to 1");
  for (const auto& [v, row] : action_mass) {
    double row_total = 0.0;
    for (double p : row) {
      if (p < 0.0) throw std::runtime_error("negative action mass");
      row_total += p;
    }
    if (std::abs(row_total - 1.0) > 1e-9)
      throw std::runtime_error("conditional action mass does not sum to 1");
  }
}

bool GridLibrary::contains(std::int64_t cell) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), cell,
                             [](const auto& e, std::int64_t c) { return e.first < c; });
  return it != entries.end() && it->first == cell;
}

void GridLibrary::validate() const {
  double total = 0.0;
  for (const auto& [cell, v] : entries) {
    if (!space.contains(cell)) throw std::runtime_error("library cell outside space");
    if (!(v > gamma)) throw std::runtime_error("library entry at or below gamma");
    total += v;
  }
  const double scale = std::max(std::abs(w), 1e-300);
  if (std::abs(total - w) / scale > 1e-12)
    throw std::runtime_error("library normalization W inconsistent with entries");
}

json GridLibrary::to_json() const {
  json entries_j = json::array();
  for (const auto& [cell, v] : entries) entries_j.push_back({{"cell", cell}, {"v", v}});
  return {{"kind", "grid"},
          {"case", to_string(case_id)},
          {"space", space.to_json()},
          {"gamma", gamma},
          {"entries", entries_j},
          {"w", w}};
}

GridLibrary GridLibrary::from_json(const json& j) {
  GridLibrary lib;
  lib.case_id = case_from_string(j.at("case").get<std::string>());
  lib.space = ScenarioSpace::from_json(j.at("space"));
  lib.gamma = j.at("gamma").get<double>();
  lib.w = j.at("w").get<double>();
  for (const auto& ej : j.at("entries")) {
    lib.entries.emplace_back(ej.at("cell").get<std::int64_t>(), ej.at("v").get<double>());
  }
  return lib;
}

void GridLibrary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json().dump(2) << "\n";
}

GridLibrary GridLibrary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  json j;
  in >> j;
  return from_json(j);
}

CaseConfig CaseConfig::cut_in() {
  CaseConfig c;
  c.case_id = CaseId::kCutIn;
  c.cav.acc = c.idm;
  c.cav.acc.t_headway = 0.6;
  c.eval.epsilon = 0.05;
  c.eval.beta = 0.3;
  return c;
}

CaseConfig CaseConfig::highway_exit() {
  CaseConfig c;
  c.case_id = CaseId::kHighwayExit;
  c.cav.acc = c.idm;
  c.cav.acc.t_headway = 0.6;
  c.eval.epsilon = 0.10;
  c.eval.beta = 0.2;
  return c;
}

CaseConfig CaseConfig::car_following() {
  CaseConfig c;
  c.case_id = CaseId::kCarFollowing;
  c.cav.acc = c.idm;
  c.cav.acc.t_headway = 0.6;
  c.eval.epsilon = 0.1;
  c.eval.beta = 0.2;
  return c;
}

CaseConfig CaseConfig::defaults(CaseId id) {
  switch (id) {
    case CaseId::kCutIn: return cut_in();
    case CaseId::kHighwayExit: return highway_exit();
    case CaseId::kCarFollowing: return car_following();
  }
  throw std::invalid_argument("unknown case id");
}

namespace {

json idm_to_json(const IdmParams& p) {
  return {{"alpha", p.alpha},   {"beta", p.beta},     {"c", p.c},
          {"s0", p.s0},         {"length", p.length}, {"t_headway", p.t_headway},
          {"b", p.b},           {"v_min", p.v_min},   {"v_max", p.v_max},
          {"a_min", p.a_min},   {"a_max", p.a_max},   {"d_acci", p.d_acci}};
}

IdmParams idm_from_json(const json& j) {
  IdmParams p;
  p.alpha = j.at("alpha");
  p.beta = j.at("beta");
  p.c = j.at("c");
  p.s0 = j.at("s0");
  p.length = j.at("length");
  p.t_headway = j.at("t_headway");
  p.b = j.at("b");
  p.v_min = j.at("v_min");
  p.v_max = j.at("v_max");
  p.a_min = j.at("a_min");
  p.a_max = j.at("a_max");
  p.d_acci = j.at("d_acci");
  return p;
}

}  // namespace

json CaseConfig::to_json() const {
  json j;
  j["case"] = to_string(case_id);
  j["seed"] = seed;
  j["idm"] = idm_to_json(idm);
  j["cav"] = {{"acc", idm_to_json(cav.acc)}, {"aeb_trigger_s", cav.aeb_trigger_s}};
  j["cutin"] = {{"u_i", cutin.u_i},
                {"u_f_range", cutin.u_f_range},
                {"u_f_range_rate", cutin.u_f_range_rate},
                {"weight", cutin.weight},
                {"common_threshold", cutin.common_threshold},
                {"episode_s", cutin.episode_s},
                {"dt_sim", cutin.dt_sim},
                {"ego_v0", cutin.ego_v0},
                {"search_starts", cutin.search_starts},
                {"gamma_m", cutin.gamma_m}};
  j["highway"] = {{"p0", highway.p0},
                  {"v0", highway.v0},
                  {"d_cf", highway.d_cf},
                  {"dt", highway.dt},
                  {"dp", highway.dp},
                  {"t_max", highway.t_max},
                  {"exit_l", highway.exit_l},
                  {"a_min", highway.a_min},
                  {"a_max", highway.a_max},
                  {"v_env_min", highway.v_env_min},
                  {"v_env_max", highway.v_env_max},
                  {"t_min_gap", highway.t_min_gap},
                  {"u_s", highway.u_s},
                  {"weight", highway.weight},
                  {"search_starts", highway.search_starts},
                  {"gamma_m", highway.gamma_m},
                  {"sm_accels", highway.sm_accels},
                  {"sm_politeness", highway.sm_politeness},
                  {"cav_accels", highway.cav_accels},
                  {"cav_politeness", highway.cav_politeness},
                  {"cav_t_min_gap", highway.cav_t_min_gap}};
  j["car_following"] = {{"v_lo", cf.v_lo},
                        {"v_hi", cf.v_hi},
                        {"v_step", cf.v_step},
                        {"r_hi", cf.r_hi},
                        {"r_step", cf.r_step},
                        {"rdot_lo", cf.rdot_lo},
                        {"rdot_hi", cf.rdot_hi},
                        {"rdot_step", cf.rdot_step},
                        {"u_lo", cf.u_lo},
                        {"u_hi", cf.u_hi},
                        {"u_step", cf.u_step},
                        {"horizon", cf.horizon},
                        {"epoch_s", cf.epoch_s},
                        {"dt_sim", cf.dt_sim},
                        {"alpha_lr", cf.alpha_lr},
                        {"delta0", cf.delta0},
                        {"td_step_cap", cf.td_step_cap},
                        {"td_window", cf.td_window},
                        {"ps_episodes", cf.ps_episodes},
                        {"worst_case_rollout_s", cf.worst_case_rollout_s}};
  j["eval"] = {{"epsilon", eval.epsilon},
               {"beta", eval.beta},
               {"z_alpha", eval.z_alpha},
               {"min_tests", eval.min_tests},
               {"max_tests", eval.max_tests}};
  return j;
}

CaseConfig CaseConfig::from_json(const json& j) {
  CaseConfig c = defaults(case_from_string(j.at("case").get<std::string>()));
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("idm")) c.idm = idm_from_json(j.at("idm"));
  if (j.contains("cav")) {
    c.cav.acc = idm_from_json(j.at("cav").at("acc"));
    c.cav.aeb_trigger_s = j.at("cav").at("aeb_trigger_s");
  }
  if (j.contains("cutin")) {
    const json& cj = j.at("cutin");
    c.cutin.u_i = cj.at("u_i");
    c.cutin.u_f_range = cj.at("u_f_range");
    c.cutin.u_f_range_rate = cj.at("u_f_range_rate");
    c.cutin.weight = cj.at("weight");
    c.cutin.common_threshold = cj.at("common_threshold");
    c.cutin.episode_s = cj.at("episode_s");
    c.cutin.dt_sim = cj.at("dt_sim");
    c.cutin.ego_v0 = cj.at("ego_v0");
    c.cutin.search_starts = cj.at("search_starts");
    c.cutin.gamma_m = cj.at("gamma_m");
  }
  if (j.contains("highway")) {
    const json& hj = j.at("highway");
    c.highway.p0 = hj.at("p0");
    c.highway.v0 = hj.at("v0");
    c.highway.d_cf = hj.at("d_cf");
    c.highway.dt = hj.at("dt");
    c.highway.dp = hj.at("dp");
    c.highway.t_max = hj.at("t_max");
    c.highway.exit_l = hj.at("exit_l");
    c.highway.a_min = hj.at("a_min");
    c.highway.a_max = hj.at("a_max");
    c.highway.v_env_min = hj.at("v_env_min");
    c.highway.v_env_max = hj.at("v_env_max");
    c.highway.t_min_gap = hj.at("t_min_gap");
    c.highway.u_s = hj.at("u_s");
    c.highway.weight = hj.at("weight");
    c.highway.search_starts = hj.at("search_starts");
    c.highway.gamma_m = hj.at("gamma_m");
    c.highway.sm_accels = hj.at("sm_accels").get<std::vector<double>>();
    c.highway.sm_politeness = hj.at("sm_politeness");
    c.highway.cav_accels = hj.at("cav_accels").get<std::vector<double>>();
    c.highway.cav_politeness = hj.at("cav_politeness");
    c.highway.cav_t_min_gap = hj.at("cav_t_min_gap");
  }
  if (j.contains("car_following")) {
    const json& fj = j.at("car_following");
    c.cf.v_lo = fj.at("v_lo");
    c.cf.v_hi = fj.at("v_hi");
    c.cf.v_step = fj.at("v_step");
    c.cf.r_hi = fj.at("r_hi");
    c.cf.r_step = fj.at("r_step");
    c.cf.rdot_lo = fj.at("rdot_lo");
    c.cf.rdot_hi = fj.at("rdot_hi");
    c.cf.rdot_step = fj.at("rdot_step");
    c.cf.u_lo = fj.at("u_lo");
    c.cf.u_hi = fj.at("u_hi");
    c.cf.u_step = fj.at("u_step");
    c.cf.horizon = fj.at("horizon");
    c.cf.epoch_s = fj.at("epoch_s");
    c.cf.dt_sim = fj.at("dt_sim");
    c.cf.alpha_lr = fj.at("alpha_lr");
    c.cf.delta0 = fj.at("delta0");
    c.cf.td_step_cap = fj.at("td_step_cap");
    c.cf.td_window = fj.at("td_window");
    c.cf.ps_episodes = fj.at("ps_episodes");
    c.cf.worst_case_rollout_s = fj.at("worst_case_rollout_s");
  }
  if (j.contains("eval")) {
    const json& ej = j.at("eval");
    c.eval.epsilon = ej.at("epsilon");
    c.eval.beta = ej.at("beta");
    c.eval.z_alpha = ej.at("z_alpha");
    c.eval.min_tests = ej.at("min_tests");
    c.eval.max_tests = ej.at("max_tests");
  }
  return c;
}

ScenarioSpace build_space(const CaseConfig& config) {
  switch (config.case_id) {
    case CaseId::kCutIn:
      // range (0, 90] x 2 m, range rate [-20, 10] x 0.4 m/s
      return ScenarioSpace({{"range", 0.0, 90.0, 2.0, true},
                            {"range_rate", -20.0, 10.0, 0.4, false}},
                           {{"ego_v0", config.cutin.ego_v0}});
    case CaseId::kHighwayExit:
      return ScenarioSpace({{"p01", -100.0, 200.0, config.highway.dp, false},
                            {"v01", 20.0, 40.0, 1.0, false},
                            {"p02", -100.0, 200.0, config.highway.dp, false},
                            {"v02", 20.0, 40.0, 1.0, false}},
                           {{"p0", config.highway.p0}, {"v0", config.highway.v0}});
    case CaseId::kCarFollowing:
      return ScenarioSpace(
          {{"v_bv", config.cf.v_lo, config.cf.v_hi, config.cf.v_step, false},
           {"range", 0.0, config.cf.r_hi, config.cf.r_step, true},
           {"range_rate", config.cf.rdot_lo, config.cf.rdot_hi, config.cf.rdot_step, false}});
  }
  throw std::invalid_argument("unknown case id");
}

Dimension action_axis(const CarFollowingParams& cf) {
  return {"u", cf.u_lo, cf.u_hi, cf.u_step, false};
}

}  // namespace tslg
