#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tslg/vehicle.hpp"

using namespace tslg;

namespace {
const CaseConfig kConfig = CaseConfig::cut_in();
}

TEST_CASE("idm free flow at desired speed") {
  // spacing term vanishes for a huge gap; v == beta kills the free-flow term
  const auto u = idm_accel(18.0, 1e9, 0.0, kConfig.idm);
  REQUIRE(u.has_value());
  CHECK(*u == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(*u <= 0.0);
}

TEST_CASE("idm standing start accelerates at alpha") {
  const auto u = idm_accel(0.0, 1e9, 0.0, kConfig.idm);
  REQUIRE(u.has_value());
  CHECK(*u == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("idm at the desired gap brakes by the gap term") {
  // v = 18: s* = s0 + vT = 20; placing R = L + s* makes the gap ratio one,
  // so u = alpha (1 - 1 - 1) = -alpha
  const double desired = 2.0 + 18.0 * 1.0;
  const auto u = idm_accel(18.0, kConfig.idm.length + desired, 0.0, kConfig.idm);
  REQUIRE(u.has_value());
  CHECK(*u == doctest::Approx(-2.0).epsilon(1e-12));
}

TEST_CASE("idm collision gap is flagged") {
  CHECK(!idm_accel(18.0, 4.0, 0.0, kConfig.idm).has_value());
  CHECK(!idm_accel(18.0, 2.0, -5.0, kConfig.idm).has_value());
}

TEST_CASE("idm output is clamped to the acceleration box") {
  const auto u = idm_accel(30.0, 8.0, -10.0, kConfig.idm);
  REQUIRE(u.has_value());
  CHECK(*u == doctest::Approx(kConfig.idm.a_min));
}

TEST_CASE("ettc closed forms") {
  // constant-speed limit -R / Rdot
  CHECK(*ettc(20.0, -5.0, 0.0) == doctest::Approx(4.0));
  // pure deceleration: sqrt(2 R / |u_r|)
  CHECK(*ettc(16.0, 0.0, -2.0) == doctest::Approx(4.0));
  // opening gap never collides
  CHECK(!ettc(20.0, 5.0, 0.0).has_value());
  // closing but recovering before contact
  CHECK(!ettc(20.0, -5.0, 1.0).has_value());
  CHECK_THROWS_AS(ettc(0.0, -1.0, 0.0), std::domain_error);
  CHECK_THROWS_AS(ettc(-3.0, -1.0, 0.0), std::domain_error);
}

TEST_CASE("ettc is continuous across the constant-speed fallback") {
  const double r = 37.0, rdot = -6.0;
  const double limit = *ettc(r, rdot, 0.0);
  for (double u : {1e-6, -1e-6}) {
    const double quad = *ettc(r, rdot, u);
    CHECK(std::abs(quad - limit) / limit < 1e-6);
  }
}

TEST_CASE("acc aeb override") {
  AccAebParams p = kConfig.cav;
  // ETTC = 20 / 3 = 6.7 s > 1.5: ACC keeps control
  const auto cruising = acc_aeb_accel(18.0, 20.0, -3.0, 0.0, p);
  REQUIRE(cruising.has_value());
  CHECK(*cruising > p.acc.a_min);
  // ETTC = 7.5/15 = 0.5 s < 1.5: full braking
  const auto braking = acc_aeb_accel(18.0, 7.5, -15.0, 0.0, p);
  REQUIRE(braking.has_value());
  CHECK(*braking == doctest::Approx(p.acc.a_min));
  // ETTC = 6/4 = 1.5 exactly: strict inequality keeps ACC
  const auto boundary = acc_aeb_accel(18.0, 6.0, -4.0, 0.0, p);
  REQUIRE(boundary.has_value());
  CHECK(*boundary > p.acc.a_min);
  // matched speeds at long range: equilibrium
  const auto idle = acc_aeb_accel(18.0, 500.0, 0.0, 0.0, p);
  REQUIRE(idle.has_value());
  CHECK(std::abs(*idle) < 0.3);
}

TEST_CASE("mnp ettc") {
  Trajectory traj;
  traj.dt = 0.1;
  SUBCASE("minimum positive ettc normalized") {
    // two steps: ETTC 4 s then 2 s at U_I = 100 -> 0.02
    TrajectoryPoint a;
    a.ego = {0.0, 30.0, 0.0};
    a.lead = {20.0, 25.0, 0.0};
    TrajectoryPoint b;
    b.ego = {3.0, 30.0, 0.0};
    b.lead = {13.0, 25.0, 0.0};
    traj.points = {a, b};
    CHECK(mnp_ettc(traj, 100.0) == doctest::Approx(0.02));
  }
  SUBCASE("all-safe trajectory scores 1") {
    TrajectoryPoint a;
    a.ego = {0.0, 30.0, 0.0};
    a.lead = {50.0, 35.0, 0.0};
    traj.points = {a};
    CHECK(mnp_ettc(traj, 100.0) == doctest::Approx(1.0));
  }
}

TEST_CASE("mobil utility") {
  CHECK(mobil_utility(1.0, 1.0, 0.5, 0.5, -0.2, -0.2, 0.1) == doctest::Approx(0.0));
  CHECK(mobil_utility(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1) == doctest::Approx(1.0));
  CHECK(mobil_utility(0.0, 0.0, -1.5, 0.0, 0.0, 0.5, 0.1) == doctest::Approx(-0.2));
}

TEST_CASE("cut-in episodes") {
  SUBCASE("small gap with high closing speed crashes") {
    const auto traj = simulate_cutin(2.0, -18.0, FollowerModel::kIdmSurrogate, kConfig);
    CHECK(traj.accident);
  }
  SUBCASE("large opening gap stays safe") {
    const auto traj = simulate_cutin(88.0, 8.0, FollowerModel::kIdmSurrogate, kConfig);
    CHECK(!traj.accident);
    CHECK(traj.points.size() == 101);  // 10 s at 0.1 s plus the initial state
  }
  SUBCASE("an accident trajectory has near-zero mnpETTC") {
    const auto traj = simulate_cutin(6.0, -14.0, FollowerModel::kIdmSurrogate, kConfig);
    REQUIRE(traj.accident);
    CHECK(mnp_ettc(traj, kConfig.cutin.u_i) < 0.05);
  }
  SUBCASE("deterministic replay") {
    const auto a = simulate_cutin(30.0, -6.0, FollowerModel::kAccAeb, kConfig);
    const auto b = simulate_cutin(30.0, -6.0, FollowerModel::kAccAeb, kConfig);
    REQUIRE(a.points.size() == b.points.size());
    for (size_t i = 0; i < a.points.size(); ++i) {
      CHECK(a.points[i].ego.position == b.points[i].ego.position);
      CHECK(a.points[i].ego.velocity == b.points[i].ego.velocity);
      CHECK(a.points[i].ego.acceleration == b.points[i].ego.acceleration);
    }
  }
}

TEST_CASE("trajectory satisfies the kinematic update") {
  const auto traj = simulate_cutin(40.0, -8.0, FollowerModel::kIdmSurrogate, kConfig);
  for (size_t i = 0; i + 1 < traj.points.size(); ++i) {
    const auto& cur = traj.points[i];
    const auto& nxt = traj.points[i + 1];
    CHECK(nxt.ego.position ==
          doctest::Approx(cur.ego.position + cur.ego.velocity * traj.dt).epsilon(1e-12));
    CHECK(nxt.lead.position ==
          doctest::Approx(cur.lead.position + cur.lead.velocity * traj.dt).epsilon(1e-12));
    const double v_next = std::clamp(cur.ego.velocity + cur.ego.acceleration * traj.dt,
                                     kConfig.idm.v_min, kConfig.idm.v_max);
    CHECK(nxt.ego.velocity == doctest::Approx(v_next).epsilon(1e-12));
  }
}

TEST_CASE("velocities and accelerations stay inside the configured box") {
  for (double r0 : {2.0, 10.0, 30.0, 70.0, 90.0}) {
    for (double rdot0 : {-20.0, -10.0, -3.0, 0.0, 4.0, 10.0}) {
      for (auto model : {FollowerModel::kIdmSurrogate, FollowerModel::kAccAeb}) {
        const auto traj = simulate_cutin(r0, rdot0, model, kConfig);
        for (const auto& pt : traj.points) {
          CHECK(pt.ego.velocity >= kConfig.idm.v_min - 1e-12);
          CHECK(pt.ego.velocity <= kConfig.idm.v_max + 1e-12);
          CHECK(pt.ego.acceleration >= kConfig.idm.a_min - 1e-12);
          CHECK(pt.ego.acceleration <= kConfig.idm.a_max + 1e-12);
        }
      }
    }
  }
}

TEST_CASE("accident monotonicity in the initial gap") {
  // for strong closing speeds, shrinking the gap can only keep the accident
  const auto config = CaseConfig::cut_in();
  const auto space = build_space(config);
  const int nr = space.dim(0).count();
  const int nrd = space.dim(1).count();
  for (int j = 0; j < nrd; ++j) {
    const double rdot = space.dim(1).value(j);
    if (rdot > -4.0) continue;
    bool accident_below = true;  // R smaller than the smallest grid value collides trivially
    for (int i = 0; i < nr; ++i) {
      const double r = space.dim(0).value(i);
      const bool accident =
          simulate_cutin(r, rdot, FollowerModel::kIdmSurrogate, config).accident;
      if (!accident_below) CHECK(!accident);
      accident_below = accident;
    }
  }
}

TEST_CASE("constant-speed lead with a matched follower never closes the gap") {
  // the surrogate's desired speed sits below the lead band, so from a matched
  // start the gap can only open; in particular there is no accident
  const auto config = CaseConfig::car_following();
  const std::vector<double> zeros(30, 0.0);
  const auto traj = simulate_car_following(30.0, 50.0, 0.0, zeros, FollowerModel::kIdmSurrogate,
                                           config);
  CHECK(!traj.accident);
  CHECK(traj.truncated);
  for (size_t i = 0; i < traj.points.size(); ++i) CHECK(traj.range(i) >= 50.0 - 1e-9);
}

TEST_CASE("epoch stepping matches the full episode simulation") {
  const auto config = CaseConfig::car_following();
  const std::vector<double> actions{-2.0, -2.0, 1.0, 0.0, -4.0};
  const auto traj =
      simulate_car_following(32.0, 40.0, -3.0, actions, FollowerModel::kIdmSurrogate, config);
  double v = 32.0, r = 40.0, rd = -3.0;
  bool collided = false;
  for (double u : actions) {
    const auto res = step_epoch(v, r, rd, u, FollowerModel::kIdmSurrogate, config);
    v = res.v_bv;
    r = res.range;
    rd = res.range_rate;
    if (res.collided) {
      collided = true;
      break;
    }
  }
  CHECK(collided == traj.accident);
  if (!collided) {
    const auto& last = traj.points.back();
    CHECK(r == doctest::Approx(last.lead.position - last.ego.position).epsilon(1e-9));
    CHECK(rd == doctest::Approx(last.lead.velocity - last.ego.velocity).epsilon(1e-9));
  }
}
