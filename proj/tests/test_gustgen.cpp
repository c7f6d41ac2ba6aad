#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "guq/error.hpp"
#include "guq/gustgen.hpp"

using namespace guq;
using namespace guq::gust;

TEST_CASE("taylor vortex profile") {
  CHECK(taylor_vortex_velocity(0.0, 0.3, 1.0) == 0.0);
  CHECK(taylor_vortex_velocity(0.3, 0.3, 1.0) == 1.0);
  CHECK(taylor_vortex_velocity(0.6, 0.3, 1.0) == doctest::Approx(2.0 * std::exp(-1.5)).epsilon(1e-14));
  CHECK(taylor_vortex_velocity(0.6, 0.3, 1.0) == doctest::Approx(0.446260).epsilon(1e-6));
  CHECK(taylor_vortex_velocity(0.25, 0.25, 0.7) == 0.7);

  const double radius = 0.37;
  const std::size_t n = 10000;
  const double r_max = 4.0 * radius, dr = r_max / static_cast<double>(n - 1);
  std::size_t arg = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = taylor_vortex_velocity(static_cast<double>(i) * dr, radius, 1.0);
    if (v > best) {
      best = v;
      arg = i;
    }
  }
  CHECK(std::abs(static_cast<double>(arg) * dr - radius) <= dr);
  CHECK(best <= 1.0);
}

TEST_CASE("gust induced velocity") {
  const auto at_center = gust_induced_velocity({0.5, 0.2}, {0.5, 0.2}, 0.3, 1.0);
  CHECK(at_center.u == 0.0);
  CHECK(at_center.v == 0.0);
  const auto right = gust_induced_velocity({0.8, 0.2}, {0.5, 0.2}, 0.3, 1.0, 1.0);
  CHECK(right.u == doctest::Approx(0.0));
  CHECK(right.v == doctest::Approx(1.0).epsilon(1e-14));
  const auto above = gust_induced_velocity({0.5, 0.5}, {0.5, 0.2}, 0.3, -0.5, 2.0);
  CHECK(above.u == doctest::Approx(1.0).epsilon(1e-14));  // counter-rotating for G < 0
  CHECK(above.v == doctest::Approx(0.0));
}

TEST_CASE("pressure coefficient") {
  CHECK(pressure_coefficient(1.3, 1.3, 1.0, 1.0) == 0.0);
  CHECK(pressure_coefficient(1.5, 1.0, 1.0, 1.0) == 1.0);
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  for (int i = 0; i < 100; ++i) {
    const double ps = u(gen), pf = u(gen), rho = u(gen), U = u(gen);
    CHECK(pressure_coefficient(ps, pf, rho, U) ==
          doctest::Approx((ps - pf) / (0.5 * rho * U * U)).epsilon(1e-13));
  }
  CHECK_THROWS_AS(pressure_coefficient(1, 1, 0, 1), ContractError);
}

namespace {

FlowCase undisturbed(double alpha) {
  FlowCase c;
  c.alpha_deg = alpha;
  return c;
}

FlowCase gusty(double alpha, double g, double d = 0.8, double yo = 0.0) {
  FlowCase c;
  c.alpha_deg = alpha;
  c.disturbed = true;
  c.gust_strength = g;
  c.gust_diameter = d;
  c.y_offset = yo;
  return c;
}

double dist(const Latent& a, const Latent& b) {
  return std::hypot(a[0] - b[0], a[1] - b[1], a[2] - b[2]);
}

}  // namespace

TEST_CASE("undisturbed orbits are periodic") {
  for (double alpha : {30.0, 40.0, 50.0, 60.0}) {
    const FlowCase c = undisturbed(alpha);
    const double period = limit_cycle_preset(alpha).period();
    const auto steps = static_cast<std::size_t>(std::ceil(period / 0.01));
    const Latent x0 = initial_latent(c);
    const Latent x1 = integrate_latent(c, x0, 0.0, period / static_cast<double>(steps), steps);
    CHECK(dist(x0, x1) < 1e-6);
    CHECK(orbit_distance(c, x0) < 1e-12);
  }
}

TEST_CASE("twenty degrees is steady") {
  const FlowCase c = undisturbed(20.0);
  const auto traj = surrogate_trajectory(c, 30, Grid{});
  for (const auto& s : traj) {
    CHECK(s.latent == traj.front().latent);
    CHECK(s.lift == traj.front().lift);
  }
}

TEST_CASE("gust response peaks during transit and recovers") {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> ug(-1, 1), ud(0.5, 1.0), uy(-0.5, 0.5);
  for (double alpha : angles_of_attack()) {
    for (int rep = 0; rep < 4; ++rep) {
      double g = ug(gen);
      if (std::abs(g) < 0.2) g = g < 0 ? -0.2 : 0.2;
      const FlowCase c = gusty(alpha, g, ud(gen), uy(gen));
      const double dt = 0.01;
      Latent xi = initial_latent(c);
      double worst = 0.0, worst_x = 0.0;
      // forcing is below 1e-6 of its peak once the center passes x = 2.63
      const double t_end_forcing = 2.63 - c.x_start;
      const auto steps_total = static_cast<std::size_t>((t_end_forcing + 5.0) / dt);
      for (std::size_t i = 0; i < steps_total; ++i) {
        xi = integrate_latent(c, xi, static_cast<double>(i) * dt, dt, 1);
        const double d = orbit_distance(c, xi);
        if (d > worst) {
          worst = d;
          worst_x = c.x_start + static_cast<double>(i + 1) * dt;
        }
      }
      INFO("alpha " << alpha << " G " << g);
      CHECK(worst > 0.0);
      CHECK(worst_x >= -1.0);
      CHECK(worst_x <= 2.0);
      CHECK(orbit_distance(c, xi) < 1e-3);
    }
  }
}

TEST_CASE("lift responds to gust polarity at fifty degrees") {
  const Grid grid{4, 2};
  const auto base = surrogate_trajectory(undisturbed(50.0), 400, grid);
  const auto pos = surrogate_trajectory(gusty(50.0, 0.8), 400, grid);
  const auto neg = surrogate_trajectory(gusty(50.0, -0.8), 400, grid);
  double base_peak = -1e9, pos_peak = -1e9;
  for (std::size_t i = 0; i < base.size(); ++i) {
    base_peak = std::max(base_peak, base[i].lift);
    pos_peak = std::max(pos_peak, pos[i].lift);
  }
  CHECK(pos_peak > base_peak);
  // first visible departure from the baseline is downward for G < 0
  double first = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double d = neg[i].lift - base[i].lift;
    if (std::abs(d) > 1e-3) {
      first = d;
      break;
    }
  }
  CHECK(first < 0.0);
}

TEST_CASE("observation is deterministic and coordinate slots hold sensor positions") {
  const Latent xi{0.3, -0.2, 0.5};
  const FlowCase c = gusty(40.0, 0.5);
  const GustState g = gust_state(c, 2.0);
  CHECK(observe_pressure(xi, 40.0, g) == observe_pressure(xi, 40.0, g));
  const auto p = observe_pressure(xi, 40.0, g);
  const auto pos = default_sensor_layout().positions(40.0);
  for (std::size_t k = 0; k < kSensorCount; ++k) {
    CHECK(p[SensorLayout::x_slot(k)] == pos[k][0]);
    CHECK(p[SensorLayout::y_slot(k)] == pos[k][1]);
  }
  GustState none = gust_state(undisturbed(40.0), 2.0);
  CHECK_FALSE(observe_pressure(xi, 40.0, none) == p);
}

TEST_CASE("sensor numbering runs from the upper trailing edge around to the lower") {
  const auto& l = default_sensor_layout();
  CHECK(l.side[0] == 1);
  CHECK(l.side[10] == -1);
  CHECK(l.chord_fraction[0] > 0.9);
  CHECK(l.chord_fraction[10] > 0.9);
  CHECK(l.chord_fraction[5] == 0.0);
  for (std::size_t k = 1; k <= 5; ++k) CHECK(l.chord_fraction[k] < l.chord_fraction[k - 1]);
  for (std::size_t k = 6; k < 11; ++k) CHECK(l.chord_fraction[k] > l.chord_fraction[k - 1]);
}

TEST_CASE("case validation") {
  FlowCase c = gusty(45.0, 0.5);
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = gusty(40.0, 1.5);
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = gusty(40.0, 0.5, 1.2);
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = gusty(40.0, 0.5, 0.8, 0.7);
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = undisturbed(40.0);
  c.gust_strength = 0.5;
  CHECK_THROWS_AS(c.validate(), ContractError);
}

TEST_CASE("preset arithmetic") {
  const Preset desk = Preset::desk();
  CHECK(desk.case_count() == 25);
  CHECK(desk.snapshot_count() == 3750);
  CHECK(make_cases(desk, 1).size() == 25);
  CHECK(Preset::paper_scale().snapshot_count() == 78225);
  CHECK(Preset::paper_scale().case_count() == 105);
  CHECK_THROWS_AS(Preset::by_name("huge"), ConfigError);
  const auto cases = make_cases(desk, 3);
  for (const auto& c : cases) {
    c.validate();
    CHECK(c.x_start == -2.0);
    CHECK(c.reynolds == 100.0);
  }
}

TEST_CASE("split is 80/20 and seeded") {
  const std::vector<FlowCase> one{undisturbed(30.0)};
  const Grid grid{4, 3};
  const Dataset d = build_dataset(one, 10, grid, 5);
  CHECK(d.train.size() == 8);
  CHECK(d.validation.size() == 2);
  const Dataset e = build_dataset(one, 10, grid, 5);
  CHECK(d.train == e.train);
  const Dataset f = build_dataset(make_cases(Preset::desk(), 1), 20, grid, 6);
  const Dataset g = build_dataset(make_cases(Preset::desk(), 1), 20, grid, 7);
  CHECK(f.train.size() == 400);
  CHECK_FALSE(f.train == g.train);
  std::vector<std::uint32_t> all = f.train;
  all.insert(all.end(), f.validation.begin(), f.validation.end());
  std::sort(all.begin(), all.end());
  for (std::uint32_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
}

TEST_CASE("noise augmentation") {
  const Grid grid{3, 2};
  auto cases = make_cases(Preset{"t", 1, 10, grid}, 4);
  const Dataset d = build_dataset(cases, 1000, grid, 1);  // 10 cases, 10⁴ snapshots
  Rng rng(9);
  const Dataset zero = augment_noise(d, 0.0, rng);
  REQUIRE(zero.snapshots.size() == 2 * d.snapshots.size());
  const std::size_t n = d.snapshots.size();
  for (std::size_t i = 0; i < n; ++i) CHECK(zero.snapshots[n + i].p_stacked == d.snapshots[i].p_stacked);
  CHECK(zero.train.size() == 2 * d.train.size());

  const double sigma = 0.005;
  const Dataset noisy = augment_noise(d, sigma, rng);
  double ss = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = d.snapshots[i].p_stacked;
    const auto& b = noisy.snapshots[n + i].p_stacked;
    for (std::size_t k = 0; k < kSensorCount; ++k) {
      const double e = b[SensorLayout::pressure_slot(k)] - a[SensorLayout::pressure_slot(k)];
      ss += e * e;
      ++count;
    }
    for (std::size_t k = 0; k < kSensorCount; ++k) {
      REQUIRE(b[SensorLayout::x_slot(k)] == a[SensorLayout::x_slot(k)]);
      REQUIRE(b[SensorLayout::y_slot(k)] == a[SensorLayout::y_slot(k)]);
    }
  }
  CHECK(count >= 100000);
  CHECK(std::abs(ss / static_cast<double>(count) / (sigma * sigma) - 1.0) < 0.05);
}

TEST_CASE("dataset serialization") {
  const Grid grid{5, 4};
  const Dataset d = build_dataset(make_cases(Preset{"t", 1, 8, grid}, 2), 8, grid, 3);
  std::stringstream a, b;
  write_dataset(a, d);
  write_dataset(b, build_dataset(make_cases(Preset{"t", 1, 8, grid}, 2), 8, grid, 3));
  CHECK(a.str() == b.str());
  const Dataset back = read_dataset(a);
  CHECK(back.snapshots.size() == d.snapshots.size());
  CHECK(back.train == d.train);
  CHECK(back.field_norm.shift == d.field_norm.shift);
  for (std::size_t i = 0; i < d.snapshots.size(); ++i) {
    CHECK(back.snapshots[i].vorticity == d.snapshots[i].vorticity);
    CHECK(back.snapshots[i].p_stacked == d.snapshots[i].p_stacked);
  }
  std::stringstream junk("GUQX garbage");
  CHECK_THROWS_AS(read_dataset(junk), Error);
  CHECK_THROWS_AS(load_dataset("/nonexistent/dir/file.guqd"), IoError);
}

TEST_CASE("vorticity field carries the gust") {
  const Grid grid;
  const Latent xi{0.5, 0.5, 0.5};
  const FlowCase c = gusty(30.0, 1.0, 1.0, 0.0);
  const auto calm = vorticity_field(grid, xi, gust_state(undisturbed(30.0), 1.0));
  const auto hit = vorticity_field(grid, xi, gust_state(c, 2.5));  // center at x = 0.5
  REQUIRE(calm.size() == grid.size());
  double delta = 0.0;
  for (std::size_t i = 0; i < calm.size(); ++i) delta = std::max(delta, std::abs(hit[i] - calm[i]));
  CHECK(delta > 0.1);
}
