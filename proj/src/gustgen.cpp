#include "guq/gustgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <ostream>

#include "guq/binary_io.hpp"
#include "guq/csv.hpp"
#include "guq/error.hpp"

namespace guq::gust {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kForcingGain = 4.0;
// Unit direction of the gust push in the (ξ₁, ξ₂) plane.
constexpr double kForcingDirX = 0.894427190999916;
constexpr double kForcingDirY = 0.447213595499958;
constexpr double kBlowUp = 1e3;

constexpr std::string_view kDatasetMagic = "GUQD";
constexpr std::uint32_t kDatasetVersion = 1;

double naca0012_half_thickness(double x) {
  return 0.6 * (0.2969 * std::sqrt(x) - 0.1260 * x - 0.3516 * x * x + 0.2843 * x * x * x -
                0.1015 * x * x * x * x);
}

double blob(double x, double y, double cx, double cy, double peak, double width) {
  const double dx = x - cx, dy = y - cy;
  return peak * std::exp(-(dx * dx + dy * dy) / (width * width));
}

// Sensor-specific observation coefficients.
struct SensorModel {
  double offset;
  std::array<double, 3> linear;
  double q11, q22, q12, q13;
  double gust_gain;
};

const std::array<SensorModel, kSensorCount>& sensor_models() {
  static const auto models = [] {
    std::array<SensorModel, kSensorCount> m{};
    const auto& layout = default_sensor_layout();
    for (std::size_t k = 0; k < kSensorCount; ++k) {
      const double th = std::numbers::pi * static_cast<double>(k) / 10.0;
      const int side = layout.side[k];
      SensorModel& s = m[k];
      s.offset = 0.2 * std::cos(th);
      s.linear = {0.6 * std::cos(1.3 * th + 0.4), 0.6 * std::sin(1.7 * th + 0.9),
                  side > 0 ? -1.5 : (side < 0 ? 1.0 : -0.3)};
      s.q11 = 0.15 * std::sin(2.0 * th);
      s.q22 = 0.15 * std::cos(3.0 * th);
      s.q12 = 0.1 * std::cos(th);
      s.q13 = 0.2 * std::sin(th + 0.3);
      s.gust_gain = side > 0 ? -1.2 : (side < 0 ? 0.8 : -0.2);
    }
    return m;
  }();
  return models;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ContractError(msg);
}

}  // namespace

double taylor_vortex_velocity(double r, double radius, double u_max) {
  if (!(radius > 0.0)) throw ContractError("taylor_vortex_velocity: radius must be positive");
  if (r < 0.0) throw ContractError("taylor_vortex_velocity: r must be non-negative");
  return u_max * (r / radius) * std::exp(0.5 - r * r / (2.0 * radius * radius));
}

double taylor_vortex_vorticity(double r, double radius, double u_max) {
  if (!(radius > 0.0)) throw ContractError("taylor_vortex_vorticity: radius must be positive");
  const double q = r * r / (radius * radius);
  return (u_max / radius) * (2.0 - q) * std::exp(0.5 - 0.5 * q);
}

Velocity gust_induced_velocity(std::array<double, 2> point, std::array<double, 2> center,
                               double radius, double strength, double freestream) {
  const double dx = point[0] - center[0];
  const double dy = point[1] - center[1];
  const double r = std::hypot(dx, dy);
  if (r == 0.0) {
    if (!(radius > 0.0)) throw ContractError("gust_induced_velocity: radius must be positive");
    return {};
  }
  const double ut = taylor_vortex_velocity(r, radius, strength * freestream);
  // -sinθ = -dy/r, cosθ = dx/r
  return {-ut * dy / r, ut * dx / r};
}

double pressure_coefficient(double p_surface, double p_freestream, double density,
                            double freestream) {
  if (!(density > 0.0) || !(freestream > 0.0)) {
    throw ContractError("pressure_coefficient: density and freestream speed must be positive");
  }
  return 2.0 * (p_surface - p_freestream) / (density * freestream * freestream);
}

void FlowCase::validate() const {
  const auto& angles = angles_of_attack();
  require(std::find(angles.begin(), angles.end(), alpha_deg) != angles.end(),
          "FlowCase " + std::to_string(id) + ": angle of attack must be one of 20..60 deg");
  require(gust_strength >= -1.0 && gust_strength <= 1.0,
          "FlowCase " + std::to_string(id) + ": G must lie in [-1, 1]");
  require(gust_diameter >= 0.5 && gust_diameter <= 1.0,
          "FlowCase " + std::to_string(id) + ": 2R/c must lie in [0.5, 1]");
  require(y_offset >= -0.5 && y_offset <= 0.5,
          "FlowCase " + std::to_string(id) + ": y_o/c must lie in [-0.5, 0.5]");
  require(disturbed || gust_strength == 0.0,
          "FlowCase " + std::to_string(id) + ": undisturbed case must have G = 0");
}

double LimitCyclePreset::amplitude() const { return growth > 0.0 ? std::sqrt(growth) : 0.0; }

double LimitCyclePreset::period() const { return 2.0 * std::numbers::pi / frequency; }

LimitCyclePreset limit_cycle_preset(double alpha_deg) {
  // 20 deg is a stable focus; the others are limit cycles whose radius and
  // frequency grow with the angle.
  static const std::array<LimitCyclePreset, 5> presets = {{
      {20.0, -2.0, 1.00},
      {30.0, 1.00, 1.05},
      {40.0, 1.44, 1.15},
      {50.0, 1.96, 1.25},
      {60.0, 2.56, 1.35},
  }};
  for (const auto& p : presets) {
    if (p.alpha_deg == alpha_deg) return p;
  }
  throw ContractError("limit_cycle_preset: no preset for alpha " + std::to_string(alpha_deg));
}

const std::vector<double>& angles_of_attack() {
  static const std::vector<double> angles = {20.0, 30.0, 40.0, 50.0, 60.0};
  return angles;
}

double Grid::x(std::size_t ix) const {
  return x_min + (static_cast<double>(ix) + 0.5) * (x_max - x_min) / static_cast<double>(nx);
}

double Grid::y(std::size_t iy) const {
  return y_min + (static_cast<double>(iy) + 0.5) * (y_max - y_min) / static_cast<double>(ny);
}

GustState gust_state(const FlowCase& c, double t) {
  GustState g;
  g.active = c.disturbed;
  g.center_x = c.x_start + t;  // advected at U∞ = 1
  g.center_y = c.y_offset;
  g.radius = c.gust_radius();
  g.strength = c.disturbed ? c.gust_strength : 0.0;
  return g;
}

std::array<double, 2> gust_forcing(const FlowCase& c, double t) {
  if (!c.disturbed) return {0.0, 0.0};
  const double xg = c.x_start + t;
  const double pulse = kForcingGain * c.gust_strength * c.gust_diameter *
                       std::exp(-c.y_offset * c.y_offset) * std::exp(-2.0 * xg * xg);
  return {pulse * kForcingDirX, pulse * kForcingDirY};
}

Latent latent_rhs(const FlowCase& c, double t, const Latent& xi) {
  const LimitCyclePreset p = limit_cycle_preset(c.alpha_deg);
  const double r2 = xi[0] * xi[0] + xi[1] * xi[1];
  const auto f = gust_forcing(c, t);
  return {p.growth * xi[0] - p.frequency * xi[1] - r2 * xi[0] + f[0],
          p.frequency * xi[0] + p.growth * xi[1] - r2 * xi[1] + f[1], 0.0};
}

Latent initial_latent(const FlowCase& c) {
  return {limit_cycle_preset(c.alpha_deg).amplitude(), 0.0, c.alpha_deg / 60.0};
}

Latent integrate_latent(const FlowCase& c, Latent xi, double t0, double dt, std::size_t steps) {
  auto axpy3 = [](const Latent& a, double s, const Latent& b) {
    return Latent{a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]};
  };
  double t = t0;
  for (std::size_t i = 0; i < steps; ++i) {
    const Latent k1 = latent_rhs(c, t, xi);
    const Latent k2 = latent_rhs(c, t + 0.5 * dt, axpy3(xi, 0.5 * dt, k1));
    const Latent k3 = latent_rhs(c, t + 0.5 * dt, axpy3(xi, 0.5 * dt, k2));
    const Latent k4 = latent_rhs(c, t + dt, axpy3(xi, dt, k3));
    for (std::size_t j = 0; j < kLatentDim; ++j) {
      xi[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
    t = t0 + static_cast<double>(i + 1) * dt;
    if (!(std::abs(xi[0]) <= kBlowUp && std::abs(xi[1]) <= kBlowUp)) {
      throw NumericError("surrogate integrator blew up in case " + std::to_string(c.id) +
                         " at t=" + std::to_string(t));
    }
  }
  return xi;
}

double orbit_distance(const FlowCase& c, const Latent& xi) {
  const double radius = std::hypot(xi[0], xi[1]);
  const double dr = radius - limit_cycle_preset(c.alpha_deg).amplitude();
  const double dz = xi[2] - c.alpha_deg / 60.0;
  return std::hypot(dr, dz);
}

double lift_coefficient(double alpha_deg, const Latent& xi) {
  const double c0 = 1.2 * std::sin(2.0 * alpha_deg * kDegToRad);
  return c0 + 0.5 * xi[0] + 0.25 * xi[1] + 0.1 * xi[0] * xi[1];
}

std::array<std::array<double, 2>, kSensorCount> SensorLayout::positions(double alpha_deg) const {
  const double a = alpha_deg * kDegToRad;
  const double ca = std::cos(a), sa = std::sin(a);
  std::array<std::array<double, 2>, kSensorCount> out{};
  for (std::size_t k = 0; k < kSensorCount; ++k) {
    const double xc = chord_fraction[k];
    const double yc = static_cast<double>(side[k]) * naca0012_half_thickness(xc);
    // chord along (cos α, −sin α), surface normal along (sin α, cos α)
    out[k] = {xc * ca + yc * sa, -xc * sa + yc * ca};
  }
  return out;
}

const SensorLayout& default_sensor_layout() {
  static const SensorLayout layout = [] {
    SensorLayout l;
    const std::array<double, 5> fractions = {0.95, 0.725, 0.5, 0.275, 0.05};
    for (std::size_t k = 0; k < 5; ++k) {
      l.chord_fraction[k] = fractions[k];
      l.side[k] = 1;
      l.chord_fraction[10 - k] = fractions[k];
      l.side[10 - k] = -1;
    }
    l.chord_fraction[5] = 0.0;
    l.side[5] = 0;
    return l;
  }();
  return layout;
}

std::array<double, kStackedSize> observe_pressure(const Latent& xi, double alpha_deg,
                                                  const GustState& gust) {
  const auto& layout = default_sensor_layout();
  const auto pos = layout.positions(alpha_deg);
  const auto& models = sensor_models();
  std::array<double, kStackedSize> out{};
  for (std::size_t k = 0; k < kSensorCount; ++k) {
    const SensorModel& m = models[k];
    double cp = m.offset + m.linear[0] * xi[0] + m.linear[1] * xi[1] + m.linear[2] * xi[2] +
                m.q11 * xi[0] * xi[0] + m.q22 * xi[1] * xi[1] + m.q12 * xi[0] * xi[1] +
                m.q13 * xi[0] * xi[2];
    if (gust.active) {
      const double dx = pos[k][0] - gust.center_x;
      const double dy = pos[k][1] - gust.center_y;
      cp += gust.strength * m.gust_gain *
            std::exp(-(dx * dx + dy * dy) / (gust.radius * gust.radius));
    }
    out[SensorLayout::pressure_slot(k)] = cp;
    out[SensorLayout::x_slot(k)] = pos[k][0];
    out[SensorLayout::y_slot(k)] = pos[k][1];
  }
  return out;
}

std::vector<double> vorticity_field(const Grid& grid, const Latent& xi, const GustState& gust) {
  const double a = 60.0 * xi[2] * kDegToRad;
  const double ecx = std::cos(a), ecy = -std::sin(a);
  const double enx = std::sin(a), eny = std::cos(a);

  // Leading-edge vortex over the suction side.
  const double lev_x = 0.30 * ecx + 0.30 * enx + 0.22 * (xi[0] * ecx + xi[1] * enx);
  const double lev_y = 0.30 * ecy + 0.30 * eny + 0.22 * (xi[0] * ecy + xi[1] * eny);
  const double lev_peak = -(2.0 + 3.0 * xi[2] + 1.0 * xi[0]);
  // Trailing-edge vortex.
  const double tev_x = 1.0 * ecx - 0.05 * enx + 0.22 * (-xi[1] * ecx + xi[0] * enx);
  const double tev_y = 1.0 * ecy - 0.05 * eny + 0.22 * (-xi[1] * ecy + xi[0] * eny);
  const double tev_peak = 2.5 + 1.5 * xi[2] + 1.0 * xi[1];
  // Shed wake structure.
  const double wake_x = ecx + 0.9 + 0.35 * xi[0];
  const double wake_y = ecy + 0.1 + 0.35 * xi[1];
  const double wake_peak = 1.5 * xi[1];

  std::vector<double> field(grid.size());
  for (std::size_t iy = 0; iy < grid.ny; ++iy) {
    const double y = grid.y(iy);
    for (std::size_t ix = 0; ix < grid.nx; ++ix) {
      const double x = grid.x(ix);
      double w = blob(x, y, lev_x, lev_y, lev_peak, 0.28) + blob(x, y, tev_x, tev_y, tev_peak, 0.25) +
                 blob(x, y, wake_x, wake_y, wake_peak, 0.35);
      if (gust.active) {
        const double r = std::hypot(x - gust.center_x, y - gust.center_y);
        w += taylor_vortex_vorticity(r, gust.radius, gust.strength);
      }
      field[iy * grid.nx + ix] = w;
    }
  }
  return field;
}

std::vector<Snapshot> surrogate_trajectory(const FlowCase& c, std::size_t n_snapshots,
                                           const Grid& grid, std::size_t substeps) {
  c.validate();
  if (n_snapshots < 2) throw ContractError("surrogate_trajectory: need at least 2 snapshots");
  if (substeps == 0) throw ContractError("surrogate_trajectory: substeps must be positive");
  const double interval = kHorizon / static_cast<double>(n_snapshots - 1);
  const double dt = interval / static_cast<double>(substeps);
  std::vector<Snapshot> out;
  out.reserve(n_snapshots);
  Latent xi = initial_latent(c);
  for (std::size_t i = 0; i < n_snapshots; ++i) {
    const double t = static_cast<double>(i) * interval;
    if (i > 0) xi = integrate_latent(c, xi, static_cast<double>(i - 1) * interval, dt, substeps);
    const GustState g = gust_state(c, t);
    Snapshot s;
    s.case_id = c.id;
    s.time_index = static_cast<std::uint32_t>(i);
    s.t = t;
    s.latent = xi;
    s.lift = lift_coefficient(c.alpha_deg, xi);
    s.p_stacked = observe_pressure(xi, c.alpha_deg, g);
    s.vorticity = vorticity_field(grid, xi, g);
    out.push_back(std::move(s));
  }
  return out;
}

const FlowCase& Dataset::case_of(const Snapshot& s) const {
  for (const auto& c : cases) {
    if (c.id == s.case_id) return c;
  }
  throw DataMismatchError("dataset: snapshot refers to unknown case " + std::to_string(s.case_id));
}

std::vector<std::uint32_t> Dataset::case_snapshots(int case_id) const {
  std::vector<std::uint32_t> idx;
  for (std::uint32_t i = 0; i < snapshots.size(); ++i) {
    if (snapshots[i].case_id == case_id) idx.push_back(i);
  }
  std::stable_sort(idx.begin(), idx.end(), [this](std::uint32_t a, std::uint32_t b) {
    return snapshots[a].time_index < snapshots[b].time_index;
  });
  return idx;
}

Preset Preset::desk() {
  Preset p;
  p.name = "desk";
  p.gusts_per_angle = 4;
  p.snapshots_per_case = 150;
  return p;
}

Preset Preset::paper_scale() {
  Preset p;
  p.name = "paper-scale";
  p.gusts_per_angle = 20;
  p.snapshots_per_case = 745;
  return p;
}

Preset Preset::by_name(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "paper-scale" || name == "paper") return paper_scale();
  throw ConfigError("unknown preset \"" + name + "\" (expected desk or paper-scale)");
}

std::vector<FlowCase> make_cases(const Preset& preset, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<FlowCase> cases;
  int id = 0;
  for (double alpha : angles_of_attack()) {
    FlowCase base;
    base.id = id++;
    base.alpha_deg = alpha;
    cases.push_back(base);
    for (std::size_t g = 0; g < preset.gusts_per_angle; ++g) {
      FlowCase c;
      c.id = id++;
      c.alpha_deg = alpha;
      c.disturbed = true;
      c.gust_strength = rng.uniform(-1.0, 1.0);
      c.gust_diameter = rng.uniform(0.5, 1.0);
      c.y_offset = rng.uniform(-0.5, 0.5);
      cases.push_back(c);
    }
  }
  return cases;
}

namespace {

Normalization fit_normalization(const std::vector<Snapshot>& snaps,
                                const std::vector<std::uint32_t>& rows, std::size_t width,
                                auto&& value_at) {
  Normalization n;
  n.shift.assign(width, 0.0);
  n.scale.assign(width, 1.0);
  const double count = static_cast<double>(rows.size());
  for (std::size_t j = 0; j < width; ++j) {
    double mean = 0.0;
    for (auto r : rows) mean += value_at(snaps[r], j);
    mean /= count;
    double var = 0.0;
    for (auto r : rows) {
      const double d = value_at(snaps[r], j) - mean;
      var += d * d;
    }
    var /= count;
    n.shift[j] = mean;
    n.scale[j] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  return n;
}

}  // namespace

Dataset build_dataset(const std::vector<FlowCase>& cases, std::size_t n_snapshots,
                      const Grid& grid, std::uint64_t split_seed) {
  if (cases.empty()) throw ContractError("build_dataset: no cases");
  Dataset data;
  data.grid = grid;
  data.snapshots_per_case = n_snapshots;
  data.cases = cases;
  data.split_seed = split_seed;
  for (const auto& c : cases) {
    auto traj = surrogate_trajectory(c, n_snapshots, grid);
    std::move(traj.begin(), traj.end(), std::back_inserter(data.snapshots));
  }

  const std::size_t n = data.snapshots.size();
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0U);
  Rng rng(split_seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.next_u64() % i]);
  const std::size_t n_train = (4 * n) / 5;
  data.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  data.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(data.train.begin(), data.train.end());
  std::sort(data.validation.begin(), data.validation.end());
  if (data.train.empty()) throw ContractError("build_dataset: too few snapshots to split");

  data.input_norm = fit_normalization(data.snapshots, data.train, kStackedSize,
                                      [](const Snapshot& s, std::size_t j) { return s.p_stacked[j]; });
  data.lift_norm = fit_normalization(data.snapshots, data.train, 1,
                                     [](const Snapshot& s, std::size_t) { return s.lift; });
  // Per-pixel mean, one pooled scale for the whole field.
  const std::size_t npx = grid.size();
  data.field_norm.shift.assign(npx, 0.0);
  for (auto r : data.train)
    for (std::size_t j = 0; j < npx; ++j) data.field_norm.shift[j] += data.snapshots[r].vorticity[j];
  for (auto& v : data.field_norm.shift) v /= static_cast<double>(data.train.size());
  double var = 0.0;
  for (auto r : data.train) {
    for (std::size_t j = 0; j < npx; ++j) {
      const double d = data.snapshots[r].vorticity[j] - data.field_norm.shift[j];
      var += d * d;
    }
  }
  var /= static_cast<double>(data.train.size() * npx);
  data.field_norm.scale.assign(npx, var > 1e-24 ? std::sqrt(var) : 1.0);
  return data;
}

Dataset augment_noise(const Dataset& data, double sigma, Rng& rng) {
  if (sigma < 0.0) throw ContractError("augment_noise: sigma must be non-negative");
  Dataset out = data;
  const auto n = static_cast<std::uint32_t>(data.snapshots.size());
  out.snapshots.reserve(2 * data.snapshots.size());
  for (const auto& s : data.snapshots) {
    Snapshot copy = s;
    if (sigma > 0.0) {
      for (std::size_t k = 0; k < kSensorCount; ++k) {
        copy.p_stacked[SensorLayout::pressure_slot(k)] += rng.normal(0.0, sigma);
      }
    }
    out.snapshots.push_back(std::move(copy));
  }
  for (auto i : data.train) out.train.push_back(i + n);
  for (auto i : data.validation) out.validation.push_back(i + n);
  return out;
}

namespace {

void write_norm(std::ostream& out, const Normalization& n) {
  io::write_u32(out, static_cast<std::uint32_t>(n.size()));
  io::write_f64s(out, n.shift);
  io::write_f64s(out, n.scale);
}

Normalization read_norm(std::istream& in) {
  Normalization n;
  const std::uint32_t size = io::read_u32(in);
  if (size > (1U << 26)) throw IoError("dataset: implausible normalization size");
  n.shift.resize(size);
  n.scale.resize(size);
  io::read_f64s(in, n.shift);
  io::read_f64s(in, n.scale);
  return n;
}

void write_indices(std::ostream& out, const std::vector<std::uint32_t>& idx) {
  io::write_u32(out, static_cast<std::uint32_t>(idx.size()));
  for (auto i : idx) io::write_u32(out, i);
}

std::vector<std::uint32_t> read_indices(std::istream& in, std::size_t limit) {
  const std::uint32_t n = io::read_u32(in);
  if (n > limit) throw IoError("dataset: split larger than snapshot count");
  std::vector<std::uint32_t> idx(n);
  for (auto& i : idx) {
    i = io::read_u32(in);
    if (i >= limit) throw IoError("dataset: split index out of range");
  }
  return idx;
}

}  // namespace

void write_dataset(std::ostream& out, const Dataset& data) {
  io::write_magic(out, kDatasetMagic);
  io::write_u32(out, kDatasetVersion);
  io::write_u32(out, static_cast<std::uint32_t>(data.cases.size()));
  io::write_u32(out, static_cast<std::uint32_t>(data.snapshots.size()));
  io::write_u32(out, static_cast<std::uint32_t>(kSensorCount));
  io::write_u32(out, static_cast<std::uint32_t>(data.grid.nx));
  io::write_u32(out, static_cast<std::uint32_t>(data.grid.ny));
  io::write_u32(out, static_cast<std::uint32_t>(data.snapshots_per_case));
  io::write_f64s(out, std::array{data.grid.x_min, data.grid.x_max, data.grid.y_min, data.grid.y_max});
  io::write_u64(out, data.split_seed);
  for (const auto& c : data.cases) {
    io::write_f64s(out, std::array{static_cast<double>(c.id), c.alpha_deg, c.gust_strength,
                                   c.gust_diameter, c.y_offset, c.x_start, c.reynolds,
                                   c.disturbed ? 1.0 : 0.0});
  }
  // Snapshot record: case id, time index, t, p_stacked, latent, lift, field.
  for (const auto& s : data.snapshots) {
    io::write_f64(out, static_cast<double>(s.case_id));
    io::write_f64(out, static_cast<double>(s.time_index));
    io::write_f64(out, s.t);
    io::write_f64s(out, s.p_stacked);
    io::write_f64s(out, s.latent);
    io::write_f64(out, s.lift);
    io::write_f64s(out, s.vorticity);
  }
  write_indices(out, data.train);
  write_indices(out, data.validation);
  write_norm(out, data.input_norm);
  write_norm(out, data.field_norm);
  write_norm(out, data.lift_norm);
  if (!out) throw IoError("dataset: write failed");
}

Dataset read_dataset(std::istream& in) {
  io::expect_magic(in, kDatasetMagic, "dataset");
  const std::uint32_t version = io::read_u32(in);
  if (version != kDatasetVersion) {
    throw IoError("dataset: unsupported format version " + std::to_string(version));
  }
  Dataset data;
  const std::uint32_t n_cases = io::read_u32(in);
  const std::uint32_t n_snaps = io::read_u32(in);
  const std::uint32_t n_sensors = io::read_u32(in);
  if (n_sensors != kSensorCount) {
    throw DataMismatchError("dataset: expected 11 sensors, file declares " +
                            std::to_string(n_sensors));
  }
  data.grid.nx = io::read_u32(in);
  data.grid.ny = io::read_u32(in);
  data.snapshots_per_case = io::read_u32(in);
  data.grid.x_min = io::read_f64(in);
  data.grid.x_max = io::read_f64(in);
  data.grid.y_min = io::read_f64(in);
  data.grid.y_max = io::read_f64(in);
  data.split_seed = io::read_u64(in);
  if (data.grid.size() == 0 || data.grid.size() > (1U << 24)) {
    throw IoError("dataset: implausible grid dimensions");
  }
  data.cases.resize(n_cases);
  for (auto& c : data.cases) {
    std::array<double, 8> f{};
    io::read_f64s(in, f);
    c.id = static_cast<int>(f[0]);
    c.alpha_deg = f[1];
    c.gust_strength = f[2];
    c.gust_diameter = f[3];
    c.y_offset = f[4];
    c.x_start = f[5];
    c.reynolds = f[6];
    c.disturbed = f[7] != 0.0;
  }
  data.snapshots.resize(n_snaps);
  for (auto& s : data.snapshots) {
    s.case_id = static_cast<int>(io::read_f64(in));
    s.time_index = static_cast<std::uint32_t>(io::read_f64(in));
    s.t = io::read_f64(in);
    io::read_f64s(in, s.p_stacked);
    io::read_f64s(in, s.latent);
    s.lift = io::read_f64(in);
    s.vorticity.resize(data.grid.size());
    io::read_f64s(in, s.vorticity);
  }
  data.train = read_indices(in, n_snaps);
  data.validation = read_indices(in, n_snaps);
  data.input_norm = read_norm(in);
  data.field_norm = read_norm(in);
  data.lift_norm = read_norm(in);
  if (data.input_norm.size() != kStackedSize || data.field_norm.size() != data.grid.size() ||
      data.lift_norm.size() != 1) {
    throw DataMismatchError("dataset: normalization sizes do not match declared dimensions");
  }
  return data;
}

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_dataset(out, data);
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path.string());
  try {
    return read_dataset(in);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  {
    csv::Row h(out);
    h << "case_id" << "time_index" << "t" << "split" << "lift" << "xi1" << "xi2" << "xi3";
    for (std::size_t k = 1; k <= kSensorCount; ++k) h << ("cp" + std::to_string(k));
  }
  std::vector<char> is_train(data.snapshots.size(), 0);
  for (auto i : data.train) is_train[i] = 1;
  for (std::size_t i = 0; i < data.snapshots.size(); ++i) {
    const auto& s = data.snapshots[i];
    csv::Row r(out);
    r << s.case_id << s.time_index << s.t << (is_train[i] ? "train" : "validation") << s.lift
      << s.latent[0] << s.latent[1] << s.latent[2];
    for (std::size_t k = 0; k < kSensorCount; ++k) r << s.p_stacked[k];
  }
}

void write_cases_csv(std::ostream& out, const std::vector<FlowCase>& cases) {
  {
    csv::Row h(out);
    h << "case_id" << "alpha_deg" << "disturbed" << "G" << "gust_diameter" << "y_offset"
      << "x_start" << "reynolds";
  }
  for (const auto& c : cases) {
    csv::Row r(out);
    r << c.id << c.alpha_deg << (c.disturbed ? 1 : 0) << c.gust_strength << c.gust_diameter
      << c.y_offset << c.x_start << c.reynolds;
  }
}

}  // namespace guq::gust
