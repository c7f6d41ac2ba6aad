#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "guq/normalization.hpp"
#include "guq/rng.hpp"

namespace guq::gust {

inline constexpr std::size_t kSensorCount = 11;
/// 11 pressure readings followed by 11 interleaved (x, y) coordinates.
inline constexpr std::size_t kStackedSize = 3 * kSensorCount;
inline constexpr std::size_t kLatentDim = 3;
inline constexpr double kHorizon = 15.0;
inline constexpr double kGustStartX = -2.0;

/// Tangential speed of a Taylor vortex, u_max·(r/R)·exp(½ − r²/2R²).
double taylor_vortex_velocity(double r, double radius, double u_max);

/// Vorticity of the same vortex, (u_max/R)(2 − r²/R²)exp(½ − r²/2R²).
double taylor_vortex_vorticity(double r, double radius, double u_max);

struct Velocity {
  double u = 0.0;
  double v = 0.0;
};

/// Velocity induced at `point` by a Taylor vortex of strength G·U∞
/// centered at `center`; counterclockwise for G > 0.
Velocity gust_induced_velocity(std::array<double, 2> point, std::array<double, 2> center,
                               double radius, double strength, double freestream = 1.0);

/// C_p = 2(p_s − p∞)/(ρU∞²).
double pressure_coefficient(double p_surface, double p_freestream, double density,
                            double freestream);

struct FlowCase {
  int id = 0;
  double alpha_deg = 20.0;
  double gust_strength = 0.0;  // G
  double gust_diameter = 0.5;  // 2R/c
  double y_offset = 0.0;       // y_o/c
  double x_start = kGustStartX;
  double reynolds = 100.0;
  bool disturbed = false;

  double gust_radius() const { return 0.5 * gust_diameter; }
  /// Throws ContractError when a parameter is out of range.
  void validate() const;
};

/// Per-angle oscillator constants: dz/dt = (growth + i·frequency)z − |z|²z.
struct LimitCyclePreset {
  double alpha_deg;
  double growth;
  double frequency;

  /// Radius of the attracting orbit; 0 for steady presets.
  double amplitude() const;
  double period() const;
};

LimitCyclePreset limit_cycle_preset(double alpha_deg);
const std::vector<double>& angles_of_attack();

struct Grid {
  std::size_t nx = 48;
  std::size_t ny = 24;
  double x_min = -0.9;
  double x_max = 3.9;
  double y_min = -1.2;
  double y_max = 1.2;

  std::size_t size() const { return nx * ny; }
  /// Cell-center coordinates; index = iy·nx + ix.
  double x(std::size_t ix) const;
  double y(std::size_t iy) const;
};

struct GustState {
  bool active = false;
  double center_x = 0.0;
  double center_y = 0.0;
  double radius = 0.25;
  double strength = 0.0;
};

GustState gust_state(const FlowCase& c, double t);

using Latent = std::array<double, kLatentDim>;

/// Gust forcing added to (ξ₁, ξ₂) at time t.
std::array<double, 2> gust_forcing(const FlowCase& c, double t);
/// Right-hand side of the latent dynamics.
Latent latent_rhs(const FlowCase& c, double t, const Latent& xi);
Latent initial_latent(const FlowCase& c);
/// Fixed-step RK4 from t0 over `steps` steps of size dt.
Latent integrate_latent(const FlowCase& c, Latent xi, double t0, double dt, std::size_t steps);
/// Distance from ξ to the undisturbed attractor of the case's angle.
double orbit_distance(const FlowCase& c, const Latent& xi);

double lift_coefficient(double alpha_deg, const Latent& xi);

struct SensorLayout {
  std::array<double, kSensorCount> chord_fraction{};
  /// +1 upper surface, 0 leading edge, -1 lower surface.
  std::array<int, kSensorCount> side{};
  /// Global coordinates at the given angle, leading edge at the origin.
  std::array<std::array<double, 2>, kSensorCount> positions(double alpha_deg) const;
  /// Input-vector slot of sensor k's pressure reading.
  static constexpr std::size_t pressure_slot(std::size_t k) { return k; }
  static constexpr std::size_t x_slot(std::size_t k) { return kSensorCount + 2 * k; }
  static constexpr std::size_t y_slot(std::size_t k) { return kSensorCount + 2 * k + 1; }
};

/// Sensor 1 at the upper trailing edge, counter-clockwise to sensor 11 at the
/// lower trailing edge.
const SensorLayout& default_sensor_layout();

/// Stacked pressure + coordinate vector for a latent state and gust state.
std::array<double, kStackedSize> observe_pressure(const Latent& xi, double alpha_deg,
                                                  const GustState& gust);

/// Vorticity on the grid, row-major over (iy, ix).
std::vector<double> vorticity_field(const Grid& grid, const Latent& xi, const GustState& gust);

struct Snapshot {
  int case_id = 0;
  std::uint32_t time_index = 0;
  double t = 0.0;
  std::array<double, kStackedSize> p_stacked{};
  Latent latent{};
  double lift = 0.0;
  std::vector<double> vorticity;
};

/// Integrates one case over the 15-unit horizon. Snapshot spacing is
/// 15/(n−1); every interval is split into `substeps` RK4 steps.
std::vector<Snapshot> surrogate_trajectory(const FlowCase& c, std::size_t n_snapshots,
                                           const Grid& grid, std::size_t substeps = 10);

using guq::Normalization;

struct Dataset {
  Grid grid;
  std::size_t snapshots_per_case = 0;
  std::vector<FlowCase> cases;
  std::vector<Snapshot> snapshots;
  std::vector<std::uint32_t> train;
  std::vector<std::uint32_t> validation;
  std::uint64_t split_seed = 0;
  Normalization input_norm;  // per stacked entry
  Normalization field_norm;  // per-pixel shift, one global scale
  Normalization lift_norm;   // scalar

  const FlowCase& case_of(const Snapshot& s) const;
  /// Snapshot indices of one case, in time order.
  std::vector<std::uint32_t> case_snapshots(int case_id) const;
};

struct Preset {
  std::string name;
  std::size_t gusts_per_angle = 4;
  std::size_t snapshots_per_case = 150;
  Grid grid;

  static Preset desk();
  static Preset paper_scale();
  static Preset by_name(const std::string& name);

  std::size_t case_count() const { return angles_of_attack().size() * (1 + gusts_per_angle); }
  std::size_t snapshot_count() const { return case_count() * snapshots_per_case; }
};

/// One undisturbed case per angle followed by its gust cases, parameters
/// drawn uniformly from the stated ranges.
std::vector<FlowCase> make_cases(const Preset& preset, std::uint64_t seed);

/// Generates trajectories, shuffles snapshot indices with `split_seed`,
/// keeps the first 80% for training and computes normalization on them.
Dataset build_dataset(const std::vector<FlowCase>& cases, std::size_t n_snapshots,
                      const Grid& grid, std::uint64_t split_seed);

/// Appends a noisy copy of every snapshot, with N(0, σ²) added to the
/// pressure entries only. Copies keep the split of their source.
Dataset augment_noise(const Dataset& data, double sigma, Rng& rng);

void write_dataset(std::ostream& out, const Dataset& data);
Dataset read_dataset(std::istream& in);
void save_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& path);

/// Per-snapshot inspection CSV (no field values).
void write_dataset_csv(std::ostream& out, const Dataset& data);
void write_cases_csv(std::ostream& out, const std::vector<FlowCase>& cases);

}  // namespace guq::gust
