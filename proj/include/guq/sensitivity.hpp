#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "guq/autodiff.hpp"
#include "guq/gustgen.hpp"
#include "guq/matrix.hpp"
#include "guq/rng.hpp"

namespace guq::sens {

struct GramianResult {
  Matrix gramian;                    // d×d
  std::vector<double> eigenvalues;   // descending
  Matrix eigenvectors;               // columns, orthonormal, largest |entry| positive
};

/// Perturbation to add to the base input for one Monte Carlo sample.
using NoiseSampler = std::function<std::vector<double>(Rng&)>;

/// C = mean over samples of JᵀJ, J the l×d Jacobian of `f` at base + noise.
/// `f` maps a B×d batch to B×l row by row. Samples are drawn in order from
/// `rng` and accumulated in index order.
GramianResult measurement_gramian(const ad::VectorFunction& f, std::span<const double> base,
                                  const NoiseSampler& sampler, std::size_t samples, Rng& rng);

/// Eigen-decomposes the symmetric part of a Gramian.
GramianResult decompose_gramian(const Matrix& gramian);

/// White noise with the given variance on the first `count` entries of a
/// d-vector, zero elsewhere.
NoiseSampler white_noise(std::size_t d, std::size_t count, double variance);
/// No perturbation.
NoiseSampler no_noise(std::size_t d);

/// Eigenvalues down to −kNegativeTolerance·max(1, λ₁) are treated as zero.
inline constexpr double kNegativeTolerance = 1e-10;

/// Smallest r whose leading eigenvalues hold a fraction ≥ γ of the total.
/// Returns 0 only for an all-zero spectrum.
std::size_t select_rank(std::span<const double> eigenvalues, double gamma);

struct NoiseModel {
  Matrix modes;            // d×r, orthonormal columns
  double variance = 0.0;   // σ_x² per retained mode coefficient
  std::vector<bool> mask;  // true entries are forced to zero
};

/// Retains the leading modes of a Gramian up to energy γ.
NoiseModel make_noise_model(const GramianResult& g, double gamma, double variance,
                            std::vector<bool> mask);

/// η = Σⱼ ζⱼ uⱼ with independent ζⱼ ~ N(0, σ_x²), masked entries zeroed.
std::vector<double> structured_noise(const NoiseModel& model, Rng& rng);

/// Mask that zeroes the 22 coordinate slots of a stacked input.
std::vector<bool> coordinate_mask();

/// Pressure-slot components of eigenvector `mode`, sign-fixed so the
/// largest-magnitude component is positive.
std::array<double, gust::kSensorCount> sensor_importance(const Matrix& eigenvectors,
                                                         std::size_t mode,
                                                         const gust::SensorLayout& layout);

/// Fraction of the spectrum held by eigenvalue `mode`.
double energy_share(std::span<const double> eigenvalues, std::size_t mode);

struct ImportanceRow {
  std::uint32_t time_index = 0;
  std::size_t mode = 0;
  double share = 0.0;
  std::array<double, gust::kSensorCount> weights{};
};

void write_importance_csv(std::ostream& out, const std::vector<ImportanceRow>& rows);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace guq::sens
