#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "guq/estimator.hpp"
#include "guq/matrix.hpp"
#include "guq/probhead.hpp"
#include "guq/rng.hpp"

namespace guq::uq {

/// T stochastic head evaluations for one input.
struct PredictiveEnsemble {
  std::vector<prob::GaussianPrediction> entries;

  std::size_t size() const { return entries.size(); }
  std::size_t dim() const { return entries.empty() ? 0 : entries.front().mean.size(); }
};

/// T passes with fresh dropout masks, evaluated as one T-row batch.
PredictiveEnsemble mc_predict(const SensorEstimator& est, std::span<const double> x,
                              std::size_t passes, Rng& rng);

/// Ensembles for every row of `inputs`; row i draws from substream (seed, i)
/// so results do not depend on batching.
std::vector<PredictiveEnsemble> mc_predict_batch(const SensorEstimator& est, const Matrix& inputs,
                                                 std::size_t passes, std::uint64_t seed);

/// N(mean of μ̂ₖ, mean of Σ̂ₖ).
prob::LatentDistribution aleatoric_distribution(const PredictiveEnsemble& ens);
/// N(mean of μ̂ₖ, sample covariance of μ̂ₖ with T−1 normalization).
prob::LatentDistribution epistemic_distribution(const PredictiveEnsemble& ens);

/// Maps latent rows to fields and lift values.
class LatentDecoder {
 public:
  virtual ~LatentDecoder() = default;
  virtual std::size_t latent_dim() const = 0;
  virtual std::size_t grid_nx() const = 0;
  virtual std::size_t grid_ny() const = 0;
  std::size_t field_size() const { return grid_nx() * grid_ny(); }
  /// latents M×l → fields M×(nx·ny) and M lift values.
  virtual void decode(const Matrix& latents, Matrix& fields, std::vector<double>& lifts) const = 0;
};

/// field = A·ξ + offset, lift = w·ξ + lift_offset.
class LinearDecoder final : public LatentDecoder {
 public:
  LinearDecoder(Matrix a, std::vector<double> offset, std::vector<double> lift_weights,
                double lift_offset);
  /// Zero offsets, zero lift.
  explicit LinearDecoder(Matrix a);

  std::size_t latent_dim() const override { return a_.cols(); }
  std::size_t grid_nx() const override { return a_.rows(); }
  std::size_t grid_ny() const override { return 1; }
  void decode(const Matrix& latents, Matrix& fields, std::vector<double>& lifts) const override;

 private:
  Matrix a_;
  std::vector<double> offset_;
  std::vector<double> lift_weights_;
  double lift_offset_;
};

struct FieldStats {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::vector<double> mean;
  std::vector<double> variance;
  double lift_mean = 0.0;
  double lift_variance = 0.0;
};

/// Decodes M latent draws and returns per-pixel and lift sample moments
/// (variance with M−1 normalization).
FieldStats reconstruct_stats(const prob::LatentDistribution& dist, const LatentDecoder& decoder,
                             std::size_t samples, Rng& rng);

inline constexpr double kVarianceFloor = 1e-12;

/// Mean over pixels of log N(truth | mean, max(variance, 1e-12)).
double avg_loglikelihood(const FieldStats& stats, std::span<const double> truth);

/// χ² quantile with `dof` degrees of freedom.
double chi2_quantile(std::size_t dof, double level);

struct EllipseSpec {
  std::array<std::size_t, 2> plane{0, 1};
  std::array<double, 2> center{};
  std::array<double, 2> semi_axes{};  // descending
  double angle = 0.0;                 // major axis from the first plane axis, [0, π)
  double level = 0.95;
};

/// Confidence ellipse of the 2×2 marginal covariance on `plane`.
EllipseSpec confidence_ellipse(const prob::LatentDistribution& dist,
                               std::array<std::size_t, 2> plane, double level = 0.95);

/// Point (in plane coordinates) inside or on the ellipse. Degenerate axes
/// accept only points on the remaining axis.
bool ellipse_contains(const EllipseSpec& e, std::array<double, 2> point);

/// (y−μ)ᵀΣ⁻¹(y−μ); throws NumericError if Σ is singular.
double mahalanobis_squared(const prob::LatentDistribution& dist, std::span<const double> y);

/// y inside the full-dimensional confidence ellipsoid at `level`.
bool ellipsoid_contains(const prob::LatentDistribution& dist, std::span<const double> y,
                        double level = 0.95);

struct ReportRow {
  int case_id = 0;
  std::uint32_t time_index = 0;
  prob::UncertaintyKind kind = prob::UncertaintyKind::aleatoric;
  double lift_mean = 0.0;
  double lift_two_sigma = 0.0;
  double avg_loglikelihood = 0.0;
  /// Set on the snapshot with the largest latent covariance trace of its
  /// case and kind.
  bool max_uncertainty = false;
};

/// Sets max_uncertainty on the largest-trace row per (case, kind).
void flag_max_uncertainty(std::vector<ReportRow>& rows, std::span<const double> traces);

void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows);

}  // namespace guq::uq
