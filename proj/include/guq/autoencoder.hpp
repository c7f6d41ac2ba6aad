#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "guq/autodiff.hpp"
#include "guq/checkpoint.hpp"
#include "guq/gustgen.hpp"
#include "guq/nn.hpp"
#include "guq/uq.hpp"

namespace guq::ae {

inline constexpr std::size_t kLatentDim = 3;

/// Mean squared field error plus β times the squared lift error.
double ae_loss(std::span<const double> field, std::span<const double> field_hat, double lift,
               double lift_hat, double beta);
/// Batched version: fields B×n, lifts B×1; the lift term is averaged over B.
ad::Var ae_loss(ad::Var field, ad::Var field_hat, ad::Var lift, ad::Var lift_hat, double beta);

struct AutoencoderConfig {
  std::vector<std::size_t> hidden{256, 64};
  double beta = 0.05;
  nn::TrainConfig train{1e-3, 0.0, 256, 1000, 200, 0};
};

/// Encoder (field, lift) → ξ and decoders ξ → field, ξ → lift. Public
/// methods take and return physical units.
class Autoencoder final : public uq::LatentDecoder {
 public:
  Autoencoder(nn::Network encoder, nn::Network field_decoder, nn::Network lift_decoder,
              double beta, Normalization field_norm, Normalization lift_norm, std::size_t nx,
              std::size_t ny);

  /// Untrained model with tanh hidden layers sized from `config`.
  static Autoencoder create(std::size_t nx, std::size_t ny, const AutoencoderConfig& config,
                            Normalization field_norm, Normalization lift_norm,
                            std::uint64_t seed);

  std::size_t latent_dim() const override { return kLatentDim; }
  std::size_t grid_nx() const override { return nx_; }
  std::size_t grid_ny() const override { return ny_; }
  double beta() const { return beta_; }

  const nn::Network& encoder() const { return encoder_; }
  const nn::Network& field_decoder() const { return field_decoder_; }
  const nn::Network& lift_decoder() const { return lift_decoder_; }
  nn::Network& encoder() { return encoder_; }
  nn::Network& field_decoder() { return field_decoder_; }
  nn::Network& lift_decoder() { return lift_decoder_; }
  const Normalization& field_norm() const { return field_norm_; }
  const Normalization& lift_norm() const { return lift_norm_; }

  /// fields N×n with one lift value per row → N×3.
  Matrix encode(const Matrix& fields, std::span<const double> lifts) const;
  gust::Latent encode(std::span<const double> field, double lift) const;
  void decode(const Matrix& latents, Matrix& fields, std::vector<double>& lifts) const override;

  /// Encoder input rows in normalized units, [field..., lift].
  Matrix normalized_inputs(const gust::Dataset& data, std::span<const std::uint32_t> rows) const;

  /// Replaces ξ by Q(ξ − c) inside the networks. Q must be orthogonal; the
  /// decoded output is unchanged up to rounding.
  void reparameterize(const Matrix& q, std::span<const double> center);

  Checkpoint to_checkpoint() const;
  static Autoencoder from_checkpoint(const Checkpoint& ckpt);

 private:
  nn::Network encoder_;
  nn::Network field_decoder_;
  nn::Network lift_decoder_;
  double beta_;
  Normalization field_norm_;
  Normalization lift_norm_;
  std::size_t nx_;
  std::size_t ny_;
};

struct LatentTrajectory {
  int case_id = 0;
  std::vector<std::uint32_t> time_index;
  std::vector<double> t;
  std::vector<gust::Latent> xi;
};

struct AutoencoderTrainResult {
  Autoencoder model;
  nn::TrainResult history;
  std::vector<LatentTrajectory> trajectories;
};

/// Trains on the dataset's split, then rotates the latent space so that ξ₃
/// follows the angle of attack and ξ₁, ξ₂ carry the remaining variance in
/// descending order.
AutoencoderTrainResult train_autoencoder(const gust::Dataset& data,
                                         const AutoencoderConfig& config);

/// Orthogonal Q and center c for the canonical latent frame of `latents`
/// with per-row labels (the angle of attack).
void latent_frame(const Matrix& latents, std::span<const double> labels, Matrix& q,
                  std::vector<double>& center);

/// Latent of every snapshot, indexed like data.snapshots.
std::vector<gust::Latent> encode_dataset(const Autoencoder& model, const gust::Dataset& data);
std::vector<LatentTrajectory> latent_trajectories(const Autoencoder& model,
                                                  const gust::Dataset& data);

/// Field MSE in normalized units over the listed snapshots.
double field_mse(const Autoencoder& model, const gust::Dataset& data,
                 std::span<const std::uint32_t> rows);

/// Rank-r truncated SVD of the normalized train fields, scored on both
/// splits in normalized units.
struct PodBaseline {
  Matrix modes;  // n×r, orthonormal columns
  double train_mse = 0.0;
  double validation_mse = 0.0;
};
PodBaseline pod_baseline(const gust::Dataset& data, std::size_t rank = 3);

void write_trajectories_csv(std::ostream& out, const std::vector<LatentTrajectory>& trajs);
/// Inverse of write_trajectories_csv.
std::vector<LatentTrajectory> read_trajectories_csv(std::istream& in);
/// Targets for every snapshot of `data`, matched by (case id, time index).
std::vector<gust::Latent> latents_for(const gust::Dataset& data,
                                      const std::vector<LatentTrajectory>& trajs);

}  // namespace guq::ae
