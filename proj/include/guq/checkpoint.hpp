#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "guq/nn.hpp"
#include "guq/normalization.hpp"

namespace guq {

enum class ModelKind : std::uint32_t {
  network = 0,
  autoencoder = 1,
  estimator_probabilistic = 2,
  estimator_deterministic = 3,
};

const char* to_string(ModelKind kind);

/// Contents of a "GUQM" model file: one or more networks plus the
/// normalization blocks and scalar settings needed to use them.
struct Checkpoint {
  ModelKind kind = ModelKind::network;
  std::vector<nn::Network> networks;
  std::vector<Normalization> norms;
  std::vector<double> scalars;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace guq
