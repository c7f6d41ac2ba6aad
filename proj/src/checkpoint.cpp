#include "guq/checkpoint.hpp"

#include <fstream>

#include "guq/binary_io.hpp"
#include "guq/error.hpp"

namespace guq {

namespace {
constexpr std::string_view kMagic = "GUQM";
constexpr std::uint32_t kVersion = 1;
}  // namespace

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::network:
      return "network";
    case ModelKind::autoencoder:
      return "autoencoder";
    case ModelKind::estimator_probabilistic:
      return "estimator-probabilistic";
    case ModelKind::estimator_deterministic:
      return "estimator-deterministic";
  }
  return "unknown";
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  io::write_magic(out, kMagic);
  io::write_u32(out, kVersion);
  io::write_u32(out, static_cast<std::uint32_t>(ckpt.kind));
  io::write_u32(out, static_cast<std::uint32_t>(ckpt.networks.size()));
  for (const auto& net : ckpt.networks) nn::write_network(out, net);
  io::write_u32(out, static_cast<std::uint32_t>(ckpt.norms.size()));
  for (const auto& n : ckpt.norms) {
    io::write_u32(out, static_cast<std::uint32_t>(n.size()));
    io::write_f64s(out, n.shift);
    io::write_f64s(out, n.scale);
  }
  io::write_u32(out, static_cast<std::uint32_t>(ckpt.scalars.size()));
  io::write_f64s(out, ckpt.scalars);
  if (!out) throw IoError("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  io::expect_magic(in, kMagic, "checkpoint");
  const std::uint32_t version = io::read_u32(in);
  if (version != kVersion) {
    throw IoError("checkpoint: unsupported format version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const std::uint32_t kind = io::read_u32(in);
  if (kind > 3) throw IoError("checkpoint: unknown model kind " + std::to_string(kind));
  ckpt.kind = static_cast<ModelKind>(kind);
  const std::uint32_t n_nets = io::read_u32(in);
  if (n_nets > 64) throw IoError("checkpoint: implausible network count");
  for (std::uint32_t i = 0; i < n_nets; ++i) ckpt.networks.push_back(nn::read_network(in));
  const std::uint32_t n_norms = io::read_u32(in);
  if (n_norms > 64) throw IoError("checkpoint: implausible normalization count");
  for (std::uint32_t i = 0; i < n_norms; ++i) {
    const std::uint32_t size = io::read_u32(in);
    if (size > (1U << 26)) throw IoError("checkpoint: implausible normalization size");
    Normalization n;
    n.shift.resize(size);
    n.scale.resize(size);
    io::read_f64s(in, n.shift);
    io::read_f64s(in, n.scale);
    ckpt.norms.push_back(std::move(n));
  }
  const std::uint32_t n_scalars = io::read_u32(in);
  if (n_scalars > 1024) throw IoError("checkpoint: implausible scalar count");
  ckpt.scalars.resize(n_scalars);
  io::read_f64s(in, ckpt.scalars);
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  try {
    return read_checkpoint(in);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace guq
