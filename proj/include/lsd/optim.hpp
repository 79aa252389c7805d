#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "lsd/tensor.hpp"

namespace lsd::ad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  ParamMap first_moment;
  ParamMap second_moment;
};

/// One bias-corrected Adam update. Every gradient is checked before anything
/// is modified; a non-finite gradient throws NumericalError naming the
/// parameter and leaves params and state untouched.
void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state);

/// Checkpoint: magic, version, spec hash, step, then named tensors
/// (name, rank, dims, raw little-endian doubles).
struct Checkpoint {
  std::uint64_t spec_hash = 0;
  std::int64_t step = 0;
  ParamMap tensors;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes, const std::string& origin = "<memory>");
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lsd::ad
