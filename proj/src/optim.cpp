#include "lsd/optim.hpp"

#include <cmath>

#include "lsd/binary_io.hpp"
#include "lsd/error.hpp"

namespace lsd::ad {

namespace {
constexpr char kCheckpointMagic[8] = {'L', 'S', 'D', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace

void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state) {
  for (const auto& [name, p] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    if (it->second.shape() != p.shape())
      throw ValidationError("adam: gradient for '" + name + "' has shape " +
                            shape_string(it->second.shape()) + ", parameter " +
                            shape_string(p.shape()));
    if (!it->second.all_finite())
      throw NumericalError("adam: non-finite gradient for '" + name + "', step refused");
  }

  const AdamConfig& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    const Tensor& g = it->second;
    Tensor& m = state.first_moment.try_emplace(name, p.shape(), 0.0).first->second;
    Tensor& v = state.second_moment.try_emplace(name, p.shape(), 0.0).first->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= c.lr * mhat / (std::sqrt(vhat) + c.epsilon);
    }
  }
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  io::Writer w;
  w.put_bytes({kCheckpointMagic, sizeof kCheckpointMagic});
  w.put(kCheckpointVersion);
  w.put(ckpt.spec_hash);
  w.put(ckpt.step);
  w.put(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    w.put_string(name);
    w.put(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.put(static_cast<std::uint64_t>(d));
    w.put_array(t.data(), t.size());
  }
  return w.bytes();
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string& origin) {
  io::Reader r(bytes, origin);
  if (r.get_bytes(sizeof kCheckpointMagic) != std::string_view(kCheckpointMagic, sizeof kCheckpointMagic))
    throw ValidationError(origin + ": not a checkpoint file");
  if (const auto v = r.get<std::uint32_t>(); v != kCheckpointVersion)
    throw ValidationError(origin + ": unsupported checkpoint version " + std::to_string(v));
  Checkpoint c;
  c.spec_hash = r.get<std::uint64_t>();
  c.step = r.get<std::int64_t>();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.get_string();
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw ValidationError(origin + ": implausible rank for '" + name + "'");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    if (shape_size(shape) > r.remaining() / sizeof(double))
      throw ValidationError(origin + ": truncated tensor '" + name + "'");
    Tensor t(shape);
    r.get_array(t.data(), t.size());
    c.tensors.emplace(std::move(name), std::move(t));
  }
  if (r.remaining() != 0) throw ValidationError(origin + ": trailing bytes after checkpoint");
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path), path.string());
}

}  // namespace lsd::ad
