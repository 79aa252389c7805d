#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "lsd/autodiff.hpp"
#include "lsd/lrfconv.hpp"

/// Central finite-difference checks of reverse-mode gradients.
namespace lsd::verify {

struct GradCheck {
  std::string name;
  std::size_t points = 0;
  double max_error = 0.0;  ///< worst relative error over all points
  double tolerance = 0.0;
  bool passed() const { return max_error < tolerance; }
};

/// Builds a scalar from inputs that are already on the tape.
using ScalarFn = std::function<ad::Var(const std::vector<ad::Var>&)>;
/// Draws the inputs of one check point.
using InputSampler = std::function<std::vector<ad::Tensor>(std::mt19937_64&)>;

/// Full coordinate-wise check. The error at a point is
/// |g - g_fd| / max(|g|, |g_fd|, 1e-12) over the concatenated gradient.
GradCheck check_gradient(const std::string& name, const ScalarFn& fn, const InputSampler& sample,
                         std::size_t points, std::uint64_t seed, double tolerance,
                         double step = 1e-6);

/// Scalar loss of a parameter binding. Called once per evaluation.
using ParamLoss = std::function<ad::Var(const Binding&)>;
/// Parameters of one check point.
using ParamSampler = std::function<ad::ParamMap(std::size_t point)>;

/// Directional check for large parameter sets: the analytic derivative along
/// a random unit direction against the central difference along it.
GradCheck check_directional(const std::string& name, const ParamLoss& loss,
                            const ParamSampler& sample, std::size_t points, std::uint64_t seed,
                            double tolerance, double step = 1e-6);

inline constexpr double kPrimitiveTolerance = 1e-5;
inline constexpr double kNetworkTolerance = 1e-4;

/// One check per differentiable tape operation.
std::vector<GradCheck> primitive_checks(std::size_t points, std::uint64_t seed);
/// Convolution layers, the head, the two-layer toy network end to end for
/// both tasks.
std::vector<GradCheck> network_checks(std::size_t points, std::uint64_t seed);

}  // namespace lsd::verify
