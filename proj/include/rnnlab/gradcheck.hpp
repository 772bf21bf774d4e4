#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rnnlab/grad.hpp"
#include "rnnlab/model.hpp"

namespace rnnlab::gradcheck {

/// ‖a − b‖ / max(‖a‖, ‖b‖), 0 when both vanish.
double relative_error(std::span<const double> a, std::span<const double> b);

struct BlockError {
  std::string block;
  double rel_error = 0.0;
};

struct CheckReport {
  std::vector<BlockError> bptt;  // one row per parameter block
  double bptt_max = 0.0;
  double omega_rel_error = 0.0;  // ∂⁺Ω/∂W_rec against frozen-signal differences
  bool omega_checked = false;    // false when every Ω term was excluded
  std::size_t evaluations = 0;
};

struct CheckOptions {
  double step = 1e-5;
};

/// Compares the analytic BPTT gradient and the immediate Ω gradient with
/// central differences on one sequence.
CheckReport check(const RnnParams& params, const Vector& x0, const std::vector<Vector>& inputs,
                  const LossSpec& loss, const Target& target, CheckOptions opts = {});

/// Random instance: m = 3 inputs, o = 2 outputs, weights with std 0.5/√n,
/// small random biases and x_0, Normal(0, 1) inputs,
/// softmax loss on every step with random labels.
struct Instance {
  RnnParams params;
  Vector x0;
  std::vector<Vector> inputs;
  Target target;
};

Instance random_instance(std::size_t hidden, std::size_t steps, Activation activation, std::uint64_t seed);

}  // namespace rnnlab::gradcheck
