#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rnnlab/linalg.hpp"

namespace rnnlab {

enum class ActivationKind { tanh, sigmoid, identity };

/// Element-wise nonlinearity σ together with γ, the supremum of |σ′|.
class Activation {
 public:
  constexpr Activation() = default;
  constexpr explicit Activation(ActivationKind kind) : kind_(kind) {}

  constexpr ActivationKind kind() const { return kind_; }
  constexpr double gamma() const { return kind_ == ActivationKind::sigmoid ? 0.25 : 1.0; }

  double value(double x) const;
  double derivative(double x) const;
  Vector value(const Vector& x) const;
  Vector derivative(const Vector& x) const;

  std::string_view name() const;
  static Activation parse(std::string_view name);

  friend constexpr bool operator==(Activation, Activation) = default;

 private:
  ActivationKind kind_ = ActivationKind::tanh;
};

/// x_t = W_rec σ(x_{t−1}) + W_in u_t + b, read out as y_t = W_out σ(x_t) + b_out.
struct RnnParams {
  Matrix w_rec;  // n×n
  Matrix w_in;   // n×m
  Vector b;      // n
  Matrix w_out;  // o×n
  Vector b_out;  // o
  Activation activation;

  std::size_t hidden() const { return w_rec.rows(); }
  std::size_t inputs() const { return w_in.cols(); }
  std::size_t outputs() const { return w_out.rows(); }

  /// Throws DimensionError/NonFiniteError when the blocks disagree or hold
  /// non-finite entries.
  void validate() const;

  friend bool operator==(const RnnParams&, const RnnParams&) = default;
};

/// One forward pass. states[0] is x_0; states[t] and inputs[t−1] belong to
/// step t, so states.size() == inputs.size() + 1.
struct Trajectory {
  std::vector<Vector> inputs;
  std::vector<Vector> states;

  std::size_t length() const { return inputs.size(); }
  const Vector& state(std::size_t t) const { return states.at(t); }
  const Vector& input(std::size_t t) const { return inputs.at(t - 1); }
};

enum class LossKind { softmax_final, softmax_per_step, squared_final };

/// Supervision for one sequence. Step indices are 1-based (t = 1..T).
/// Classification uses `labels`, regression uses `values`; both are aligned
/// with `steps`.
struct Target {
  std::vector<std::size_t> steps;
  std::vector<std::size_t> labels;
  std::vector<Vector> values;
};

/// Sum-over-time (E = Σ_t E_t) or mean-over-scored-steps per sequence.
enum class TimeReduction { sum, mean };

struct LossSpec {
  LossKind kind = LossKind::softmax_final;
  TimeReduction reduction = TimeReduction::sum;
};

struct LossResult {
  double total = 0.0;
  std::vector<double> per_step;  // indexed by t = 0..T, entry 0 unused
  std::vector<Vector> dE_dx;     // indexed by t = 0..T, zero where unscored
  Matrix d_w_out;
  Vector d_b_out;
};

namespace model {

/// Runs the recurrence. Throws NonFiniteError naming the step when a state
/// leaves the finite range.
Trajectory forward(const RnnParams& params, const Vector& x0, const std::vector<Vector>& inputs);
Trajectory forward(const RnnParams& params, const std::vector<Vector>& inputs);

/// Single transition x_t from x_{t−1} and u_t.
Vector step(const RnnParams& params, const Vector& x_prev, const Vector& input);

Vector readout(const RnnParams& params, const Vector& x);

/// Loss on the readout and its derivative with respect to each x_t (through
/// the readout only) plus the readout-weight gradients.
LossResult loss(const RnnParams& params, const LossSpec& spec, const Trajectory& traj,
                const Target& target);

/// Every weight drawn from Normal(0, 0.1²), biases zero; deterministic per seed.
RnnParams init_params(std::size_t hidden, std::size_t inputs, std::size_t outputs,
                      Activation activation, std::uint64_t seed, double stddev = 0.1);

std::string_view loss_name(LossKind kind);
LossKind parse_loss(std::string_view name);

}  // namespace model
}  // namespace rnnlab
