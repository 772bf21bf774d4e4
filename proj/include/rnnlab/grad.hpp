#pragma once

#include <optional>
#include <span>
#include <vector>

#include "rnnlab/linalg.hpp"
#include "rnnlab/model.hpp"

namespace rnnlab {

/// Gradient with the same block layout as RnnParams.
struct Gradients {
  Matrix w_rec;
  Matrix w_in;
  Vector b;
  Matrix w_out;
  Vector b_out;

  static Gradients zeros_like(const RnnParams& params);

  std::size_t size() const;
  /// Concatenation w_rec, w_in, b, w_out, b_out (row-major blocks).
  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> flat);
  void add_scaled(const Gradients& other, double s);
  void scale(double s);
  double norm() const;
};

/// Per-k diagnostics for one scoring step t. Index k runs 0..t.
struct ComponentDiagnostics {
  std::size_t step = 0;
  /// ‖(∂E_t/∂x_t)(∂x_t/∂x_k)‖
  std::vector<double> transported_norms;
  /// Temporal components of ∂E_t/∂W_rec; entry 0 is empty (x_0 is not
  /// produced by W_rec).
  std::vector<Matrix> w_rec_components;
  /// Frobenius norms of the matrices above (0 at k = 0).
  std::vector<double> component_norms;
};

struct GradientReport {
  Gradients grads;
  /// δ_k = ∂E/∂x_k accumulated over every t ≥ k, for k = 0..T.
  std::vector<Vector> deltas;
  std::optional<ComponentDiagnostics> components;
};

struct BpttOptions {
  /// When set, materialise the O(T²) per-(t,k) diagnostics for this t.
  std::optional<std::size_t> diagnostic_step;
};

namespace grad {

/// ∂x_t/∂x_{t−1} = W_rec diag(σ′(x_{t−1})), laid out so that an error row r
/// is carried back one step by r · J.
Matrix step_jacobian(const RnnParams& params, const Vector& x_prev);

/// ∂x_t/∂x_k as the ordered product J_t ⋯ J_{k+1}. Requires k < t ≤ T.
Matrix jacobian_product(const RnnParams& params, const Trajectory& traj, std::size_t k,
                        std::size_t t);

/// The row shared by every row i of ∂⁺x_k/∂W_rec, namely σ(x_{k−1}).
Vector immediate_partial_wrec(const RnnParams& params, const Trajectory& traj, std::size_t k);

/// Contribution e ⊗ σ(x_{k−1}) of an error row e at step k to ∂E/∂W_rec.
Matrix contract_immediate_wrec(const Vector& error_row, const Vector& immediate_row);

/// Reverse sweep over the trajectory. dE_dx[t] is the immediate error signal
/// ∂E_t/∂x_t for t = 0..T (entry 0 ignored). Readout gradients are left at zero.
GradientReport bptt(const RnnParams& params, const Trajectory& traj,
                    const std::vector<Vector>& dE_dx, BpttOptions opts = {});

/// Same sweep with the readout gradients taken from the loss.
GradientReport bptt(const RnnParams& params, const Trajectory& traj, const LossResult& loss,
                    BpttOptions opts = {});

/// Norms ‖(∂E_t/∂x_t)(∂x_t/∂x_k)‖ for k = 0..t.
std::vector<double> component_norms(const RnnParams& params, const Trajectory& traj,
                                    std::size_t t, const Vector& dE_dxt);

/// The temporal components of ∂E_t/∂W_rec for k = 1..t (index 0 empty).
std::vector<Matrix> temporal_components(const RnnParams& params, const Trajectory& traj,
                                        std::size_t t, const Vector& dE_dxt);

}  // namespace grad
}  // namespace rnnlab
