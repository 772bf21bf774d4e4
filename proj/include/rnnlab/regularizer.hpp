#pragma once

#include <vector>

#include "rnnlab/linalg.hpp"
#include "rnnlab/model.hpp"

namespace rnnlab {

/// Terms are indexed by k = 0..T; only k = 1..T−1 can be included.
struct OmegaReport {
  double omega_total = 0.0;
  std::vector<double> omega_k;
  std::vector<double> ratio_k;
  std::vector<bool> included;
  std::size_t included_count = 0;
  double mean_ratio = 0.0;
  double alpha = 0.0;
  /// No term had a usable error signal.
  bool degenerate = false;
};

struct OmegaGradient {
  Matrix d_w_rec;
  /// Terms dropped because the transported row vanished (‖z‖ = 0).
  std::size_t skipped_zero_transport = 0;
};

namespace regularizer {

/// Error rows with a smaller norm carry no usable signal and are excluded.
inline constexpr double kMinSignalNorm = 1e-30;

/// Ω = Σ_k (‖δ_{k+1} J_{k+1}‖ / ‖δ_{k+1}‖ − 1)² over k = 1..T−1, where
/// J_{k+1} = W_rec diag(σ′(x_k)) and deltas[k] = ∂E/∂x_k from BPTT.
OmegaReport omega(const RnnParams& params, const Trajectory& traj,
                  const std::vector<Vector>& deltas, double alpha = 0.0);

/// ∂⁺Ω/∂W_rec holding x_k and the error rows fixed. Per term, with
/// r = δ_{k+1}, d = σ′(x_k), z = (r W_rec) ⊙ d:
///   ∂Ω_k/∂W_rec = 2(‖z‖/‖r‖ − 1) / (‖r‖ ‖z‖) · r ⊗ (z ⊙ d).
OmegaGradient omega_grad_immediate(const RnnParams& params, const Trajectory& traj,
                                   const std::vector<Vector>& deltas);

}  // namespace regularizer
}  // namespace rnnlab
