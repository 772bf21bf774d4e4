#pragma once

#include <complex>
#include <optional>
#include <span>
#include <vector>

#include "rnnlab/linalg.hpp"
#include "rnnlab/model.hpp"

namespace rnnlab::analysis {

/// Vanishing/exploding conditions for the recurrent weights. Each flag is the
/// inequality on the quantity it names: the sufficient vanishing condition
/// uses the operator 2-norm, the necessary exploding condition |λ₁|.
struct ConditionReport {
  double spectral_radius = 0.0;
  double spectral_norm = 0.0;
  double gamma = 1.0;
  bool vanishing_sufficient = false;  // spectral_norm · γ < 1
  bool exploding_necessary = false;   // spectral_radius > 1/γ
  std::optional<double> eta;          // spectral_norm · γ when below 1
};

ConditionReport check_conditions(const Matrix& w_rec, Activation activation);
ConditionReport check_conditions(const RnnParams& params);

/// Largest supported size for the eigen-expansion tools.
inline constexpr std::size_t kMaxExpansionSize = 8;

/// Eigenvalues of a small square matrix from its characteristic polynomial
/// (Faddeev–LeVerrier coefficients, Durand–Kerner roots). Sorted by
/// decreasing modulus. n ≤ kMaxExpansionSize.
std::vector<std::complex<double>> small_eigenvalues(const Matrix& m);

struct DirectionReport {
  Vector approx;  // leading eigen-term of the expansion
  Vector exact;   // error_row · W^l by repeated row products
  double rel_error = 0.0;
  std::complex<double> eigenvalue;  // modulus of the kept terms
  std::size_t kept_terms = 0;       // 1, or 2 for a conjugate pair
  std::vector<std::complex<double>> eigenvalues;
};

/// Carries error_row through l steps of the linear recurrence with weight W
/// and compares it against the leading term Σ c_j λ_j^l q_j of its expansion
/// in left eigenvectors q_j. The kept terms are those of largest modulus whose
/// coefficient is non-negligible. Throws UnsupportedError for n > 8, repeated
/// eigenvalues, or a kept modulus shared with a different eigenvalue.
DirectionReport exploding_direction(const Matrix& w_rec, const Vector& error_row, unsigned l);

// Single sigmoid unit without input: x ← w·σ(x) + b.

struct BifurcationOptions {
  std::size_t iters = 50'000;
  double tol = 1e-8;
  /// Starting points; empty selects 21 evenly spaced points in [−w−|b|, w+|b|].
  std::vector<double> probes;
  /// Width at which boundary bisection stops.
  double boundary_tol = 1e-7;
};

struct AttractorSet {
  double bias = 0.0;
  std::vector<double> fixed_points;  // stable, ascending
  std::size_t non_point = 0;         // probes ending on a 2-cycle
  std::size_t unconverged = 0;       // probes excluded from clustering
};

struct BifurcationSweep {
  double weight = 0.0;
  std::vector<AttractorSet> points;
  /// Bias values where the fixed-point count changes, refined by bisection.
  std::vector<double> boundaries;
};

double unit_map(double w, double b, double x);
AttractorSet attractors_at(double w, double b, const BifurcationOptions& opts = {});
BifurcationSweep bifurcation_sweep(double w, std::span<const double> b_grid,
                                   const BifurcationOptions& opts = {});

struct SurfaceOptions {
  std::size_t steps = 50;
  double x0 = 0.5;
  double target = 0.7;
};

struct SurfacePoint {
  double loss = 0.0;
  double d_w = 0.0;
  double d_b = 0.0;
  bool saturated = false;
};

/// E = (σ(x_T) − target)² with its gradient from the BPTT sweep.
SurfacePoint surface_point(double w, double b, const SurfaceOptions& opts = {});

struct SurfaceScan {
  std::vector<double> w_grid;
  std::vector<double> b_grid;
  Matrix loss;       // rows follow w_grid, columns b_grid
  Matrix grad_norm;  // ‖(∂E/∂w, ∂E/∂b)‖
  std::vector<bool> saturated;  // row-major like loss

  double max_over_median_gradient() const;
};

SurfaceScan error_surface_scan(std::span<const double> w_grid, std::span<const double> b_grid,
                               const SurfaceOptions& opts = {});

struct DivergenceTrace {
  std::vector<double> driven;      // ‖x_t(a) − x_t(b)‖ under the given inputs, t = 0..T
  std::vector<double> autonomous;  // same with every input zeroed
};

DivergenceTrace divergence_probe(const RnnParams& params, const std::vector<Vector>& inputs,
                                 const Vector& x0_a, const Vector& x0_b);

}  // namespace rnnlab::analysis
