#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace rnnlab {

/// Dense column of doubles. Thin value wrapper so signatures say what they
/// carry; storage is a plain std::vector.
class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t n, double fill = 0.0) : data_(n, fill) {}
  Vector(std::initializer_list<double> values) : data_(values) {}
  explicit Vector(std::vector<double> values) : data_(std::move(values)) {}

  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  friend bool operator==(const Vector&, const Vector&) = default;

 private:
  std::vector<double> data_;
};

/// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major);

  static Matrix identity(std::size_t n);
  static Matrix diag(const Vector& d);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  const std::vector<double>& values() const { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

namespace linalg {

// Products. Every output entry is summed left to right over the shared index,
// so results are reproducible bit-for-bit against a naive loop.
Vector matvec(const Matrix& m, const Vector& v);
/// Row-vector product vᵀM, returned as a Vector of length M.cols.
Vector vecmat(const Vector& v, const Matrix& m);
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix matrix_power(const Matrix& m, unsigned power);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);
double max_abs(std::span<const double> v);
bool all_finite(std::span<const double> v);

Vector add(const Vector& a, const Vector& b);
Vector sub(const Vector& a, const Vector& b);
Vector scaled(const Vector& a, double s);
Matrix add(const Matrix& a, const Matrix& b);
Matrix scaled(const Matrix& a, double s);
/// m += s · a bᵀ
void add_outer(Matrix& m, const Vector& a, const Vector& b, double s = 1.0);

double frobenius_norm(const Matrix& m);

struct PowerIterationResult {
  double eigenvalue = 0.0;
  Vector eigenvector;
  bool converged = false;
  std::size_t iterations = 0;
};

struct PowerIterationOptions {
  std::size_t max_iters = 10'000;
  double tol = 1e-10;
};

/// Dominant eigenpair by normalised power iteration with a Rayleigh-quotient
/// estimate. Converged requires the estimate to settle within tol and the
/// eigen-residual to be small, so complex or tied dominant pairs (whose
/// Rayleigh quotient can sit still while the iterate rotates) report
/// converged=false.
PowerIterationResult power_iteration(const Matrix& m, const Vector& v0,
                                     PowerIterationOptions opts = {});

/// Largest singular value, sqrt of the dominant eigenvalue of MᵀM.
double spectral_norm(const Matrix& m);

/// ‖M^k‖₂^(1/k), evaluated with rescaling so large k cannot overflow.
double growth_rate(const Matrix& m, unsigned k = 64);

struct SpectralRadiusOptions {
  std::size_t restarts = 8;
  std::uint64_t seed = 0x5eed;
  unsigned fallback_power = 64;
  PowerIterationOptions power{};
};

/// |λ₁| via seeded power-iteration restarts; falls back to growth_rate when
/// no restart converges (complex or defective dominant spectrum).
double spectral_radius(const Matrix& m, SpectralRadiusOptions opts = {});

/// Solves A x = b by LU with partial pivoting. Throws on a singular system.
Vector solve(const Matrix& a, const Vector& b);

}  // namespace linalg
}  // namespace rnnlab
