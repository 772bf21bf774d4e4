#include "rnnlab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "rnnlab/error.hpp"

namespace rnnlab {
namespace {

[[noreturn]] void dimension_error(const char* op, std::size_t a, std::size_t b) {
  std::ostringstream oss;
  oss << op << ": dimension mismatch (" << a << " vs " << b << ")";
  throw DimensionError(oss.str());
}

void require_square(const Matrix& m, const char* op) {
  if (m.rows() != m.cols()) dimension_error(op, m.rows(), m.cols());
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major)
    : rows_(rows), cols_(cols), data_(std::move(row_major)) {
  if (data_.size() != rows_ * cols_) dimension_error("Matrix", data_.size(), rows_ * cols_);
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diag(const Vector& d) {
  Matrix m(d.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
  return m;
}

namespace linalg {

Vector matvec(const Matrix& m, const Vector& v) {
  if (m.cols() != v.size()) dimension_error("matvec", m.cols(), v.size());
  const std::size_t rows = m.rows();
  const std::size_t cols = m.cols();
  Vector out(rows);
  const double* a = m.data();
  const double* x = v.data();
  std::size_t r = 0;
  // Four independent row accumulators; each row still sums left to right.
  for (; r + 4 <= rows; r += 4) {
    const double* a0 = a + r * cols;
    const double* a1 = a0 + cols;
    const double* a2 = a1 + cols;
    const double* a3 = a2 + cols;
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      s0 += a0[c] * x[c];
      s1 += a1[c] * x[c];
      s2 += a2[c] * x[c];
      s3 += a3[c] * x[c];
    }
    out[r] = s0;
    out[r + 1] = s1;
    out[r + 2] = s2;
    out[r + 3] = s3;
  }
  for (; r < rows; ++r) {
    const double* ar = a + r * cols;
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += ar[c] * x[c];
    out[r] = s;
  }
  return out;
}

Vector vecmat(const Vector& v, const Matrix& m) {
  if (m.rows() != v.size()) dimension_error("vecmat", m.rows(), v.size());
  Vector out(m.cols());
  double* y = out.data();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double s = v[r];
    const double* ar = m.data() + r * m.cols();
    for (std::size_t c = 0; c < m.cols(); ++c) y[c] += s * ar[c];
  }
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) dimension_error("matmul", a.cols(), b.rows());
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* oi = out.data() + i * b.cols();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double s = a(i, k);
      const double* bk = b.data() + k * b.cols();
      for (std::size_t j = 0; j < b.cols(); ++j) oi[j] += s * bk[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

Matrix matrix_power(const Matrix& m, unsigned power) {
  require_square(m, "matrix_power");
  Matrix result = Matrix::identity(m.rows());
  Matrix base = m;
  while (power > 0) {
    if (power & 1U) result = matmul(result, base);
    power >>= 1U;
    if (power > 0) base = matmul(base, base);
  }
  return result;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) dimension_error("dot", a.size(), b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> v) {
  // Scaled accumulation so huge or tiny entries neither overflow nor flush.
  const double scale = max_abs(v);
  if (scale == 0.0 || !std::isfinite(scale)) return scale;
  double s = 0.0;
  for (double x : v) {
    const double y = x / scale;
    s += y * y;
  }
  return scale * std::sqrt(s);
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Vector add(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) dimension_error("add", a.size(), b.size());
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Vector sub(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) dimension_error("sub", a.size(), b.size());
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Vector scaled(const Vector& a, double s) {
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) dimension_error("add", a.size(), b.size());
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  return out;
}

Matrix scaled(const Matrix& a, double s) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * s;
  return out;
}

void add_outer(Matrix& m, const Vector& a, const Vector& b, double s) {
  if (m.rows() != a.size()) dimension_error("add_outer", m.rows(), a.size());
  if (m.cols() != b.size()) dimension_error("add_outer", m.cols(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double ai = s * a[i];
    if (ai == 0.0) continue;
    double* row = m.data() + i * m.cols();
    for (std::size_t j = 0; j < b.size(); ++j) row[j] += ai * b[j];
  }
}

double frobenius_norm(const Matrix& m) { return norm2(m.span()); }

PowerIterationResult power_iteration(const Matrix& m, const Vector& v0,
                                     PowerIterationOptions opts) {
  require_square(m, "power_iteration");
  if (v0.size() != m.rows()) dimension_error("power_iteration", v0.size(), m.rows());
  const double n0 = norm2(v0.span());
  if (n0 == 0.0) throw Error("power_iteration: zero start vector");
  if (!std::isfinite(n0)) throw NonFiniteError("power_iteration: non-finite start vector");

  PowerIterationResult res;
  Vector v = scaled(v0, 1.0 / n0);
  Vector mv = matvec(m, v);
  double estimate = dot(v.span(), mv.span());
  const double scale = std::max(1.0, frobenius_norm(m));

  for (std::size_t it = 1; it <= opts.max_iters; ++it) {
    const double nmv = norm2(mv.span());
    res.iterations = it;
    if (nmv == 0.0 || !std::isfinite(nmv)) {
      res.eigenvalue = 0.0;
      res.eigenvector = v;
      res.converged = false;
      return res;
    }
    v = scaled(mv, 1.0 / nmv);
    mv = matvec(m, v);
    const double next = dot(v.span(), mv.span());
    const double delta = std::abs(next - estimate);
    estimate = next;
    if (delta <= opts.tol) {
      double residual = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double r = mv[i] - estimate * v[i];
        residual += r * r;
      }
      // The estimate tolerance is on the eigenvalue; the residual of a
      // converged pair scales like sqrt of it.
      if (std::sqrt(residual) <= std::max(1e-6, std::sqrt(opts.tol)) * scale) {
        res.eigenvalue = estimate;
        res.eigenvector = v;
        res.converged = true;
        return res;
      }
    }
  }
  res.eigenvalue = estimate;
  res.eigenvector = v;
  res.converged = false;
  return res;
}

double spectral_norm(const Matrix& m) {
  if (max_abs(m.span()) == 0.0) return 0.0;
  const double s = max_abs(m.span());
  const Matrix unit = scaled(m, 1.0 / s);
  const Matrix gram = matmul(transpose(unit), unit);
  // Deterministic start with every component nonzero.
  Vector v0(gram.rows());
  for (std::size_t i = 0; i < v0.size(); ++i) v0[i] = 1.0 + 0.1 * static_cast<double>(i % 7);
  const auto res = power_iteration(gram, v0, {.max_iters = 100'000, .tol = 1e-15});
  // Even without a residual-converged pair (tied top singular values) the
  // Rayleigh quotient of a PSD iterate converges to the top eigenvalue.
  return s * std::sqrt(std::max(0.0, res.eigenvalue));
}

double growth_rate(const Matrix& m, unsigned k) {
  require_square(m, "growth_rate");
  if (k == 0) return 1.0;
  double log_scale = 0.0;
  Matrix acc = Matrix::identity(m.rows());
  const double fro = frobenius_norm(m);
  if (fro == 0.0) return 0.0;
  const Matrix base = scaled(m, 1.0 / fro);
  for (unsigned i = 0; i < k; ++i) {
    acc = matmul(acc, base);
    const double s = frobenius_norm(acc);
    if (s == 0.0) return 0.0;
    acc = scaled(acc, 1.0 / s);
    log_scale += std::log(s);
  }
  const double norm = spectral_norm(acc);
  if (norm == 0.0) return 0.0;
  return fro * std::exp((log_scale + std::log(norm)) / static_cast<double>(k));
}

double spectral_radius(const Matrix& m, SpectralRadiusOptions opts) {
  require_square(m, "spectral_radius");
  if (max_abs(m.span()) == 0.0) return 0.0;
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  bool any = false;
  double best = 0.0;
  for (std::size_t r = 0; r < opts.restarts; ++r) {
    Vector v0(m.rows());
    for (auto& x : v0) x = normal(rng);
    const auto res = power_iteration(m, v0, opts.power);
    if (res.converged) {
      any = true;
      best = std::max(best, std::abs(res.eigenvalue));
    }
  }
  if (any) return best;
  return growth_rate(m, opts.fallback_power);
}

Vector solve(const Matrix& a, const Vector& b) {
  require_square(a, "solve");
  if (a.rows() != b.size()) dimension_error("solve", a.rows(), b.size());
  const std::size_t n = a.rows();
  Matrix lu = a;
  Vector x = b;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(lu(r, col)) > std::abs(lu(pivot, col))) pivot = r;
    if (lu(pivot, col) == 0.0) throw Error("solve: singular matrix");
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(lu(pivot, c), lu(col, c));
      std::swap(x[pivot], x[col]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = lu(r, col) / lu(col, col);
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) lu(r, c) -= f * lu(col, c);
      x[r] -= f * x[col];
    }
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = x[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= lu(i, c) * x[c];
    x[i] = s / lu(i, i);
  }
  return x;
}

}  // namespace linalg
}  // namespace rnnlab
