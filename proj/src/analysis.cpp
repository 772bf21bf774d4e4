#include "rnnlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "rnnlab/error.hpp"
#include "rnnlab/grad.hpp"

namespace rnnlab::analysis {
namespace {

using Complex = std::complex<double>;
using ComplexVec = std::vector<Complex>;

ConditionReport conditions_from(double radius, double norm, double gamma) {
  ConditionReport r;
  r.spectral_radius = radius;
  r.spectral_norm = norm;
  r.gamma = gamma;
  r.vanishing_sufficient = norm * gamma < 1.0;
  r.exploding_necessary = radius > 1.0 / gamma;
  if (r.vanishing_sufficient) r.eta = norm * gamma;
  return r;
}

void require_small_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) throw DimensionError(std::string(what) + ": matrix must be square");
  if (m.rows() == 0) throw DimensionError(std::string(what) + ": empty matrix");
  if (m.rows() > kMaxExpansionSize)
    throw UnsupportedError(std::string(what) + ": eigen-expansion supports n <= " +
                           std::to_string(kMaxExpansionSize) + ", got " + std::to_string(m.rows()));
}

// Coefficients c_0..c_n (c_n = 1) of det(λI − A).
std::vector<double> characteristic_polynomial(const Matrix& a) {
  const std::size_t n = a.rows();
  std::vector<double> c(n + 1, 0.0);
  c[n] = 1.0;
  Matrix m(n, n);
  for (std::size_t k = 1; k <= n; ++k) {
    Matrix next = linalg::matmul(a, m);
    for (std::size_t i = 0; i < n; ++i) next(i, i) += c[n - k + 1];
    m = std::move(next);
    const Matrix am = linalg::matmul(a, m);
    double trace = 0.0;
    for (std::size_t i = 0; i < n; ++i) trace += am(i, i);
    c[n - k] = -trace / static_cast<double>(k);
  }
  return c;
}

Complex horner(const std::vector<double>& c, Complex z) {
  Complex acc = 0.0;
  for (std::size_t i = c.size(); i-- > 0;) acc = acc * z + c[i];
  return acc;
}

Complex horner_derivative(const std::vector<double>& c, Complex z) {
  Complex acc = 0.0;
  for (std::size_t i = c.size(); i-- > 1;) acc = acc * z + static_cast<double>(i) * c[i];
  return acc;
}

ComplexVec polynomial_roots(const std::vector<double>& c) {
  const std::size_t n = c.size() - 1;
  double radius = 0.0;
  for (std::size_t i = 0; i < n; ++i) radius = std::max(radius, std::abs(c[i]));
  radius += 1.0;
  ComplexVec z(n);
  const Complex seed(0.4, 0.9);
  Complex p = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    p *= seed;
    z[k] = radius * p / std::abs(p);
  }
  for (int iter = 0; iter < 5000; ++iter) {
    double moved = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      Complex denom = 1.0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != k) denom *= z[k] - z[j];
      if (denom == Complex(0.0)) denom = Complex(1e-300);
      const Complex step = horner(c, z[k]) / denom;
      z[k] -= step;
      moved = std::max(moved, std::abs(step));
    }
    if (moved <= 1e-15 * radius) break;
  }
  for (auto& root : z) {
    for (int iter = 0; iter < 3; ++iter) {
      const Complex d = horner_derivative(c, root);
      if (std::abs(d) == 0.0) break;
      root -= horner(c, root) / d;
    }
  }
  return z;
}

// Gaussian elimination with partial pivoting; the shifted systems of inverse
// iteration are near-singular by design, so a zero pivot is nudged instead of
// rejected.
ComplexVec solve_complex(std::vector<Complex> a, ComplexVec b, std::size_t n, double scale) {
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a[i * n + k]) > std::abs(a[piv * n + k])) piv = i;
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a[k * n + j], a[piv * n + j]);
      std::swap(b[k], b[piv]);
    }
    if (std::abs(a[k * n + k]) == 0.0) a[k * n + k] = 1e-14 * scale;
    for (std::size_t i = k + 1; i < n; ++i) {
      const Complex f = a[i * n + k] / a[k * n + k];
      for (std::size_t j = k; j < n; ++j) a[i * n + j] -= f * a[k * n + j];
      b[i] -= f * b[k];
    }
  }
  ComplexVec x(n);
  for (std::size_t i = n; i-- > 0;) {
    Complex acc = b[i];
    for (std::size_t j = i + 1; j < n; ++j) acc -= a[i * n + j] * x[j];
    x[i] = acc / a[i * n + i];
  }
  return x;
}

void normalize(ComplexVec& v) {
  double s = 0.0;
  for (const auto& e : v) s += std::norm(e);
  s = std::sqrt(s);
  for (auto& e : v) e /= s;
}

// Eigenvector of m (right) or of mᵀ (left) for the eigenvalue λ.
ComplexVec inverse_iteration(const Matrix& m, Complex lambda, bool left, double scale) {
  const std::size_t n = m.rows();
  std::vector<Complex> shifted(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) shifted[i * n + j] = left ? m(j, i) : m(i, j);
  const Complex mu = lambda + Complex(1e-10 * scale, 1e-10 * scale);
  for (std::size_t i = 0; i < n; ++i) shifted[i * n + i] -= mu;
  ComplexVec v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = Complex(1.0 + 0.1 * static_cast<double>(i), 0.05 * static_cast<double>(i));
  normalize(v);
  for (int iter = 0; iter < 4; ++iter) {
    v = solve_complex(shifted, v, n, scale);
    normalize(v);
  }
  return v;
}

Complex bilinear(const ComplexVec& a, const ComplexVec& b) {
  Complex acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double unit_slope(double w, double x) {
  const double s = sigmoid(x);
  return w * s * (1.0 - s);
}

enum class EndKind { point, cycle, none };

struct Endpoint {
  EndKind kind = EndKind::none;
  double x = 0.0;
};

Endpoint settle(double w, double b, double x, const BifurcationOptions& opts) {
  for (std::size_t i = 0; i < opts.iters; ++i) {
    const double next = unit_map(w, b, x);
    const double moved = std::abs(next - x);
    x = next;
    // |Δx| / (1 − |f′|) estimates the remaining distance to the fixed point.
    const double contraction = 1.0 - std::abs(unit_slope(w, x));
    if (moved == 0.0 || (contraction > 0.0 && moved <= opts.tol * contraction)) return {EndKind::point, x};
  }
  const double once = unit_map(w, b, x);
  const double twice = unit_map(w, b, once);
  if (std::abs(twice - x) < 10.0 * opts.tol && std::abs(once - x) > 10.0 * opts.tol) return {EndKind::cycle, x};
  return {EndKind::none, x};
}

std::vector<double> default_probes(double w, double b) {
  const double half = std::abs(w) + std::abs(b);
  std::vector<double> probes(21);
  for (std::size_t i = 0; i < probes.size(); ++i)
    probes[i] = -half + 2.0 * half * static_cast<double>(i) / 20.0;
  return probes;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

}  // namespace

ConditionReport check_conditions(const Matrix& w_rec, Activation activation) {
  if (w_rec.rows() != w_rec.cols()) throw DimensionError("check_conditions: W_rec must be square");
  return conditions_from(linalg::spectral_radius(w_rec), linalg::spectral_norm(w_rec), activation.gamma());
}

ConditionReport check_conditions(const RnnParams& params) {
  return check_conditions(params.w_rec, params.activation);
}

std::vector<std::complex<double>> small_eigenvalues(const Matrix& m) {
  require_small_square(m, "small_eigenvalues");
  if (!linalg::all_finite(m.span())) throw NonFiniteError("small_eigenvalues: non-finite matrix");
  auto roots = polynomial_roots(characteristic_polynomial(m));
  for (auto& r : roots)
    if (std::abs(r.imag()) <= 1e-12 * std::max(1.0, std::abs(r))) r = Complex(r.real(), 0.0);
  std::stable_sort(roots.begin(), roots.end(), [](Complex a, Complex b) {
    if (std::abs(a) != std::abs(b)) return std::abs(a) > std::abs(b);
    return a.imag() > b.imag();
  });
  return roots;
}

DirectionReport exploding_direction(const Matrix& w_rec, const Vector& error_row, unsigned l) {
  require_small_square(w_rec, "exploding_direction");
  const std::size_t n = w_rec.rows();
  if (error_row.size() != n) throw DimensionError("exploding_direction: error row length differs from W");

  DirectionReport report;
  report.eigenvalues = small_eigenvalues(w_rec);
  const auto& lambdas = report.eigenvalues;
  const double scale = std::max(1.0, std::abs(lambdas.front()));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(lambdas[i] - lambdas[j]) <= 1e-7 * scale)
        throw UnsupportedError("exploding_direction: repeated eigenvalue, W not diagonalizable within tolerance");

  const double r_norm = linalg::norm2(error_row.span());
  ComplexVec r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = error_row[i];

  // Expansion r = Σ c_j q_j over left eigenvectors, c_j = (r·p_j)/(q_j·p_j).
  struct Term {
    Complex lambda;
    Complex coeff;
    ComplexVec left;
  };
  std::vector<Term> terms;
  for (const Complex lambda : lambdas) {
    ComplexVec right = inverse_iteration(w_rec, lambda, false, scale);
    ComplexVec left = inverse_iteration(w_rec, lambda, true, scale);
    const Complex overlap = bilinear(left, right);
    if (std::abs(overlap) < 1e-12)
      throw UnsupportedError("exploding_direction: eigenvectors nearly orthogonal, W not diagonalizable within tolerance");
    terms.push_back({lambda, bilinear(r, right) / overlap, std::move(left)});
  }

  const double negligible = 1e-9 * std::max(r_norm, 1e-300);
  std::size_t first = 0;
  while (first < terms.size() && std::abs(terms[first].coeff) <= negligible) ++first;
  report.exact = error_row;
  for (unsigned step = 0; step < l; ++step) report.exact = linalg::vecmat(report.exact, w_rec);
  report.approx = Vector(n);
  if (first == terms.size()) {
    report.rel_error = linalg::norm2(report.exact.span()) == 0.0 ? 0.0 : 1.0;
    return report;
  }

  const double lead = std::abs(terms[first].lambda);
  std::vector<std::size_t> kept;
  for (std::size_t j = first; j < terms.size(); ++j)
    if (std::abs(terms[j].coeff) > negligible && std::abs(std::abs(terms[j].lambda) - lead) <= 1e-9 * scale)
      kept.push_back(j);
  const bool single_real = kept.size() == 1 && terms[kept[0]].lambda.imag() == 0.0;
  const bool conjugate_pair = kept.size() == 2 && terms[kept[0]].lambda.imag() != 0.0 &&
                              std::abs(terms[kept[0]].lambda - std::conj(terms[kept[1]].lambda)) <= 1e-7 * scale;
  if (!single_real && !conjugate_pair)
    throw UnsupportedError("exploding_direction: leading modulus shared by distinct eigenvalues");

  ComplexVec approx(n, 0.0);
  for (std::size_t j : kept) {
    Complex power = 1.0;
    for (unsigned step = 0; step < l; ++step) power *= terms[j].lambda;
    const Complex factor = terms[j].coeff * power;
    for (std::size_t i = 0; i < n; ++i) approx[i] += factor * terms[j].left[i];
  }
  for (std::size_t i = 0; i < n; ++i) report.approx[i] = approx[i].real();
  report.eigenvalue = terms[kept[0]].lambda;
  report.kept_terms = kept.size();

  const double exact_norm = linalg::norm2(report.exact.span());
  const double diff = linalg::norm2(linalg::sub(report.approx, report.exact).span());
  report.rel_error = exact_norm == 0.0 ? (diff == 0.0 ? 0.0 : INFINITY) : diff / exact_norm;
  return report;
}

double unit_map(double w, double b, double x) { return w * sigmoid(x) + b; }

AttractorSet attractors_at(double w, double b, const BifurcationOptions& opts) {
  AttractorSet set;
  set.bias = b;
  const std::vector<double> probes = opts.probes.empty() ? default_probes(w, b) : opts.probes;
  std::vector<double> points;
  for (double x0 : probes) {
    const Endpoint end = settle(w, b, x0, opts);
    switch (end.kind) {
      case EndKind::point:
        // Probes started exactly on a repelling fixed point stay put; they are not attractors.
        if (std::abs(unit_slope(w, end.x)) < 1.0) points.push_back(end.x);
        break;
      case EndKind::cycle: ++set.non_point; break;
      case EndKind::none: ++set.unconverged; break;
    }
  }
  std::sort(points.begin(), points.end());
  const double merge = 10.0 * opts.tol;
  for (std::size_t i = 0; i < points.size();) {
    std::size_t j = i + 1;
    while (j < points.size() && points[j] - points[j - 1] <= merge) ++j;
    const double sum = std::accumulate(points.begin() + static_cast<std::ptrdiff_t>(i),
                                       points.begin() + static_cast<std::ptrdiff_t>(j), 0.0);
    set.fixed_points.push_back(sum / static_cast<double>(j - i));
    i = j;
  }
  return set;
}

BifurcationSweep bifurcation_sweep(double w, std::span<const double> b_grid, const BifurcationOptions& opts) {
  if (!(opts.tol > 0.0) || !(opts.boundary_tol > 0.0)) throw Error("bifurcation_sweep: tolerances must be positive");
  BifurcationSweep sweep;
  sweep.weight = w;
  for (double b : b_grid) sweep.points.push_back(attractors_at(w, b, opts));
  const auto count = [&](double b) { return attractors_at(w, b, opts).fixed_points.size(); };
  for (std::size_t i = 0; i + 1 < sweep.points.size(); ++i) {
    std::size_t count_lo = sweep.points[i].fixed_points.size();
    if (count_lo == sweep.points[i + 1].fixed_points.size()) continue;
    double lo = sweep.points[i].bias;
    double hi = sweep.points[i + 1].bias;
    while (std::abs(hi - lo) > opts.boundary_tol) {
      const double mid = 0.5 * (lo + hi);
      if (count(mid) == count_lo) lo = mid;
      else hi = mid;
    }
    sweep.boundaries.push_back(0.5 * (lo + hi));
  }
  return sweep;
}

SurfacePoint surface_point(double w, double b, const SurfaceOptions& opts) {
  if (opts.steps == 0) throw Error("surface_point: steps must be positive");
  RnnParams params{.w_rec = Matrix(1, 1, w),
                   .w_in = Matrix(1, 1, 0.0),
                   .b = Vector{b},
                   .w_out = Matrix(1, 1, 1.0),
                   .b_out = Vector{0.0},
                   .activation = Activation(ActivationKind::sigmoid)};
  const std::vector<Vector> inputs(opts.steps, Vector{0.0});
  SurfacePoint point;
  try {
    const Trajectory traj = model::forward(params, Vector{opts.x0}, inputs);
    Target target;
    target.steps = {opts.steps};
    target.values = {Vector{opts.target}};
    const LossResult loss = model::loss(params, {LossKind::squared_final, TimeReduction::sum}, traj, target);
    const GradientReport g = grad::bptt(params, traj, loss);
    point.loss = loss.total;
    point.d_w = g.grads.w_rec(0, 0);
    point.d_b = g.grads.b[0];
    point.saturated = !std::isfinite(point.loss) || !std::isfinite(point.d_w) || !std::isfinite(point.d_b);
  } catch (const NonFiniteError&) {
    point.saturated = true;
  }
  return point;
}

double SurfaceScan::max_over_median_gradient() const {
  std::vector<double> norms;
  for (std::size_t i = 0; i < grad_norm.size(); ++i)
    if (!saturated[i]) norms.push_back(grad_norm.values()[i]);
  if (norms.empty()) return 0.0;
  const double mid = median(norms);
  const double top = *std::max_element(norms.begin(), norms.end());
  return mid == 0.0 ? INFINITY : top / mid;
}

SurfaceScan error_surface_scan(std::span<const double> w_grid, std::span<const double> b_grid,
                               const SurfaceOptions& opts) {
  SurfaceScan scan;
  scan.w_grid.assign(w_grid.begin(), w_grid.end());
  scan.b_grid.assign(b_grid.begin(), b_grid.end());
  scan.loss = Matrix(w_grid.size(), b_grid.size());
  scan.grad_norm = Matrix(w_grid.size(), b_grid.size());
  scan.saturated.assign(w_grid.size() * b_grid.size(), false);
  for (std::size_t i = 0; i < w_grid.size(); ++i) {
    for (std::size_t j = 0; j < b_grid.size(); ++j) {
      const SurfacePoint p = surface_point(w_grid[i], b_grid[j], opts);
      scan.saturated[i * b_grid.size() + j] = p.saturated;
      scan.loss(i, j) = p.saturated ? NAN : p.loss;
      scan.grad_norm(i, j) = p.saturated ? NAN : std::hypot(p.d_w, p.d_b);
    }
  }
  return scan;
}

DivergenceTrace divergence_probe(const RnnParams& params, const std::vector<Vector>& inputs,
                                 const Vector& x0_a, const Vector& x0_b) {
  const auto distances = [&](const std::vector<Vector>& u) {
    const Trajectory a = model::forward(params, x0_a, u);
    const Trajectory b = model::forward(params, x0_b, u);
    std::vector<double> out;
    out.reserve(a.states.size());
    for (std::size_t t = 0; t < a.states.size(); ++t)
      out.push_back(linalg::norm2(linalg::sub(a.states[t], b.states[t]).span()));
    return out;
  };
  DivergenceTrace trace;
  trace.driven = distances(inputs);
  trace.autonomous = distances(std::vector<Vector>(inputs.size(), Vector(params.inputs())));
  return trace;
}

}  // namespace rnnlab::analysis
