#include "rnnlab/grad.hpp"

#include <sstream>

#include "rnnlab/error.hpp"

namespace rnnlab {
namespace {

void append(std::vector<double>& out, std::span<const double> block) {
  out.insert(out.end(), block.begin(), block.end());
}

void require_finite(const Vector& v, const char* what, std::size_t t, std::size_t k) {
  if (!linalg::all_finite(v.span())) {
    std::ostringstream oss;
    oss << "bptt: non-finite " << what << " at (t=" << t << ", k=" << k << ")";
    throw NonFiniteError(oss.str());
  }
}

// r · J_k where J_k = W_rec diag(σ′(x_{k−1})): one step of error transport.
Vector transport_one_step(const RnnParams& params, const Vector& row, const Vector& x_prev) {
  Vector out = linalg::vecmat(row, params.w_rec);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] *= params.activation.derivative(x_prev[j]);
  return out;
}

}  // namespace

Gradients Gradients::zeros_like(const RnnParams& params) {
  Gradients g;
  g.w_rec = Matrix(params.w_rec.rows(), params.w_rec.cols());
  g.w_in = Matrix(params.w_in.rows(), params.w_in.cols());
  g.b = Vector(params.b.size());
  g.w_out = Matrix(params.w_out.rows(), params.w_out.cols());
  g.b_out = Vector(params.b_out.size());
  return g;
}

std::size_t Gradients::size() const {
  return w_rec.size() + w_in.size() + b.size() + w_out.size() + b_out.size();
}

std::vector<double> Gradients::flatten() const {
  std::vector<double> flat;
  flat.reserve(size());
  append(flat, w_rec.span());
  append(flat, w_in.span());
  append(flat, b.span());
  append(flat, w_out.span());
  append(flat, b_out.span());
  return flat;
}

void Gradients::assign_flat(std::span<const double> flat) {
  if (flat.size() != size()) throw DimensionError("Gradients::assign_flat: size mismatch");
  std::size_t off = 0;
  for (std::span<double> block : {w_rec.span(), w_in.span(), b.span(), w_out.span(), b_out.span()}) {
    for (auto& x : block) x = flat[off++];
  }
}

void Gradients::add_scaled(const Gradients& other, double s) {
  auto axpy = [s](std::span<double> dst, std::span<const double> src) {
    if (dst.size() != src.size()) throw DimensionError("Gradients::add_scaled: shape mismatch");
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
  };
  axpy(w_rec.span(), other.w_rec.span());
  axpy(w_in.span(), other.w_in.span());
  axpy(b.span(), other.b.span());
  axpy(w_out.span(), other.w_out.span());
  axpy(b_out.span(), other.b_out.span());
}

void Gradients::scale(double s) {
  for (std::span<double> block : {w_rec.span(), w_in.span(), b.span(), w_out.span(), b_out.span()})
    for (auto& x : block) x *= s;
}

double Gradients::norm() const { return linalg::norm2(flatten()); }

namespace grad {

Matrix step_jacobian(const RnnParams& params, const Vector& x_prev) {
  if (x_prev.size() != params.hidden()) throw DimensionError("step_jacobian: state size mismatch");
  const std::size_t n = params.hidden();
  const Vector slope = params.activation.derivative(x_prev);
  Matrix j(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) j(r, c) = params.w_rec(r, c) * slope[c];
  return j;
}

Matrix jacobian_product(const RnnParams& params, const Trajectory& traj, std::size_t k,
                        std::size_t t) {
  if (k >= t) throw Error("jacobian_product: requires k < t");
  if (t > traj.length()) throw Error("jacobian_product: t beyond trajectory length");
  Matrix acc = step_jacobian(params, traj.states[t - 1]);
  for (std::size_t i = t - 1; i > k; --i) acc = linalg::matmul(acc, step_jacobian(params, traj.states[i - 1]));
  return acc;
}

Vector immediate_partial_wrec(const RnnParams& params, const Trajectory& traj, std::size_t k) {
  if (k == 0 || k > traj.length()) throw Error("immediate_partial_wrec: k out of range");
  return params.activation.value(traj.states[k - 1]);
}

Matrix contract_immediate_wrec(const Vector& error_row, const Vector& immediate_row) {
  Matrix m(error_row.size(), immediate_row.size());
  linalg::add_outer(m, error_row, immediate_row);
  return m;
}

GradientReport bptt(const RnnParams& params, const Trajectory& traj,
                    const std::vector<Vector>& dE_dx, BpttOptions opts) {
  const std::size_t T = traj.length();
  const std::size_t n = params.hidden();
  if (dE_dx.size() != T + 1) throw DimensionError("bptt: need one error signal per state (T+1)");

  GradientReport rep;
  rep.grads = Gradients::zeros_like(params);
  rep.deltas.assign(T + 1, Vector(n));
  if (T == 0) return rep;

  Vector delta = dE_dx[T];
  for (std::size_t k = T; k >= 1; --k) {
    require_finite(delta, "error signal", T, k);
    rep.deltas[k] = delta;
    const Vector h_prev = params.activation.value(traj.states[k - 1]);
    linalg::add_outer(rep.grads.w_rec, delta, h_prev);
    linalg::add_outer(rep.grads.w_in, delta, traj.inputs[k - 1]);
    for (std::size_t i = 0; i < n; ++i) rep.grads.b[i] += delta[i];

    Vector carried = transport_one_step(params, delta, traj.states[k - 1]);
    const Vector& local = dE_dx[k - 1];
    if (k - 1 >= 1) {
      if (local.size() != n) throw DimensionError("bptt: error signal size mismatch");
      for (std::size_t i = 0; i < n; ++i) carried[i] += local[i];
    }
    delta = std::move(carried);
  }
  require_finite(delta, "error signal", T, 0);
  rep.deltas[0] = delta;

  if (opts.diagnostic_step) {
    const std::size_t t = *opts.diagnostic_step;
    ComponentDiagnostics diag;
    diag.step = t;
    diag.transported_norms = component_norms(params, traj, t, dE_dx.at(t));
    diag.w_rec_components = temporal_components(params, traj, t, dE_dx.at(t));
    diag.component_norms.assign(t + 1, 0.0);
    for (std::size_t k = 1; k <= t; ++k)
      diag.component_norms[k] = linalg::frobenius_norm(diag.w_rec_components[k]);
    rep.components = std::move(diag);
  }
  return rep;
}

GradientReport bptt(const RnnParams& params, const Trajectory& traj, const LossResult& loss,
                    BpttOptions opts) {
  GradientReport rep = bptt(params, traj, loss.dE_dx, opts);
  rep.grads.w_out = loss.d_w_out;
  rep.grads.b_out = loss.d_b_out;
  return rep;
}

std::vector<double> component_norms(const RnnParams& params, const Trajectory& traj,
                                    std::size_t t, const Vector& dE_dxt) {
  if (t > traj.length()) throw Error("component_norms: t beyond trajectory length");
  if (dE_dxt.size() != params.hidden()) throw DimensionError("component_norms: error row size");
  std::vector<double> norms(t + 1, 0.0);
  Vector row = dE_dxt;
  norms[t] = linalg::norm2(row.span());
  for (std::size_t k = t; k >= 1; --k) {
    row = transport_one_step(params, row, traj.states[k - 1]);
    norms[k - 1] = linalg::norm2(row.span());
  }
  return norms;
}

std::vector<Matrix> temporal_components(const RnnParams& params, const Trajectory& traj,
                                        std::size_t t, const Vector& dE_dxt) {
  if (t > traj.length()) throw Error("temporal_components: t beyond trajectory length");
  std::vector<Matrix> out(t + 1);
  Vector row = dE_dxt;
  for (std::size_t k = t; k >= 1; --k) {
    require_finite(row, "transported error", t, k);
    out[k] = contract_immediate_wrec(row, immediate_partial_wrec(params, traj, k));
    row = transport_one_step(params, row, traj.states[k - 1]);
  }
  return out;
}

}  // namespace grad
}  // namespace rnnlab
