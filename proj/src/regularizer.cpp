#include "rnnlab/regularizer.hpp"

#include "rnnlab/error.hpp"

namespace rnnlab::regularizer {
namespace {

struct Term {
  Vector z;
  Vector slope;
  double r_norm = 0.0;
  double z_norm = 0.0;
};

Term transported(const RnnParams& params, const Vector& r, const Vector& x_k) {
  Term term;
  term.slope = params.activation.derivative(x_k);
  term.z = linalg::vecmat(r, params.w_rec);
  for (std::size_t j = 0; j < term.z.size(); ++j) term.z[j] *= term.slope[j];
  term.r_norm = linalg::norm2(r.span());
  term.z_norm = linalg::norm2(term.z.span());
  return term;
}

void check_inputs(const RnnParams& params, const Trajectory& traj,
                  const std::vector<Vector>& deltas) {
  if (deltas.size() != traj.length() + 1)
    throw DimensionError("omega: need one error row per state (T+1)");
  for (const auto& d : deltas)
    if (d.size() != params.hidden()) throw DimensionError("omega: error row size mismatch");
}

}  // namespace

OmegaReport omega(const RnnParams& params, const Trajectory& traj,
                  const std::vector<Vector>& deltas, double alpha) {
  check_inputs(params, traj, deltas);
  const std::size_t T = traj.length();
  OmegaReport rep;
  rep.alpha = alpha;
  rep.omega_k.assign(T + 1, 0.0);
  rep.ratio_k.assign(T + 1, 0.0);
  rep.included.assign(T + 1, false);

  double ratio_sum = 0.0;
  for (std::size_t k = 1; k + 1 <= T; ++k) {
    const Vector& r = deltas[k + 1];
    if (linalg::norm2(r.span()) < kMinSignalNorm) continue;
    const Term term = transported(params, r, traj.states[k]);
    const double ratio = term.z_norm / term.r_norm;
    const double dev = ratio - 1.0;
    rep.ratio_k[k] = ratio;
    rep.omega_k[k] = dev * dev;
    rep.included[k] = true;
    rep.omega_total += dev * dev;
    ratio_sum += ratio;
    ++rep.included_count;
  }
  rep.degenerate = rep.included_count == 0;
  if (!rep.degenerate) rep.mean_ratio = ratio_sum / static_cast<double>(rep.included_count);
  return rep;
}

OmegaGradient omega_grad_immediate(const RnnParams& params, const Trajectory& traj,
                                   const std::vector<Vector>& deltas) {
  check_inputs(params, traj, deltas);
  const std::size_t T = traj.length();
  const std::size_t n = params.hidden();
  OmegaGradient out;
  out.d_w_rec = Matrix(n, n);

  Vector zd(n);
  for (std::size_t k = 1; k + 1 <= T; ++k) {
    const Vector& r = deltas[k + 1];
    if (linalg::norm2(r.span()) < kMinSignalNorm) continue;
    const Term term = transported(params, r, traj.states[k]);
    if (term.z_norm == 0.0) {
      ++out.skipped_zero_transport;
      continue;
    }
    const double ratio = term.z_norm / term.r_norm;
    const double factor = 2.0 * (ratio - 1.0) / (term.r_norm * term.z_norm);
    if (factor == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) zd[j] = term.z[j] * term.slope[j];
    linalg::add_outer(out.d_w_rec, r, zd, factor);
  }
  return out;
}

}  // namespace rnnlab::regularizer
