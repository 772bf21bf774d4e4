#include "rnnlab/batched.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include "rnnlab/error.hpp"
#include "rnnlab/regularizer.hpp"

namespace rnnlab::batched {
namespace {

using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMat>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using Index = Eigen::Index;

ConstRowMap view(const Matrix& m) {
  return ConstRowMap(m.data(), static_cast<Index>(m.rows()), static_cast<Index>(m.cols()));
}

ConstVecMap view(const Vector& v) { return ConstVecMap(v.data(), static_cast<Index>(v.size())); }

using MatMap = Eigen::Map<Mat>;

// Grow-only scratch buffers reused across calls on the same thread. Fresh
// multi-hundred-kilobyte allocations per update cost more than the arithmetic.
class Arena {
 public:
  enum Slot { inputs, drive, states, values, slopes, signal, delta, carry, scratch, count };

  MatMap get(Slot slot, Index rows, Index cols) {
    auto& buf = buffers_[slot];
    const auto need = static_cast<std::size_t>(rows * cols);
    if (buf.size() < need) buf.resize(need);
    return MatMap(buf.data(), rows, cols);
  }

 private:
  std::vector<double> buffers_[count];
};

Arena& arena() {
  thread_local Arena a;
  return a;
}

// a·bᵀ accumulated over column blocks, keeping Eigen's packing buffers on the stack.
Mat outer_sum(const Eigen::Ref<const Mat>& a, const Eigen::Ref<const Mat>& b) {
  constexpr Index block = 128;
  Mat out = Mat::Zero(a.rows(), b.rows());
  for (Index c = 0; c < a.cols(); c += block) {
    const Index w = std::min(block, a.cols() - c);
    out.noalias() += a.middleCols(c, w) * b.middleCols(c, w).transpose();
  }
  return out;
}

void copy_into(Matrix& dst, const Mat& src) {
  for (Index r = 0; r < src.rows(); ++r)
    for (Index c = 0; c < src.cols(); ++c) dst(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = src(r, c);
}

std::size_t longest_length(std::span<const TaskSample> batch) {
  std::size_t longest = 0;
  for (const auto& s : batch) longest = std::max(longest, s.length());
  return longest;
}

// Lockstep forward pass. Column τ·B + s holds step τ of sample s on the
// right-aligned clock; sample s is live for τ > offset[s].
struct Lockstep {
  Lockstep(Arena& a, Index n, Index m, std::span<const TaskSample> batch)
      : B(static_cast<Index>(batch.size())),
        T(static_cast<Index>(longest_length(batch))),
        U(a.get(Arena::inputs, m, T * B)),
        X(a.get(Arena::states, n, (T + 1) * B)),
        H(a.get(Arena::values, n, (T + 1) * B)),
        D(a.get(Arena::slopes, n, (T + 1) * B)) {
    offset.reserve(batch.size());
    for (const auto& s : batch) offset.push_back(T - static_cast<Index>(s.length()));
  }

  Index B;
  Index T;
  std::vector<Index> offset;
  MatMap U;  // m × T·B, column (τ−1)·B + s
  MatMap X;  // n × (T+1)·B
  MatMap H;  // σ(X)
  MatMap D;  // σ′(X)

  Index col(Index tau, Index s) const { return tau * B + s; }
  Index sample_col(std::size_t t, Index s) const {
    return col(static_cast<Index>(t) + offset[static_cast<std::size_t>(s)], s);
  }
};

void activate(Activation act, const Eigen::Ref<const Mat>& x, Eigen::Ref<Mat> h, Eigen::Ref<Mat> d) {
  const auto xa = x.array();
  auto ha = h.array();
  auto da = d.array();
  switch (act.kind()) {
    case ActivationKind::tanh: {
      // tanh|x| = (1 − e)/(1 + e) with e = exp(−2|x|), vectorised through Eigen's exp.
      const Eigen::ArrayXXd e = (-2.0 * xa.abs()).exp();
      const Eigen::ArrayXXd mag = (1.0 - e) / (1.0 + e);
      ha = (xa < 0.0).select(-mag, mag);
      da = 1.0 - ha * ha;
      break;
    }
    case ActivationKind::sigmoid:
      ha = 1.0 / (1.0 + (-xa).exp());
      da = ha * (1.0 - ha);
      break;
    case ActivationKind::identity:
      ha = xa;
      da.setOnes();
      break;
  }
}

Lockstep run_forward(const RnnParams& params, std::span<const TaskSample> batch) {
  const Index n = static_cast<Index>(params.hidden());
  const Index m = static_cast<Index>(params.inputs());
  Arena& a = arena();
  Lockstep ls(a, n, m, batch);
  ls.U.setZero();
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto& inputs = batch[s].inputs;
    for (std::size_t t = 1; t <= inputs.size(); ++t) {
      if (inputs[t - 1].size() != params.inputs()) throw DimensionError("forward: input size mismatch");
      ls.U.col(ls.sample_col(t, static_cast<Index>(s)) - ls.B) = view(inputs[t - 1]);
    }
  }

  const auto w_rec = view(params.w_rec);
  MatMap drive = a.get(Arena::drive, n, ls.T * ls.B);
  drive.noalias() = view(params.w_in) * ls.U;
  drive.colwise() += view(params.b);

  ls.X.leftCols(ls.B).setZero();
  activate(params.activation, ls.X.leftCols(ls.B), ls.H.leftCols(ls.B), ls.D.leftCols(ls.B));

  for (Index tau = 1; tau <= ls.T; ++tau) {
    auto x = ls.X.middleCols(tau * ls.B, ls.B);
    x.noalias() = w_rec * ls.H.middleCols((tau - 1) * ls.B, ls.B);
    x += drive.middleCols((tau - 1) * ls.B, ls.B);
    for (Index s = 0; s < ls.B; ++s)
      if (tau <= ls.offset[static_cast<std::size_t>(s)]) x.col(s).setZero();
    if (!x.allFinite()) {
      std::ostringstream oss;
      oss << "forward: non-finite state at lockstep step " << tau;
      throw NonFiniteError(oss.str());
    }
    activate(params.activation, x, ls.H.middleCols(tau * ls.B, ls.B), ls.D.middleCols(tau * ls.B, ls.B));
  }
  return ls;
}

}  // namespace

BatchGradient batch_gradient(const RnnParams& params, std::span<const TaskSample> batch,
                             LossKind loss_kind, TimeReduction reduction, double alpha) {
  if (batch.empty()) throw Error("batch_gradient: empty batch");
  const Index n = static_cast<Index>(params.hidden());
  const Index o = static_cast<Index>(params.outputs());
  const bool classify = loss_kind != LossKind::squared_final;
  const Lockstep ls = run_forward(params, batch);
  const Index B = ls.B;
  const Index cols = (ls.T + 1) * B;

  // Scored columns and their targets.
  std::vector<Index> scored_cols;
  std::vector<double> weights;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const Target& target = batch[s].target;
    const std::size_t T = batch[s].length();
    if (loss_kind != LossKind::softmax_per_step && (target.steps.size() != 1 || target.steps[0] != T))
      throw Error("loss: final-step loss requires exactly the step T as target");
    const double w = reduction == TimeReduction::mean && !target.steps.empty()
                         ? 1.0 / static_cast<double>(target.steps.size())
                         : 1.0;
    for (std::size_t t : target.steps) {
      if (t == 0 || t > T) throw Error("loss: scored step out of range");
      scored_cols.push_back(ls.sample_col(t, static_cast<Index>(s)));
      weights.push_back(w);
    }
  }
  const Index S = static_cast<Index>(scored_cols.size());
  Mat hs(n, S);
  for (Index j = 0; j < S; ++j) hs.col(j) = ls.H.col(scored_cols[static_cast<std::size_t>(j)]);
  Mat y = view(params.w_out) * hs;
  y.colwise() += view(params.b_out);

  Mat dy(o, S);
  double loss_sum = 0.0;
  {
    Index j = 0;
    for (std::size_t s = 0; s < batch.size(); ++s) {
      const Target& target = batch[s].target;
      for (std::size_t k = 0; k < target.steps.size(); ++k, ++j) {
        const double w = weights[static_cast<std::size_t>(j)];
        double e = 0.0;
        if (classify) {
          const std::size_t label = target.labels.at(k);
          if (static_cast<Index>(label) >= o) throw Error("loss: label out of range");
          const double ymax = y.col(j).maxCoeff();
          const double log_z = ymax + std::log((y.col(j).array() - ymax).exp().sum());
          e = log_z - y(static_cast<Index>(label), j);
          dy.col(j) = (y.col(j).array() - log_z).exp();
          dy(static_cast<Index>(label), j) -= 1.0;
        } else {
          const Vector& want = target.values.at(k);
          if (static_cast<Index>(want.size()) != o) throw DimensionError("loss: regression target size");
          for (Index i = 0; i < o; ++i) {
            const double r = y(i, j) - want[static_cast<std::size_t>(i)];
            e += r * r;
            dy(i, j) = 2.0 * r;
          }
        }
        loss_sum += w * e;
        dy.col(j) *= w;
      }
    }
  }
  if (!std::isfinite(loss_sum)) throw NonFiniteError("batch_gradient: non-finite loss");

  Arena& a = arena();
  MatMap signal = a.get(Arena::signal, n, cols);
  signal.setZero();
  const Mat back = view(params.w_out).transpose() * dy;
  for (Index j = 0; j < S; ++j) {
    const Index c = scored_cols[static_cast<std::size_t>(j)];
    signal.col(c).array() += back.col(j).array() * ls.D.col(c).array();
  }

  // Reverse sweep: delta holds ∂E/∂x at each column, carry the transported part.
  const auto w_rec = view(params.w_rec);
  MatMap delta = a.get(Arena::delta, n, cols);
  MatMap carry = a.get(Arena::carry, n, cols);
  carry.rightCols(B).setZero();
  delta.middleCols(ls.T * B, B) = signal.middleCols(ls.T * B, B);
  for (Index tau = ls.T; tau >= 1; --tau) {
    auto c = carry.middleCols((tau - 1) * B, B);
    c.noalias() = w_rec.transpose() * delta.middleCols(tau * B, B);
    c.array() *= ls.D.middleCols((tau - 1) * B, B).array();
    delta.middleCols((tau - 1) * B, B) = signal.middleCols((tau - 1) * B, B) + c;
  }
  for (Index s = 0; s < B; ++s)
    for (Index tau = 0; tau <= ls.offset[static_cast<std::size_t>(s)]; ++tau) delta.col(tau * B + s).setZero();
  if (!delta.allFinite()) throw NonFiniteError("bptt: non-finite error signal");

  const double inv = 1.0 / static_cast<double>(B);
  const auto live_delta = delta.rightCols(ls.T * B);
  BatchGradient out;
  out.grads = Gradients::zeros_like(params);
  copy_into(out.grads.w_rec, inv * outer_sum(live_delta, ls.H.leftCols(ls.T * B)));
  copy_into(out.grads.w_in, inv * outer_sum(live_delta, ls.U));
  const Eigen::VectorXd db = inv * live_delta.rowwise().sum();
  for (Index i = 0; i < n; ++i) out.grads.b[static_cast<std::size_t>(i)] = db(i);
  copy_into(out.grads.w_out, inv * (dy * hs.transpose()));
  const Eigen::VectorXd dbo = inv * dy.rowwise().sum();
  for (Index i = 0; i < o; ++i) out.grads.b_out[static_cast<std::size_t>(i)] = dbo(i);
  out.loss = inv * loss_sum;

  if (alpha > 0.0) {
    // Term k of sample s pairs r = delta at τ+1 with z = carry at τ, τ = k + offset.
    const Eigen::RowVectorXd r_norm = delta.colwise().norm();
    const Eigen::RowVectorXd z_norm = carry.colwise().norm();
    Eigen::VectorXd factor = Eigen::VectorXd::Zero(ls.T * B);
    double omega_sum = 0.0;
    double ratio_mean_sum = 0.0;
    std::size_t ratio_samples = 0;
    for (Index s = 0; s < B; ++s) {
      const Index off = ls.offset[static_cast<std::size_t>(s)];
      double sample_ratio = 0.0;
      std::size_t included = 0;
      for (Index tau = off + 1; tau + 1 <= ls.T; ++tau) {
        const double rn = r_norm((tau + 1) * B + s);
        if (rn < regularizer::kMinSignalNorm) continue;
        const double zn = z_norm(tau * B + s);
        const double ratio = zn / rn;
        omega_sum += (ratio - 1.0) * (ratio - 1.0);
        sample_ratio += ratio;
        ++included;
        if (zn == 0.0) continue;
        factor(tau * B + s) = 2.0 * (ratio - 1.0) / (rn * zn);
      }
      if (included > 0) {
        ratio_mean_sum += sample_ratio / static_cast<double>(included);
        ++ratio_samples;
      }
    }
    // zd overwrites carry in place; it is not needed afterwards.
    auto zd = carry.leftCols(ls.T * B);
    zd.array() *= ls.D.leftCols(ls.T * B).array();
    zd.array().rowwise() *= factor.transpose().array();
    const Mat d_omega = outer_sum(delta.middleCols(B, ls.T * B), zd);
    const double s = alpha * inv;
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        out.grads.w_rec(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) += s * d_omega(i, j);
    out.omega = inv * omega_sum;
    if (ratio_samples > 0) out.mean_ratio = ratio_mean_sum / static_cast<double>(ratio_samples);
  }
  return out;
}

EvalResult evaluate(const RnnParams& params, std::span<const TaskSample> test_set,
                    double success_error, double regression_tolerance, std::size_t chunk) {
  if (test_set.empty()) throw Error("evaluate: empty test set");
  if (chunk == 0) chunk = test_set.size();
  EvalResult res;
  res.samples = test_set.size();
  const auto w_out = view(params.w_out);
  const auto b_out = view(params.b_out);
  for (std::size_t first = 0; first < test_set.size(); first += chunk) {
    const auto part = test_set.subspan(first, std::min(chunk, test_set.size() - first));
    std::optional<Lockstep> ls;
    try {
      ls.emplace(run_forward(params, part));
    } catch (const NonFiniteError&) {
      // Fall back to per-sample so only the offending sequences count as wrong.
      const EvalResult sub = optim::evaluate(params, part, success_error, regression_tolerance);
      res.errors += sub.errors;
      continue;
    }
    for (std::size_t s = 0; s < part.size(); ++s) {
      const TaskSample& sample = part[s];
      const bool regression = !sample.target.values.empty();
      bool wrong = false;
      for (std::size_t e : sample.eval_steps) {
        const auto it = std::find(sample.target.steps.begin(), sample.target.steps.end(), e);
        if (it == sample.target.steps.end()) throw Error("evaluate: eval step has no target");
        const auto idx = static_cast<std::size_t>(it - sample.target.steps.begin());
        const Eigen::VectorXd y = w_out * ls->H.col(ls->sample_col(e, static_cast<Index>(s))) + b_out;
        if (regression) {
          const Vector& want = sample.target.values[idx];
          for (Index i = 0; i < y.size(); ++i)
            if (!(std::abs(y(i) - want[static_cast<std::size_t>(i)]) < regression_tolerance)) wrong = true;
        } else {
          Index best = 0;
          y.maxCoeff(&best);
          if (static_cast<std::size_t>(best) != sample.target.labels[idx]) wrong = true;
        }
        if (wrong) break;
      }
      if (wrong) ++res.errors;
    }
  }
  res.error_rate = static_cast<double>(res.errors) / static_cast<double>(res.samples);
  res.success = res.error_rate <= success_error;
  return res;
}

}  // namespace rnnlab::batched
