#include "rnnlab/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rnnlab/batched.hpp"
#include "rnnlab/error.hpp"
#include "rnnlab/regularizer.hpp"

namespace rnnlab {
namespace optim {
namespace {

void require_finite(std::span<const double> g, const char* op) {
  if (!linalg::all_finite(g)) throw NonFiniteError(std::string(op) + ": non-finite gradient");
}

std::size_t argmax(const Vector& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Test samples come from a stream disjoint from the training stream.
constexpr std::uint64_t kTestStreamSalt = 0x7e57'0000'0000'0000ULL;

}  // namespace

}  // namespace optim

void ClipPolicy::validate() const {
  if (kind != ClipKind::none && !(threshold > 0.0))
    throw Error("clip threshold must be positive when clipping is enabled");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error("learning_rate must be positive");
  clip.validate();
  if (alpha0 < 0.0) throw Error("alpha must be non-negative");
  if (batch == 0) throw Error("batch must be positive");
  if (eval_every == 0) throw Error("eval_every must be positive");
  if (test_size == 0) throw Error("test_size must be positive");
}

namespace optim {

std::vector<double> clip_norm(std::span<const double> g, double threshold) {
  if (!(threshold > 0.0)) throw Error("clip_norm: threshold must be positive");
  require_finite(g, "clip_norm");
  std::vector<double> out(g.begin(), g.end());
  const double norm = linalg::norm2(g);
  if (norm >= threshold) {
    const double s = threshold / norm;
    for (auto& x : out) x *= s;
  }
  return out;
}

std::vector<double> clip_elementwise(std::span<const double> g, double threshold) {
  if (!(threshold > 0.0)) throw Error("clip_elementwise: threshold must be positive");
  require_finite(g, "clip_elementwise");
  std::vector<double> out(g.begin(), g.end());
  for (auto& x : out) x = std::clamp(x, -threshold, threshold);
  return out;
}

bool apply_clip(Gradients& g, const ClipPolicy& policy) {
  if (policy.kind == ClipKind::none) return false;
  const std::vector<double> flat = g.flatten();
  const std::vector<double> out = policy.kind == ClipKind::norm
                                      ? clip_norm(flat, policy.threshold)
                                      : clip_elementwise(flat, policy.threshold);
  const bool fired = out != flat;
  if (fired) g.assign_flat(out);
  return fired;
}

RnnParams sgd_step(const RnnParams& params, const Gradients& gradient, double lr) {
  RnnParams next = params;
  auto descend = [lr](std::span<double> p, std::span<const double> g) {
    if (p.size() != g.size()) throw DimensionError("sgd_step: gradient shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
  };
  descend(next.w_rec.span(), gradient.w_rec.span());
  descend(next.w_in.span(), gradient.w_in.span());
  descend(next.b.span(), gradient.b.span());
  descend(next.w_out.span(), gradient.w_out.span());
  descend(next.b_out.span(), gradient.b_out.span());
  return next;
}

double alpha_at(const TrainConfig& config, std::size_t update) {
  if (config.alpha_schedule == AlphaSchedule::constant) return config.alpha0;
  const std::size_t epoch = 1 + update / config.epoch_length();
  const double divisor = config.alpha_schedule == AlphaSchedule::inv_2t ? 2.0 * static_cast<double>(epoch)
                                                                        : static_cast<double>(epoch);
  return config.alpha0 / divisor;
}

BatchGradient batch_gradient(const RnnParams& params, std::span<const TaskSample> batch,
                             LossKind loss_kind, TimeReduction reduction, double alpha) {
  if (batch.empty()) throw Error("batch_gradient: empty batch");
  BatchGradient out;
  out.grads = Gradients::zeros_like(params);
  Matrix omega_grad(params.hidden(), params.hidden());
  double ratio_sum = 0.0;
  std::size_t ratio_count = 0;
  const LossSpec spec{loss_kind, reduction};

  for (const TaskSample& sample : batch) {
    const Trajectory traj = model::forward(params, sample.inputs);
    const LossResult loss = model::loss(params, spec, traj, sample.target);
    if (!std::isfinite(loss.total)) throw NonFiniteError("batch_gradient: non-finite loss");
    const GradientReport rep = grad::bptt(params, traj, loss);
    out.grads.add_scaled(rep.grads, 1.0);
    out.loss += loss.total;
    if (alpha > 0.0) {
      const OmegaReport om = regularizer::omega(params, traj, rep.deltas, alpha);
      out.omega += om.omega_total;
      if (!om.degenerate) {
        ratio_sum += om.mean_ratio;
        ++ratio_count;
      }
      const OmegaGradient og = regularizer::omega_grad_immediate(params, traj, rep.deltas);
      for (std::size_t i = 0; i < omega_grad.size(); ++i) omega_grad.data()[i] += og.d_w_rec.data()[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.grads.scale(inv);
  out.loss *= inv;
  out.omega *= inv;
  if (ratio_count > 0) out.mean_ratio = ratio_sum / static_cast<double>(ratio_count);
  if (alpha > 0.0) {
    const double s = alpha * inv;
    for (std::size_t i = 0; i < omega_grad.size(); ++i) out.grads.w_rec.data()[i] += s * omega_grad.data()[i];
  }
  return out;
}

EvalResult evaluate(const RnnParams& params, std::span<const TaskSample> test_set,
                    double success_error, double regression_tolerance) {
  if (test_set.empty()) throw Error("evaluate: empty test set");
  EvalResult res;
  res.samples = test_set.size();
  for (const TaskSample& sample : test_set) {
    bool wrong = false;
    try {
      const Trajectory traj = model::forward(params, sample.inputs);
      const bool regression = !sample.target.values.empty();
      for (std::size_t e : sample.eval_steps) {
        const auto it = std::find(sample.target.steps.begin(), sample.target.steps.end(), e);
        if (it == sample.target.steps.end()) throw Error("evaluate: eval step has no target");
        const auto idx = static_cast<std::size_t>(it - sample.target.steps.begin());
        const Vector y = model::readout(params, traj.states[e]);
        if (regression) {
          const Vector& want = sample.target.values[idx];
          for (std::size_t i = 0; i < y.size(); ++i)
            if (!(std::abs(y[i] - want[i]) < regression_tolerance)) wrong = true;
        } else if (argmax(y) != sample.target.labels[idx]) {
          wrong = true;
        }
        if (wrong) break;
      }
    } catch (const NonFiniteError&) {
      wrong = true;
    }
    if (wrong) ++res.errors;
  }
  res.error_rate = static_cast<double>(res.errors) / static_cast<double>(res.samples);
  res.success = res.error_rate <= success_error;
  return res;
}

TrainResult train(RnnParams params, const TaskSpec& task, const TrainConfig& config) {
  config.validate();
  task.validate();
  params.validate();
  if (params.inputs() != task.input_dim() || params.outputs() != task.output_dim())
    throw DimensionError("train: model dimensions do not match the task");

  TrainResult result;
  result.params = std::move(params);
  if (config.max_updates == 0) return result;

  const LossKind loss_kind = task.loss_kind();
  const std::vector<TaskSample> test_set =
      tasks::make_set(task, config.rng_seed ^ kTestStreamSalt, 0, config.test_size);
  const std::size_t probe = std::min(config.probe_size == 0 ? config.test_size : config.probe_size,
                                     config.test_size);

  double lr = config.learning_rate;
  double epoch_loss = 0.0;
  std::size_t epoch_count = 0;
  std::optional<double> previous_epoch_loss;
  std::vector<TaskSample> batch;
  batch.reserve(config.batch);

  for (std::size_t u = 0; u < config.max_updates; ++u) {
    batch.clear();
    for (std::size_t i = 0; i < config.batch; ++i)
      batch.push_back(tasks::sample_at(task, config.rng_seed, u * config.batch + i));

    const double alpha = alpha_at(config, u);
    BatchGradient bg;
    try {
      bg = config.reference_kernel
               ? batch_gradient(result.params, batch, loss_kind, config.time_reduction, alpha)
               : batched::batch_gradient(result.params, batch, loss_kind, config.time_reduction, alpha);
    } catch (const NonFiniteError& e) {
      result.status = TrainStatus::diverged;
      result.updates_run = u;
      result.message = e.what();
      return result;
    }
    const double before = bg.grads.norm();
    if (!std::isfinite(before) || !std::isfinite(bg.loss)) {
      result.status = TrainStatus::diverged;
      result.updates_run = u;
      result.message = "non-finite gradient at update " + std::to_string(u + 1);
      return result;
    }
    const bool fired = apply_clip(bg.grads, config.clip);
    const double after = fired ? bg.grads.norm() : before;
    result.params = sgd_step(result.params, bg.grads, lr);

    if (config.record_updates) {
      result.log.updates.push_back({.update = u + 1,
                                    .loss = bg.loss,
                                    .grad_norm = before,
                                    .grad_norm_clipped = after,
                                    .clipped = fired,
                                    .omega = bg.omega,
                                    .mean_ratio = bg.mean_ratio,
                                    .alpha = alpha,
                                    .lr = lr});
    }
    result.updates_run = u + 1;

    epoch_loss += bg.loss;
    ++epoch_count;
    if (epoch_count == config.epoch_length()) {
      const double mean = epoch_loss / static_cast<double>(epoch_count);
      if (config.lr_halving && previous_epoch_loss && mean > *previous_epoch_loss) lr *= 0.5;
      previous_epoch_loss = mean;
      epoch_loss = 0.0;
      epoch_count = 0;
    }

    if ((u + 1) % config.eval_every == 0 || u + 1 == config.max_updates) {
      EvalRecord rec;
      rec.update = u + 1;
      const auto eval = [&](std::span<const TaskSample> set) {
        return config.reference_kernel
                   ? evaluate(result.params, set, config.success_error, config.regression_tolerance)
                   : batched::evaluate(result.params, set, config.success_error,
                                       config.regression_tolerance);
      };
      rec.probe = eval(std::span(test_set).first(probe));
      if (rec.probe.success) rec.full = probe == test_set.size() ? rec.probe : eval(test_set);
      result.log.evals.push_back(rec);
      if (rec.full) result.final_eval = rec.full;
      else result.final_eval = rec.probe;
      if (rec.full && rec.full->success) {
        result.status = TrainStatus::success;
        return result;
      }
    }
  }
  result.status = TrainStatus::budget_exhausted;
  return result;
}

NormStatistics suggest_threshold(RnnParams params, const TaskSpec& task, TrainConfig config,
                                 std::size_t updates) {
  config.clip = ClipPolicy{};
  config.max_updates = updates;
  config.eval_every = std::max<std::size_t>(updates, 1);
  config.test_size = std::min<std::size_t>(config.test_size, 100);
  config.probe_size = config.test_size;
  config.record_updates = true;
  const TrainResult r = train(std::move(params), task, config);
  NormStatistics stats;
  for (const auto& row : r.log.updates) {
    stats.mean += row.grad_norm;
    stats.max = std::max(stats.max, row.grad_norm);
  }
  stats.updates = r.log.updates.size();
  if (stats.updates > 0) stats.mean /= static_cast<double>(stats.updates);
  return stats;
}

std::string_view clip_name(ClipKind kind) {
  switch (kind) {
    case ClipKind::none: return "none";
    case ClipKind::norm: return "norm";
    case ClipKind::elementwise: return "elementwise";
  }
  return "none";
}

ClipKind parse_clip(std::string_view name) {
  if (name == "none") return ClipKind::none;
  if (name == "norm") return ClipKind::norm;
  if (name == "elementwise") return ClipKind::elementwise;
  throw Error("unknown clip policy '" + std::string(name) + "'");
}

std::string_view schedule_name(AlphaSchedule s) {
  switch (s) {
    case AlphaSchedule::constant: return "const";
    case AlphaSchedule::inv_t: return "inv-t";
    case AlphaSchedule::inv_2t: return "inv-2t";
  }
  return "const";
}

AlphaSchedule parse_schedule(std::string_view name) {
  if (name == "const" || name == "constant") return AlphaSchedule::constant;
  if (name == "inv-t" || name == "inv_t" || name == "1/t") return AlphaSchedule::inv_t;
  if (name == "inv-2t" || name == "inv_2t" || name == "1/(2t)") return AlphaSchedule::inv_2t;
  throw Error("unknown alpha schedule '" + std::string(name) + "'");
}

std::string_view status_name(TrainStatus s) {
  switch (s) {
    case TrainStatus::success: return "success";
    case TrainStatus::budget_exhausted: return "budget_exhausted";
    case TrainStatus::diverged: return "diverged";
  }
  return "unknown";
}

}  // namespace optim
}  // namespace rnnlab
