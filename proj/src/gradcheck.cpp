#include "rnnlab/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "rnnlab/regularizer.hpp"

namespace rnnlab::gradcheck {
namespace {

struct Block {
  const char* name;
  std::span<double> values;
  std::span<const double> analytic;
};

double loss_at(const RnnParams& params, const Vector& x0, const std::vector<Vector>& inputs,
               const LossSpec& spec, const Target& target) {
  return model::loss(params, spec, model::forward(params, x0, inputs), target).total;
}

}  // namespace

double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

CheckReport check(const RnnParams& params, const Vector& x0, const std::vector<Vector>& inputs,
                  const LossSpec& loss, const Target& target, CheckOptions opts) {
  const Trajectory traj = model::forward(params, x0, inputs);
  const LossResult lr = model::loss(params, loss, traj, target);
  const GradientReport report = grad::bptt(params, traj, lr);

  CheckReport out;
  RnnParams probe = params;
  const Gradients& g = report.grads;
  Block blocks[] = {{"w_rec", probe.w_rec.span(), g.w_rec.span()},
                    {"w_in", probe.w_in.span(), g.w_in.span()},
                    {"b", probe.b.span(), g.b.span()},
                    {"w_out", probe.w_out.span(), g.w_out.span()},
                    {"b_out", probe.b_out.span(), g.b_out.span()}};
  for (auto& block : blocks) {
    std::vector<double> numeric(block.values.size());
    for (std::size_t i = 0; i < block.values.size(); ++i) {
      const double saved = block.values[i];
      const double h = opts.step * std::max(1.0, std::abs(saved));
      block.values[i] = saved + h;
      const double up = loss_at(probe, x0, inputs, loss, target);
      block.values[i] = saved - h;
      const double down = loss_at(probe, x0, inputs, loss, target);
      block.values[i] = saved;
      numeric[i] = (up - down) / (2.0 * h);
      out.evaluations += 2;
    }
    const double err = relative_error(numeric, block.analytic);
    out.bptt.push_back({block.name, err});
    out.bptt_max = std::max(out.bptt_max, err);
  }

  // Ω with the trajectory and error rows frozen is a function of W_rec alone.
  const OmegaReport base = regularizer::omega(params, traj, report.deltas);
  if (base.included_count > 0) {
    const OmegaGradient analytic = regularizer::omega_grad_immediate(params, traj, report.deltas);
    RnnParams w = params;
    std::vector<double> numeric(w.w_rec.size());
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      const double saved = w.w_rec.data()[i];
      const double h = opts.step * std::max(1.0, std::abs(saved));
      w.w_rec.data()[i] = saved + h;
      const double up = regularizer::omega(w, traj, report.deltas).omega_total;
      w.w_rec.data()[i] = saved - h;
      const double down = regularizer::omega(w, traj, report.deltas).omega_total;
      w.w_rec.data()[i] = saved;
      numeric[i] = (up - down) / (2.0 * h);
      out.evaluations += 2;
    }
    out.omega_rel_error = relative_error(numeric, analytic.d_w_rec.span());
    out.omega_checked = true;
  }
  return out;
}

Instance random_instance(std::size_t hidden, std::size_t steps, Activation activation, std::uint64_t seed) {
  constexpr std::size_t inputs = 3;
  constexpr std::size_t outputs = 2;
  Instance inst;
  inst.params = model::init_params(hidden, inputs, outputs, activation, seed, 0.5 / std::sqrt(static_cast<double>(hidden)));
  std::mt19937_64 rng(seed ^ 0x9c4ec4);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : inst.params.b.span()) v = 0.1 * normal(rng);
  for (auto& v : inst.params.b_out.span()) v = 0.1 * normal(rng);
  inst.x0 = Vector(hidden);
  for (auto& v : inst.x0.span()) v = 0.5 * normal(rng);
  for (std::size_t t = 0; t < steps; ++t) {
    Vector u(inputs);
    for (auto& v : u.span()) v = normal(rng);
    inst.inputs.push_back(std::move(u));
  }
  std::uniform_int_distribution<std::size_t> label(0, outputs - 1);
  for (std::size_t t = 1; t <= steps; ++t) {
    inst.target.steps.push_back(t);
    inst.target.labels.push_back(label(rng));
  }
  return inst;
}

}  // namespace rnnlab::gradcheck
