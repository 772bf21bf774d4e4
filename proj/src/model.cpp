#include "rnnlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "rnnlab/error.hpp"

namespace rnnlab {
namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_dims(const char* what, std::size_t got, std::size_t want) {
  if (got != want) {
    std::ostringstream oss;
    oss << what << ": expected length " << want << ", got " << got;
    throw DimensionError(oss.str());
  }
}

}  // namespace

double Activation::value(double x) const {
  switch (kind_) {
    case ActivationKind::tanh: return std::tanh(x);
    case ActivationKind::sigmoid: return sigmoid(x);
    case ActivationKind::identity: return x;
  }
  return x;
}

double Activation::derivative(double x) const {
  switch (kind_) {
    case ActivationKind::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case ActivationKind::sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
    case ActivationKind::identity: return 1.0;
  }
  return 1.0;
}

Vector Activation::value(const Vector& x) const {
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = value(x[i]);
  return out;
}

Vector Activation::derivative(const Vector& x) const {
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = derivative(x[i]);
  return out;
}

std::string_view Activation::name() const {
  switch (kind_) {
    case ActivationKind::tanh: return "tanh";
    case ActivationKind::sigmoid: return "sigmoid";
    case ActivationKind::identity: return "identity";
  }
  return "tanh";
}

Activation Activation::parse(std::string_view name) {
  if (name == "tanh") return Activation(ActivationKind::tanh);
  if (name == "sigmoid") return Activation(ActivationKind::sigmoid);
  if (name == "identity" || name == "linear") return Activation(ActivationKind::identity);
  throw Error("unknown activation '" + std::string(name) + "'");
}

void RnnParams::validate() const {
  const std::size_t n = w_rec.rows();
  if (n == 0) throw DimensionError("RnnParams: empty recurrent matrix");
  check_dims("RnnParams.w_rec cols", w_rec.cols(), n);
  check_dims("RnnParams.w_in rows", w_in.rows(), n);
  check_dims("RnnParams.b", b.size(), n);
  check_dims("RnnParams.w_out cols", w_out.cols(), n);
  check_dims("RnnParams.b_out", b_out.size(), w_out.rows());
  for (auto block : {w_rec.span(), w_in.span(), w_out.span()})
    if (!linalg::all_finite(block)) throw NonFiniteError("RnnParams: non-finite weight");
  if (!linalg::all_finite(b.span()) || !linalg::all_finite(b_out.span()))
    throw NonFiniteError("RnnParams: non-finite bias");
}

namespace model {

Vector step(const RnnParams& params, const Vector& x_prev, const Vector& input) {
  Vector x = linalg::matvec(params.w_rec, params.activation.value(x_prev));
  const Vector drive = linalg::matvec(params.w_in, input);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = x[i] + drive[i] + params.b[i];
  return x;
}

Trajectory forward(const RnnParams& params, const Vector& x0, const std::vector<Vector>& inputs) {
  check_dims("forward: x0", x0.size(), params.hidden());
  Trajectory traj;
  traj.inputs = inputs;
  traj.states.reserve(inputs.size() + 1);
  traj.states.push_back(x0);
  for (std::size_t t = 1; t <= inputs.size(); ++t) {
    const Vector& u = inputs[t - 1];
    check_dims("forward: input", u.size(), params.inputs());
    Vector x = step(params, traj.states.back(), u);
    if (!linalg::all_finite(x.span())) {
      std::ostringstream oss;
      oss << "forward: non-finite state at step " << t;
      throw NonFiniteError(oss.str());
    }
    traj.states.push_back(std::move(x));
  }
  return traj;
}

Trajectory forward(const RnnParams& params, const std::vector<Vector>& inputs) {
  return forward(params, Vector(params.hidden()), inputs);
}

Vector readout(const RnnParams& params, const Vector& x) {
  check_dims("readout: state", x.size(), params.hidden());
  Vector y = linalg::matvec(params.w_out, params.activation.value(x));
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += params.b_out[i];
  return y;
}

LossResult loss(const RnnParams& params, const LossSpec& spec, const Trajectory& traj,
                const Target& target) {
  const std::size_t T = traj.length();
  const std::size_t n = params.hidden();
  const std::size_t o = params.outputs();
  const bool classify = spec.kind != LossKind::squared_final;

  if (spec.kind != LossKind::softmax_per_step) {
    if (target.steps.size() != 1 || target.steps[0] != T)
      throw Error("loss: final-step loss requires exactly the step T as target");
  }
  if (classify) check_dims("loss: labels", target.labels.size(), target.steps.size());
  else check_dims("loss: values", target.values.size(), target.steps.size());

  LossResult res;
  res.per_step.assign(T + 1, 0.0);
  res.dE_dx.assign(T + 1, Vector(n));
  res.d_w_out = Matrix(o, n);
  res.d_b_out = Vector(o);
  const double weight =
      spec.reduction == TimeReduction::mean && !target.steps.empty()
          ? 1.0 / static_cast<double>(target.steps.size())
          : 1.0;

  for (std::size_t s = 0; s < target.steps.size(); ++s) {
    const std::size_t t = target.steps[s];
    if (t == 0 || t > T) throw Error("loss: scored step out of range");
    const Vector h = params.activation.value(traj.states[t]);
    Vector y = linalg::matvec(params.w_out, h);
    for (std::size_t i = 0; i < o; ++i) y[i] += params.b_out[i];

    Vector dy(o);
    double e = 0.0;
    if (classify) {
      const std::size_t label = target.labels[s];
      if (label >= o) {
        std::ostringstream oss;
        oss << "loss: label " << label << " out of range for " << o << " outputs";
        throw Error(oss.str());
      }
      const double ymax = *std::max_element(y.begin(), y.end());
      double z = 0.0;
      for (std::size_t i = 0; i < o; ++i) z += std::exp(y[i] - ymax);
      const double log_z = ymax + std::log(z);
      e = log_z - y[label];
      for (std::size_t i = 0; i < o; ++i) dy[i] = std::exp(y[i] - log_z);
      dy[label] -= 1.0;
    } else {
      const Vector& want = target.values[s];
      check_dims("loss: regression target", want.size(), o);
      for (std::size_t i = 0; i < o; ++i) {
        const double r = y[i] - want[i];
        e += r * r;
        dy[i] = 2.0 * r;
      }
    }
    e *= weight;
    for (auto& g : dy) g *= weight;

    res.per_step[t] += e;
    res.total += e;
    linalg::add_outer(res.d_w_out, dy, h);
    for (std::size_t i = 0; i < o; ++i) res.d_b_out[i] += dy[i];

    const Vector back = linalg::vecmat(dy, params.w_out);
    const Vector slope = params.activation.derivative(traj.states[t]);
    Vector& dx = res.dE_dx[t];
    for (std::size_t i = 0; i < n; ++i) dx[i] += back[i] * slope[i];
  }
  return res;
}

RnnParams init_params(std::size_t hidden, std::size_t inputs, std::size_t outputs,
                      Activation activation, std::uint64_t seed, double stddev) {
  if (hidden == 0 || inputs == 0 || outputs == 0)
    throw DimensionError("init_params: dimensions must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, stddev);
  auto fill = [&](Matrix& m) {
    for (auto& x : m.span()) x = normal(rng);
  };
  RnnParams p;
  p.w_rec = Matrix(hidden, hidden);
  p.w_in = Matrix(hidden, inputs);
  p.b = Vector(hidden);
  p.w_out = Matrix(outputs, hidden);
  p.b_out = Vector(outputs);
  p.activation = activation;
  fill(p.w_rec);
  fill(p.w_in);
  fill(p.w_out);
  return p;
}

std::string_view loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::softmax_final: return "softmax_final";
    case LossKind::softmax_per_step: return "softmax_per_step";
    case LossKind::squared_final: return "squared_final";
  }
  return "softmax_final";
}

LossKind parse_loss(std::string_view name) {
  if (name == "softmax_final") return LossKind::softmax_final;
  if (name == "softmax_per_step") return LossKind::softmax_per_step;
  if (name == "squared_final") return LossKind::squared_final;
  throw Error("unknown loss '" + std::string(name) + "'");
}

}  // namespace model
}  // namespace rnnlab
