#pragma once

// Plain-loop reference implementations used as test oracles. Nothing here
// calls into the library beyond reading RnnParams fields.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "rnnlab/model.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline double act(rnnlab::ActivationKind k, double x) {
  switch (k) {
    case rnnlab::ActivationKind::tanh: return std::tanh(x);
    case rnnlab::ActivationKind::sigmoid: return 1.0 / (1.0 + std::exp(-x));
    case rnnlab::ActivationKind::identity: return x;
  }
  return x;
}

inline double act_slope(rnnlab::ActivationKind k, double x) {
  const double h = act(k, x);
  switch (k) {
    case rnnlab::ActivationKind::tanh: return 1.0 - h * h;
    case rnnlab::ActivationKind::sigmoid: return h * (1.0 - h);
    case rnnlab::ActivationKind::identity: return 1.0;
  }
  return 1.0;
}

inline Mat to_mat(const rnnlab::Matrix& m) {
  Mat out(m.rows(), Vec(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

inline Vec to_vec(const rnnlab::Vector& v) { return Vec(v.begin(), v.end()); }

inline Vec matvec(const Mat& m, const Vec& v) {
  Vec out(m.size(), 0.0);
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) out[i] += m[i][j] * v[j];
  return out;
}

/// States x_0..x_T of x_t = W_rec σ(x_{t−1}) + W_in u_t + b.
inline Mat states(const rnnlab::RnnParams& p, const Vec& x0, const std::vector<rnnlab::Vector>& inputs) {
  const Mat w_rec = to_mat(p.w_rec);
  const Mat w_in = to_mat(p.w_in);
  const auto kind = p.activation.kind();
  Mat xs{x0};
  for (const auto& u : inputs) {
    Vec h(x0.size());
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = act(kind, xs.back()[i]);
    Vec x = matvec(w_rec, h);
    const Vec drive = matvec(w_in, to_vec(u));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += drive[i] + p.b[i];
    xs.push_back(std::move(x));
  }
  return xs;
}

inline Vec readout(const rnnlab::RnnParams& p, const Vec& x) {
  Vec h(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) h[i] = act(p.activation.kind(), x[i]);
  Vec y = matvec(to_mat(p.w_out), h);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += p.b_out[i];
  return y;
}

/// Sum over scored steps of softmax cross-entropy or squared error.
inline double loss(const rnnlab::RnnParams& p, const Vec& x0, const std::vector<rnnlab::Vector>& inputs,
                   const rnnlab::Target& target, bool regression) {
  const Mat xs = states(p, x0, inputs);
  double total = 0.0;
  for (std::size_t k = 0; k < target.steps.size(); ++k) {
    const Vec y = readout(p, xs[target.steps[k]]);
    if (regression) {
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y[i] - target.values[k][i];
        total += r * r;
      }
    } else {
      double z = 0.0;
      for (double v : y) z += std::exp(v);
      total += std::log(z) - y[target.labels[k]];
    }
  }
  return total;
}

/// Central differences of `f` over every entry of a parameter copy, in the
/// Gradients::flatten order (w_rec, w_in, b, w_out, b_out).
template <typename F>
Vec fd_gradient(const rnnlab::RnnParams& params, F f, double step = 1e-5) {
  rnnlab::RnnParams p = params;
  Vec out;
  for (std::span<double> block : {p.w_rec.span(), p.w_in.span(), p.b.span(), p.w_out.span(), p.b_out.span()}) {
    for (double& v : block) {
      const double saved = v;
      const double h = step * std::max(1.0, std::abs(saved));
      v = saved + h;
      const double up = f(p);
      v = saved - h;
      const double down = f(p);
      v = saved;
      out.push_back((up - down) / (2.0 * h));
    }
  }
  return out;
}

/// ‖a − b‖ / max(‖a‖, ‖b‖).
inline double rel_error(const Vec& a, const Vec& b) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double s = std::sqrt(std::max(na, nb));
  return s == 0.0 ? 0.0 : std::sqrt(d) / s;
}

inline double norm(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline rnnlab::Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  rnnlab::Matrix m(rows, cols);
  for (auto& v : m.span()) v = n(rng);
  return m;
}

inline rnnlab::Vector random_vector(std::size_t size, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  rnnlab::Vector v(size);
  for (auto& x : v.span()) x = n(rng);
  return v;
}

}  // namespace oracle
