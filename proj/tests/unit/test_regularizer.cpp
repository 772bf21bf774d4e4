#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "rnnlab/error.hpp"
#include "rnnlab/grad.hpp"
#include "rnnlab/gradcheck.hpp"
#include "rnnlab/regularizer.hpp"

using namespace rnnlab;

namespace {

struct Setup {
  RnnParams params;
  Trajectory traj;
  std::vector<Vector> deltas;
};

Setup from_instance(const gradcheck::Instance& inst) {
  Setup s{inst.params, model::forward(inst.params, inst.x0, inst.inputs), {}};
  const LossResult l = model::loss(s.params, {LossKind::softmax_per_step}, s.traj, inst.target);
  s.deltas = grad::bptt(s.params, s.traj, l).deltas;
  return s;
}

/// Ω recomputed from its definition with plain loops.
double omega_oracle(const RnnParams& p, const Trajectory& traj, const std::vector<Vector>& deltas) {
  const auto w = oracle::to_mat(p.w_rec);
  const std::size_t n = w.size();
  double total = 0.0;
  for (std::size_t k = 1; k + 1 < deltas.size(); ++k) {
    const auto& r = deltas[k + 1];
    double rn = 0.0, zn = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double z = 0.0;
      for (std::size_t i = 0; i < n; ++i) z += r[i] * w[i][j];
      z *= oracle::act_slope(p.activation.kind(), traj.states[k][j]);
      zn += z * z;
      rn += r[j] * r[j];
    }
    if (std::sqrt(rn) < regularizer::kMinSignalNorm) continue;
    const double dev = std::sqrt(zn) / std::sqrt(rn) - 1.0;
    total += dev * dev;
  }
  return total;
}

}  // namespace

TEST_SUITE("regularizer") {

TEST_CASE("norm-preserving linear map has zero penalty and zero gradient") {
  // Rotation of the plane and a reflection on the third axis.
  const double c = std::cos(0.7), s = std::sin(0.7);
  RnnParams p = model::init_params(3, 1, 1, Activation(ActivationKind::identity), 1);
  p.w_rec = Matrix(3, 3, {c, -s, 0, s, c, 0, 0, 0, -1});
  std::mt19937_64 rng(41);
  const Trajectory traj = model::forward(p, std::vector<Vector>(8, Vector{1.0}));
  std::vector<Vector> deltas;
  for (int k = 0; k <= 8; ++k) deltas.push_back(oracle::random_vector(3, rng));
  const OmegaReport rep = regularizer::omega(p, traj, deltas);
  CHECK(rep.included_count == 7);
  for (std::size_t k = 1; k < 8; ++k) CHECK(rep.ratio_k[k] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(rep.omega_total < 1e-28);
  CHECK(linalg::frobenius_norm(regularizer::omega_grad_immediate(p, traj, deltas).d_w_rec) < 1e-13);
}

TEST_CASE("ratio two gives a unit term") {
  RnnParams p = model::init_params(1, 1, 1, Activation(ActivationKind::identity), 1);
  p.w_rec(0, 0) = 2.0;
  const Trajectory traj = model::forward(p, std::vector<Vector>(2, Vector{0.0}));
  const OmegaReport rep = regularizer::omega(p, traj, {Vector{0.0}, Vector{0.0}, Vector{0.3}}, 1.5);
  CHECK(rep.included_count == 1);
  CHECK(rep.ratio_k[1] == 2.0);
  CHECK(rep.omega_total == 1.0);
  CHECK(rep.alpha == 1.5);
  CHECK(rep.mean_ratio == 2.0);
}

TEST_CASE("ratios agree with the grad module's step jacobian") {
  const Setup s = from_instance(gradcheck::random_instance(8, 12, Activation{}, 5));
  const OmegaReport rep = regularizer::omega(s.params, s.traj, s.deltas);
  for (std::size_t k = 1; k < 12; ++k) {
    const Vector moved = linalg::vecmat(s.deltas[k + 1], grad::step_jacobian(s.params, s.traj.state(k)));
    const double want = linalg::norm2(moved.span()) / linalg::norm2(s.deltas[k + 1].span());
    CHECK(rep.ratio_k[k] == doctest::Approx(want).epsilon(1e-12));
  }
  CHECK(rep.omega_total == doctest::Approx(omega_oracle(s.params, s.traj, s.deltas)).epsilon(1e-12));
  CHECK_FALSE(rep.included[0]);
  CHECK_FALSE(rep.included[12]);
}

TEST_CASE("scalar gradient matches the hand derivative") {
  for (auto kind : {ActivationKind::tanh, ActivationKind::sigmoid}) {
    for (double w : {-1.7, 0.4, 2.5}) {
      RnnParams p = model::init_params(1, 1, 1, Activation(kind), 1);
      p.w_rec(0, 0) = w;
      p.w_in(0, 0) = 0.0;
      p.b[0] = 0.2;
      const Trajectory traj = model::forward(p, Vector{0.3}, std::vector<Vector>(2, Vector{0.0}));
      const std::vector<Vector> deltas{Vector{0.0}, Vector{0.0}, Vector{-0.8}};
      const double slope = oracle::act_slope(kind, traj.states[1][0]);
      const double hand = 2.0 * (std::abs(w) * slope - 1.0) * (w > 0 ? 1.0 : -1.0) * slope;
      const double got = regularizer::omega_grad_immediate(p, traj, deltas).d_w_rec(0, 0);
      CHECK(got == doctest::Approx(hand).epsilon(1e-13));
      const auto at = [&](double wv) {
        RnnParams q = p;
        q.w_rec(0, 0) = wv;
        return regularizer::omega(q, traj, deltas).omega_total;
      };
      CHECK(got == doctest::Approx((at(w + 1e-6) - at(w - 1e-6)) / 2e-6).epsilon(1e-7));
    }
  }
}

TEST_CASE("immediate gradient matches frozen-signal differences of the oracle") {
  for (auto kind : {ActivationKind::tanh, ActivationKind::sigmoid, ActivationKind::identity}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const Setup s = from_instance(gradcheck::random_instance(10, 15, Activation(kind), seed));
      const Matrix analytic = regularizer::omega_grad_immediate(s.params, s.traj, s.deltas).d_w_rec;
      oracle::Vec numeric;
      RnnParams q = s.params;
      for (double& v : q.w_rec.span()) {
        const double saved = v;
        v = saved + 1e-6;
        const double up = omega_oracle(q, s.traj, s.deltas);
        v = saved - 1e-6;
        const double down = omega_oracle(q, s.traj, s.deltas);
        v = saved;
        numeric.push_back((up - down) / 2e-6);
      }
      CHECK(oracle::rel_error(oracle::Vec(analytic.span().begin(), analytic.span().end()), numeric) < 1e-5);
    }
  }
}

TEST_CASE("vanishing error rows and vanishing transport are excluded") {
  RnnParams p = model::init_params(2, 1, 1, Activation{}, 1);
  const Trajectory traj = model::forward(p, std::vector<Vector>(4, Vector{0.0}));
  const std::vector<Vector> none(5, Vector(2));
  const OmegaReport rep = regularizer::omega(p, traj, none);
  CHECK(rep.degenerate);
  CHECK(rep.omega_total == 0.0);
  CHECK(rep.mean_ratio == 0.0);
  std::vector<Vector> tiny = none;
  tiny[3] = Vector{1e-31, 0.0};
  CHECK(regularizer::omega(p, traj, tiny).included_count == 0);

  p.w_rec = Matrix(2, 2);
  std::vector<Vector> live(5, Vector{1.0, 1.0});
  const OmegaReport dead = regularizer::omega(p, traj, live);
  CHECK(dead.included_count == 3);
  CHECK(dead.omega_total == 3.0);
  CHECK(regularizer::omega_grad_immediate(p, traj, live).skipped_zero_transport == 3);

  CHECK_THROWS_AS(regularizer::omega(p, traj, std::vector<Vector>(4, Vector(2))), DimensionError);
  CHECK_THROWS_AS(regularizer::omega(p, traj, std::vector<Vector>(5, Vector(3))), DimensionError);
}

}
