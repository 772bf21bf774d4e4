// Acceptance runner. Prints one PASS/FAIL line per criterion and exits
// non-zero when any selected criterion fails.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "../common/generator_suite.hpp"
#include "../unit/oracles.hpp"
#include "rnnlab/analysis.hpp"
#include "rnnlab/grad.hpp"
#include "rnnlab/gradcheck.hpp"
#include "rnnlab/optim.hpp"
#include "rnnlab/regularizer.hpp"

using namespace rnnlab;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Verdict()> run;
};

std::size_t g_threads = 1;

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

/// Runs fn(i) for i in [0, count) on up to g_threads workers.
template <typename Fn>
auto parallel_map(std::size_t count, Fn fn) {
  using R = decltype(fn(std::size_t{0}));
  std::vector<R> out(count);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < std::min(g_threads, count); ++w)
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) out[i] = fn(i);
    });
  for (auto& t : workers) t.join();
  return out;
}

// 1. Gradient oracle suite.

double frozen_omega(const RnnParams& p, const Trajectory& traj, const std::vector<Vector>& deltas) {
  const auto w = oracle::to_mat(p.w_rec);
  const std::size_t n = w.size();
  double total = 0.0;
  for (std::size_t k = 1; k + 1 < deltas.size(); ++k) {
    const Vector& r = deltas[k + 1];
    double rn = 0.0, zn = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double z = 0.0;
      for (std::size_t i = 0; i < n; ++i) z += r[i] * w[i][j];
      z *= oracle::act_slope(p.activation.kind(), traj.states[k][j]);
      zn += z * z;
      rn += r[j] * r[j];
    }
    if (std::sqrt(rn) < regularizer::kMinSignalNorm) continue;
    const double dev = std::sqrt(zn / rn) - 1.0;
    total += dev * dev;
  }
  return total;
}

struct OracleErrors {
  double bptt = 0.0;
  double omega = 0.0;
};

OracleErrors gradient_case(ActivationKind kind, std::size_t n, std::size_t steps, std::uint64_t seed) {
  const auto inst = gradcheck::random_instance(n, steps, Activation(kind), seed);
  const Trajectory traj = model::forward(inst.params, inst.x0, inst.inputs);
  const LossResult loss = model::loss(inst.params, {LossKind::softmax_per_step}, traj, inst.target);
  const GradientReport rep = grad::bptt(inst.params, traj, loss);

  const auto numeric = oracle::fd_gradient(inst.params, [&](const RnnParams& q) {
    return oracle::loss(q, oracle::to_vec(inst.x0), inst.inputs, inst.target, false);
  });
  const auto analytic = rep.grads.flatten();
  OracleErrors err;
  // Norm-wise relative error per parameter block.
  const std::size_t sizes[] = {n * n, n * 3, n, 2 * n, 2};
  std::size_t at = 0;
  for (std::size_t size : sizes) {
    const oracle::Vec a(analytic.begin() + at, analytic.begin() + at + size);
    const oracle::Vec b(numeric.begin() + at, numeric.begin() + at + size);
    err.bptt = std::max(err.bptt, oracle::rel_error(a, b));
    at += size;
  }

  const Matrix omega_grad = regularizer::omega_grad_immediate(inst.params, traj, rep.deltas).d_w_rec;
  RnnParams q = inst.params;
  oracle::Vec fd;
  for (double& v : q.w_rec.span()) {
    const double saved = v;
    const double h = 1e-5 * std::max(1.0, std::abs(saved));
    v = saved + h;
    const double up = frozen_omega(q, traj, rep.deltas);
    v = saved - h;
    const double down = frozen_omega(q, traj, rep.deltas);
    v = saved;
    fd.push_back((up - down) / (2.0 * h));
  }
  err.omega = oracle::rel_error(oracle::Vec(omega_grad.span().begin(), omega_grad.span().end()), fd);
  return err;
}

Verdict gradient_oracles() {
  struct Case {
    ActivationKind kind;
    std::size_t n, steps;
    std::uint64_t seed;
  };
  std::vector<Case> cases;
  for (auto kind : {ActivationKind::tanh, ActivationKind::sigmoid, ActivationKind::identity})
    for (std::size_t n : {1u, 5u, 20u})
      for (std::size_t steps : {2u, 10u, 50u})
        for (std::uint64_t seed = 1; seed <= 5; ++seed) cases.push_back({kind, n, steps, seed});
  const auto errs = parallel_map(cases.size(), [&](std::size_t i) {
    return gradient_case(cases[i].kind, cases[i].n, cases[i].steps, cases[i].seed);
  });
  double worst_bptt = 0.0, worst_omega = 0.0;
  for (const auto& e : errs) {
    worst_bptt = std::max(worst_bptt, e.bptt);
    worst_omega = std::max(worst_omega, e.omega);
  }
  const bool pass = worst_bptt < 1e-5 && worst_omega < 1e-5;
  return {pass, fmt("%zu cases, worst BPTT rel %.2e, worst Omega rel %.2e (limit 1e-5)", cases.size(),
                    worst_bptt, worst_omega)};
}

// 2. Vanishing bound.

Verdict vanishing_bound() {
  constexpr std::size_t kSteps = 50;
  constexpr double kEta = 0.9;
  struct NetResult {
    double worst_ratio = 0.0;       // max over (t,k) of norm / (η^(t−k)‖e_t‖)
    double worst_mismatch = 0.0;    // library vs loop oracle transported norms
  };
  const auto results = parallel_map(20, [&](std::size_t net) {
    const ActivationKind kind = net % 2 == 0 ? ActivationKind::tanh : ActivationKind::sigmoid;
    const std::size_t n = 5 + 3 * (net % 6);
    RnnParams p = model::init_params(n, 3, 2, Activation(kind), 1000 + net, 0.5);
    const double gamma = p.activation.gamma();
    p.w_rec = linalg::scaled(p.w_rec, kEta / (gamma * linalg::spectral_norm(p.w_rec)));
    std::mt19937_64 rng(net);
    std::vector<Vector> inputs;
    for (std::size_t t = 0; t < kSteps; ++t) inputs.push_back(oracle::random_vector(3, rng));
    const Trajectory traj = model::forward(p, oracle::random_vector(n, rng), inputs);
    Target tgt;
    for (std::size_t t = 1; t <= kSteps; ++t) {
      tgt.steps.push_back(t);
      tgt.labels.push_back(t % 2);
    }
    const LossResult loss = model::loss(p, {LossKind::softmax_per_step}, traj, tgt);
    const double eta = linalg::spectral_norm(p.w_rec) * gamma;
    const auto w = oracle::to_mat(p.w_rec);
    NetResult res;
    for (std::size_t t = 1; t <= kSteps; ++t) {
      const auto norms = grad::component_norms(p, traj, t, loss.dE_dx[t]);
      // Row transport by explicit loops: r ← (r W) ⊙ σ′(x_{k−1}).
      oracle::Vec row = oracle::to_vec(loss.dE_dx[t]);
      for (std::size_t k = t + 1; k-- > 0;) {
        const double bound = std::pow(eta, static_cast<double>(t - k)) * norms[t];
        if (bound > 0.0) res.worst_ratio = std::max(res.worst_ratio, norms[k] / bound);
        const double own = oracle::norm(row);
        res.worst_mismatch = std::max(res.worst_mismatch, std::abs(own - norms[k]) / std::max(own, 1e-300));
        if (k == 0) break;
        oracle::Vec next(n, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
          for (std::size_t i = 0; i < n; ++i) next[j] += row[i] * w[i][j];
          next[j] *= oracle::act_slope(kind, traj.states[k - 1][j]);
        }
        row = std::move(next);
      }
    }
    return res;
  });
  double worst = 0.0, mismatch = 0.0;
  for (const auto& r : results) {
    worst = std::max(worst, r.worst_ratio);
    mismatch = std::max(mismatch, r.worst_mismatch);
  }
  const bool pass = worst <= 1.0 + 1e-9 && mismatch < 1e-9;
  return {pass, fmt("20 nets at eta 0.9, t <= 50: max norm/bound %.6f (limit 1 + 1e-9), loop-oracle mismatch %.1e",
                    worst, mismatch)};
}

// 3. Power-iteration decomposition.

Verdict exploding_decomposition() {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> lead(1.1, 1.5), unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> size(2, 6);
  double worst = 0.0, worst_vs_oracle = 0.0;
  std::size_t ran = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = size(rng);
    Vector d(n);
    d[0] = (unit(rng) < 0.5 ? -1.0 : 1.0) * lead(rng);
    // Remaining moduli spread over [0.05, |λ₁| − 0.2] with distinct values.
    for (std::size_t i = 1; i < n; ++i) {
      const double top = std::abs(d[0]) - 0.2;
      const double mag = 0.05 + (top - 0.05) * (static_cast<double>(i) - unit(rng) * 0.5) / static_cast<double>(n);
      d[i] = (unit(rng) < 0.5 ? -1.0 : 1.0) * mag;
    }
    const Matrix s = linalg::add(Matrix::identity(n), oracle::random_matrix(n, n, rng, 0.3));
    Matrix s_inv(n, n);
    for (std::size_t c = 0; c < n; ++c) {
      Vector e(n);
      e[c] = 1.0;
      const Vector col = linalg::solve(s, e);
      for (std::size_t r = 0; r < n; ++r) s_inv(r, c) = col[r];
    }
    const Matrix w = linalg::matmul(s, linalg::matmul(Matrix::diag(d), s_inv));
    const Vector r = oracle::random_vector(n, rng);
    const auto rep = analysis::exploding_direction(w, r, 50);
    // Independent leading term from the construction: (r S)_0 λ₁^50 · row 0 of S⁻¹.
    const double c0 = linalg::vecmat(r, s)[0];
    oracle::Vec want(n);
    for (std::size_t j = 0; j < n; ++j) want[j] = c0 * std::pow(d[0], 50) * s_inv(0, j);
    worst = std::max(worst, rep.rel_error);
    worst_vs_oracle = std::max(worst_vs_oracle, oracle::rel_error(oracle::to_vec(rep.exact), want));
    ++ran;
  }
  const bool pass = ran == 20 && worst < 1e-2 && worst_vs_oracle < 1e-2;
  return {pass, fmt("%zu matrices at l = 50: worst rel error %.2e, against construction %.2e (limit 1e-2)", ran, worst,
                    worst_vs_oracle)};
}

// 4. Clipping properties.

Verdict clipping() {
  std::mt19937_64 rng(404);
  std::lognormal_distribution<double> scale(0.0, 2.0);
  std::uniform_int_distribution<std::size_t> dim(1, 64);
  std::size_t over = 0, misaligned = 0, not_idempotent = 0, clamp_mismatch = 0;
  double worst_cos_gap = 0.0;
  for (int trial = 0; trial < 100'000; ++trial) {
    const std::size_t d = dim(rng);
    const Vector g = oracle::random_vector(d, rng, scale(rng));
    const double threshold = scale(rng);
    const auto once = optim::clip_norm(g.span(), threshold);
    const auto twice = optim::clip_norm(once, threshold);
    const oracle::Vec gv = oracle::to_vec(g);
    const double on = oracle::norm(once), gn = oracle::norm(gv);
    // Rescaling by threshold/‖g‖ rounds, so allow a few ulps above the threshold.
    if (on > threshold * (1.0 + 4e-16 * std::sqrt(static_cast<double>(d)) + 1e-15)) ++over;
    double dot = 0.0;
    for (std::size_t i = 0; i < d; ++i) dot += gv[i] * once[i];
    const double gap = 1.0 - dot / (gn * on);
    worst_cos_gap = std::max(worst_cos_gap, gap);
    if (gap > 1e-12) ++misaligned;
    if (oracle::rel_error(once, twice) > 1e-15) ++not_idempotent;

    const double limit = scale(rng);
    const auto clamped = optim::clip_elementwise(g.span(), limit);
    for (std::size_t i = 0; i < d; ++i) {
      const double want = gv[i] > limit ? limit : (gv[i] < -limit ? -limit : gv[i]);
      if (clamped[i] != want) ++clamp_mismatch;
    }
  }
  const bool pass = over == 0 && misaligned == 0 && not_idempotent == 0 && clamp_mismatch == 0;
  return {pass, fmt("1e5 vectors: %zu over threshold, worst cosine gap %.1e, %zu not idempotent, %zu clamp mismatches",
                    over, worst_cos_gap, not_idempotent, clamp_mismatch)};
}

// 5 and 6. Training runs.

struct Run {
  TaskKind task;
  std::size_t T;
  const char* mode;
  std::uint64_t seed;
  double lr, threshold, alpha;
  std::size_t budget;
  std::size_t test_size;
};

struct RunOutcome {
  TrainStatus status = TrainStatus::budget_exhausted;
  std::size_t updates = 0;
  double error = 1.0;
  double seconds = 0.0;
};

RunOutcome train_once(const Run& run) {
  TaskSpec task;
  task.kind = run.task;
  task.T = run.T;
  TrainConfig cfg;
  cfg.learning_rate = run.lr;
  const std::string mode = run.mode;
  if (mode != "SGD") cfg.clip = {ClipKind::norm, run.threshold};
  if (mode == "SGD-CR") cfg.alpha0 = run.alpha;
  cfg.batch = 16;
  cfg.max_updates = run.budget;
  cfg.eval_every = 1000;
  cfg.test_size = run.test_size;
  cfg.probe_size = std::min<std::size_t>(1000, run.test_size);
  cfg.success_error = 0.01;
  cfg.regression_tolerance = 0.04;
  cfg.rng_seed = run.seed;
  cfg.record_updates = false;
  const RnnParams init =
      model::init_params(50, task.input_dim(), task.output_dim(), Activation(ActivationKind::tanh), run.seed);
  const auto t0 = Clock::now();
  const TrainResult r = optim::train(init, task, cfg);
  RunOutcome out;
  out.status = r.status;
  out.updates = r.updates_run;
  out.error = r.final_eval ? r.final_eval->error_rate : 1.0;
  out.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return out;
}

std::string describe(const Run& run, const RunOutcome& o) {
  return fmt("%s T=%zu seed %llu: %s after %zu updates, error %.4f, %.0f s", run.mode, run.T,
             static_cast<unsigned long long>(run.seed), std::string(optim::status_name(o.status)).c_str(), o.updates,
             o.error, o.seconds);
}

Verdict temporal_order_reproduction() {
  std::vector<Run> runs;
  for (std::uint64_t seed = 1; seed <= 3; ++seed)
    runs.push_back({TaskKind::temporal_order, 20, "SGD-C", seed, 0.001, 6.0, 2.0, 100'000, 10'000});
  for (std::uint64_t seed = 1; seed <= 3; ++seed)
    runs.push_back({TaskKind::temporal_order, 50, "SGD-CR", seed, 0.001, 6.0, 2.0, 200'000, 10'000});
  for (std::uint64_t seed = 1; seed <= 3; ++seed)
    runs.push_back({TaskKind::temporal_order, 50, "SGD", seed, 0.001, 6.0, 2.0, 200'000, 10'000});
  const auto outcomes = parallel_map(runs.size(), [&](std::size_t i) { return train_once(runs[i]); });
  int c20 = 0, cr50 = 0, sgd50 = 0;
  std::ostringstream detail;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const bool ok = outcomes[i].status == TrainStatus::success;
    (i < 3 ? c20 : i < 6 ? cr50 : sgd50) += ok ? 1 : 0;
    detail << "\n    " << describe(runs[i], outcomes[i]);
  }
  const bool pass = c20 >= 2 && cr50 >= 1 && sgd50 == 0;
  return {pass, fmt("SGD-C T=20 %d/3 (need >= 2), SGD-CR T=50 %d/3 (need >= 1), SGD T=50 %d/3 (need 0)", c20, cr50,
                    sgd50) + detail.str()};
}

Verdict addition_reproduction() {
  std::vector<Run> runs;
  for (std::uint64_t seed = 1; seed <= 3; ++seed)
    runs.push_back({TaskKind::addition, 50, "SGD-CR", seed, 0.01, 6.0, 0.5, 200'000, 1000});
  const auto outcomes = parallel_map(runs.size(), [&](std::size_t i) { return train_once(runs[i]); });
  int solved = 0;
  std::ostringstream detail;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    solved += outcomes[i].status == TrainStatus::success ? 1 : 0;
    detail << "\n    " << describe(runs[i], outcomes[i]);
  }
  return {solved >= 1, fmt("SGD-CR addition T=50 reached >= 99%% in %d/3 seeds (need >= 1)", solved) + detail.str()};
}

// 7. Dynamics.

Verdict dynamics() {
  std::vector<double> coarse, fine;
  for (int i = 0; i <= 50; ++i) coarse.push_back(-5.0 + 0.1 * i);
  for (int i = 0; i <= 100; ++i) fine.push_back(-5.0 + 0.05 * i);
  const auto a = analysis::bifurcation_sweep(5.0, coarse);
  const auto b = analysis::bifurcation_sweep(5.0, fine);
  std::vector<std::size_t> pattern;
  for (const auto& pt : b.points)
    if (pattern.empty() || pattern.back() != pt.fixed_points.size()) pattern.push_back(pt.fixed_points.size());
  const bool shape = pattern == std::vector<std::size_t>{1, 2, 1};
  double drift = INFINITY;
  if (a.boundaries.size() == 2 && b.boundaries.size() == 2)
    drift = std::max(std::abs(a.boundaries[0] - b.boundaries[0]), std::abs(a.boundaries[1] - b.boundaries[1]));

  std::vector<double> ws, bs;
  for (int i = 0; i <= 400; ++i) ws.push_back(-1.0 + 7.0 * i / 400.0);
  for (int i = 0; i <= 400; ++i) bs.push_back(-4.0 + 5.0 * i / 400.0);
  const auto scan = analysis::error_surface_scan(ws, bs);
  const double ratio = scan.max_over_median_gradient();
  const double zero_error = analysis::surface_point(0.0, std::log(0.7 / 0.3)).loss;

  const bool pass = shape && drift < 1e-4 && ratio > 1e3 && zero_error < 1e-20;
  std::string bounds = b.boundaries.size() == 2 ? fmt("b1 %.8f, b2 %.8f", b.boundaries[0], b.boundaries[1])
                                                 : fmt("%zu boundaries", b.boundaries.size());
  return {pass, fmt("attractor counts %s 1-2-1, %s, refinement drift %.1e (limit 1e-4); 401x401 surface max/median "
                    "gradient %.3g (need > 1e3); E(0, logit 0.7) = %.1e (need < 1e-20)",
                    shape ? "follow" : "do not follow", bounds.c_str(), drift, ratio, zero_error)};
}

// 8. Generator statistics.

Verdict generator_suite() {
  const auto specs = suite::standard_specs();
  const auto reports = parallel_map(specs.size(), [&](std::size_t i) { return suite::run(specs[i], 8080 + i, 100'000); });
  std::size_t violations = 0;
  double min_p = 1.0;
  std::string worst;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    violations += reports[i].violations.size();
    for (const auto& u : reports[i].uniformity)
      if (u.p_value < min_p) {
        min_p = u.p_value;
        worst = std::string(tasks::task_name(specs[i].kind)) + " " + u.what;
      }
  }
  std::string detail = fmt("%zu task variants x 1e5 samples: %zu invariant violations, min chi-squared p %.3g", specs.size(),
                           violations, min_p);
  if (!worst.empty()) detail += " (" + worst + ")";
  detail += " (need > 0.001)";
  for (const auto& r : reports)
    for (const auto& v : r.violations) detail += "\n    " + v;
  return {violations == 0 && min_p > 1e-3, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  std::vector<int> selected;
  g_threads = std::max(1u, std::thread::hardware_concurrency());
  app.add_option("criteria", selected, "Criterion numbers to run (default: all)")->check(CLI::Range(1, 8));
  app.add_option("--threads", g_threads, "Worker threads")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {1, "gradient oracle suite", 120, gradient_oracles},
      {2, "vanishing bound", 60, vanishing_bound},
      {3, "power-iteration decomposition", 30, exploding_decomposition},
      {4, "clipping properties", 10, clipping},
      {5, "temporal order reproduction", 3600, temporal_order_reproduction},
      {6, "addition reproduction", 1800, addition_reproduction},
      {7, "dynamics", 60, dynamics},
      {8, "generator statistics", 60, generator_suite},
  };

  bool all = true;
  for (const auto& c : criteria) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    const bool in_budget = seconds <= c.budget_seconds;
    const bool pass = v.pass && in_budget;
    all = all && pass;
    std::printf("%s  criterion %d (%s): %s; %.1f s of %.0f s budget%s\n", pass ? "PASS" : "FAIL", c.id, c.name,
                v.detail.c_str(), seconds, c.budget_seconds, in_budget ? "" : " (over budget)");
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
