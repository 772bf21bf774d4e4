#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "rnnlab/grad.hpp"
#include "rnnlab/model.hpp"
#include "rnnlab/tasks.hpp"

namespace rnnlab {

enum class ClipKind { none, norm, elementwise };

struct ClipPolicy {
  ClipKind kind = ClipKind::none;
  double threshold = 0.0;

  void validate() const;
};

/// α₀, α₀/t or α₀/(2t), with t the 1-based epoch.
enum class AlphaSchedule { constant, inv_t, inv_2t };

struct TrainConfig {
  double learning_rate = 0.001;
  /// Halve the learning rate whenever the mean training error of an epoch
  /// is strictly larger than that of the previous epoch.
  bool lr_halving = false;
  ClipPolicy clip{};
  double alpha0 = 0.0;
  AlphaSchedule alpha_schedule = AlphaSchedule::constant;
  std::size_t batch = 16;
  std::size_t max_updates = 10'000;
  std::size_t eval_every = 1'000;
  /// Updates per epoch for lr halving and the α schedule (0 → eval_every).
  std::size_t epoch_updates = 0;
  std::size_t test_size = 10'000;
  /// Leading slice of the test set checked before paying for the full set.
  std::size_t probe_size = 1'000;
  double success_error = 0.01;
  double regression_tolerance = 0.04;
  TimeReduction time_reduction = TimeReduction::sum;
  std::uint64_t rng_seed = 1;
  /// Keep one CSV row per update. Off for long sweeps that only need the outcome.
  bool record_updates = true;
  /// Use the per-sample reference path instead of the minibatch-lockstep kernel.
  bool reference_kernel = false;

  void validate() const;
  std::size_t epoch_length() const { return epoch_updates == 0 ? eval_every : epoch_updates; }
};

struct UpdateRecord {
  std::size_t update = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double grad_norm_clipped = 0.0;
  bool clipped = false;
  double omega = 0.0;
  double mean_ratio = 0.0;
  double alpha = 0.0;
  double lr = 0.0;
};

struct EvalResult {
  double error_rate = 1.0;
  bool success = false;
  std::size_t samples = 0;
  std::size_t errors = 0;
};

struct EvalRecord {
  std::size_t update = 0;
  EvalResult probe;
  std::optional<EvalResult> full;
};

struct TrainLog {
  std::vector<UpdateRecord> updates;
  std::vector<EvalRecord> evals;
};

enum class TrainStatus { success, budget_exhausted, diverged };

struct TrainResult {
  RnnParams params;
  TrainLog log;
  TrainStatus status = TrainStatus::budget_exhausted;
  std::size_t updates_run = 0;
  std::optional<EvalResult> final_eval;
  std::string message;
};

/// Per-minibatch objective pieces, before clipping.
struct BatchGradient {
  Gradients grads;
  double loss = 0.0;
  double omega = 0.0;
  double mean_ratio = 0.0;
};

namespace optim {

/// Rescales g to norm `threshold` whenever ‖g‖ ≥ threshold.
std::vector<double> clip_norm(std::span<const double> g, double threshold);
std::vector<double> clip_elementwise(std::span<const double> g, double threshold);
/// In-place variant on a Gradients block set; returns true when clipping fired.
bool apply_clip(Gradients& g, const ClipPolicy& policy);

RnnParams sgd_step(const RnnParams& params, const Gradients& gradient, double lr);

double alpha_at(const TrainConfig& config, std::size_t update);

/// Mean over samples of the per-sample gradient of E + α·Ω (Ω-gradient only
/// reaches W_rec). α = 0 skips the regularizer entirely.
BatchGradient batch_gradient(const RnnParams& params, std::span<const TaskSample> batch,
                             LossKind loss_kind, TimeReduction reduction, double alpha);

/// Classification: a sample is wrong when any eval step's argmax misses the
/// label. Regression: wrong when |prediction − target| ≥ tolerance.
EvalResult evaluate(const RnnParams& params, std::span<const TaskSample> test_set,
                    double success_error = 0.01, double regression_tolerance = 0.04);

TrainResult train(RnnParams params, const TaskSpec& task, const TrainConfig& config);

struct NormStatistics {
  double mean = 0.0;
  double max = 0.0;
  std::size_t updates = 0;
};

/// Runs `updates` unclipped SGD steps and summarises ‖g‖.
NormStatistics suggest_threshold(RnnParams params, const TaskSpec& task, TrainConfig config,
                                 std::size_t updates);

std::string_view clip_name(ClipKind kind);
ClipKind parse_clip(std::string_view name);
std::string_view schedule_name(AlphaSchedule s);
AlphaSchedule parse_schedule(std::string_view name);
std::string_view status_name(TrainStatus s);

}  // namespace optim
}  // namespace rnnlab
