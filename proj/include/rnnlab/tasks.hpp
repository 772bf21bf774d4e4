#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "rnnlab/linalg.hpp"
#include "rnnlab/model.hpp"

namespace rnnlab {

using Rng = std::mt19937_64;

enum class TaskKind {
  addition,
  multiplication,
  temporal_order,
  temporal_order_3bit,
  random_permutation,
  noiseless_memorization,
};

struct TaskSpec {
  TaskKind kind = TaskKind::temporal_order;
  /// Nominal length. Addition and multiplication realise T′ ∈ [T, 1.1T].
  std::size_t T = 50;
  /// Noiseless memorization only: (5, 2) or (10, 5).
  std::size_t pattern_length = 5;
  std::size_t symbol_count = 2;
  /// When non-empty, each sample draws its nominal T uniformly from this set.
  std::vector<std::size_t> lengths;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  LossKind loss_kind() const;
  bool regression() const { return loss_kind() == LossKind::squared_final; }
  void validate() const;
};

/// One generated sequence. Positions are 1-based step indices.
struct TaskSample {
  std::vector<Vector> inputs;
  Target target;
  /// Steps whose predictions decide correctness during evaluation.
  std::vector<std::size_t> eval_steps;
  std::size_t nominal_length = 0;
  /// Marked positions (addition/multiplication) or symbol positions
  /// (temporal order) in order of occurrence.
  std::vector<std::size_t> positions;

  std::size_t length() const { return inputs.size(); }
};

namespace tasks {

// Channel layouts.
//   addition/multiplication: [value, marker]
//   temporal order (both):   [A, B, c, d, e, f]
//   random permutation:      symbol s ∈ 1..100 at channel s−1
//   memorization:            [symbol 0..S−1, filler, cue]
inline constexpr std::size_t kTemporalOrderChannels = 6;
inline constexpr std::size_t kPermutationSymbols = 100;

TaskSample gen_addition(std::size_t T, Rng& rng);
TaskSample gen_multiplication(std::size_t T, Rng& rng);
TaskSample gen_temporal_order(std::size_t T, Rng& rng);
TaskSample gen_temporal_order_3bit(std::size_t T, Rng& rng);
TaskSample gen_random_permutation(std::size_t T, Rng& rng);
TaskSample gen_noiseless_memorization(std::size_t T, std::size_t pattern_length,
                                      std::size_t symbol_count, Rng& rng);

/// Class index of a symbol tuple under row-major (A=0, B=1) ordering:
/// (AA, AB, BA, BB) → 0..3 and (AAA..BBB) → 0..7.
std::size_t order_class(std::span<const std::size_t> symbols);

TaskSample generate(const TaskSpec& spec, Rng& rng);

/// Sample `index` of the stream identified by `seed`. Independent of any
/// other index, so batches can be produced in any order.
TaskSample sample_at(const TaskSpec& spec, std::uint64_t seed, std::uint64_t index);

std::vector<TaskSample> make_set(const TaskSpec& spec, std::uint64_t seed, std::uint64_t first,
                                 std::size_t count);

std::string_view task_name(TaskKind kind);
TaskKind parse_task(std::string_view name);

}  // namespace tasks
}  // namespace rnnlab
