#include "rnnlab/tasks.hpp"

#include <string>

#include "rnnlab/error.hpp"

namespace rnnlab {
namespace tasks {
namespace {

std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Vector one_hot(std::size_t dim, std::size_t hot) {
  Vector v(dim);
  v[hot] = 1.0;
  return v;
}

// Integer-truncated fraction num/10 of T, clamped to a valid 1-based step.
std::size_t tenth(std::size_t T, std::size_t num) {
  const std::size_t p = T * num / 10;
  return p == 0 ? 1 : p;
}

void require_length(std::size_t T) {
  if (T < 10) throw Error("task length T must be at least 10, got " + std::to_string(T));
}

template <typename Combine>
TaskSample gen_marked_pair(std::size_t T, Rng& rng, Combine combine) {
  require_length(T);
  const std::size_t realized = uniform_index(rng, T, T * 11 / 10);
  const std::size_t first_hi = realized / 10;
  const std::size_t second_lo = realized / 10;
  const std::size_t second_hi = realized / 2;
  // Collisions redraw j only.
  const std::size_t i = uniform_index(rng, 1, first_hi);
  std::size_t j = 0;
  do {
    j = uniform_index(rng, second_lo, second_hi);
  } while (i == j);

  TaskSample s;
  s.nominal_length = T;
  s.inputs.reserve(realized);
  std::uniform_real_distribution<double> value(0.0, 1.0);
  for (std::size_t t = 1; t <= realized; ++t) {
    const double v = value(rng);
    s.inputs.push_back(Vector{v, (t == i || t == j) ? 1.0 : 0.0});
  }
  s.positions = {i, j};
  const double target = combine(s.inputs[i - 1][0], s.inputs[j - 1][0]);
  s.target.steps = {realized};
  s.target.values = {Vector{target}};
  s.eval_steps = {realized};
  return s;
}

TaskSample gen_order(std::size_t T, Rng& rng, std::span<const std::pair<std::size_t, std::size_t>> windows) {
  require_length(T);
  TaskSample s;
  s.nominal_length = T;
  s.inputs.reserve(T);
  for (std::size_t t = 1; t <= T; ++t)
    s.inputs.push_back(one_hot(kTemporalOrderChannels, 2 + uniform_index(rng, 0, 3)));
  std::vector<std::size_t> symbols;
  for (const auto& [lo, hi] : windows) {
    const std::size_t p = uniform_index(rng, tenth(T, lo), tenth(T, hi));
    const std::size_t sym = uniform_index(rng, 0, 1);
    s.inputs[p - 1] = one_hot(kTemporalOrderChannels, sym);
    s.positions.push_back(p);
    symbols.push_back(sym);
  }
  s.target.steps = {T};
  s.target.labels = {order_class(symbols)};
  s.eval_steps = {T};
  return s;
}

}  // namespace

std::size_t order_class(std::span<const std::size_t> symbols) {
  std::size_t c = 0;
  for (std::size_t s : symbols) c = 2 * c + s;
  return c;
}

TaskSample gen_addition(std::size_t T, Rng& rng) {
  return gen_marked_pair(T, rng, [](double a, double b) { return (a + b) / 2.0; });
}

TaskSample gen_multiplication(std::size_t T, Rng& rng) {
  return gen_marked_pair(T, rng, [](double a, double b) { return a * b; });
}

TaskSample gen_temporal_order(std::size_t T, Rng& rng) {
  static constexpr std::pair<std::size_t, std::size_t> windows[] = {{1, 2}, {4, 5}};
  return gen_order(T, rng, windows);
}

TaskSample gen_temporal_order_3bit(std::size_t T, Rng& rng) {
  static constexpr std::pair<std::size_t, std::size_t> windows[] = {{1, 2}, {3, 4}, {6, 7}};
  return gen_order(T, rng, windows);
}

TaskSample gen_random_permutation(std::size_t T, Rng& rng) {
  require_length(T);
  TaskSample s;
  s.nominal_length = T;
  std::vector<std::size_t> symbols(T);
  symbols[0] = uniform_index(rng, 1, 2);
  for (std::size_t t = 1; t + 1 < T; ++t) symbols[t] = uniform_index(rng, 3, kPermutationSymbols);
  symbols[T - 1] = symbols[0];
  s.inputs.reserve(T);
  for (std::size_t sym : symbols) s.inputs.push_back(one_hot(kPermutationSymbols, sym - 1));
  for (std::size_t t = 1; t < T; ++t) {
    s.target.steps.push_back(t);
    s.target.labels.push_back(symbols[t] - 1);
  }
  s.eval_steps = {T - 1};
  s.positions = {1, T};
  return s;
}

TaskSample gen_noiseless_memorization(std::size_t T, std::size_t pattern_length,
                                      std::size_t symbol_count, Rng& rng) {
  require_length(T);
  const bool valid = (pattern_length == 5 && symbol_count == 2) ||
                     (pattern_length == 10 && symbol_count == 5);
  if (!valid)
    throw Error("noiseless_memorization: supported variants are (pattern 5, symbols 2) and "
                "(pattern 10, symbols 5)");
  const std::size_t dim = symbol_count + 2;
  const std::size_t filler = symbol_count;
  const std::size_t cue = symbol_count + 1;

  TaskSample s;
  s.nominal_length = T;
  std::vector<std::size_t> pattern(pattern_length);
  for (auto& p : pattern) p = uniform_index(rng, 0, symbol_count - 1);
  for (std::size_t p : pattern) s.inputs.push_back(one_hot(dim, p));
  for (std::size_t t = 0; t < T; ++t) s.inputs.push_back(one_hot(dim, filler));
  // Emission window: the cue fires on its first step, filler afterwards.
  for (std::size_t t = 0; t < pattern_length; ++t) s.inputs.push_back(one_hot(dim, t == 0 ? cue : filler));
  const std::size_t first_emit = pattern_length + T + 1;
  for (std::size_t t = 0; t < pattern_length; ++t) {
    s.target.steps.push_back(first_emit + t);
    s.target.labels.push_back(pattern[t]);
  }
  s.eval_steps = s.target.steps;
  s.positions = {first_emit};
  return s;
}

}  // namespace tasks

using tasks::kPermutationSymbols;
using tasks::kTemporalOrderChannels;

std::size_t TaskSpec::input_dim() const {
  switch (kind) {
    case TaskKind::addition:
    case TaskKind::multiplication: return 2;
    case TaskKind::temporal_order:
    case TaskKind::temporal_order_3bit: return kTemporalOrderChannels;
    case TaskKind::random_permutation: return kPermutationSymbols;
    case TaskKind::noiseless_memorization: return symbol_count + 2;
  }
  return 0;
}

std::size_t TaskSpec::output_dim() const {
  switch (kind) {
    case TaskKind::addition:
    case TaskKind::multiplication: return 1;
    case TaskKind::temporal_order: return 4;
    case TaskKind::temporal_order_3bit: return 8;
    case TaskKind::random_permutation: return kPermutationSymbols;
    case TaskKind::noiseless_memorization: return symbol_count;
  }
  return 0;
}

LossKind TaskSpec::loss_kind() const {
  switch (kind) {
    case TaskKind::addition:
    case TaskKind::multiplication: return LossKind::squared_final;
    case TaskKind::temporal_order:
    case TaskKind::temporal_order_3bit: return LossKind::softmax_final;
    case TaskKind::random_permutation:
    case TaskKind::noiseless_memorization: return LossKind::softmax_per_step;
  }
  return LossKind::softmax_final;
}

void TaskSpec::validate() const {
  tasks::require_length(T);
  for (std::size_t len : lengths) tasks::require_length(len);
  if (kind == TaskKind::noiseless_memorization) {
    const bool valid = (pattern_length == 5 && symbol_count == 2) ||
                       (pattern_length == 10 && symbol_count == 5);
    if (!valid) throw Error("noiseless_memorization: invalid (pattern_length, symbol_count)");
  }
}

namespace tasks {

TaskSample generate(const TaskSpec& spec, Rng& rng) {
  const std::size_t T =
      spec.lengths.empty() ? spec.T : spec.lengths[uniform_index(rng, 0, spec.lengths.size() - 1)];
  switch (spec.kind) {
    case TaskKind::addition: return gen_addition(T, rng);
    case TaskKind::multiplication: return gen_multiplication(T, rng);
    case TaskKind::temporal_order: return gen_temporal_order(T, rng);
    case TaskKind::temporal_order_3bit: return gen_temporal_order_3bit(T, rng);
    case TaskKind::random_permutation: return gen_random_permutation(T, rng);
    case TaskKind::noiseless_memorization:
      return gen_noiseless_memorization(T, spec.pattern_length, spec.symbol_count, rng);
  }
  throw Error("generate: unknown task");
}

TaskSample sample_at(const TaskSpec& spec, std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  Rng rng(seq);
  return generate(spec, rng);
}

std::vector<TaskSample> make_set(const TaskSpec& spec, std::uint64_t seed, std::uint64_t first,
                                 std::size_t count) {
  spec.validate();
  std::vector<TaskSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample_at(spec, seed, first + i));
  return out;
}

std::string_view task_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::addition: return "addition";
    case TaskKind::multiplication: return "multiplication";
    case TaskKind::temporal_order: return "temporal_order";
    case TaskKind::temporal_order_3bit: return "temporal_order_3bit";
    case TaskKind::random_permutation: return "random_permutation";
    case TaskKind::noiseless_memorization: return "noiseless_memorization";
  }
  return "unknown";
}

TaskKind parse_task(std::string_view name) {
  for (auto k : {TaskKind::addition, TaskKind::multiplication, TaskKind::temporal_order,
                 TaskKind::temporal_order_3bit, TaskKind::random_permutation,
                 TaskKind::noiseless_memorization})
    if (task_name(k) == name) return k;
  if (name == "torder") return TaskKind::temporal_order;
  throw Error("unknown task '" + std::string(name) + "'");
}

}  // namespace tasks
}  // namespace rnnlab
