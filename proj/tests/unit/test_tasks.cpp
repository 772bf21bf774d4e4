#include <doctest.h>

#include "../common/generator_suite.hpp"
#include "rnnlab/error.hpp"
#include "rnnlab/tasks.hpp"

using namespace rnnlab;

TEST_SUITE("tasks") {

TEST_CASE("structural invariants and uniformity on a 2e4-sample sweep") {
  for (const TaskSpec& spec : suite::standard_specs()) {
    CAPTURE(tasks::task_name(spec.kind));
    CAPTURE(spec.pattern_length);
    const suite::SuiteReport r = suite::run(spec, 77, 20'000);
    for (const auto& v : r.violations) FAIL_CHECK(v);
    CHECK(r.violations.empty());
    for (const auto& u : r.uniformity) {
      CAPTURE(u.what);
      CHECK(u.p_value > 1e-3);
    }
  }
}

TEST_CASE("the chi-squared helper rejects skewed and out-of-range counts") {
  const auto fair = suite::chi_squared_uniform("fair", {{0, 250}, {1, 250}, {2, 250}, {3, 250}}, 0, 3);
  CHECK(fair.statistic == 0.0);
  CHECK(fair.p_value == doctest::Approx(1.0));
  const auto skew = suite::chi_squared_uniform("skew", {{0, 400}, {1, 200}, {2, 200}, {3, 200}}, 0, 3);
  // χ² = (150² + 3·50²) / 250 = 120 on 3 dof.
  CHECK(skew.statistic == doctest::Approx(120.0));
  CHECK(skew.p_value < 1e-20);
  CHECK(suite::chi_squared_uniform("out", {{0, 10}, {9, 1}}, 0, 1).p_value == 0.0);
}

TEST_CASE("worked generator examples") {
  Rng rng(5);
  SUBCASE("addition at T = 50") {
    for (int k = 0; k < 200; ++k) {
      const TaskSample s = tasks::gen_addition(50, rng);
      CHECK(s.length() >= 50);
      CHECK(s.length() <= 55);
      CHECK(s.positions[0] <= 5);
      CHECK(s.positions[1] >= 5);
      CHECK(s.positions[1] <= 27);
      CHECK(s.nominal_length == 50);
    }
  }
  SUBCASE("multiplication shares the addition stream except for the target") {
    Rng a(9), b(9);
    for (int k = 0; k < 100; ++k) {
      const TaskSample add = tasks::gen_addition(30, a);
      const TaskSample mul = tasks::gen_multiplication(30, b);
      CHECK(add.inputs == mul.inputs);
      CHECK(add.positions == mul.positions);
      CHECK(add.target.steps == mul.target.steps);
      const double x = add.inputs[add.positions[0] - 1][0];
      const double y = add.inputs[add.positions[1] - 1][0];
      CHECK(mul.target.values[0][0] == x * y);
      CHECK(add.target.values[0][0] == (x + y) / 2.0);
    }
  }
  SUBCASE("temporal order windows") {
    for (int k = 0; k < 200; ++k) {
      const TaskSample s = tasks::gen_temporal_order(50, rng);
      CHECK(s.positions[0] >= 5);
      CHECK(s.positions[0] <= 10);
      CHECK(s.positions[1] >= 20);
      CHECK(s.positions[1] <= 25);
      const TaskSample t = tasks::gen_temporal_order_3bit(100, rng);
      CHECK(t.positions[0] >= 10);
      CHECK(t.positions[0] <= 20);
      CHECK(t.positions[1] >= 30);
      CHECK(t.positions[1] <= 40);
      CHECK(t.positions[2] >= 60);
      CHECK(t.positions[2] <= 70);
    }
  }
  SUBCASE("class encoding") {
    const std::size_t ab[] = {0, 1};
    const std::size_t aaa[] = {0, 0, 0};
    const std::size_t bba[] = {1, 1, 0};
    CHECK(tasks::order_class(ab) == 1);
    CHECK(tasks::order_class(aaa) == 0);
    CHECK(tasks::order_class(bba) == 6);
  }
  SUBCASE("memorization layout") {
    const TaskSample s = tasks::gen_noiseless_memorization(50, 5, 2, rng);
    CHECK(s.length() == 60);
    CHECK(s.target.steps.size() == 5);
    CHECK(s.target.steps.front() == 56);
    CHECK(s.inputs[55][3] == 1.0);
    CHECK_THROWS_AS(tasks::gen_noiseless_memorization(50, 5, 5, rng), Error);
  }
  SUBCASE("lengths below 10 are rejected") {
    CHECK_THROWS_AS(tasks::gen_temporal_order(9, rng), Error);
    TaskSpec spec;
    spec.lengths = {50, 5};
    CHECK_THROWS_AS(spec.validate(), Error);
  }
}

TEST_CASE("streams are deterministic and index-addressable") {
  TaskSpec spec;
  spec.kind = TaskKind::addition;
  spec.T = 40;
  const auto a = tasks::make_set(spec, 3, 0, 50);
  const auto b = tasks::make_set(spec, 3, 20, 30);
  for (std::size_t i = 0; i < 30; ++i) CHECK(a[20 + i].inputs == b[i].inputs);
  const auto c = tasks::make_set(spec, 4, 0, 50);
  CHECK_FALSE(a[0].inputs == c[0].inputs);
}

TEST_CASE("length sets draw every listed length") {
  TaskSpec spec;
  spec.kind = TaskKind::temporal_order;
  spec.lengths = {20, 30, 40};
  std::map<std::size_t, int> seen;
  for (const auto& s : tasks::make_set(spec, 1, 0, 300)) ++seen[s.length()];
  CHECK(seen.size() == 3);
  CHECK(seen.count(30) == 1);
}

TEST_CASE("task metadata") {
  TaskSpec spec;
  spec.kind = TaskKind::random_permutation;
  CHECK(spec.input_dim() == 100);
  CHECK(spec.output_dim() == 100);
  CHECK(spec.loss_kind() == LossKind::softmax_per_step);
  spec.kind = TaskKind::addition;
  CHECK(spec.regression());
  for (auto k : {TaskKind::addition, TaskKind::multiplication, TaskKind::temporal_order,
                 TaskKind::temporal_order_3bit, TaskKind::random_permutation, TaskKind::noiseless_memorization})
    CHECK(tasks::parse_task(tasks::task_name(k)) == k);
  CHECK_THROWS_AS(tasks::parse_task("sorting"), Error);
}

}
