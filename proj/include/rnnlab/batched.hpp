#pragma once

#include <span>

#include "rnnlab/optim.hpp"

namespace rnnlab::batched {

// Minibatch-lockstep versions of the training-path computations. Sequences
// of different length are right-aligned and the leading steps masked, so
// every quantity equals the per-sample reference (optim::batch_gradient,
// optim::evaluate) up to summation order.

BatchGradient batch_gradient(const RnnParams& params, std::span<const TaskSample> batch,
                             LossKind loss_kind, TimeReduction reduction, double alpha);

EvalResult evaluate(const RnnParams& params, std::span<const TaskSample> test_set,
                    double success_error = 0.01, double regression_tolerance = 0.04,
                    std::size_t chunk = 256);

}  // namespace rnnlab::batched
