#pragma once

#include "sysid/dataset.hpp"
#include "sysid/model.hpp"
#include "sysid/objectives.hpp"

namespace sysid {

struct LossGradient
{
    double value = 0.0;
    Vec grad;
};

/// Condensed open-loop simulation loss
///   f(v) = (sum_j sum_k l(y_k^j, yhat_k^j)) / (sum_j N_j)
/// over all experiments of `data`, and its exact gradient with respect to the free
/// parameter vector `v`, computed by a single reverse sweep through the stored state
/// trajectory. Hard saturation contributes a zero derivative where it clips.
///
/// Experiments are processed in parallel when OpenMP is available; per-experiment
/// contributions are summed in experiment order, so the result is bit-identical to
/// `loss_and_grad_serial`.
///
/// Throws NumericalError (with the step index) on a non-finite intermediate value.
LossGradient loss_and_grad(const Vec& v, const ParamLayout& layout, const Dataset& data,
                           const SaturationConfig& sat, const OutputLoss* loss = nullptr);

/// Single-threaded reference implementation of `loss_and_grad`.
LossGradient loss_and_grad_serial(const Vec& v, const ParamLayout& layout, const Dataset& data,
                                  const SaturationConfig& sat, const OutputLoss* loss = nullptr);

/// Forward-only evaluation of f(v).
double loss_value(const Vec& v, const ParamLayout& layout, const Dataset& data, const SaturationConfig& sat,
                  const OutputLoss* loss = nullptr);

} // namespace sysid
