#pragma once

// Internal building blocks shared by simulation, BPTT and the Kalman filters.

#include <vector>

#include "sysid/model.hpp"

namespace sysid::detail {

/// Network forward pass for one input column. Hidden pre-activations are written
/// to column `k` of `pre[l]`; the linear output layer's result goes to `out`.
void mlp_forward(const std::vector<DenseLayer>& net, Activation act,
                 const Eigen::Ref<const Vec>& in, std::vector<Mat>& pre, Eigen::Index k,
                 Eigen::Ref<Vec> out);

/// Reverse pass for the sample stored in column `k`. Accumulates parameter gradients
/// into `grad` and writes dL/d(input) to `g_in`.
void mlp_backward(const std::vector<DenseLayer>& net, Activation act,
                  const Eigen::Ref<const Vec>& in, const std::vector<Mat>& pre, Eigen::Index k,
                  const Eigen::Ref<const Vec>& g_out, std::vector<DenseLayer>& grad,
                  Eigen::Ref<Vec> g_in);

/// d(out)/d(in) at `in`.
Mat mlp_input_jacobian(const std::vector<DenseLayer>& net, Activation act,
                       const Eigen::Ref<const Vec>& in);

/// Allocates `pre` with one (width x n) matrix per hidden layer.
void alloc_hidden(const std::vector<DenseLayer>& net, Eigen::Index n, std::vector<Mat>& pre);

/// Stored forward trajectory of one experiment; columns are time samples.
struct Trajectory
{
    Mat X;    // n_x x N, states x_0 .. x_{N-1}
    Mat V;    // n_x x N, column k is the unsaturated value of x_{k+1} (k < N-1)
    Mat Yhat; // n_y x N
    std::vector<Mat> fx_pre;
    std::vector<Mat> fy_pre;
};

/// Forward recurrence. `Ut` is n_u x N. Throws NumericalError on non-finite values.
void forward(const ModelParams& p, const ModelSpec& spec, const Mat& Ut, const Vec& x0,
             const SaturationConfig& sat, const Vec& sat_bounds, Trajectory& traj);

inline double hard_sat(double v, double s) { return v > s ? s : (v < -s ? -s : v); }

/// Applies the configured saturation to `v` in place.
void saturate(Eigen::Ref<Vec> v, const SaturationConfig& sat, const Vec& bounds);
/// Elementwise derivative of the saturation at the unsaturated value `v`.
void saturation_derivative(const Eigen::Ref<const Vec>& v, const SaturationConfig& sat,
                           const Vec& bounds, Eigen::Ref<Vec> d);

} // namespace sysid::detail
