#pragma once

#include <functional>

#include <Eigen/Dense>

namespace sysid {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Smooth objective: returns f(x) and writes its gradient into `grad` (resized by the callee).
using ValueGradFn = std::function<double(const Vec& x, Vec& grad)>;

} // namespace sysid
