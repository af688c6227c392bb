#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sysid {

/// One input/output record. Rows are time samples: U is N x n_u, Y is N x n_y.
struct Experiment
{
    Eigen::MatrixXd U;
    Eigen::MatrixXd Y;

    Eigen::Index length() const { return Y.rows(); }
};

/// Per-channel affine scaling, x <- (x - mean) / std.
struct ChannelScaling
{
    Eigen::VectorXd mean;
    Eigen::VectorXd std;
};

struct Dataset
{
    std::vector<Experiment> experiments;

    /// Scaling applied to the stored data, if any (inputs and outputs separately).
    bool scaled = false;
    ChannelScaling u_scaling;
    ChannelScaling y_scaling;

    /// Free-form provenance, e.g. the generator descriptor for synthetic data.
    std::string descriptor;

    int n_u() const { return experiments.empty() ? 0 : static_cast<int>(experiments.front().U.cols()); }
    int n_y() const { return experiments.empty() ? 0 : static_cast<int>(experiments.front().Y.cols()); }
    Eigen::Index total_samples() const;

    /// Throws DimensionError if the experiments disagree on channel counts or lengths.
    void validate() const;
};

} // namespace sysid
