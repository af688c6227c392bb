#pragma once

#include <string_view>
#include <vector>

#include "sysid/dataset.hpp"
#include "sysid/model.hpp"

namespace sysid {

enum class GroupKind { none, state_groups, input_groups };

std::string_view to_string(GroupKind k);
GroupKind group_kind_from_string(std::string_view name);

/// Elastic net on the model coefficients plus an optional group-Lasso term:
///   r(v) = rho_theta/2 |Theta|^2 + rho_x/2 |x0|^2 + tau |Theta|_1 + tau_g sum_i |v_{G_i}|_2
/// Theta is every free entry that is not an initial state.
struct RegularizationConfig
{
    double rho_theta = 0.0;
    double rho_x = 0.0;
    double tau = 0.0;
    double tau_g = 0.0;
    double epsilon = 1e-16; // l1 weight on the split variables when tau_g > 0
    GroupKind group_kind = GroupKind::none;

    bool has_l1() const { return tau > 0.0; }
    bool has_group() const { return tau_g > 0.0 && group_kind != GroupKind::none; }
    void validate() const;
};

struct GroupIndexSet
{
    GroupKind kind = GroupKind::none;
    std::vector<std::vector<int>> groups;
};

/// State groups: group i gathers x0_i of every experiment, row and column i of A
/// (A_ii once), row i of B, column i of C, column i of the first-layer weights of
/// f_x and f_y, and row i / entry i of the last-layer weights / bias of f_x.
/// Input groups: group i gathers column i of B and D and column n_x + i of the
/// first-layer weights of f_x (and of f_y when it reads the input).
/// Entries fixed by the structure mask are left out.
GroupIndexSet build_groups(const ParamLayout& layout, GroupKind kind);

/// Mean over samples of the squared Euclidean output error. Rows are samples.
double mse_loss(const Mat& y_true, const Mat& y_pred);

/// Per-sample loss l(y, yhat); writes dl/dyhat into `grad`.
class OutputLoss
{
public:
    virtual ~OutputLoss() = default;
    virtual double value_and_grad(const Eigen::Ref<const Vec>& y, const Eigen::Ref<const Vec>& yhat,
                                  Eigen::Ref<Vec> grad) const = 0;
};

class SquaredError final : public OutputLoss
{
public:
    double value_and_grad(const Eigen::Ref<const Vec>& y, const Eigen::Ref<const Vec>& yhat,
                          Eigen::Ref<Vec> grad) const override
    {
        grad = yhat - y;
        const double v = grad.squaredNorm();
        grad *= 2.0;
        return v;
    }
};

/// Exact value of r(v). `x0_indices` selects the initial-state entries; everything else is Theta.
double regularizer_value(const Vec& v, const RegularizationConfig& cfg, const GroupIndexSet& groups,
                         const std::vector<int>& x0_indices);

/// r(v) and a subgradient (sign(0) = 0, zero group slices contribute 0).
double regularizer_subgradient(const Vec& v, const RegularizationConfig& cfg, const GroupIndexSet& groups,
                               const std::vector<int>& x0_indices, Vec& grad);

struct R2Report
{
    Vec per_output; // percent
    double average = 0.0;
};

/// 100 (1 - SSE / SST) per output column. Throws Error on a constant true channel.
R2Report r2_score(const Mat& y_true, const Mat& y_pred);

/// Population mean and standard deviation per column. Throws ConfigError naming a
/// zero-variance channel.
ChannelScaling standard_scale_fit(const Mat& data);
Mat standard_scale_apply(const Mat& data, const ChannelScaling& s);
Mat standard_scale_invert(const Mat& data, const ChannelScaling& s);

/// Fits input and output scaling on all experiments of `train` jointly.
void fit_dataset_scaling(const Dataset& train, ChannelScaling& u, ChannelScaling& y);
/// Returns a copy of `raw` scaled with the given statistics.
Dataset scale_dataset(const Dataset& raw, const ChannelScaling& u, const ChannelScaling& y);

} // namespace sysid
