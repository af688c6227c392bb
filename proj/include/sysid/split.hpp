#pragma once

#include <vector>

#include "sysid/function.hpp"
#include "sysid/model.hpp"
#include "sysid/objectives.hpp"

namespace sysid {

/// Lower bound used for split variables under group-Lasso so that the group norm
/// stays differentiable at the origin.
inline constexpr double kGroupSplitFloor = 1e-16;

/// Placement of the original variables in the doubled vector w.
///
/// Every original index i owns a slot pos[i] (the variable itself when unsplit, its
/// positive part y_i when split) and, when split, a slot neg[i] for its negative part
/// z_i. A slot is -1 when box constraints make that part identically zero. Positive
/// slots come first in original order, followed by the negative slots.
struct SplitLayout
{
    int n = 0;                 // original dimension
    std::vector<char> split;   // split[i] != 0 if x_i = y_i - z_i
    std::vector<int> pos;
    std::vector<int> neg;
    Vec lower;                 // bounds on w
    Vec upper;

    int dim() const { return static_cast<int>(lower.size()); }
};

/// Maps original box constraints x_min <= x <= x_max onto the doubled vector:
/// x_max > 0 bounds y above, x_max < 0 removes y and bounds z below by -x_max,
/// x_min < 0 bounds z above by -x_min, x_min > 0 removes z and bounds y below by x_min,
/// x_min = 0 removes z. Unsplit entries keep their bounds. `floor` raises the lower
/// bound of every kept split slot. Throws ConfigError when x_min > x_max.
SplitLayout map_box_bounds(const Vec& x_min, const Vec& x_max, const std::vector<int>& split_idx,
                           double floor = 0.0);

/// Per-variable penalties of the split objective.
struct SplitPenalty
{
    Vec l2;               // rho_i: 1/2 rho_i x_i^2 unsplit, 1/2 rho_i (y_i^2 + z_i^2) split
    Vec l1;               // weight on (y_i + z_i), split entries only
    GroupIndexSet groups; // tau_g sum_i |(y + z)_{G_i}|_2, group members must be split
    double tau_g = 0.0;
};

/// Bound-constrained smooth problem
///   g(w) = f(y - z) + sum_i l1_i (y_i + z_i) + 1/2 sum_i rho_i (y_i^2 + z_i^2)
///          + tau_g sum_g |(y + z)_g|_2
/// whose solutions recover solutions of the regularized problem over x.
class SplitProblem
{
public:
    SplitProblem(ValueGradFn f, SplitLayout layout, SplitPenalty penalty);

    int dim_original() const { return layout_.n; }
    int dim() const { return layout_.dim(); }
    const SplitLayout& layout() const { return layout_; }
    const Vec& lower() const { return layout_.lower; }
    const Vec& upper() const { return layout_.upper; }
    std::vector<int> split_indices() const;

    /// g(w) and its gradient.
    double operator()(const Vec& w, Vec& grad) const;
    ValueGradFn objective() const;

    /// x = y - z on split entries; unsplit entries pass through.
    Vec recover(const Vec& w) const;
    /// y = max(x, 0), z = max(-x, 0), clipped into the bounds.
    Vec lift(const Vec& x) const;
    /// max_i min(y_i, z_i) over split entries with both parts present.
    double complementarity(const Vec& w) const;

private:
    ValueGradFn f_;
    SplitLayout layout_;
    SplitPenalty penalty_;
};

/// Elastic-net split: l1 weight tau on `split_idx`, rho_theta on Theta entries and
/// rho_x on `x0_idx`. With tau = 0 the problem is still split as requested.
SplitProblem build_elastic_net_split(ValueGradFn f, int n, const RegularizationConfig& cfg,
                                     const std::vector<int>& split_idx, const std::vector<int>& x0_idx = {},
                                     const Vec& x_min = {}, const Vec& x_max = {});

/// Group-Lasso split: l1 weight epsilon on every split entry (plus tau on split Theta
/// entries), group term on y + z and lower bounds kGroupSplitFloor. `split_idx` must
/// contain every group member. Throws ConfigError unless tau_g > 0 and epsilon > 0.
SplitProblem build_group_lasso_split(ValueGradFn f, int n, const RegularizationConfig& cfg,
                                     const GroupIndexSet& groups, const std::vector<int>& split_idx,
                                     const std::vector<int>& x0_idx = {}, const Vec& x_min = {},
                                     const Vec& x_max = {});

/// x = y - z for standalone vectors of equal length.
Vec recover(const Vec& y, const Vec& z);

} // namespace sysid
