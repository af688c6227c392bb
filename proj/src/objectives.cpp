#include "sysid/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>
#include <utility>

#include "sysid/error.hpp"

namespace sysid {

std::string_view to_string(GroupKind k)
{
    switch (k) {
    case GroupKind::none: return "none";
    case GroupKind::state_groups: return "state_groups";
    case GroupKind::input_groups: return "input_groups";
    }
    return "none";
}

GroupKind group_kind_from_string(std::string_view name)
{
    if (name == "none") return GroupKind::none;
    if (name == "state_groups") return GroupKind::state_groups;
    if (name == "input_groups") return GroupKind::input_groups;
    throw ConfigError("unknown group kind '" + std::string(name) + "'");
}

void RegularizationConfig::validate() const
{
    if (rho_theta < 0.0 || rho_x < 0.0 || tau < 0.0 || tau_g < 0.0) {
        throw ConfigError("regularization weights must be >= 0");
    }
    if (tau_g > 0.0 && !(epsilon > 0.0)) {
        throw ConfigError("epsilon must be > 0 when tau_g > 0");
    }
}

namespace {

class GroupBuilder
{
public:
    void add(int i)
    {
        if (i >= 0 && seen_.insert(i).second) {
            current_.push_back(i);
        }
    }
    // Row-major table entry (r, c) of a block with `cols` columns.
    void add_entry(const std::vector<int>& table, Eigen::Index cols, Eigen::Index r, Eigen::Index c)
    {
        add(table[static_cast<std::size_t>(r * cols + c)]);
    }
    void add_row(const std::vector<int>& table, Eigen::Index cols, Eigen::Index r)
    {
        for (Eigen::Index c = 0; c < cols; ++c) add_entry(table, cols, r, c);
    }
    void add_col(const std::vector<int>& table, Eigen::Index rows, Eigen::Index cols, Eigen::Index c)
    {
        for (Eigen::Index r = 0; r < rows; ++r) add_entry(table, cols, r, c);
    }
    std::vector<int> take()
    {
        seen_.clear();
        return std::exchange(current_, {});
    }

private:
    std::vector<int> current_;
    std::unordered_set<int> seen_;
};

} // namespace

GroupIndexSet build_groups(const ParamLayout& layout, GroupKind kind)
{
    const ModelSpec& spec = layout.spec();
    const ModelParams& shape = layout.fixed_values();
    const int nx = spec.n_x, nu = spec.n_u, ny = spec.n_y;
    GroupIndexSet out;
    out.kind = kind;
    GroupBuilder g;

    if (kind == GroupKind::state_groups) {
        for (int i = 0; i < nx; ++i) {
            for (int j = 0; j < layout.n_experiments(); ++j) {
                g.add(layout.x0_index(j)[static_cast<std::size_t>(i)]);
            }
            g.add_row(layout.A_index(), nx, i);
            g.add_col(layout.A_index(), nx, nx, i);
            g.add_row(layout.B_index(), nu, i);
            g.add_col(layout.C_index(), ny, nx, i);
            if (spec.has_fx()) {
                const auto& W0 = shape.theta_x.front().W;
                g.add_col(layout.fx_weight_index(0), W0.rows(), W0.cols(), i);
            }
            if (spec.has_fy()) {
                const auto& W0 = shape.theta_y.front().W;
                g.add_col(layout.fy_weight_index(0), W0.rows(), W0.cols(), i);
            }
            if (spec.has_fx()) {
                const std::size_t last = shape.theta_x.size() - 1;
                const auto& WL = shape.theta_x[last].W;
                g.add_row(layout.fx_weight_index(last), WL.cols(), i);
                g.add(layout.fx_bias_index(last)[static_cast<std::size_t>(i)]);
            }
            out.groups.push_back(g.take());
        }
    } else if (kind == GroupKind::input_groups) {
        if (nu < 1) {
            throw ConfigError("input groups require at least one input");
        }
        for (int i = 0; i < nu; ++i) {
            g.add_col(layout.B_index(), nx, nu, i);
            g.add_col(layout.D_index(), ny, nu, i);
            if (spec.has_fx()) {
                const auto& W0 = shape.theta_x.front().W;
                g.add_col(layout.fx_weight_index(0), W0.rows(), W0.cols(), nx + i);
            }
            if (spec.has_fy() && spec.feedthrough) {
                const auto& W0 = shape.theta_y.front().W;
                g.add_col(layout.fy_weight_index(0), W0.rows(), W0.cols(), nx + i);
            }
            out.groups.push_back(g.take());
        }
    }
    return out;
}

double mse_loss(const Mat& y_true, const Mat& y_pred)
{
    if (y_true.rows() != y_pred.rows() || y_true.cols() != y_pred.cols()) {
        throw DimensionError("y", "true and predicted sequences differ in shape");
    }
    if (y_true.rows() == 0) return 0.0;
    return (y_true - y_pred).squaredNorm() / static_cast<double>(y_true.rows());
}

namespace {

std::vector<char> membership(Eigen::Index n, const std::vector<int>& idx)
{
    std::vector<char> in(static_cast<std::size_t>(n), 0);
    for (int i : idx) {
        if (i < 0 || i >= n) throw DimensionError("x0_indices", "index out of range");
        in[static_cast<std::size_t>(i)] = 1;
    }
    return in;
}

double regularize(const Vec& v, const RegularizationConfig& cfg, const GroupIndexSet& groups,
                  const std::vector<int>& x0_indices, Vec* grad)
{
    const auto is_x0 = membership(v.size(), x0_indices);
    if (grad) grad->setZero(v.size());
    double l2_theta = 0.0, l2_x0 = 0.0, l1 = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double vi = v[i];
        if (is_x0[static_cast<std::size_t>(i)]) {
            l2_x0 += vi * vi;
            if (grad) (*grad)[i] += cfg.rho_x * vi;
        } else {
            l2_theta += vi * vi;
            l1 += std::abs(vi);
            if (grad) (*grad)[i] += cfg.rho_theta * vi + cfg.tau * (vi > 0 ? 1.0 : (vi < 0 ? -1.0 : 0.0));
        }
    }
    double value = 0.5 * cfg.rho_theta * l2_theta + 0.5 * cfg.rho_x * l2_x0 + cfg.tau * l1;
    if (cfg.tau_g > 0.0) {
        for (const auto& grp : groups.groups) {
            double sq = 0.0;
            for (int i : grp) {
                if (i < 0 || i >= v.size()) throw DimensionError("groups", "index out of range");
                sq += v[i] * v[i];
            }
            const double norm = std::sqrt(sq);
            value += cfg.tau_g * norm;
            if (grad && norm > 0.0) {
                for (int i : grp) (*grad)[i] += cfg.tau_g * v[i] / norm;
            }
        }
    }
    return value;
}

} // namespace

double regularizer_value(const Vec& v, const RegularizationConfig& cfg, const GroupIndexSet& groups,
                         const std::vector<int>& x0_indices)
{
    return regularize(v, cfg, groups, x0_indices, nullptr);
}

double regularizer_subgradient(const Vec& v, const RegularizationConfig& cfg, const GroupIndexSet& groups,
                               const std::vector<int>& x0_indices, Vec& grad)
{
    return regularize(v, cfg, groups, x0_indices, &grad);
}

R2Report r2_score(const Mat& y_true, const Mat& y_pred)
{
    if (y_true.rows() != y_pred.rows() || y_true.cols() != y_pred.cols()) {
        throw DimensionError("y", "true and predicted sequences differ in shape");
    }
    R2Report r;
    r.per_output.resize(y_true.cols());
    for (Eigen::Index j = 0; j < y_true.cols(); ++j) {
        const auto y = y_true.col(j);
        const double mean = y.mean();
        const double sst = (y.array() - mean).square().sum();
        if (!(sst > 0.0)) {
            throw Error("R2 undefined: output channel " + std::to_string(j + 1) + " has zero variance");
        }
        const double sse = (y - y_pred.col(j)).squaredNorm();
        r.per_output[j] = 100.0 * (1.0 - sse / sst);
    }
    r.average = r.per_output.size() > 0 ? r.per_output.mean() : 0.0;
    return r;
}

ChannelScaling standard_scale_fit(const Mat& data)
{
    if (data.rows() == 0) {
        throw ConfigError("cannot fit scaling on empty data");
    }
    ChannelScaling s;
    s.mean = data.colwise().mean().transpose();
    s.std.resize(data.cols());
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
        const double var = (data.col(j).array() - s.mean[j]).square().mean();
        s.std[j] = std::sqrt(var);
        if (!(s.std[j] > 0.0)) {
            throw ConfigError("channel " + std::to_string(j + 1) + " has zero standard deviation");
        }
    }
    return s;
}

Mat standard_scale_apply(const Mat& data, const ChannelScaling& s)
{
    if (data.cols() != s.mean.size()) throw DimensionError("scaling", "channel count mismatch");
    return ((data.rowwise() - s.mean.transpose()).array().rowwise() / s.std.transpose().array()).matrix();
}

Mat standard_scale_invert(const Mat& data, const ChannelScaling& s)
{
    if (data.cols() != s.mean.size()) throw DimensionError("scaling", "channel count mismatch");
    return ((data.array().rowwise() * s.std.transpose().array()).rowwise() + s.mean.transpose().array())
        .matrix();
}

namespace {
Mat stack_rows(const Dataset& d, bool inputs)
{
    const Eigen::Index cols = inputs ? d.n_u() : d.n_y();
    Mat all(d.total_samples(), cols);
    Eigen::Index row = 0;
    for (const auto& e : d.experiments) {
        const Mat& m = inputs ? e.U : e.Y;
        all.middleRows(row, m.rows()) = m;
        row += m.rows();
    }
    return all;
}
} // namespace

void fit_dataset_scaling(const Dataset& train, ChannelScaling& u, ChannelScaling& y)
{
    train.validate();
    if (train.n_u() > 0) {
        u = standard_scale_fit(stack_rows(train, true));
    } else {
        u = {};
    }
    y = standard_scale_fit(stack_rows(train, false));
}

Dataset scale_dataset(const Dataset& raw, const ChannelScaling& u, const ChannelScaling& y)
{
    Dataset out = raw;
    for (auto& e : out.experiments) {
        if (e.U.cols() > 0) e.U = standard_scale_apply(e.U, u);
        e.Y = standard_scale_apply(e.Y, y);
    }
    out.scaled = true;
    out.u_scaling = u;
    out.y_scaling = y;
    return out;
}

} // namespace sysid
