#include "sysid/split.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sysid/error.hpp"

namespace sysid {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vec or_constant(const Vec& v, int n, double value)
{
    if (v.size() == 0) return Vec::Constant(n, value);
    if (v.size() != n) throw DimensionError("bounds", "expected length " + std::to_string(n));
    return v;
}

std::vector<char> as_mask(int n, const std::vector<int>& idx, const char* what)
{
    std::vector<char> m(static_cast<std::size_t>(n), 0);
    for (int i : idx) {
        if (i < 0 || i >= n) throw DimensionError(what, "index out of range");
        m[static_cast<std::size_t>(i)] = 1;
    }
    return m;
}

} // namespace

SplitLayout map_box_bounds(const Vec& x_min_in, const Vec& x_max_in, const std::vector<int>& split_idx,
                           double floor)
{
    const int n = static_cast<int>(std::max(x_min_in.size(), x_max_in.size()));
    const Vec x_min = or_constant(x_min_in, n, -kInf);
    const Vec x_max = or_constant(x_max_in, n, kInf);

    SplitLayout L;
    L.n = n;
    L.split = as_mask(n, split_idx, "split_idx");
    L.pos.assign(static_cast<std::size_t>(n), -1);
    L.neg.assign(static_cast<std::size_t>(n), -1);
    std::vector<double> lo, hi;

    for (int i = 0; i < n; ++i) {
        if (x_min[i] > x_max[i]) {
            throw ConfigError("contradictory bounds on variable " + std::to_string(i) + ": " +
                              std::to_string(x_min[i]) + " > " + std::to_string(x_max[i]));
        }
        if (!L.split[static_cast<std::size_t>(i)]) {
            L.pos[static_cast<std::size_t>(i)] = static_cast<int>(lo.size());
            lo.push_back(x_min[i]);
            hi.push_back(x_max[i]);
        } else if (x_max[i] > 0.0) {
            L.pos[static_cast<std::size_t>(i)] = static_cast<int>(lo.size());
            lo.push_back(std::max(x_min[i] > 0.0 ? x_min[i] : 0.0, floor));
            hi.push_back(x_max[i]);
        }
    }
    for (int i = 0; i < n; ++i) {
        if (L.split[static_cast<std::size_t>(i)] && x_min[i] < 0.0) {
            L.neg[static_cast<std::size_t>(i)] = static_cast<int>(lo.size());
            lo.push_back(std::max(x_max[i] < 0.0 ? -x_max[i] : 0.0, floor));
            hi.push_back(-x_min[i]);
        }
    }
    L.lower = Eigen::Map<Vec>(lo.data(), static_cast<Eigen::Index>(lo.size()));
    L.upper = Eigen::Map<Vec>(hi.data(), static_cast<Eigen::Index>(hi.size()));
    return L;
}

SplitProblem::SplitProblem(ValueGradFn f, SplitLayout layout, SplitPenalty penalty)
    : f_(std::move(f)), layout_(std::move(layout)), penalty_(std::move(penalty))
{
    const int n = layout_.n;
    if (penalty_.l2.size() == 0) penalty_.l2 = Vec::Zero(n);
    if (penalty_.l1.size() == 0) penalty_.l1 = Vec::Zero(n);
    if (penalty_.l2.size() != n || penalty_.l1.size() != n) {
        throw DimensionError("penalty", "expected length " + std::to_string(n));
    }
    for (int i = 0; i < n; ++i) {
        if (!layout_.split[static_cast<std::size_t>(i)] && penalty_.l1[i] != 0.0) {
            throw ConfigError("l1 weight on unsplit variable " + std::to_string(i));
        }
    }
    if (penalty_.tau_g > 0.0) {
        for (const auto& g : penalty_.groups.groups) {
            for (int i : g) {
                if (i < 0 || i >= n || !layout_.split[static_cast<std::size_t>(i)]) {
                    throw ConfigError("group member " + std::to_string(i) + " is not split");
                }
            }
        }
    }
}

std::vector<int> SplitProblem::split_indices() const
{
    std::vector<int> out;
    for (int i = 0; i < layout_.n; ++i) {
        if (layout_.split[static_cast<std::size_t>(i)]) out.push_back(i);
    }
    return out;
}

Vec SplitProblem::recover(const Vec& w) const
{
    if (w.size() != dim()) throw DimensionError("w", "expected length " + std::to_string(dim()));
    Vec x = Vec::Zero(layout_.n);
    for (int i = 0; i < layout_.n; ++i) {
        const int p = layout_.pos[static_cast<std::size_t>(i)];
        const int q = layout_.neg[static_cast<std::size_t>(i)];
        if (p >= 0) x[i] += w[p];
        if (q >= 0) x[i] -= w[q];
    }
    return x;
}

Vec SplitProblem::lift(const Vec& x) const
{
    if (x.size() != layout_.n) throw DimensionError("x", "expected length " + std::to_string(layout_.n));
    Vec w(dim());
    for (int i = 0; i < layout_.n; ++i) {
        const int p = layout_.pos[static_cast<std::size_t>(i)];
        const int q = layout_.neg[static_cast<std::size_t>(i)];
        if (!layout_.split[static_cast<std::size_t>(i)]) {
            w[p] = x[i];
        } else {
            if (p >= 0) w[p] = std::max(x[i], 0.0);
            if (q >= 0) w[q] = std::max(-x[i], 0.0);
        }
    }
    return w.cwiseMax(layout_.lower).cwiseMin(layout_.upper);
}

double SplitProblem::complementarity(const Vec& w) const
{
    double worst = 0.0;
    for (int i = 0; i < layout_.n; ++i) {
        const int p = layout_.pos[static_cast<std::size_t>(i)];
        const int q = layout_.neg[static_cast<std::size_t>(i)];
        if (p >= 0 && q >= 0) worst = std::max(worst, std::min(w[p], w[q]));
    }
    return worst;
}

double SplitProblem::operator()(const Vec& w, Vec& grad) const
{
    const Vec x = recover(w);
    Vec gf;
    double value = f_(x, gf);
    grad.setZero(dim());
    const Vec& rho = penalty_.l2;
    const Vec& l1 = penalty_.l1;
    for (int i = 0; i < layout_.n; ++i) {
        const int p = layout_.pos[static_cast<std::size_t>(i)];
        const int q = layout_.neg[static_cast<std::size_t>(i)];
        if (!layout_.split[static_cast<std::size_t>(i)]) {
            value += 0.5 * rho[i] * x[i] * x[i];
            grad[p] = gf[i] + rho[i] * x[i];
            continue;
        }
        if (p >= 0) {
            const double y = w[p];
            value += 0.5 * rho[i] * y * y + l1[i] * y;
            grad[p] = gf[i] + rho[i] * y + l1[i];
        }
        if (q >= 0) {
            const double z = w[q];
            value += 0.5 * rho[i] * z * z + l1[i] * z;
            grad[q] = -gf[i] + rho[i] * z + l1[i];
        }
    }
    if (penalty_.tau_g > 0.0) {
        for (const auto& g : penalty_.groups.groups) {
            double sq = 0.0;
            for (int i : g) {
                const int p = layout_.pos[static_cast<std::size_t>(i)];
                const int q = layout_.neg[static_cast<std::size_t>(i)];
                const double s = (p >= 0 ? w[p] : 0.0) + (q >= 0 ? w[q] : 0.0);
                sq += s * s;
            }
            const double norm = std::sqrt(sq);
            value += penalty_.tau_g * norm;
            if (norm > 0.0) {
                for (int i : g) {
                    const int p = layout_.pos[static_cast<std::size_t>(i)];
                    const int q = layout_.neg[static_cast<std::size_t>(i)];
                    const double s = (p >= 0 ? w[p] : 0.0) + (q >= 0 ? w[q] : 0.0);
                    const double d = penalty_.tau_g * s / norm;
                    if (p >= 0) grad[p] += d;
                    if (q >= 0) grad[q] += d;
                }
            }
        }
    }
    return value;
}

ValueGradFn SplitProblem::objective() const
{
    return [self = *this](const Vec& w, Vec& g) { return self(w, g); };
}

namespace {

Vec l2_weights(int n, const RegularizationConfig& cfg, const std::vector<int>& x0_idx)
{
    Vec rho = Vec::Constant(n, cfg.rho_theta);
    for (int i : x0_idx) {
        if (i < 0 || i >= n) throw DimensionError("x0_idx", "index out of range");
        rho[i] = cfg.rho_x;
    }
    return rho;
}

} // namespace

SplitProblem build_elastic_net_split(ValueGradFn f, int n, const RegularizationConfig& cfg,
                                     const std::vector<int>& split_idx, const std::vector<int>& x0_idx,
                                     const Vec& x_min, const Vec& x_max)
{
    cfg.validate();
    const Vec lo = or_constant(x_min, n, -kInf);
    const Vec hi = or_constant(x_max, n, kInf);
    SplitLayout layout = map_box_bounds(lo, hi, split_idx, 0.0);
    SplitPenalty pen;
    pen.l2 = l2_weights(n, cfg, x0_idx);
    pen.l1 = Vec::Zero(n);
    const auto is_x0 = as_mask(n, x0_idx, "x0_idx");
    for (int i : split_idx) {
        if (!is_x0[static_cast<std::size_t>(i)]) pen.l1[i] = cfg.tau;
    }
    return SplitProblem(std::move(f), std::move(layout), std::move(pen));
}

SplitProblem build_group_lasso_split(ValueGradFn f, int n, const RegularizationConfig& cfg,
                                     const GroupIndexSet& groups, const std::vector<int>& split_idx,
                                     const std::vector<int>& x0_idx, const Vec& x_min, const Vec& x_max)
{
    cfg.validate();
    if (!(cfg.tau_g > 0.0) || !(cfg.epsilon > 0.0)) {
        throw ConfigError("group-Lasso split requires tau_g > 0 and epsilon > 0");
    }
    const Vec lo = or_constant(x_min, n, -kInf);
    const Vec hi = or_constant(x_max, n, kInf);
    SplitLayout layout = map_box_bounds(lo, hi, split_idx, kGroupSplitFloor);
    SplitPenalty pen;
    pen.l2 = l2_weights(n, cfg, x0_idx);
    pen.l1 = Vec::Zero(n);
    const auto is_x0 = as_mask(n, x0_idx, "x0_idx");
    for (int i : split_idx) {
        pen.l1[i] = cfg.epsilon + (is_x0[static_cast<std::size_t>(i)] ? 0.0 : cfg.tau);
    }
    pen.groups = groups;
    pen.tau_g = cfg.tau_g;
    return SplitProblem(std::move(f), std::move(layout), std::move(pen));
}

Vec recover(const Vec& y, const Vec& z)
{
    if (y.size() != z.size()) throw DimensionError("z", "length differs from y");
    return y - z;
}

} // namespace sysid
