#include <cmath>
#include <limits>

#include "sysid/error.hpp"
#include "sysid/optimizers.hpp"

namespace sysid {

void AdamOptions::validate() const
{
    if (iters < 0) throw ConfigError("adam.iters must be non-negative");
    if (!(learning_rate > 0.0)) throw ConfigError("adam.learning_rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam.beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam.beta2 must lie in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("adam.eps must be positive");
    if (max_consecutive_nonfinite < 1) throw ConfigError("adam.max_consecutive_nonfinite must be positive");
}

SolveResult adam_minimize(const ValueGradFn& fn, const Vec& x0, const Vec& lower, const Vec& upper,
                          const AdamOptions& opts)
{
    opts.validate();
    const Eigen::Index n = x0.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    const Vec lo = lower.size() == 0 ? Vec::Constant(n, -inf) : lower;
    const Vec hi = upper.size() == 0 ? Vec::Constant(n, inf) : upper;
    if (lo.size() != n || hi.size() != n) throw DimensionError("bounds", "length differs from x0");
    auto project = [&](const Vec& v) -> Vec { return v.cwiseMax(lo).cwiseMin(hi); };

    Vec x = project(x0);
    Vec m = Vec::Zero(n), v = Vec::Zero(n), step = Vec::Zero(n);
    Vec g, good = x, best = x, good_g = Vec::Zero(n);
    double f_good = inf, f_best = inf;
    double scale = 1.0;
    int t = 0, fails = 0, evals = 0;
    SolveStatus status = SolveStatus::iteration_limit;

    for (int it = 0; it < opts.iters; ++it) {
        double f;
        try {
            f = fn(x, g);
        } catch (const NumericalError&) {
            f = inf;
        }
        ++evals;
        if (!std::isfinite(f) || g.size() != n || !g.allFinite()) {
            if (++fails >= opts.max_consecutive_nonfinite) {
                status = SolveStatus::aborted;
                break;
            }
            scale *= 0.5;
            x = project(good - opts.learning_rate * scale * step);
            continue;
        }
        fails = 0;
        scale = 1.0;
        good = x;
        good_g = g;
        f_good = f;
        if (f < f_best) {
            f_best = f;
            best = x;
        }
        if (opts.callback) opts.callback(IterationInfo{it, f, projected_gradient_norm(x, g, lo, hi), evals});

        ++t;
        m = opts.beta1 * m + (1.0 - opts.beta1) * g;
        v = opts.beta2 * v + (1.0 - opts.beta2) * g.cwiseAbs2();
        const double c1 = 1.0 - std::pow(opts.beta1, t);
        const double c2 = 1.0 - std::pow(opts.beta2, t);
        step = (m / c1).array() / ((v / c2).array().sqrt() + opts.eps);
        x = project(x - opts.learning_rate * step);
    }

    SolveResult res;
    res.status = status;
    res.n_fun_evals = evals;
    res.n_iters = t;
    if (opts.track_best) {
        res.x_opt = best;
        res.f_opt = f_best;
    } else {
        res.x_opt = good;
        res.f_opt = f_good;
    }
    if (res.x_opt == good && std::isfinite(f_good)) {
        res.projected_grad_norm = projected_gradient_norm(good, good_g, lo, hi);
    }
    return res;
}

} // namespace sysid
