#include "sysid/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <string>

#include "sysid/error.hpp"

namespace sysid {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Bounds
{
    Vec lo, hi;
    bool any_finite = false;
    bool all_boxed = true;
};

Bounds make_bounds(const Vec& lower, const Vec& upper, Eigen::Index n)
{
    Bounds b;
    b.lo = lower.size() == 0 ? Vec::Constant(n, -kInf) : lower;
    b.hi = upper.size() == 0 ? Vec::Constant(n, kInf) : upper;
    if (b.lo.size() != n || b.hi.size() != n) throw DimensionError("bounds", "length differs from x0");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (b.lo[i] > b.hi[i]) throw ConfigError("lower bound exceeds upper bound at " + std::to_string(i));
        const bool fl = std::isfinite(b.lo[i]), fh = std::isfinite(b.hi[i]);
        b.any_finite = b.any_finite || fl || fh;
        b.all_boxed = b.all_boxed && fl && fh;
    }
    return b;
}

// Evaluation wrapper: NumericalError and non-finite values become +inf.
struct Evaluator
{
    const ValueGradFn& f;
    int count = 0;

    double operator()(const Vec& x, Vec& g)
    {
        ++count;
        double v;
        try {
            v = f(x, g);
        } catch (const NumericalError&) {
            return kInf;
        }
        if (!std::isfinite(v) || g.size() != x.size() || !g.allFinite()) return kInf;
        return v;
    }
};

// Compact representation B = theta I - W M W'.
struct Memory
{
    std::deque<Vec> s, y;
    double theta = 1.0;
    Mat W; // n x 2k
    Mat M; // 2k x 2k

    int k() const { return static_cast<int>(s.size()); }

    void reset()
    {
        s.clear();
        y.clear();
        theta = 1.0;
    }

    void rebuild(Eigen::Index n)
    {
        const int m = k();
        W.resize(n, 2 * m);
        M.resize(2 * m, 2 * m);
        if (m == 0) return;
        Mat S(n, m), Y(n, m);
        for (int i = 0; i < m; ++i) {
            S.col(i) = s[static_cast<std::size_t>(i)];
            Y.col(i) = y[static_cast<std::size_t>(i)];
        }
        W.leftCols(m) = Y;
        W.rightCols(m) = theta * S;
        const Mat SY = S.transpose() * Y;
        const Mat SS = S.transpose() * S;
        Mat K = Mat::Zero(2 * m, 2 * m);
        for (int i = 0; i < m; ++i) K(i, i) = -SY(i, i);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < i; ++j) {
                K(m + i, j) = SY(i, j); // L
                K(j, m + i) = SY(i, j); // L'
            }
        }
        K.bottomRightCorner(m, m) = theta * SS;
        M = K.fullPivLu().inverse();
    }
};

// Generalized Cauchy point of the quadratic model along the projected gradient path.
// Returns xc and c = W'(xc - x).
void cauchy_point(const Vec& x, const Vec& g, const Bounds& b, const Memory& mem, Vec& xc, Vec& c)
{
    const Eigen::Index n = x.size();
    const Eigen::Index m2 = mem.W.cols();
    const double theta = mem.theta;
    Vec t(n), d(n);
    std::vector<Eigen::Index> brk;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (g[i] < 0.0) {
            t[i] = std::isfinite(b.hi[i]) ? (x[i] - b.hi[i]) / g[i] : kInf;
        } else if (g[i] > 0.0) {
            t[i] = std::isfinite(b.lo[i]) ? (x[i] - b.lo[i]) / g[i] : kInf;
        } else {
            t[i] = kInf;
        }
        d[i] = t[i] == 0.0 ? 0.0 : -g[i];
        if (t[i] > 0.0 && std::isfinite(t[i])) brk.push_back(i);
    }
    std::stable_sort(brk.begin(), brk.end(), [&](Eigen::Index a, Eigen::Index c2) { return t[a] < t[c2]; });

    xc = x;
    Vec p = m2 > 0 ? Vec(mem.W.transpose() * d) : Vec::Zero(0);
    c = Vec::Zero(m2);
    double fp = -d.squaredNorm();
    const double fpp0 = -theta * fp;
    double fpp = std::max(fpp0 - (m2 > 0 ? p.dot(mem.M * p) : 0.0), 1e-10 * fpp0);
    if (fp >= 0.0) return;
    double dt_min = -fp / fpp;
    double t_old = 0.0;
    std::size_t it = 0;
    while (it < brk.size()) {
        const Eigen::Index bi = brk[it];
        const double tb = t[bi];
        const double dt = tb - t_old;
        if (dt_min < dt) break;
        ++it;
        xc[bi] = d[bi] > 0.0 ? b.hi[bi] : b.lo[bi];
        const double zb = xc[bi] - x[bi];
        c += dt * p;
        const double gb = g[bi];
        if (m2 > 0) {
            const Vec wb = mem.W.row(bi).transpose();
            const Vec Mc = mem.M * c;
            const Vec Mp = mem.M * p;
            const Vec Mw = mem.M * wb;
            fp += dt * fpp + gb * gb + theta * gb * zb - gb * wb.dot(Mc);
            fpp += -theta * gb * gb - 2.0 * gb * wb.dot(Mp) - gb * gb * wb.dot(Mw);
            p += gb * wb;
        } else {
            fp += dt * fpp + gb * gb + theta * gb * zb;
            fpp += -theta * gb * gb;
        }
        d[bi] = 0.0;
        fpp = std::max(fpp, 1e-10 * fpp0);
        dt_min = fpp > 0.0 ? -fp / fpp : 0.0;
        t_old = tb;
        if (fp >= 0.0) {
            dt_min = 0.0;
            break;
        }
    }
    dt_min = std::max(dt_min, 0.0);
    t_old += dt_min;
    for (std::size_t j = it; j < brk.size(); ++j) {
        const Eigen::Index i = brk[j];
        xc[i] = x[i] + t_old * d[i];
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!std::isfinite(t[i]) && d[i] != 0.0) xc[i] = x[i] + t_old * d[i];
    }
    xc = xc.cwiseMax(b.lo).cwiseMin(b.hi);
    if (m2 > 0) c += dt_min * p;
}

// Minimizes the model over the variables free at xc; returns the truncated point.
Vec subspace_min(const Vec& x, const Vec& g, const Vec& xc, const Vec& c, const Bounds& b, const Memory& mem)
{
    const Eigen::Index n = x.size();
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (xc[i] > b.lo[i] && xc[i] < b.hi[i]) free.push_back(i);
    }
    if (free.empty()) return xc;
    const auto nf = static_cast<Eigen::Index>(free.size());
    const double theta = mem.theta;
    const Eigen::Index m2 = mem.W.cols();

    Vec full = g + theta * (xc - x);
    if (m2 > 0) full.noalias() -= mem.W * (mem.M * c);
    Vec r(nf);
    Mat WZ(nf, m2);
    for (Eigen::Index j = 0; j < nf; ++j) {
        r[j] = full[free[static_cast<std::size_t>(j)]];
        if (m2 > 0) WZ.row(j) = mem.W.row(free[static_cast<std::size_t>(j)]);
    }
    Vec du = -r / theta;
    if (m2 > 0) {
        Vec v = mem.M * (WZ.transpose() * r);
        const Mat N = Mat::Identity(m2, m2) - (mem.M * (WZ.transpose() * WZ)) / theta;
        v = N.fullPivLu().solve(v);
        du.noalias() -= WZ * v / (theta * theta);
    }
    double alpha = 1.0;
    for (Eigen::Index j = 0; j < nf; ++j) {
        const Eigen::Index i = free[static_cast<std::size_t>(j)];
        if (du[j] > 0.0 && std::isfinite(b.hi[i])) {
            alpha = std::min(alpha, (b.hi[i] - xc[i]) / du[j]);
        } else if (du[j] < 0.0 && std::isfinite(b.lo[i])) {
            alpha = std::min(alpha, (b.lo[i] - xc[i]) / du[j]);
        }
    }
    alpha = std::max(alpha, 0.0);
    Vec xbar = xc;
    for (Eigen::Index j = 0; j < nf; ++j) xbar[free[static_cast<std::size_t>(j)]] += alpha * du[j];
    return xbar.cwiseMax(b.lo).cwiseMin(b.hi);
}

struct Point
{
    double t = 0.0;
    double f = kInf;
    double dphi = 0.0;
    Vec x, g;
};

double cubic_min(const Point& a, const Point& b)
{
    const double d1 = a.dphi + b.dphi - 3.0 * (a.f - b.f) / (a.t - b.t);
    const double disc = d1 * d1 - a.dphi * b.dphi;
    if (!(disc >= 0.0) || !std::isfinite(d1)) return 0.5 * (a.t + b.t);
    const double d2 = std::copysign(std::sqrt(disc), b.t - a.t);
    const double den = b.dphi - a.dphi + 2.0 * d2;
    if (den == 0.0) return 0.5 * (a.t + b.t);
    return b.t - (b.t - a.t) * (b.dphi + d2 - d1) / den;
}

enum class SearchOutcome { accepted, failed, budget };

// Strong-Wolfe search on phi(t) = f(clip(x + t d)), t in (0, stpmax].
SearchOutcome line_search(Evaluator& eval, const Vec& x, double f0, const Vec& g0, const Vec& d, double t0,
                          double stpmax, const Bounds& b, const LineSearchOptions& ls, int budget, Point& out)
{
    const double dphi0 = g0.dot(d);
    auto probe = [&](double t) {
        Point p;
        p.t = t;
        p.x = (x + t * d).cwiseMax(b.lo).cwiseMin(b.hi);
        p.f = eval(p.x, p.g);
        p.dphi = std::isfinite(p.f) ? p.g.dot(d) : 0.0;
        return p;
    };
    auto armijo = [&](const Point& p) { return std::isfinite(p.f) && p.f <= f0 + ls.c1 * p.t * dphi0; };
    auto curvature = [&](const Point& p) { return std::abs(p.dphi) <= -ls.c2 * dphi0; };

    int used = 0;
    const int limit = std::min(ls.max_evals, budget);

    // Predicted decrease below the rounding level of f: values carry no information,
    // so bracket a zero of the slope instead and only reject clear increases.
    const double noise = 1e-12 * std::max(1.0, std::abs(f0));
    if (-dphi0 * std::min(t0, stpmax) <= noise) {
        Point lo, hi;
        lo.dphi = dphi0;
        bool have_hi = false;
        double t = std::min(t0, stpmax);
        while (used < limit) {
            Point p = probe(t);
            ++used;
            if (!std::isfinite(p.f) || p.f > f0 + noise) {
                hi = p;
                have_hi = true;
                t = 0.5 * (lo.t + hi.t);
                continue;
            }
            if (curvature(p)) {
                out = p;
                return SearchOutcome::accepted;
            }
            if (p.dphi > 0.0) {
                hi = p;
                have_hi = true;
            } else {
                lo = p;
                if (!have_hi) {
                    if (t >= stpmax) break;
                    t = std::min(2.0 * t, stpmax);
                    continue;
                }
            }
            const double w = hi.t - lo.t;
            const double secant = std::isfinite(hi.f) && hi.dphi > lo.dphi
                                      ? lo.t - lo.dphi * w / (hi.dphi - lo.dphi)
                                      : 0.5 * (lo.t + hi.t);
            t = std::clamp(secant, lo.t + 0.1 * w, hi.t - 0.1 * w);
        }
        if (lo.t > 0.0) {
            out = lo;
            return SearchOutcome::accepted;
        }
        return used >= budget ? SearchOutcome::budget : SearchOutcome::failed;
    }
    Point best; // best Armijo point seen
    auto note = [&](const Point& p) {
        if (armijo(p) && p.f < best.f) best = p;
    };
    auto give_up = [&]() {
        if (std::isfinite(best.f) && best.f < f0) {
            out = best;
            return SearchOutcome::accepted;
        }
        return used >= budget ? SearchOutcome::budget : SearchOutcome::failed;
    };

    Point lo, hi;
    lo.t = 0.0;
    lo.f = f0;
    lo.dphi = dphi0;
    bool bracketed = false;
    double t = std::min(t0, stpmax);
    Point prev = lo;
    while (!bracketed) {
        if (used >= limit) return give_up();
        Point p = probe(t);
        ++used;
        note(p);
        if (!armijo(p) || (used > 1 && p.f >= prev.f)) {
            lo = prev;
            hi = p;
            bracketed = true;
            break;
        }
        if (curvature(p)) {
            out = p;
            return SearchOutcome::accepted;
        }
        if (p.dphi >= 0.0) {
            lo = p;
            hi = prev;
            bracketed = true;
            break;
        }
        if (t >= stpmax) {
            out = p;
            return SearchOutcome::accepted;
        }
        prev = p;
        t = std::min(2.0 * t, stpmax);
    }

    while (used < limit) {
        const double a = std::min(lo.t, hi.t), c = std::max(lo.t, hi.t);
        const double w = c - a;
        if (w <= 1e-16 * std::max(1.0, c)) break;
        double tn;
        if (!std::isfinite(hi.f)) {
            tn = lo.t + 0.2 * (hi.t - lo.t);
        } else {
            tn = cubic_min(lo, hi);
            if (!std::isfinite(tn)) tn = 0.5 * (a + c);
            tn = std::clamp(tn, a + 0.1 * w, c - 0.1 * w);
        }
        Point p = probe(tn);
        ++used;
        note(p);
        if (!armijo(p) || p.f >= lo.f) {
            hi = p;
        } else {
            if (curvature(p)) {
                out = p;
                return SearchOutcome::accepted;
            }
            if (p.dphi * (hi.t - lo.t) >= 0.0) hi = lo;
            lo = p;
        }
    }
    return give_up();
}

} // namespace

std::string_view to_string(SolveStatus s)
{
    switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::feval_budget: return "feval_budget";
    case SolveStatus::line_search_failure: return "line_search_failure";
    case SolveStatus::iteration_limit: return "iteration_limit";
    case SolveStatus::aborted: return "aborted";
    }
    return "unknown";
}

void LbfgsbOptions::validate() const
{
    if (memory < 1) throw ConfigError("lbfgsb.memory must be at least 1");
    if (max_fun_evals < 1) throw ConfigError("lbfgsb.max_fun_evals must be at least 1");
    if (!(grad_tol >= 0.0)) throw ConfigError("lbfgsb.grad_tol must be non-negative");
    if (!(ftol >= 0.0)) throw ConfigError("lbfgsb.ftol must be non-negative");
    if (!(line_search.c1 > 0.0 && line_search.c1 < line_search.c2 && line_search.c2 < 1.0)) {
        throw ConfigError("line search requires 0 < c1 < c2 < 1");
    }
    if (line_search.max_evals < 1) throw ConfigError("line search max_evals must be at least 1");
}

double projected_gradient_norm(const Vec& x, const Vec& g, const Vec& lower, const Vec& upper)
{
    double worst = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        double v = x[i] - g[i];
        if (lower.size() > 0) v = std::max(v, lower[i]);
        if (upper.size() > 0) v = std::min(v, upper[i]);
        worst = std::max(worst, std::abs(v - x[i]));
    }
    return worst;
}

SolveResult lbfgsb_minimize(const ValueGradFn& fn, const Vec& x0, const Vec& lower, const Vec& upper,
                            const LbfgsbOptions& opts)
{
    opts.validate();
    const Eigen::Index n = x0.size();
    const Bounds b = make_bounds(lower, upper, n);
    Evaluator eval{fn};

    Vec x = x0.cwiseMax(b.lo).cwiseMin(b.hi);
    Vec g;
    double f = eval(x, g);
    if (!std::isfinite(f)) throw Error("objective is not finite at the starting point");

    SolveResult res;
    Memory mem;
    double pg = projected_gradient_norm(x, g, b.lo, b.hi);
    int iter = 0;
    bool retried = false;
    auto report = [&]() {
        if (opts.callback) opts.callback(IterationInfo{iter, f, pg, eval.count});
    };
    report();

    SolveStatus status = SolveStatus::converged;
    while (true) {
        if (pg <= opts.grad_tol) {
            status = SolveStatus::converged;
            break;
        }
        if (eval.count >= opts.max_fun_evals) {
            status = SolveStatus::feval_budget;
            break;
        }
        mem.rebuild(n);
        Vec xc, c;
        cauchy_point(x, g, b, mem, xc, c);
        const Vec xbar = subspace_min(x, g, xc, c, b, mem);
        Vec d = xbar - x;
        const double gd = g.dot(d);
        if (!(gd < 0.0)) {
            if (mem.k() > 0) {
                mem.reset();
                continue;
            }
            status = SolveStatus::line_search_failure;
            break;
        }

        double stpmax = 1e10;
        if (b.any_finite) {
            if (mem.k() == 0) {
                stpmax = 1.0;
            } else {
                for (Eigen::Index i = 0; i < n; ++i) {
                    if (d[i] > 0.0 && std::isfinite(b.hi[i])) {
                        stpmax = std::min(stpmax, (b.hi[i] - x[i]) / d[i]);
                    } else if (d[i] < 0.0 && std::isfinite(b.lo[i])) {
                        stpmax = std::min(stpmax, (b.lo[i] - x[i]) / d[i]);
                    }
                }
                stpmax = std::max(stpmax, 1.0);
            }
        }
        const double t0 = (mem.k() == 0 && !b.all_boxed) ? std::min(1.0 / d.norm(), stpmax) : 1.0;

        Point p;
        const SearchOutcome outcome =
            line_search(eval, x, f, g, d, t0, stpmax, b, opts.line_search, opts.max_fun_evals - eval.count, p);
        if (outcome != SearchOutcome::accepted) {
            if (outcome == SearchOutcome::budget) {
                status = SolveStatus::feval_budget;
                break;
            }
            if (!retried && mem.k() > 0) {
                retried = true;
                mem.reset();
                continue;
            }
            status = SolveStatus::line_search_failure;
            break;
        }
        retried = false;
        ++iter;

        const Vec s = p.x - x;
        const Vec yv = p.g - g;
        const double f_old = f;
        x = p.x;
        g = p.g;
        f = p.f;
        pg = projected_gradient_norm(x, g, b.lo, b.hi);
        report();

        const double sy = s.dot(yv);
        if (sy > 1e-10 * s.norm() * yv.norm()) {
            mem.s.push_back(s);
            mem.y.push_back(yv);
            if (mem.k() > opts.memory) {
                mem.s.pop_front();
                mem.y.pop_front();
            }
            mem.theta = yv.squaredNorm() / sy;
        }
        if (pg <= opts.grad_tol) {
            status = SolveStatus::converged;
            break;
        }
        if (opts.ftol > 0.0 && (f_old - f) / std::max({std::abs(f_old), std::abs(f), 1.0}) <= opts.ftol) {
            status = SolveStatus::converged;
            break;
        }
    }

    res.x_opt = x;
    res.f_opt = f;
    res.n_fun_evals = eval.count;
    res.n_iters = iter;
    res.status = status;
    res.projected_grad_norm = pg;
    return res;
}

} // namespace sysid
