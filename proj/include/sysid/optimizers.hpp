#pragma once

#include <functional>
#include <string_view>

#include "sysid/function.hpp"

namespace sysid {

enum class SolveStatus {
    converged,           // projected-gradient or relative-decrease test met
    feval_budget,        // function-evaluation cap reached
    line_search_failure, // no acceptable step, best iterate returned
    iteration_limit,     // Adam ran all its iterations
    aborted,             // Adam met too many consecutive non-finite evaluations
};

std::string_view to_string(SolveStatus s);

struct IterationInfo
{
    int iter = 0;
    double f = 0.0;
    double projected_grad_norm = 0.0;
    int n_fun_evals = 0;
};

using IterationCallback = std::function<void(const IterationInfo&)>;

struct LineSearchOptions
{
    double c1 = 1e-4; // sufficient decrease
    double c2 = 0.9;  // curvature
    int max_evals = 20;
};

struct LbfgsbOptions
{
    int memory = 10;
    int max_fun_evals = 1000;
    double grad_tol = 1e-8; // projected gradient, infinity norm
    double ftol = 1e-10;    // relative decrease (f_k - f_{k+1}) / max(|f_k|, |f_{k+1}|, 1); 0 disables
    LineSearchOptions line_search;
    IterationCallback callback;

    void validate() const;
};

struct AdamOptions
{
    int iters = 1000;
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    bool track_best = true;
    int max_consecutive_nonfinite = 50;
    IterationCallback callback;

    void validate() const;
};

struct SolveResult
{
    Vec x_opt;
    double f_opt = 0.0;
    int n_fun_evals = 0;
    int n_iters = 0;
    SolveStatus status = SolveStatus::converged;
    double projected_grad_norm = 0.0;
};

/// max_i |clip(x_i - g_i, l_i, u_i) - x_i|; empty bounds mean unbounded.
double projected_gradient_norm(const Vec& x, const Vec& g, const Vec& lower, const Vec& upper);

/// Limited-memory BFGS for  min f(x)  s.t.  lower <= x <= upper.
///
/// Each iteration computes the generalized Cauchy point along the projected steepest
/// descent path of the compact limited-memory model, minimizes the model over the
/// variables left free (direct primal method, step truncated to the box), and runs a
/// strong-Wolfe line search clipped to the feasible segment. Pairs with
/// s'y <= 1e-10 |s| |y| are skipped. Empty `lower` / `upper` mean unbounded.
///
/// Objective evaluations that throw NumericalError count as +inf. Throws Error if
/// f(x0) is not finite.
SolveResult lbfgsb_minimize(const ValueGradFn& f, const Vec& x0, const Vec& lower, const Vec& upper,
                            const LbfgsbOptions& opts = {});

/// Adam with projection onto the box after each step. With `track_best` the best
/// evaluated iterate is returned. A non-finite evaluation sends the iterate back to
/// the last finite point and halves the step until a finite value is found again.
SolveResult adam_minimize(const ValueGradFn& f, const Vec& x0, const Vec& lower, const Vec& upper,
                          const AdamOptions& opts = {});

} // namespace sysid
