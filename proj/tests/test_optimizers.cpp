#include <doctest.h>

#include <cmath>
#include <random>

#include "support/oracles.hpp"
#include "sysid/error.hpp"
#include "sysid/optimizers.hpp"

using namespace sysid;

namespace {

double rosenbrock(const Vec& x, Vec& g)
{
    const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
    g.resize(2);
    g[0] = -2.0 * a - 400.0 * x[0] * b;
    g[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
}

ValueGradFn quadratic(const Mat& Q, const Vec& q)
{
    return [Q, q](const Vec& x, Vec& g) {
        g = Q * x + q;
        return 0.5 * x.dot(Q * x) + q.dot(x);
    };
}

} // namespace

TEST_CASE("active upper bound")
{
    auto f = [](const Vec& x, Vec& g) {
        g = 2.0 * (x.array() - 2.0).matrix();
        return (x.array() - 2.0).square().sum();
    };
    const SolveResult r = lbfgsb_minimize(f, Vec::Zero(1), Vec::Constant(1, -INFINITY), Vec::Ones(1));
    CHECK(r.x_opt[0] == 1.0);
    CHECK(r.f_opt == doctest::Approx(1.0));
    CHECK(r.projected_grad_norm == 0.0);
    CHECK(r.status == SolveStatus::converged);
}

TEST_CASE("bounded Rosenbrock")
{
    Vec x0(2);
    x0 << -1.2, 1.0;
    LbfgsbOptions opts;
    opts.ftol = 0.0;
    const SolveResult r = lbfgsb_minimize(rosenbrock, x0, Vec::Constant(2, -10), Vec::Constant(2, 10), opts);
    CHECK(std::abs(r.x_opt[0] - 1.0) < 1e-6);
    CHECK(std::abs(r.x_opt[1] - 1.0) < 1e-6);
    CHECK(r.f_opt < 1e-12);
}

TEST_CASE("Rosenbrock with the default tolerances")
{
    Vec x0(2);
    x0 << -1.2, 1.0;
    const SolveResult r = lbfgsb_minimize(rosenbrock, x0, Vec::Constant(2, -10), Vec::Constant(2, 10));
    CHECK((r.x_opt - Vec::Ones(2)).norm() < 1e-4);
    CHECK(r.status == SolveStatus::converged);
}

TEST_CASE("box QP against active-set enumeration")
{
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 4; ++trial) {
        const int n = 10;
        const Mat R = oracle::random_matrix(rng, n, n);
        const Mat Q = R.transpose() * R + 0.5 * Mat::Identity(n, n);
        // unconstrained minimizer pushed outside the box on half the coordinates
        Vec target = oracle::random_matrix(rng, n, 1, 0.3);
        for (int i = 0; i < n; i += 2) target[i] = (i % 4 == 0 ? 3.0 : -3.0);
        const Vec q = -Q * target;
        const Vec l = Vec::Constant(n, -1.0), u = Vec::Constant(n, 1.0);
        const Vec ref = oracle::box_qp_enumerate(Q, q, l, u);
        REQUIRE(ref.size() == n);
        int active = 0;
        for (int i = 0; i < n; ++i) active += (ref[i] == l[i] || ref[i] == u[i]) ? 1 : 0;
        CHECK(active >= 1);
        const SolveResult r = lbfgsb_minimize(quadratic(Q, q), Vec::Zero(n), l, u);
        CHECK((r.x_opt - ref).lpNorm<Eigen::Infinity>() < 1e-6);
    }
}

TEST_CASE("iterates stay feasible and accepted values never increase beyond rounding")
{
    std::mt19937_64 rng(32);
    const int n = 30;
    const Mat R = oracle::random_matrix(rng, n, n);
    const Mat Q = R.transpose() * R + 0.1 * Mat::Identity(n, n);
    const Vec q = oracle::random_matrix(rng, n, 1, 5.0);
    Vec l = oracle::random_matrix(rng, n, 1).cwiseAbs() * -1.0;
    Vec u = oracle::random_matrix(rng, n, 1).cwiseAbs();
    l[3] = -INFINITY;
    u[7] = INFINITY;
    bool feasible = true;
    auto inner = quadratic(Q, q);
    auto f = [&](const Vec& x, Vec& g) {
        for (int i = 0; i < n; ++i) feasible = feasible && x[i] >= l[i] && x[i] <= u[i];
        return inner(x, g);
    };
    std::vector<double> values;
    LbfgsbOptions opts;
    opts.ftol = 0.0;
    opts.callback = [&](const IterationInfo& info) { values.push_back(info.f); };
    const SolveResult r = lbfgsb_minimize(f, oracle::random_matrix(rng, n, 1, 3.0), l, u, opts);
    CHECK(feasible);
    for (std::size_t i = 1; i < values.size(); ++i) {
        CHECK(values[i] <= values[i - 1] + 1e-12 * std::abs(values[i - 1]));
    }
    CHECK((r.x_opt.array() >= l.array()).all());
    CHECK((r.x_opt.array() <= u.array()).all());
    CHECK(r.projected_grad_norm <= 1e-6);
}

TEST_CASE("random box QPs end at a KKT point")
{
    std::mt19937_64 rng(33);
    LbfgsbOptions opts;
    opts.ftol = 0.0;
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 20);
        const Mat R = oracle::random_matrix(rng, n + 3, n);
        const Mat Q = R.transpose() * R + 1e-2 * Mat::Identity(n, n);
        const Vec q = oracle::random_matrix(rng, n, 1, 4.0);
        const Vec l = -oracle::random_matrix(rng, n, 1).cwiseAbs();
        const Vec u = oracle::random_matrix(rng, n, 1).cwiseAbs();
        const SolveResult r = lbfgsb_minimize(quadratic(Q, q), Vec::Zero(n), l, u, opts);
        CHECK(r.projected_grad_norm <= 10.0 * opts.grad_tol);
        Vec g = Q * r.x_opt + q;
        for (int i = 0; i < n; ++i) {
            if (r.x_opt[i] <= l[i]) g[i] = std::min(g[i], 0.0);
            else if (r.x_opt[i] >= u[i]) g[i] = std::max(g[i], 0.0);
        }
        CHECK(g.lpNorm<Eigen::Infinity>() <= 10.0 * opts.grad_tol);
    }
}

TEST_CASE("unconstrained problems ignore empty bounds")
{
    std::mt19937_64 rng(33);
    const int n = 200;
    const Mat R = oracle::random_matrix(rng, n, n);
    const Mat Q = R.transpose() * R / n + Mat::Identity(n, n);
    const Vec q = oracle::random_matrix(rng, n, 1);
    LbfgsbOptions opts;
    opts.ftol = 0.0;
    const SolveResult r = lbfgsb_minimize(quadratic(Q, q), Vec::Zero(n), {}, {}, opts);
    CHECK(r.status == SolveStatus::converged);
    const Vec exact = Q.ldlt().solve(-q);
    CHECK((r.x_opt - exact).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("evaluation budget")
{
    Vec x0(2);
    x0 << -1.2, 1.0;
    LbfgsbOptions opts;
    opts.max_fun_evals = 7;
    const SolveResult r = lbfgsb_minimize(rosenbrock, x0, {}, {}, opts);
    CHECK(r.status == SolveStatus::feval_budget);
    CHECK(r.n_fun_evals <= 7);
    Vec g;
    CHECK(r.f_opt <= rosenbrock(x0, g));
}

TEST_CASE("identical inputs give identical results")
{
    Vec x0(2);
    x0 << 3.0, -4.0;
    const SolveResult a = lbfgsb_minimize(rosenbrock, x0, Vec::Constant(2, -5), Vec::Constant(2, 5));
    const SolveResult b = lbfgsb_minimize(rosenbrock, x0, Vec::Constant(2, -5), Vec::Constant(2, 5));
    CHECK(a.x_opt == b.x_opt);
    CHECK(a.n_fun_evals == b.n_fun_evals);
}

TEST_CASE("a wrong gradient ends in line-search failure without losing ground")
{
    auto f = [](const Vec& x, Vec& g) {
        g = -2.0 * x;
        return x.squaredNorm();
    };
    Vec x0 = Vec::Ones(3);
    const SolveResult r = lbfgsb_minimize(f, x0, {}, {});
    CHECK(r.status == SolveStatus::line_search_failure);
    CHECK(r.f_opt <= 3.0);
}

TEST_CASE("numerical errors inside the line search shrink the step")
{
    auto f = [](const Vec& x, Vec& g) {
        if (x[0] > 1.5) throw NumericalError(0, "diverged");
        g = Vec::Constant(1, 2.0 * (x[0] - 1.0));
        return (x[0] - 1.0) * (x[0] - 1.0);
    };
    Vec x0 = Vec::Constant(1, -30.0);
    const SolveResult r = lbfgsb_minimize(f, x0, {}, {});
    CHECK(std::abs(r.x_opt[0] - 1.0) < 1e-6);
}

TEST_CASE("non-finite start is rejected")
{
    auto f = [](const Vec&, Vec& g) {
        g = Vec::Zero(1);
        return NAN;
    };
    CHECK_THROWS_AS(lbfgsb_minimize(f, Vec::Zero(1), {}, {}), Error);
    LbfgsbOptions bad;
    bad.memory = 0;
    CHECK_THROWS_AS(lbfgsb_minimize(rosenbrock, Vec::Zero(2), {}, {}, bad), ConfigError);
}

TEST_CASE("adam follows the standard recurrence")
{
    auto f = [](const Vec& x, Vec& g) {
        g = 2.0 * x;
        return x.squaredNorm();
    };
    AdamOptions opts;
    opts.learning_rate = 0.1;
    opts.iters = 500;
    opts.track_best = false;
    const SolveResult r = adam_minimize(f, Vec::Ones(1), {}, {}, opts);

    double x = 1.0, m = 0.0, v = 0.0, last = x;
    for (int t = 1; t <= 500; ++t) {
        last = x;
        const double g = 2.0 * x;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mh = m / (1.0 - std::pow(0.9, t)), vh = v / (1.0 - std::pow(0.999, t));
        x -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    }
    CHECK(r.x_opt[0] == doctest::Approx(last).epsilon(1e-12));
    CHECK(std::abs(r.x_opt[0]) < 1e-2);
}

TEST_CASE("adam keeps the best iterate")
{
    auto f = [](const Vec& x, Vec& g) {
        g = 2.0 * x;
        return x.squaredNorm();
    };
    AdamOptions opts;
    opts.learning_rate = 0.5;
    opts.iters = 60;
    std::vector<double> seen;
    opts.callback = [&](const IterationInfo& i) { seen.push_back(i.f); };
    const SolveResult best = adam_minimize(f, Vec::Ones(1), {}, {}, opts);
    CHECK(best.f_opt == doctest::Approx(*std::min_element(seen.begin(), seen.end())));
    CHECK(best.f_opt <= seen.back());
}

TEST_CASE("adam projects onto the box")
{
    auto f = [](const Vec& x, Vec& g) {
        g = 2.0 * x;
        return x.squaredNorm();
    };
    AdamOptions opts;
    opts.learning_rate = 0.1;
    opts.iters = 300;
    const SolveResult r = adam_minimize(f, Vec::Ones(1), Vec::Constant(1, 0.5), Vec::Constant(1, 2.0), opts);
    CHECK(r.x_opt[0] == 0.5);
}

TEST_CASE("adam retreats from non-finite regions")
{
    auto f = [](const Vec& x, Vec& g) {
        if (x[0] < 0.3) return std::numeric_limits<double>::infinity();
        g = Vec::Constant(1, 1.0);
        return x[0];
    };
    AdamOptions opts;
    opts.learning_rate = 0.2;
    opts.iters = 200;
    const SolveResult r = adam_minimize(f, Vec::Ones(1), {}, {}, opts);
    CHECK(r.x_opt[0] >= 0.3);
    CHECK(r.x_opt[0] < 0.35);
    CHECK(r.status == SolveStatus::iteration_limit);

    auto never = [](const Vec&, Vec& g) {
        g = Vec::Zero(1);
        return NAN;
    };
    const SolveResult dead = adam_minimize(never, Vec::Ones(1), {}, {}, opts);
    CHECK(dead.status == SolveStatus::aborted);
    CHECK(dead.n_fun_evals == 50);
}
