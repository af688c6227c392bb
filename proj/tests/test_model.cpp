#include <doctest.h>

#include <random>

#include "support/oracles.hpp"
#include "sysid/error.hpp"
#include "sysid/model.hpp"

using namespace sysid;

namespace {

ModelSpec scalar_linear()
{
    ModelSpec s;
    s.n_x = 1;
    s.n_u = 1;
    s.n_y = 1;
    return s;
}

ModelParams random_params(std::mt19937_64& rng, const ModelSpec& spec, int n_exp)
{
    ModelParams p = ModelParams::zeros(spec, n_exp);
    for (auto& x : p.x0) x = oracle::random_matrix(rng, spec.n_x, 1);
    p.A = oracle::random_matrix(rng, p.A.rows(), p.A.cols());
    p.B = oracle::random_matrix(rng, p.B.rows(), p.B.cols());
    p.C = oracle::random_matrix(rng, p.C.rows(), p.C.cols());
    p.D = oracle::random_matrix(rng, p.D.rows(), p.D.cols());
    for (auto* net : {&p.theta_x, &p.theta_y}) {
        for (auto& l : *net) {
            l.W = oracle::random_matrix(rng, l.W.rows(), l.W.cols());
            l.b = oracle::random_matrix(rng, l.b.size(), 1);
        }
    }
    return p;
}

} // namespace

TEST_CASE("pack orders x0, A, B, C and omits the masked D")
{
    ModelSpec spec = scalar_linear();
    ModelParams p = ModelParams::zeros(spec);
    p.A(0, 0) = 0.5;
    p.B(0, 0) = 1.0;
    p.C(0, 0) = 1.0;
    ParamLayout layout(spec, 1);
    const Vec v = layout.pack(p);
    REQUIRE(v.size() == 4);
    CHECK(v[0] == 0.0);
    CHECK(v[1] == 0.5);
    CHECK(v[2] == 1.0);
    CHECK(v[3] == 1.0);
}

TEST_CASE("pack rejects a block with the wrong shape")
{
    ModelSpec spec = scalar_linear();
    ModelParams p = ModelParams::zeros(spec);
    p.B = Mat::Zero(2, 1);
    ParamLayout layout(spec, 1);
    try {
        (void)layout.pack(p);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        CHECK(e.block() == "B");
    }
}

TEST_CASE("unpack and pack are inverse on random specs")
{
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 25; ++trial) {
        std::uniform_int_distribution<int> dim(1, 4), hid(0, 2), width(1, 5);
        ModelSpec spec;
        spec.n_x = dim(rng);
        spec.n_u = dim(rng) - 1;
        spec.n_y = dim(rng);
        spec.feedthrough = (trial % 2) == 0;
        for (int i = hid(rng); i > 0; --i) spec.fx_layers.push_back(width(rng));
        for (int i = hid(rng); i > 0; --i) spec.fy_layers.push_back(width(rng));
        if (trial % 3 == 0) spec.mask.A = BlockMask::diagonal(spec.n_x);
        const int n_exp = 1 + trial % 3;
        ParamLayout layout(spec, n_exp);
        const Vec v = oracle::random_matrix(rng, layout.size(), 1);
        const Vec back = layout.pack(layout.unpack(v));
        CHECK(back == v);

        const ModelParams p = random_params(rng, spec, n_exp);
        const ModelParams q = layout.unpack(layout.pack(p));
        CHECK(q.B == p.B);
        CHECK(q.C == p.C);
        for (std::size_t l = 0; l < p.theta_x.size(); ++l) CHECK(q.theta_x[l].W == p.theta_x[l].W);
    }
}

TEST_CASE("masked entries never enter the flat vector")
{
    ModelSpec spec;
    spec.n_x = 3;
    spec.n_u = 2;
    spec.n_y = 2;
    spec.feedthrough = true;
    spec.mask.A = BlockMask::diagonal(3);
    Mat Dfix = Mat::Zero(2, 2);
    spec.mask.D = BlockMask::fixed(Dfix);
    ParamLayout layout(spec, 1);
    CHECK(layout.size() == 3 + 3 + 6 + 6);
    for (int i : layout.D_index()) CHECK(i == -1);
    CHECK(layout.A_index()[1] == -1);
    CHECK(layout.A_index()[0] >= 0);
}

TEST_CASE("residual network counts match the robot structure")
{
    ModelSpec spec;
    spec.n_x = 12;
    spec.n_u = 6;
    spec.n_y = 6;
    spec.fx_layers = {36};
    spec.fy_layers = {24};
    ParamLayout full(spec, 1);
    CHECK(full.network_indices().size() == 1590);

    ModelParams lin = ModelParams::zeros(spec);
    spec.mask.A = BlockMask::fixed(lin.A);
    spec.mask.B = BlockMask::fixed(lin.B);
    spec.mask.C = BlockMask::fixed(lin.C);
    ParamLayout nets(spec, 1);
    CHECK(nets.network_indices().size() == 1590);
    CHECK(nets.size() == 1590 + 12);
}

TEST_CASE("zero model gives zero outputs")
{
    ModelSpec spec = scalar_linear();
    ModelParams p = ModelParams::zeros(spec);
    Mat U = Mat::Random(10, 1);
    const Simulation sim = simulate(p, spec, U, SaturationConfig{});
    CHECK(sim.outputs.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("scalar recurrence by hand")
{
    ModelSpec spec = scalar_linear();
    ModelParams p = ModelParams::zeros(spec);
    p.A(0, 0) = 0.5;
    p.B(0, 0) = 1.0;
    p.C(0, 0) = 1.0;
    Mat U(2, 1);
    U << 1, 1;
    const Simulation sim = simulate(p, spec, U, SaturationConfig{});
    CHECK(sim.states(0, 0) == 0.0);
    CHECK(sim.states(1, 0) == 1.0);
    CHECK(sim.outputs(0, 0) == 0.0);
    CHECK(sim.outputs(1, 0) == 1.0);
}

TEST_CASE("hard saturation pins an unstable state")
{
    ModelSpec spec = scalar_linear();
    ModelParams p = ModelParams::zeros(spec);
    p.A(0, 0) = 2.0;
    p.C(0, 0) = 1.0;
    p.x0[0] << 1.0;
    SaturationConfig sat;
    sat.bound = 1.0;
    const Simulation sim = simulate(p, spec, Mat::Zero(6, 1), sat);
    for (Eigen::Index k = 0; k < 6; ++k) CHECK(sim.states(k, 0) == 1.0);
}

TEST_CASE("non-finite trajectory reports the step")
{
    ModelSpec spec = scalar_linear();
    ModelParams p = ModelParams::zeros(spec);
    p.A(0, 0) = 1e200;
    p.C(0, 0) = 1.0;
    p.x0[0] << 1.0;
    SaturationConfig sat;
    sat.enabled = false;
    try {
        (void)simulate(p, spec, Mat::Zero(5, 1), sat);
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        CHECK(e.step() == 2);
    }
}

TEST_CASE("soft saturation values")
{
    CHECK(std::abs(soft_sat(0.0, 1.0, 10.0)) < 1e-15);
    CHECK(std::abs(soft_sat(0.0, 3.0, 0.5)) < 1e-15);
    // s + (log(1 + e^{-g(x+s)}) - log(1 + e^{-g(x-s)})) / g at x=10, s=1, g=100
    const double direct = 1.0 + (std::log1p(std::exp(-1100.0)) - std::log1p(std::exp(-900.0))) / 100.0;
    CHECK(std::abs(soft_sat(10.0, 1.0, 100.0) - 1.0) < 1e-3);
    CHECK(soft_sat(10.0, 1.0, 100.0) == doctest::Approx(direct).epsilon(1e-14));
    CHECK(std::isfinite(soft_sat(1e6, 1.0, 1e3)));
    CHECK(std::isfinite(soft_sat(-1e6, 1.0, 1e3)));
}

TEST_CASE("soft saturation approaches the clamp as gamma grows")
{
    auto deviation = [](double gamma) {
        double worst = 0.0;
        for (int i = 0; i <= 600; ++i) {
            const double x = -3.0 + 0.01 * i;
            const double clamp = std::min(1.0, std::max(-1.0, x));
            worst = std::max(worst, std::abs(soft_sat(x, 1.0, gamma) - clamp));
        }
        return worst;
    };
    const double d5 = deviation(5.0), d20 = deviation(20.0), d50 = deviation(50.0);
    CHECK(d50 < 0.02);
    CHECK(d20 < d5);
    CHECK(d50 < d20);
}

TEST_CASE("soft saturation derivative matches finite differences")
{
    for (double x : {-2.5, -1.0, -0.3, 0.0, 0.7, 1.0, 4.0}) {
        const double h = 1e-6;
        const double fd = (soft_sat(x + h, 1.5, 3.0) - soft_sat(x - h, 1.5, 3.0)) / (2 * h);
        CHECK(soft_sat_derivative(x, 1.5, 3.0) == doctest::Approx(fd).epsilon(1e-7));
    }
}

TEST_CASE("linear simulation matches the convolution formula")
{
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        ModelSpec spec;
        spec.n_x = 4;
        spec.n_u = 2;
        spec.n_y = 3;
        spec.feedthrough = true;
        ModelParams p = random_params(rng, spec, 1);
        p.A = oracle::random_stable(rng, 4, 0.95);
        const int N = 50;
        const Mat U = oracle::random_matrix(rng, N, 2);
        const Simulation sim = simulate(p, spec, U, SaturationConfig{});
        for (int k = 0; k < N; ++k) {
            Mat Ak = Mat::Identity(4, 4);
            for (int i = 0; i < k; ++i) Ak = p.A * Ak;
            Vec x = Ak * p.x0[0];
            for (int j = 0; j < k; ++j) {
                Mat Ap = Mat::Identity(4, 4);
                for (int i = 0; i < k - 1 - j; ++i) Ap = p.A * Ap;
                x += Ap * p.B * U.row(j).transpose();
            }
            const Vec y = p.C * x + p.D * U.row(k).transpose();
            CHECK((sim.states.row(k).transpose() - x).norm() <= 1e-10 * std::max(1.0, x.norm()));
            CHECK((sim.outputs.row(k).transpose() - y).norm() <= 1e-10 * std::max(1.0, y.norm()));
        }
    }
}

TEST_CASE("saturation is inactive when the trajectory stays inside the band")
{
    std::mt19937_64 rng(3);
    ModelSpec spec;
    spec.n_x = 3;
    spec.n_u = 1;
    spec.n_y = 1;
    spec.fx_layers = {5};
    spec.activation = Activation::tanh;
    ModelParams p = random_params(rng, spec, 1);
    p.A = oracle::random_stable(rng, 3, 0.5);
    for (auto& l : p.theta_x) l.W *= 0.1;
    const Mat U = oracle::random_matrix(rng, 40, 1);
    SaturationConfig off;
    off.enabled = false;
    const Simulation free_run = simulate(p, spec, U, off);
    SaturationConfig on;
    on.bound = free_run.states.cwiseAbs().maxCoeff() * 1.01;
    const Simulation clamped = simulate(p, spec, U, on);
    CHECK(clamped.outputs == free_run.outputs);
}

TEST_CASE("spec validation")
{
    ModelSpec s;
    s.n_x = 0;
    CHECK_THROWS_AS(s.validate(), Error);
    ModelSpec w;
    w.fx_layers = {0};
    CHECK_THROWS(w.validate());
    SaturationConfig sat;
    sat.bound = -1.0;
    CHECK_THROWS(sat.validate(1));
}

TEST_CASE("state Jacobian matches finite differences")
{
    std::mt19937_64 rng(5);
    ModelSpec spec;
    spec.n_x = 3;
    spec.n_u = 2;
    spec.n_y = 2;
    spec.fx_layers = {6};
    spec.fy_layers = {4};
    spec.feedthrough = true;
    const ModelParams p = random_params(rng, spec, 1);
    const Vec x = oracle::random_matrix(rng, 3, 1);
    const Vec u = oracle::random_matrix(rng, 2, 1);
    SaturationConfig sat;
    sat.mode = SaturationMode::soft;
    sat.bound = 5.0;
    const Mat J = state_jacobian(p, spec, x, u, sat);
    const Mat H = output_jacobian(p, spec, x, u);
    for (int i = 0; i < 3; ++i) {
        Vec a = x, b = x;
        a[i] += 1e-6;
        b[i] -= 1e-6;
        const Vec col = (state_update(p, spec, a, u, sat) - state_update(p, spec, b, u, sat)) / 2e-6;
        const Vec hcol = (output_map(p, spec, a, u) - output_map(p, spec, b, u)) / 2e-6;
        CHECK((J.col(i) - col).norm() < 1e-7);
        CHECK((H.col(i) - hcol).norm() < 1e-7);
    }
}
