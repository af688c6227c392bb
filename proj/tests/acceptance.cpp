// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

#include "cli.hpp"
#include "support/oracles.hpp"
#include "sysid/datasets.hpp"
#include "sysid/error.hpp"
#include "sysid/gradient.hpp"
#include "sysid/io.hpp"
#include "sysid/optimizers.hpp"
#include "sysid/serialization.hpp"
#include "sysid/split.hpp"
#include "sysid/state_estimation.hpp"

namespace fs = std::filesystem;
using namespace sysid;

namespace {

struct Outcome
{
    bool pass = false;
    std::string detail;
};

std::string num(double v, int prec = 3)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    return buf;
}

fs::path work_dir()
{
    static const fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / ("sysid_acceptance_" + std::to_string(::getpid()));
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

std::string in_work(const std::string& name)
{
    return (work_dir() / name).string();
}

int sysid_cmd(std::vector<std::string> args, std::string* out = nullptr)
{
    args.insert(args.begin(), "sysid");
    std::ostringstream o, e;
    const int code = cli::run(args, o, e);
    if (out) *out = o.str();
    if (code != 0) std::cerr << e.str();
    return code;
}

struct Row
{
    double penalty = 0.0;
    std::string status;
    double r2 = 0.0;
    int order = 0;
    int inputs = 0;
};

std::vector<Row> parse_sweep(const std::string& tsv)
{
    std::vector<Row> rows;
    std::istringstream in(tsv);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::istringstream f(line);
        Row r;
        std::string penalty, r2, order, inputs;
        std::getline(f, penalty, '\t');
        std::getline(f, r.status, '\t');
        std::getline(f, r2, '\t');
        std::getline(f, order, '\t');
        std::getline(f, inputs, '\t');
        r.penalty = std::stod(penalty);
        r.r2 = std::stod(r2);
        r.order = std::stoi(order);
        r.inputs = std::stoi(inputs);
        rows.push_back(r);
    }
    return rows;
}

Mat random_mat(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double s = 1.0)
{
    return oracle::random_matrix(rng, r, c, s);
}

Outcome gradient_correctness()
{
    std::mt19937_64 rng(101);
    SaturationConfig sat;
    double worst = 0.0;
    int models = 0;
    while (models < 20) {
        ModelSpec spec;
        spec.n_x = 1 + static_cast<int>(rng() % 4);
        spec.n_u = 1 + static_cast<int>(rng() % 3);
        spec.n_y = 1 + static_cast<int>(rng() % 3);
        spec.feedthrough = rng() % 2;
        if (models % 2) {
            spec.fx_layers = {3 + static_cast<int>(rng() % 5)};
            spec.fy_layers = {2 + static_cast<int>(rng() % 4)};
            spec.activation = models % 4 == 1 ? Activation::swish : Activation::tanh;
        }
        const int n_exp = 1 + static_cast<int>(rng() % 2);
        const ParamLayout layout(spec, n_exp);
        Dataset d;
        for (int j = 0; j < n_exp; ++j) {
            const int N = 20 + static_cast<int>(rng() % 31);
            d.experiments.push_back({random_mat(rng, N, spec.n_u), random_mat(rng, N, spec.n_y)});
        }
        ModelParams p = layout.unpack(random_mat(rng, layout.size(), 1, 0.3));
        p.A = oracle::random_stable(rng, spec.n_x, 0.8);
        const Vec v = layout.pack(p);
        const LossGradient lg = loss_and_grad(v, layout, d, sat);
        const Vec fd =
            oracle::central_difference([&](const Vec& w) { return loss_value(w, layout, d, sat); }, v, 1e-6);
        worst = std::max(worst, oracle::max_rel_error(lg.grad, fd, 1e-4));
        ++models;
    }
    return {worst < 1e-5, "max relative error " + num(worst) + " over " + std::to_string(models) + " models"};
}

ValueGradFn quadratic(const Mat& Q, const Vec& q)
{
    return [Q, q](const Vec& x, Vec& g) {
        g = Q * x + q;
        return 0.5 * x.dot(Q * x) + q.dot(x);
    };
}

std::vector<int> all_indices(int n)
{
    std::vector<int> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
    return v;
}

LbfgsbOptions tight()
{
    LbfgsbOptions o;
    o.ftol = 0.0;
    o.grad_tol = 1e-12;
    o.max_fun_evals = 5000;
    return o;
}

Outcome splitting_equivalence()
{
    std::mt19937_64 rng(202);
    double worst_gap = 0.0, worst_comp = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 8);
        const Mat R = random_mat(rng, n + 2, n);
        const Mat Q = R.transpose() * R + 0.05 * Mat::Identity(n, n);
        const Vec q = random_mat(rng, n, 1, 2.0);
        RegularizationConfig cfg;
        cfg.tau = trial % 2 ? 1.0 : 0.1;
        const Vec ref = oracle::prox_gradient(Q, q, cfg.tau, {}, 0.0);
        const SplitProblem p = build_elastic_net_split(quadratic(Q, q), n, cfg, all_indices(n));
        const SolveResult r = lbfgsb_minimize(p.objective(), p.lift(Vec::Zero(n)), p.lower(), p.upper(), tight());
        const Vec x = p.recover(r.x_opt);
        auto objective = [&](const Vec& v) { return 0.5 * v.dot(Q * v) + q.dot(v) + cfg.tau * v.lpNorm<1>(); };
        const double gap = std::abs(objective(x) - objective(ref)) / std::max(1.0, std::abs(objective(ref)));
        worst_gap = std::max(worst_gap, gap);
        worst_comp = std::max(worst_comp, p.complementarity(r.x_opt));
    }
    return {worst_gap <= 1e-6 && worst_comp <= 1e-8,
            "objective gap " + num(worst_gap) + ", complementarity " + num(worst_comp) + " over 50 problems"};
}

Outcome group_annihilation()
{
    RegularizationConfig cfg;
    cfg.tau_g = 1.0;
    cfg.group_kind = GroupKind::state_groups;
    GroupIndexSet g;
    g.groups = {{0, 1}};
    auto pull = [](Vec c) {
        return ValueGradFn([c](const Vec& x, Vec& grad) {
            grad = x - c;
            return 0.5 * grad.squaredNorm();
        });
    };
    Vec c(2);
    c << 3.0, 4.0;
    Vec expected(2);
    expected << 2.4, 3.2;
    const SplitProblem big = build_group_lasso_split(pull(c), 2, cfg, g, {0, 1});
    const Vec xb = big.recover(lbfgsb_minimize(big.objective(), big.lift(Vec::Zero(2)), big.lower(), big.upper(),
                                               tight()).x_opt);
    const SplitProblem small = build_group_lasso_split(pull(c / 10.0), 2, cfg, g, {0, 1});
    const Vec xs = small.recover(lbfgsb_minimize(small.objective(), small.lift(Vec::Ones(2)), small.lower(),
                                                 small.upper(), tight()).x_opt);
    const double e1 = (xb - expected).lpNorm<Eigen::Infinity>();
    const double e2 = xs.lpNorm<Eigen::Infinity>();
    return {e1 <= 1e-6 && e2 <= 1e-6, "shrink error " + num(e1) + ", annihilated norm " + num(e2)};
}

Outcome solver_sanity()
{
    bool ok = true;
    std::string detail;
    auto run_all = [&](std::vector<Vec>& xs) {
        auto bounded = [](const Vec& x, Vec& g) {
            g = 2.0 * (x.array() - 2.0).matrix();
            return (x.array() - 2.0).square().sum();
        };
        LbfgsbOptions full;
        full.ftol = 0.0;
        const SolveResult a = lbfgsb_minimize(bounded, Vec::Zero(1), Vec::Constant(1, -1e300), Vec::Ones(1), full);
        const bool a_ok = a.x_opt[0] == 1.0 && std::abs(a.f_opt - 1.0) < 1e-12 && a.projected_grad_norm == 0.0;

        auto rosen = [](const Vec& x, Vec& g) {
            const double p = 1.0 - x[0], s = x[1] - x[0] * x[0];
            g.resize(2);
            g[0] = -2.0 * p - 400.0 * x[0] * s;
            g[1] = 200.0 * s;
            return p * p + 100.0 * s * s;
        };
        Vec x0(2);
        x0 << -1.2, 1.0;
        const SolveResult b = lbfgsb_minimize(rosen, x0, Vec::Constant(2, -10), Vec::Constant(2, 10), full);
        const bool b_ok = (b.x_opt - Vec::Ones(2)).lpNorm<Eigen::Infinity>() < 1e-6 && b.f_opt < 1e-12;

        std::mt19937_64 rng(404);
        const int n = 10;
        const Mat R = random_mat(rng, n, n);
        const Mat Q = R.transpose() * R + 0.5 * Mat::Identity(n, n);
        Vec target = random_mat(rng, n, 1, 0.3);
        for (int i = 0; i < n; i += 2) target[i] = i % 4 == 0 ? 3.0 : -3.0;
        const Vec q = -Q * target;
        const Vec l = Vec::Constant(n, -1.0), u = Vec::Constant(n, 1.0);
        const Vec ref = oracle::box_qp_enumerate(Q, q, l, u);
        const SolveResult c = lbfgsb_minimize(quadratic(Q, q), Vec::Zero(n), l, u, full);
        const double qp_err = (c.x_opt - ref).lpNorm<Eigen::Infinity>();
        const bool c_ok = qp_err < 1e-6;

        ok = ok && a_ok && b_ok && c_ok;
        detail = std::string("bound ") + (a_ok ? "ok" : "FAIL") + ", Rosenbrock " + (b_ok ? "ok" : "FAIL") +
                 ", QP error " + num(qp_err);
        xs = {a.x_opt, b.x_opt, c.x_opt};
    };
    std::vector<Vec> first, second;
    run_all(first);
    run_all(second);
    const bool same = first == second;
    return {ok && same, detail + (same ? ", repeat identical" : ", repeat DIFFERS")};
}

const char* kOrderConfig = R"({
  "model": {"n_x": 6, "n_u": 2, "n_y": 2},
  "train": {"n_starts": 10, "seed": 1, "auto_scale": true,
            "adam": {"iters": 1000}, "lbfgsb": {"max_fun_evals": 1000}},
  "regularization": {"rho_theta": 1e-3, "rho_x": 1e-3, "tau": 1e-16, "epsilon": 1e-16, "groups": "state_groups"}
})";

Outcome order_reduction()
{
    std::ofstream(in_work("order_config.json")) << kOrderConfig;
    if (sysid_cmd({"generate", "order_reduction", "--seed", "1", "--out", in_work("order.csv")}) != 0) {
        return {false, "generate failed"};
    }
    if (sysid_cmd({"fit", "--config", in_work("order_config.json"), "--data", in_work("order.csv"), "--model",
                   in_work("order_model.json"), "--report", in_work("order_report.json")}) != 0) {
        return {false, "fit failed"};
    }
    const Json rep = Json::parse(read_file(in_work("order_report.json")));
    const double r2 = rep["r2_train"]["average"].get<double>();
    std::string tsv;
    if (sysid_cmd({"sweep", "--config", in_work("order_config.json"), "--data", in_work("order.csv"), "--param", "tau_g",
                   "--grid", "1e-4,1e-3,1e-2,1e-1,1"},
                  &tsv) != 0) {
        return {false, "sweep failed"};
    }
    const auto rows = parse_sweep(tsv);
    std::string orders;
    for (const auto& r : rows) orders += (orders.empty() ? "" : ",") + std::to_string(r.order);
    const bool shrinks = rows.size() == 5 && rows.back().order <= rows.front().order;
    const bool annihilated = rows.size() == 5 && rows.back().status == "ok" && rows.back().order < 6;
    return {r2 >= 95.0 && shrinks && annihilated,
            "R2 " + num(r2, 5) + " at tau_g=0, orders over tau_g 1e-4..1: " + orders};
}

Outcome input_selection()
{
    std::ofstream(in_work("inputs_config.json")) << R"({
      "model": {"n_x": 3, "n_u": 10, "n_y": 1},
      "train": {"n_starts": 10, "seed": 1, "auto_scale": true,
                "adam": {"iters": 1000}, "lbfgsb": {"max_fun_evals": 1000}},
      "regularization": {"rho_theta": 1e-8, "rho_x": 1e-8, "tau": 1e-16, "epsilon": 1e-16, "groups": "input_groups"}
    })";
    if (sysid_cmd({"generate", "input_selection", "--seed", "1", "--out", in_work("inputs.csv")}) != 0) {
        return {false, "generate failed"};
    }
    if (sysid_cmd({"fit", "--config", in_work("inputs_config.json"), "--data", in_work("inputs.csv"), "--model",
                   in_work("inputs_model.json"), "--report", in_work("inputs_report.json")}) != 0) {
        return {false, "fit failed"};
    }
    const double base = Json::parse(read_file(in_work("inputs_report.json")))["r2_train"]["average"].get<double>();
    std::string tsv;
    if (sysid_cmd({"sweep", "--config", in_work("inputs_config.json"), "--data", in_work("inputs.csv"), "--param",
                   "tau_g", "--grid", "1e-3,1e-2,1e-1,1"},
                  &tsv) != 0) {
        return {false, "sweep failed"};
    }
    std::string listing;
    bool found = false;
    for (const auto& r : parse_sweep(tsv)) {
        listing += " " + num(r.penalty) + ":" + std::to_string(r.inputs) + "/" + num(r.r2, 4);
        if (r.status == "ok" && r.inputs == 5 && r.r2 >= base - 2.0) found = true;
    }
    return {found, "unpenalized R2 " + num(base, 5) + "; tau_g:inputs/R2" + listing};
}

Outcome causal_effects()
{
    std::ofstream(in_work("causal_config.json")) << R"({
      "model": {"n_x": 10},
      "train": {"n_starts": 10, "seed": 1, "auto_scale": true,
                "adam": {"iters": 1000}, "lbfgsb": {"max_fun_evals": 1000}},
      "regularization": {"rho_theta": 1e-4, "rho_x": 0.01}
    })";
    if (sysid_cmd({"generate", "causal", "--seed", "1", "--out", in_work("causal.csv")}) != 0) {
        return {false, "generate failed"};
    }
    if (sysid_cmd({"causal", "--config", in_work("causal_config.json"), "--data", in_work("causal.csv"), "--out",
                   in_work("causal.tsv"), "--report", in_work("causal_report.json")}) != 0) {
        return {false, "causal fit failed"};
    }
    const Json rep = Json::parse(read_file(in_work("causal_report.json")));
    bool ok = true;
    std::string scores;
    for (const auto& c : rep["causal"]["channels"]) {
        const int ch = c["channel"].get<int>();
        const double s = c["r2"].get<double>();
        scores += (scores.empty() ? "" : " ") + num(s, 4);
        ok = ok && (ch <= 5 ? s >= 90.0 : s <= 30.0);
        ok = ok && (c["role"] == (ch <= 5 ? "output" : "input"));
    }
    return {ok && rep["causal"]["channels"].size() == 10, "channel R2: " + scores};
}

Outcome ekf_rts()
{
    std::mt19937_64 rng(808);
    double worst_oracle = 0.0, worst_recovery = 0.0, worst_asym = 0.0, min_eig = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const int nx = 1 + trial % 4, nu = 1 + trial % 2, ny = 1 + trial % 3;
        ModelSpec spec;
        spec.n_x = nx;
        spec.n_u = nu;
        spec.n_y = ny;
        spec.feedthrough = true;
        ModelParams p = ModelParams::zeros(spec);
        p.A = oracle::random_stable(rng, nx, 0.9);
        p.B = random_mat(rng, nx, nu);
        p.C = random_mat(rng, ny, nx);
        p.D = random_mat(rng, ny, nu, 0.3);
        SaturationConfig none;
        none.enabled = false;

        Experiment noisy{random_mat(rng, 60, nu), random_mat(rng, 60, ny)};
        EkfConfig one;
        one.Q = 0.05 * Mat::Identity(nx, nx);
        one.R = 0.3 * Mat::Identity(ny, ny);
        one.P0 = 2.0 * Mat::Identity(nx, nx);
        one.x0_init = random_mat(rng, nx, 1);
        const Reconstruction r1 = ekf_rts_reconstruct(p, spec, noisy, none, one, true);
        const auto ref = oracle::textbook_rts(p.A, p.B, p.C, p.D, one.Q, one.R, one.x0_init, one.P0, noisy.U, noisy.Y);
        for (std::size_t k = 0; k < ref.size(); ++k) {
            worst_oracle = std::max(worst_oracle, (r1.trace[0].x_smooth[k] - ref[k]).lpNorm<Eigen::Infinity>());
        }

        const Vec x0 = random_mat(rng, nx, 1);
        Experiment clean;
        clean.U = random_mat(rng, 200, nu);
        clean.Y = simulate_from(p, spec, clean.U, none, x0).outputs;
        EkfConfig ten;
        ten.epochs = 10;
        const Reconstruction r10 = ekf_rts_reconstruct(p, spec, clean, none, ten, true);
        worst_recovery = std::max(worst_recovery, (r10.x0 - x0).norm());
        for (const auto& t : r10.trace) {
            for (const auto* fam : {&t.P_pred, &t.P_filt, &t.P_next, &t.P_smooth}) {
                for (const Mat& P : *fam) {
                    worst_asym = std::max(worst_asym, (P - P.transpose()).cwiseAbs().maxCoeff());
                    min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Mat>(P).eigenvalues().minCoeff());
                }
            }
        }
    }
    const bool ok = worst_oracle <= 1e-8 && worst_recovery <= 1e-2 && worst_asym <= 1e-10 && min_eig >= -1e-8;
    return {ok, "oracle gap " + num(worst_oracle) + ", x0 error " + num(worst_recovery) + ", asymmetry " +
                    num(worst_asym) + ", min eigenvalue " + num(min_eig)};
}

Outcome p_step_prediction()
{
    ModelSpec spec;
    spec.n_x = 4;
    spec.n_u = 2;
    spec.n_y = 2;
    spec.feedthrough = true;
    SaturationConfig none;
    none.enabled = false;
    const LinearSystem sys = random_stable_system(909, 4, 2, 2, 0.9);
    ModelParams p = ModelParams::zeros(spec);
    p.A = sys.A;
    p.B = sys.B;
    p.C = sys.C;
    p.D = sys.D;

    const Dataset noisy = simulate_linear(sys, 910, 1000, 0.3);
    PredictorConfig cfg;
    cfg.Qx = 0.09 * Mat::Identity(4, 4);
    cfg.R = 0.09 * Mat::Identity(2, 2);
    const PredictionReport horizon = ekf_output_disturbance_predict(p, spec, noisy.experiments[0], none, 10, cfg);
    const double r1 = horizon.r2_average.front(), r10 = horizon.r2_average.back();

    Experiment biased = simulate_linear(sys, 911, 1000, 0.01).experiments[0];
    biased.Y.col(0).array() += 3.0;
    biased.Y.col(1).array() -= 2.0;
    PredictorConfig plain;
    plain.output_disturbance = false;
    const double with = ekf_output_disturbance_predict(p, spec, biased, none, 1).r2_average[0];
    const double without = ekf_output_disturbance_predict(p, spec, biased, none, 1, plain).r2_average[0];
    return {r1 > r10 && with > without, "R2(p=1) " + num(r1, 5) + " vs R2(p=10) " + num(r10, 5) +
                                            "; biased 1-step R2 " + num(with, 5) + " vs " + num(without, 5) +
                                            " without disturbance model"};
}

Outcome reproducibility()
{
    std::ofstream(in_work("repro_config.json")) << R"({
      "model": {"n_x": 4, "n_u": 2, "n_y": 2, "fx_layers": [6], "activation": "tanh"},
      "train": {"n_starts": 3, "seed": 7, "auto_scale": true, "adam": {"iters": 300}, "lbfgsb": {"max_fun_evals": 300}},
      "regularization": {"rho_theta": 1e-4, "rho_x": 1e-4, "tau": 1e-3}
    })";
    if (sysid_cmd({"generate", "order_reduction", "--seed", "5", "--samples", "500", "--out", in_work("repro.csv")}) != 0) {
        return {false, "generate failed"};
    }
    for (const char* tag : {"a", "b"}) {
        if (sysid_cmd({"fit", "--config", in_work("repro_config.json"), "--data", in_work("repro.csv"), "--model",
                       in_work(std::string("repro_model_") + tag + ".json"), "--report",
                       in_work(std::string("repro_report_") + tag + ".json")}) != 0) {
            return {false, "fit failed"};
        }
    }
    const std::string a = read_file(in_work("repro_report_a.json"));
    const std::string b = read_file(in_work("repro_report_b.json"));
    const bool models = read_file(in_work("repro_model_a.json")) == read_file(in_work("repro_model_b.json"));
    return {a == b && models, std::to_string(a.size()) + "-byte reports " + (a == b ? "identical" : "DIFFER") +
                                  ", models " + (models ? "identical" : "DIFFER")};
}

} // namespace

int main()
{
    struct Criterion
    {
        const char* id;
        const char* name;
        std::function<Outcome()> run;
        double budget_seconds = 0.0;
    };
    const std::vector<Criterion> criteria = {
        {"AC1", "gradient correctness", gradient_correctness, 10.0},
        {"AC2", "splitting equivalence", splitting_equivalence, 30.0},
        {"AC3", "group annihilation", group_annihilation},
        {"AC4", "solver sanity", solver_sanity},
        {"AC5", "order reduction", order_reduction, 300.0},
        {"AC6", "input selection", input_selection},
        {"AC7", "causal effects", causal_effects},
        {"AC8", "EKF+RTS reconstruction", ekf_rts},
        {"AC9", "p-step prediction", p_step_prediction},
        {"AC10", "reproducibility", reproducibility},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.budget_seconds > 0.0 && secs >= c.budget_seconds) {
            o.pass = false;
            o.detail += ", over the " + num(c.budget_seconds) + " s budget";
        }
        if (!o.pass) ++failed;
        std::cout << c.id << " " << (o.pass ? "PASS" : "FAIL") << " " << c.name << ": " << o.detail << " ("
                  << num(secs, 3) << " s)" << std::endl;
    }
    fs::remove_all(work_dir());
    std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed"))
              << std::endl;
    return failed ? 1 : 0;
}
