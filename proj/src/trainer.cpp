#include "sysid/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "sysid/gradient.hpp"
#include "sysid/split.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sysid {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t start_seed(std::uint64_t seed, int start)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(start)};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

Vec draw(const ParamLayout& layout, const TrainConfig& cfg, std::mt19937_64& rng)
{
    std::normal_distribution<double> gauss(0.0, cfg.init_std);
    Vec v(layout.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = gauss(rng);
    for (int j = 0; j < layout.n_experiments(); ++j) {
        for (int i : layout.x0_index(j)) {
            if (i >= 0) v[i] = 0.0;
        }
    }
    const int n = layout.spec().n_x;
    const auto& a = layout.A_index();
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            const int i = a[static_cast<std::size_t>(r * n + c)];
            if (i >= 0) v[i] = r == c ? cfg.init_A_scale : 0.0;
        }
    }
    return v;
}

double safe_loss(const Vec& v, const ParamLayout& layout, const Dataset& data, const SaturationConfig& sat)
{
    try {
        const double f = loss_value(v, layout, data, sat);
        return std::isfinite(f) ? f : kInf;
    } catch (const NumericalError&) {
        return kInf;
    }
}

Vec best_of(const ParamLayout& layout, const Dataset& data, const TrainConfig& cfg, int n, std::mt19937_64& rng)
{
    Vec best;
    double f_best = kInf;
    for (int s = 0; s < n; ++s) {
        Vec v = draw(layout, cfg, rng);
        const double f = safe_loss(v, layout, data, cfg.sat);
        if (f < f_best) {
            f_best = f;
            best = std::move(v);
        }
    }
    if (best.size() == 0 && layout.size() > 0) throw NumericalError(0, "every presampled initial point diverged");
    if (best.size() == 0) best = Vec::Zero(0);
    return best;
}

struct Problem
{
    const ParamLayout& layout;
    const Dataset& data;
    const TrainConfig& cfg;
    GroupIndexSet groups;
    std::vector<int> x0_idx;
    std::vector<int> theta_idx;
};

SplitProblem make_split(const Problem& p)
{
    ValueGradFn f = [&p](const Vec& v, Vec& g) {
        LossGradient lg = loss_and_grad(v, p.layout, p.data, p.cfg.sat);
        g = std::move(lg.grad);
        return lg.value;
    };
    const RegularizationConfig& reg = p.cfg.reg;
    const int n = p.layout.size();
    if (reg.has_group()) {
        std::set<int> idx;
        if (reg.tau > 0.0) idx.insert(p.theta_idx.begin(), p.theta_idx.end());
        for (const auto& g : p.groups.groups) idx.insert(g.begin(), g.end());
        return build_group_lasso_split(f, n, reg, p.groups, {idx.begin(), idx.end()}, p.x0_idx);
    }
    if (reg.tau > 0.0) return build_elastic_net_split(f, n, reg, p.theta_idx, p.x0_idx);
    return build_elastic_net_split(f, n, reg, {}, p.x0_idx);
}

R2Report training_r2(const ModelParams& params, const ModelSpec& spec, const Dataset& data,
                     const SaturationConfig& sat)
{
    return evaluate(params, spec, data, X0Policy::from_fit, sat).r2;
}

struct StartResult
{
    StartSummary summary;
    Vec v;
};

StartResult run_start(const Problem& p, int start, const Dataset* leaderboard)
{
    const auto t0 = std::chrono::steady_clock::now();
    StartResult out;
    StartSummary& s = out.summary;
    s.start = start;
    const TrainConfig& cfg = p.cfg;
    try {
        std::mt19937_64 rng(start_seed(cfg.seed, start));
        Vec v;
        for (int attempt = 0;; ++attempt) {
            v = cfg.presample > 0 ? best_of(p.layout, p.data, cfg, cfg.presample, rng) : draw(p.layout, cfg, rng);
            if (std::isfinite(safe_loss(v, p.layout, p.data, cfg.sat))) break;
            if (attempt >= cfg.max_reinit) throw NumericalError(0, "initial point diverged after reinitialization");
            ++s.reinit;
        }

        AdamOptions adam = cfg.adam;
        LbfgsbOptions lbfgsb = cfg.lbfgsb;
        if (cfg.progress) {
            adam.callback = [&](const IterationInfo& info) { cfg.progress({start, "adam", info}); };
            lbfgsb.callback = [&](const IterationInfo& info) { cfg.progress({start, "lbfgsb", info}); };
        }
        ValueGradFn penalized = [&p](const Vec& x, Vec& g) {
            LossGradient lg = loss_and_grad(x, p.layout, p.data, p.cfg.sat);
            Vec rg;
            const double r = regularizer_subgradient(x, p.cfg.reg, p.groups, p.x0_idx, rg);
            g = lg.grad + rg;
            return lg.value + r;
        };
        if (adam.iters > 0) {
            const SolveResult warm = adam_minimize(penalized, v, {}, {}, adam);
            s.adam_status = warm.status;
            s.adam_evals = warm.n_fun_evals;
            if (std::isfinite(warm.f_opt)) v = warm.x_opt;
        }

        const SplitProblem split = make_split(p);
        const SolveResult res = lbfgsb_minimize(split.objective(), split.lift(v), split.lower(), split.upper(), lbfgsb);
        s.lbfgsb_status = res.status;
        s.lbfgsb_evals = res.n_fun_evals;
        v = split.recover(res.x_opt);

        s.loss = loss_value(v, p.layout, p.data, cfg.sat);
        s.objective = s.loss + regularizer_value(v, cfg.reg, p.groups, p.x0_idx);
        const ModelParams params = p.layout.unpack(v);
        s.r2_average = training_r2(params, p.layout.spec(), p.data, cfg.sat).average;
        s.selection_score = s.r2_average;
        if (cfg.selection == Selection::leaderboard) {
            s.selection_score =
                evaluate(params, p.layout.spec(), *leaderboard, X0Policy::ekf_rts, cfg.sat, cfg.leaderboard_ekf).r2.average;
        }
        if (!std::isfinite(s.loss) || !std::isfinite(s.r2_average) || !std::isfinite(s.selection_score)) {
            throw NumericalError(0, "non-finite final score");
        }
        s.ok = true;
        out.v = std::move(v);
    } catch (const std::exception& e) {
        s.ok = false;
        s.message = e.what();
    }
    if (cfg.timings) s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

bool better(const StartSummary& a, const StartSummary& b, Selection sel)
{
    if (sel == Selection::loss) return a.objective < b.objective;
    return a.selection_score > b.selection_score;
}

int count_above(const Vec& v, const GroupIndexSet& groups, double threshold)
{
    int n = 0;
    for (const auto& g : groups.groups) {
        double m = 0.0;
        for (int i : g) m = std::max(m, std::abs(v[i]));
        if (m > threshold) ++n;
    }
    return n;
}

int count_groups(const ModelParams& params, const ModelSpec& spec, GroupKind kind, double threshold)
{
    ModelSpec open = spec;
    open.mask = StructureMask{};
    const ParamLayout layout(open, params.n_experiments());
    return count_above(layout.pack(params), build_groups(layout, kind), threshold);
}

} // namespace

std::string_view to_string(X0Mode m)
{
    return m == X0Mode::fixed_zero ? "fixed_zero" : "free_per_experiment";
}

X0Mode x0_mode_from_string(std::string_view name)
{
    if (name == "free_per_experiment") return X0Mode::free_per_experiment;
    if (name == "fixed_zero") return X0Mode::fixed_zero;
    throw ConfigError("unknown x0 mode '" + std::string(name) + "'");
}

std::string_view to_string(Selection s)
{
    switch (s) {
    case Selection::r2: return "r2";
    case Selection::loss: return "loss";
    case Selection::leaderboard: return "leaderboard";
    }
    return "r2";
}

Selection selection_from_string(std::string_view name)
{
    if (name == "r2") return Selection::r2;
    if (name == "loss") return Selection::loss;
    if (name == "leaderboard") return Selection::leaderboard;
    throw ConfigError("unknown selection rule '" + std::string(name) + "'");
}

std::string_view to_string(X0Policy p)
{
    switch (p) {
    case X0Policy::from_fit: return "from_fit";
    case X0Policy::ekf_rts: return "ekf_rts";
    case X0Policy::refine: return "refine";
    }
    return "from_fit";
}

X0Policy x0_policy_from_string(std::string_view name)
{
    if (name == "from_fit") return X0Policy::from_fit;
    if (name == "ekf_rts") return X0Policy::ekf_rts;
    if (name == "refine") return X0Policy::refine;
    throw ConfigError("unknown x0 policy '" + std::string(name) + "'");
}

void TrainConfig::validate() const
{
    if (n_starts < 1) throw ConfigError("n_starts must be at least 1");
    if (!(init_std >= 0.0) || !std::isfinite(init_A_scale)) throw ConfigError("invalid initialization scale");
    if (!(zero_threshold > 0.0)) throw ConfigError("zero_threshold must be positive");
    if (presample < 0) throw ConfigError("presample must be non-negative");
    if (max_reinit < 0) throw ConfigError("max_reinit must be non-negative");
    if (jobs < 0) throw ConfigError("jobs must be non-negative");
    adam.validate();
    lbfgsb.validate();
    reg.validate();
}

ModelSpec training_spec(const ModelSpec& spec, const TrainConfig& cfg)
{
    ModelSpec s = spec;
    if (cfg.x0_mode == X0Mode::fixed_zero) s.mask.fix_x0 = true;
    return s;
}

Vec draw_initial(const ParamLayout& layout, const TrainConfig& cfg, std::uint64_t stream_seed)
{
    std::mt19937_64 rng(stream_seed);
    return draw(layout, cfg, rng);
}

Vec multi_start_presample(const ModelSpec& spec, const Dataset& data, const TrainConfig& cfg, int n_samples,
                          int start)
{
    if (n_samples < 1) throw ConfigError("n_samples must be at least 1");
    const ParamLayout layout(training_spec(spec, cfg), static_cast<int>(data.experiments.size()));
    std::mt19937_64 rng(start_seed(cfg.seed, start));
    return best_of(layout, data, cfg, n_samples, rng);
}

Sparsity count_sparsity(const Vec& v, const ParamLayout& layout, double threshold)
{
    Sparsity s;
    for (int i : layout.network_indices()) {
        ++s.network_entries;
        if (std::abs(v[i]) < threshold) ++s.network_zeros;
    }
    for (int i : layout.theta_indices()) {
        ++s.theta_entries;
        if (std::abs(v[i]) < threshold) ++s.theta_zeros;
    }
    return s;
}

int effective_order(const ModelParams& params, const ModelSpec& spec, double threshold)
{
    return count_groups(params, spec, GroupKind::state_groups, threshold);
}

int active_inputs(const ModelParams& params, const ModelSpec& spec, double threshold)
{
    if (spec.n_u == 0) return 0;
    return count_groups(params, spec, GroupKind::input_groups, threshold);
}

FitReport fit(const ModelSpec& spec, const Dataset& data_in, const TrainConfig& cfg, const Dataset* leaderboard)
{
    cfg.validate();
    spec.validate();
    data_in.validate();
    if (data_in.experiments.empty()) throw ConfigError("dataset has no experiments");
    if (data_in.n_u() != spec.n_u || data_in.n_y() != spec.n_y) {
        throw DimensionError("data", "channel counts differ from the model");
    }
    if (cfg.selection == Selection::leaderboard && leaderboard == nullptr) {
        throw ConfigError("leaderboard selection needs evaluation data");
    }
    cfg.sat.validate(spec.n_x);
    const auto t0 = std::chrono::steady_clock::now();

    FitReport report;
    Dataset data = data_in;
    Dataset board;
    if (cfg.auto_scale && !data.scaled) {
        fit_dataset_scaling(data_in, report.u_scaling, report.y_scaling);
        data = scale_dataset(data_in, report.u_scaling, report.y_scaling);
        if (leaderboard) board = scale_dataset(*leaderboard, report.u_scaling, report.y_scaling);
    } else {
        report.u_scaling = data.u_scaling;
        report.y_scaling = data.y_scaling;
        if (leaderboard) board = *leaderboard;
    }
    report.scaled = data.scaled;
    report.spec = training_spec(spec, cfg);

    const ParamLayout layout(report.spec, static_cast<int>(data.experiments.size()));
    Problem problem{layout, data, cfg, {}, layout.x0_indices(), layout.theta_indices()};
    if (cfg.reg.has_group()) problem.groups = build_groups(layout, cfg.reg.group_kind);
    const Dataset* board_ptr = leaderboard ? &board : nullptr;

    std::vector<StartResult> results(static_cast<std::size_t>(cfg.n_starts));
#ifdef _OPENMP
    if (cfg.jobs != 1 && cfg.n_starts > 1) {
        const int threads = cfg.jobs > 0 ? cfg.jobs : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
        for (int i = 0; i < cfg.n_starts; ++i) {
            results[static_cast<std::size_t>(i)] = run_start(problem, i, board_ptr);
        }
    } else
#endif
    {
        for (int i = 0; i < cfg.n_starts; ++i) results[static_cast<std::size_t>(i)] = run_start(problem, i, board_ptr);
    }

    int best = -1;
    for (int i = 0; i < cfg.n_starts; ++i) {
        const StartSummary& s = results[static_cast<std::size_t>(i)].summary;
        report.starts.push_back(s);
        if (!s.ok) continue;
        if (best < 0 || better(s, results[static_cast<std::size_t>(best)].summary, cfg.selection)) best = i;
    }
    if (best < 0) throw TrainingError("every start failed", report.starts);

    const StartResult& r = results[static_cast<std::size_t>(best)];
    report.best_start = best;
    report.best_params = layout.unpack(r.v);
    report.r2_train = training_r2(report.best_params, report.spec, data, cfg.sat);
    report.final_loss = r.summary.loss;
    report.final_objective = r.summary.objective;
    report.sparsity = count_sparsity(r.v, layout, cfg.zero_threshold);
    report.effective_order = effective_order(report.best_params, report.spec, cfg.zero_threshold);
    report.active_inputs = active_inputs(report.best_params, report.spec, cfg.zero_threshold);
    if (cfg.timings) report.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

EvalReport evaluate(const ModelParams& params, const ModelSpec& spec, const Dataset& data, X0Policy policy,
                    const SaturationConfig& sat, const EkfConfig& ekf, const LbfgsbOptions& refine)
{
    data.validate();
    params.check_dims(spec);
    if (data.experiments.empty()) throw ConfigError("dataset has no experiments");
    if (data.n_u() != spec.n_u || data.n_y() != spec.n_y) {
        throw DimensionError("data", "channel counts differ from the model");
    }
    const std::size_t M = data.experiments.size();
    if (policy == X0Policy::from_fit && params.x0.size() != M && params.x0.size() != 1) {
        throw DimensionError("x0", "model stores " + std::to_string(params.x0.size()) +
                                       " initial states, data has " + std::to_string(M) + " experiments");
    }
    EvalReport rep;
    Mat Y(data.total_samples(), spec.n_y), Yhat(data.total_samples(), spec.n_y);
    Eigen::Index row = 0;
    for (std::size_t j = 0; j < M; ++j) {
        const Experiment& e = data.experiments[j];
        Vec x0;
        if (policy == X0Policy::from_fit) {
            x0 = params.x0[params.x0.size() == 1 ? 0 : j];
        } else {
            x0 = ekf_rts_reconstruct(params, spec, e, sat, ekf).x0;
            if (policy == X0Policy::refine) x0 = refine_x0(params, spec, e, sat, x0, ekf.rho_x, refine).x0;
        }
        const Simulation sim = simulate_from(params, spec, e.U, sat, x0);
        Y.middleRows(row, e.length()) = e.Y;
        Yhat.middleRows(row, e.length()) = sim.outputs;
        row += e.length();
        rep.x0.push_back(std::move(x0));
    }
    rep.loss = mse_loss(Y, Yhat);
    rep.r2 = r2_score(Y, Yhat);
    return rep;
}

} // namespace sysid
