#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>

#include "sysid/datasets.hpp"
#include "sysid/error.hpp"
#include "sysid/io.hpp"
#include "sysid/serialization.hpp"
#include "sysid/state_estimation.hpp"
#include "sysid/trainer.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sysid::cli {

namespace {

struct Options
{
    std::string config;
    std::string data;
    std::string model;
    std::string report;
    std::string out;
    std::string table;
    std::string kind;
    std::string policy = "from_fit";
    std::string param;
    std::vector<double> grid;
    std::vector<Eigen::Index> boundaries;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int samples = 0;
    double noise = -1.0;
    int jobs = 0;
    int horizon = 0;
    double threshold = 50.0;
    bool timings = false;
    bool verbose = false;
    bool refine = false;
};

class Usage : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

RunConfig load_config(const Options& o)
{
    RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
    if (!o.data.empty()) cfg.data.train = o.data;
    if (!o.boundaries.empty()) cfg.data.boundaries = o.boundaries;
    if (o.seed_set) cfg.train.seed = o.seed;
    cfg.train.jobs = o.jobs;
    cfg.train.timings = o.timings;
    return cfg;
}

Dataset load_data(const std::string& path, const std::vector<Eigen::Index>& boundaries)
{
    if (path.empty()) throw Usage("no data file given (--data or data.train in the config)");
    if (!boundaries.empty()) return load_csv(path, boundaries);
    return import_dataset(path);
}

void check_channels(const Dataset& d, const ModelSpec& spec)
{
    if (d.n_u() != spec.n_u || d.n_y() != spec.n_y) {
        throw Usage("data has " + std::to_string(d.n_u()) + " inputs and " + std::to_string(d.n_y()) +
                    " outputs, the model expects " + std::to_string(spec.n_u) + " and " +
                    std::to_string(spec.n_y));
    }
}

void emit(const std::string& path, const std::string& text, std::ostream& out)
{
    if (path.empty() || path == "-") out << text;
    else write_file_atomic(path, text);
}

void attach_progress(TrainConfig& t, std::ostream& err, std::mutex& mu)
{
    t.progress = [&err, &mu](const StartProgress& p) {
        if (p.info.iter % 100 != 0) return;
        std::lock_guard<std::mutex> lock(mu);
        err << "start " << p.start << " " << p.phase << " iter " << p.info.iter << " f " << p.info.f
            << " pg " << p.info.projected_grad_norm << "\n";
    };
}

std::string fmt(double v)
{
    return format_double(v);
}

int cmd_generate(const Options& o, std::ostream& out)
{
    if (o.out.empty()) throw Usage("--out is required");
    GeneratedData g;
    if (o.kind == "order_reduction") {
        g = gen_order_reduction(o.seed, o.samples > 0 ? o.samples : 2000, o.noise >= 0 ? o.noise : 0.01);
    } else if (o.kind == "input_selection") {
        g = gen_input_selection(o.seed, o.samples > 0 ? o.samples : 10000, o.noise >= 0 ? o.noise : 0.01);
    } else {
        g = gen_causal(o.seed, o.samples > 0 ? o.samples : 1000, o.noise >= 0 ? o.noise : 0.05);
    }
    export_dataset(g.data, o.out);
    out << "wrote " << g.data.total_samples() << " rows to " << o.out << "\n";
    return ok;
}

int cmd_fit(const Options& o, std::ostream& out, std::ostream& err)
{
    if (o.model.empty()) throw Usage("--model is required");
    RunConfig cfg = load_config(o);
    const Dataset data = load_data(cfg.data.train, cfg.data.boundaries);
    check_channels(data, cfg.model);
    Dataset board;
    if (cfg.train.selection == Selection::leaderboard) {
        if (cfg.data.test.empty()) throw Usage("leaderboard selection needs data.test");
        board = load_data(cfg.data.test, {});
        check_channels(board, cfg.model);
    }
    std::mutex mu;
    if (o.verbose) attach_progress(cfg.train, err, mu);

    FitReport r;
    try {
        r = fit(cfg.model, data, cfg.train, cfg.train.selection == Selection::leaderboard ? &board : nullptr);
    } catch (const TrainingError& e) {
        emit(o.report, dump(failure_report_json(e.what(), e.starts(), cfg, o.timings)), out);
        err << "fit failed: " << e.what() << "\n";
        for (const auto& s : e.starts()) err << "  start " << s.start << ": " << s.message << "\n";
        return training_failure;
    }
    save_model(fitted_model(r, cfg.train.sat), o.model);
    emit(o.report, dump(fit_report_json(r, cfg, o.timings)), out);
    if (!o.report.empty()) {
        out << "R2 " << fmt(r.r2_train.average) << " loss " << fmt(r.final_loss) << " order "
            << r.effective_order << " inputs " << r.active_inputs << "\n";
    }
    return ok;
}

Dataset scaled_for(const FittedModel& m, const Dataset& raw)
{
    return m.scaled ? scale_dataset(raw, m.u_scaling, m.y_scaling) : raw;
}

int cmd_eval(const Options& o, std::ostream& out)
{
    if (o.model.empty()) throw Usage("--model is required");
    const RunConfig cfg = load_config(o);
    const FittedModel m = load_model(o.model);
    const Dataset raw = load_data(cfg.data.train, cfg.data.boundaries);
    check_channels(raw, m.spec);
    const Dataset data = scaled_for(m, raw);
    const X0Policy policy = x0_policy_from_string(o.policy);
    if (policy == X0Policy::from_fit && m.params.x0.size() != 1 &&
        m.params.x0.size() != data.experiments.size()) {
        throw Usage("from_fit needs one stored initial state per experiment");
    }

    Json j;
    j["format"] = "sysid-eval-report";
    j["version"] = kVersion;
    j["x0_policy"] = to_string(policy);
    const EvalReport e = evaluate(m.params, m.spec, data, policy, m.sat, cfg.ekf, cfg.train.lbfgsb);
    j["r2"] = to_json(e.r2);
    j["loss"] = e.loss;
    Json x0 = Json::array();
    for (const Vec& v : e.x0) x0.push_back(vector_to_json(v));
    j["x0"] = x0;

    if (o.horizon > 0) {
        // sample-weighted over experiments
        std::vector<double> sum(static_cast<std::size_t>(o.horizon), 0.0);
        std::vector<double> weight(sum.size(), 0.0);
        Json per = Json::array();
        for (const auto& ex : data.experiments) {
            const PredictionReport p =
                ekf_output_disturbance_predict(m.params, m.spec, ex, m.sat, o.horizon, cfg.predictor);
            Json pj;
            pj["r2_average"] = p.r2_average;
            pj["samples"] = p.samples;
            per.push_back(pj);
            for (std::size_t h = 0; h < sum.size(); ++h) {
                sum[h] += p.r2_average[h] * static_cast<double>(p.samples[h]);
                weight[h] += static_cast<double>(p.samples[h]);
            }
        }
        std::ostringstream tsv;
        tsv << "horizon\tr2_average\n";
        Json rows = Json::array();
        for (std::size_t h = 0; h < sum.size(); ++h) {
            const double r2 = sum[h] / weight[h];
            tsv << h + 1 << "\t" << fmt(r2) << "\n";
            rows.push_back({{"horizon", h + 1}, {"r2_average", r2}});
        }
        j["prediction"] = {{"output_disturbance", cfg.predictor.output_disturbance},
                           {"horizons", rows},
                           {"experiments", per}};
        emit(o.table, tsv.str(), out);
        if (!o.report.empty()) emit(o.report, dump(j), out);
        return ok;
    }
    emit(o.report, dump(j), out);
    return ok;
}

int cmd_sweep(const Options& o, std::ostream& out, std::ostream& err)
{
    if (o.param != "tau" && o.param != "tau_g") throw Usage("--param must be tau or tau_g");
    if (o.grid.empty()) throw Usage("--grid is empty");
    for (std::size_t i = 0; i < o.grid.size(); ++i) {
        if (!(o.grid[i] > 0.0)) throw Usage("grid values must be positive");
        if (i > 0 && !(o.grid[i] > o.grid[i - 1])) throw Usage("grid values must be strictly increasing");
    }
    RunConfig cfg = load_config(o);
    if (o.param == "tau_g" && cfg.train.reg.group_kind == GroupKind::none) {
        throw Usage("sweeping tau_g needs regularization.groups");
    }
    const Dataset data = load_data(cfg.data.train, cfg.data.boundaries);
    check_channels(data, cfg.model);
    std::mutex mu;
    if (o.verbose) attach_progress(cfg.train, err, mu);

    std::ostringstream tsv;
    tsv << o.param
        << "\tstatus\tr2_average\teffective_order\tactive_inputs\tnetwork_zeros\ttheta_zeros\tloss\tobjective\n";
    for (double v : o.grid) {
        TrainConfig t = cfg.train;
        (o.param == "tau" ? t.reg.tau : t.reg.tau_g) = v;
        tsv << fmt(v);
        try {
            const FitReport r = fit(cfg.model, data, t);
            tsv << "\tok\t" << fmt(r.r2_train.average) << "\t" << r.effective_order << "\t" << r.active_inputs
                << "\t" << r.sparsity.network_zeros << "\t" << r.sparsity.theta_zeros << "\t"
                << fmt(r.final_loss) << "\t" << fmt(r.final_objective) << "\n";
        } catch (const Error& e) {
            tsv << "\tfailed\tnan\t-1\t-1\t-1\t-1\tnan\tnan\n";
            err << "sweep point " << fmt(v) << " failed: " << e.what() << "\n";
        }
        if (o.verbose) err << o.param << " = " << fmt(v) << " done\n";
    }
    emit(o.out, tsv.str(), out);
    return ok;
}

int cmd_causal(const Options& o, std::ostream& out, std::ostream& err)
{
    RunConfig cfg = load_config(o);
    const Dataset data = load_data(cfg.data.train, cfg.data.boundaries);
    if (data.n_u() != data.n_y()) throw Usage("causal analysis needs the same signals as inputs and outputs");
    cfg.model.n_u = cfg.model.n_y = data.n_y();
    cfg.model.feedthrough = false;
    cfg.model.mask.B.reset();
    cfg.model.mask.C.reset();
    cfg.model.mask.D.reset();
    std::mutex mu;
    if (o.verbose) attach_progress(cfg.train, err, mu);

    FitReport r;
    try {
        r = fit(cfg.model, data, cfg.train);
    } catch (const TrainingError& e) {
        err << "fit failed: " << e.what() << "\n";
        return training_failure;
    }
    std::ostringstream tsv;
    tsv << "channel\tr2\trole\n";
    Json chans = Json::array();
    for (Eigen::Index i = 0; i < r.r2_train.per_output.size(); ++i) {
        const double s = r.r2_train.per_output[i];
        const char* role = s >= o.threshold ? "output" : "input";
        tsv << i + 1 << "\t" << fmt(s) << "\t" << role << "\n";
        chans.push_back({{"channel", i + 1}, {"r2", s}, {"role", role}});
    }
    emit(o.out, tsv.str(), out);
    if (!o.report.empty()) {
        Json j = fit_report_json(r, cfg, o.timings);
        j["causal"] = {{"threshold", o.threshold}, {"channels", chans}};
        write_file_atomic(o.report, dump(j));
    }
    return ok;
}

int cmd_reconstruct(const Options& o, std::ostream& out)
{
    if (o.model.empty()) throw Usage("--model is required");
    const RunConfig cfg = load_config(o);
    const FittedModel m = load_model(o.model);
    const Dataset raw = load_data(cfg.data.train, cfg.data.boundaries);
    check_channels(raw, m.spec);
    const Dataset data = scaled_for(m, raw);

    Json j;
    j["format"] = "sysid-x0-report";
    j["version"] = kVersion;
    j["refine"] = o.refine;
    Json exps = Json::array();
    for (const auto& ex : data.experiments) {
        const Reconstruction rec = ekf_rts_reconstruct(m.params, m.spec, ex, m.sat, cfg.ekf);
        Json e;
        Json epochs = Json::array();
        for (const Vec& v : rec.epoch_x0) epochs.push_back(vector_to_json(v));
        e["x0_smoother"] = vector_to_json(rec.x0);
        e["P0"] = matrix_to_json(rec.P0);
        e["epoch_x0"] = epochs;
        Vec x0 = rec.x0;
        if (o.refine) {
            const RefineResult rr = refine_x0(m.params, m.spec, ex, m.sat, rec.x0, cfg.ekf.rho_x, cfg.train.lbfgsb);
            x0 = rr.x0;
            e["loss_smoother"] = rr.loss_init;
            e["loss_refined"] = rr.loss_final;
            e["solver_status"] = to_string(rr.solver.status);
        }
        e["x0"] = vector_to_json(x0);
        const Simulation sim = simulate_from(m.params, m.spec, ex.U, m.sat, x0);
        e["r2"] = to_json(r2_score(ex.Y, sim.outputs));
        exps.push_back(e);
    }
    j["experiments"] = exps;
    emit(o.out, dump(j), out);
    return ok;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    Options o;
    CLI::App app{"State-space system identification by simulation-error minimization", "sysid"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    auto add_jobs = [&](CLI::App* c) {
        c->add_option("--jobs", o.jobs, "Concurrent training starts (0 = all cores)")->check(CLI::NonNegativeNumber);
    };
    auto add_seed = [&](CLI::App* c) {
        c->add_option_function<std::uint64_t>(
            "--seed", [&](const std::uint64_t& s) { o.seed = s, o.seed_set = true; }, "Override train.seed");
    };
    auto add_data = [&](CLI::App* c) {
        c->add_option("--data", o.data, "CSV data file (overrides data.train)");
        c->add_option("--boundaries", o.boundaries, "Experiment start rows followed by the row count")
            ->delimiter(',');
    };

    auto* gen = app.add_subcommand("generate", "Write a synthetic dataset (CSV and JSON sidecar)");
    gen->add_option("kind", o.kind, "order_reduction | input_selection | causal")
        ->required()
        ->check(CLI::IsMember({"order_reduction", "input_selection", "causal"}));
    gen->add_option("--seed", o.seed, "Generator seed");
    gen->add_option("--out", o.out, "Output CSV path")->required();
    gen->add_option("--samples", o.samples, "Number of samples (default per kind)")->check(CLI::PositiveNumber);
    gen->add_option("--noise", o.noise, "Noise standard deviation (default per kind)")
        ->check(CLI::NonNegativeNumber);

    auto* fitc = app.add_subcommand("fit", "Train a model");
    fitc->add_option("--config", o.config, "Run configuration (JSON)");
    add_data(fitc);
    fitc->add_option("--model", o.model, "Output model file")->required();
    fitc->add_option("--report", o.report, "Output report file (default stdout)");
    add_jobs(fitc);
    add_seed(fitc);
    fitc->add_flag("--timings", o.timings, "Include wall-clock timings in the report");
    fitc->add_flag("-v,--verbose", o.verbose, "Print optimizer progress");

    auto* evalc = app.add_subcommand("eval", "Score a model on data");
    evalc->add_option("--model", o.model, "Model file")->required();
    add_data(evalc);
    evalc->add_option("--config", o.config, "Configuration for the ekf and predictor sections");
    evalc->add_option("--x0-policy", o.policy, "from_fit | ekf_rts | refine")
        ->check(CLI::IsMember({"from_fit", "ekf_rts", "refine"}));
    evalc->add_option("--horizon", o.horizon, "Emit the p-step EKF prediction table for p = 1..horizon")
        ->check(CLI::PositiveNumber);
    evalc->add_option("--report", o.report, "Output report file (default stdout)");
    evalc->add_option("--table", o.table, "Prediction table file (default stdout)");

    auto* sweep = app.add_subcommand("sweep", "Fit along a grid of penalty values");
    sweep->add_option("--config", o.config, "Run configuration (JSON)");
    add_data(sweep);
    sweep->add_option("--param", o.param, "tau | tau_g")->required()->check(CLI::IsMember({"tau", "tau_g"}));
    sweep->add_option("--grid", o.grid, "Comma-separated increasing penalty values")->required()->delimiter(',');
    sweep->add_option("--out", o.out, "Output table (default stdout)");
    add_jobs(sweep);
    add_seed(sweep);
    sweep->add_flag("-v,--verbose", o.verbose, "Print progress");

    auto* causal = app.add_subcommand("causal", "Classify signals as outputs or inputs by self-regression");
    causal->add_option("--config", o.config, "Run configuration (JSON)");
    add_data(causal);
    causal->add_option("--threshold", o.threshold, "R2 above which a channel counts as an output");
    causal->add_option("--out", o.out, "Output table (default stdout)");
    causal->add_option("--report", o.report, "Full fit report");
    add_jobs(causal);
    add_seed(causal);
    causal->add_flag("--timings", o.timings, "Include wall-clock timings in the report");
    causal->add_flag("-v,--verbose", o.verbose, "Print optimizer progress");

    auto* recon = app.add_subcommand("reconstruct-x0", "Estimate initial states with EKF + RTS smoothing");
    recon->add_option("--model", o.model, "Model file")->required();
    add_data(recon);
    recon->add_option("--config", o.config, "Configuration for the ekf section");
    recon->add_flag("--refine", o.refine, "Refine the smoothed estimate by local optimization");
    recon->add_option("--out", o.out, "Output file (default stdout)");

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? ok : usage_failure;
    }

#ifdef _OPENMP
    if (o.jobs > 0) omp_set_num_threads(o.jobs);
#endif

    try {
        if (gen->parsed()) return cmd_generate(o, out);
        if (fitc->parsed()) return cmd_fit(o, out, err);
        if (evalc->parsed()) return cmd_eval(o, out);
        if (sweep->parsed()) return cmd_sweep(o, out, err);
        if (causal->parsed()) return cmd_causal(o, out, err);
        if (recon->parsed()) return cmd_reconstruct(o, out);
    } catch (const Usage& e) {
        err << "error: " << e.what() << "\n";
        return usage_failure;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return usage_failure;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return usage_failure;
    } catch (const DimensionError& e) {
        err << "error: " << e.what() << "\n";
        return usage_failure;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return usage_failure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return training_failure;
    }
    return usage_failure;
}

} // namespace sysid::cli
