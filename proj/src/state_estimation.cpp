#include "sysid/state_estimation.hpp"

#include <string>

#include "sysid/error.hpp"
#include "sysid/gradient.hpp"
#include "sysid/objectives.hpp"

namespace sysid {

namespace {

void symmetrize(Mat& P)
{
    P = 0.5 * (P + P.transpose()).eval();
}

void check_spd(const Mat& M, Eigen::Index n, const char* name)
{
    if (M.rows() != n || M.cols() != n) {
        throw ConfigError(std::string(name) + " must be " + std::to_string(n) + " x " + std::to_string(n));
    }
    if (!M.allFinite() || (M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, M.cwiseAbs().maxCoeff())) {
        throw ConfigError(std::string(name) + " must be symmetric");
    }
    Eigen::LLT<Mat> llt(M);
    if (llt.info() != Eigen::Success) throw ConfigError(std::string(name) + " must be positive definite");
}

void check_data(const ModelSpec& spec, const Experiment& data)
{
    if (data.U.cols() != spec.n_u || data.Y.cols() != spec.n_y || data.U.rows() != data.Y.rows()) {
        throw DimensionError("data", "channel counts do not match the model");
    }
    if (data.length() == 0) throw DimensionError("data", "empty experiment");
}

Vec input_at(const Experiment& d, Eigen::Index k)
{
    return d.U.cols() ? Vec(d.U.row(k).transpose()) : Vec();
}

} // namespace

Mat EkfConfig::resolved_Q(int n_x) const
{
    return Q.size() ? Q : Mat(1e-8 * Mat::Identity(n_x, n_x));
}

Mat EkfConfig::resolved_R(int n_y) const
{
    return R.size() ? R : Mat(Mat::Identity(n_y, n_y));
}

Mat EkfConfig::resolved_P0(int n_x, Eigen::Index N) const
{
    if (P0.size()) return P0;
    if (rho_x > 0.0) return Mat::Identity(n_x, n_x) / (rho_x * static_cast<double>(N));
    return 1e3 * Mat::Identity(n_x, n_x);
}

void EkfConfig::validate(int n_x, int n_y) const
{
    if (epochs < 1) throw ConfigError("ekf.epochs must be at least 1");
    if (rho_x < 0.0) throw ConfigError("rho_x must be non-negative");
    check_spd(resolved_Q(n_x), n_x, "ekf.Q");
    check_spd(resolved_R(n_y), n_y, "ekf.R");
    check_spd(resolved_P0(n_x, 1), n_x, "ekf.P0");
    if (x0_init.size() && x0_init.size() != n_x) throw DimensionError("x0_init", "expected length n_x");
}

Reconstruction ekf_rts_reconstruct(const ModelParams& params, const ModelSpec& spec, const Experiment& data,
                                   const SaturationConfig& sat, const EkfConfig& cfg, bool keep_trace)
{
    spec.validate();
    params.check_dims(spec);
    check_data(spec, data);
    cfg.validate(spec.n_x, spec.n_y);
    const int nx = spec.n_x;
    const Eigen::Index N = data.length();
    const Mat Q = cfg.resolved_Q(nx);
    const Mat R = cfg.resolved_R(spec.n_y);

    Reconstruction out;
    out.x0 = cfg.x0_init.size() ? cfg.x0_init : Vec::Zero(nx);
    out.P0 = cfg.resolved_P0(nx, N);

    SmootherTrace tr;
    auto resize = [&](auto& v) { v.assign(static_cast<std::size_t>(N), {}); };
    resize(tr.x_pred);
    resize(tr.x_filt);
    resize(tr.x_next);
    resize(tr.P_pred);
    resize(tr.P_filt);
    resize(tr.P_next);
    resize(tr.A);
    resize(tr.G);
    resize(tr.e);
    resize(tr.x_smooth);
    resize(tr.P_smooth);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Vec x = out.x0;
        Mat P = out.P0;
        for (Eigen::Index k = 0; k < N; ++k) {
            const auto ks = static_cast<std::size_t>(k);
            const Vec u = input_at(data, k);
            tr.x_pred[ks] = x;
            tr.P_pred[ks] = P;
            const Mat Ck = output_jacobian(params, spec, x, u);
            const Mat Z = P * Ck.transpose();
            Mat S = R + Ck * Z;
            symmetrize(S);
            Eigen::LDLT<Mat> ldlt(S);
            if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all()) {
                throw NumericalError(static_cast<std::size_t>(k), "singular innovation covariance");
            }
            const Mat M = ldlt.solve(Z.transpose()).transpose();
            const Vec e = data.Y.row(k).transpose() - output_map(params, spec, x, u);
            x += M * e;
            P -= M * Z.transpose();
            symmetrize(P);
            tr.e[ks] = e;
            tr.x_filt[ks] = x;
            tr.P_filt[ks] = P;
            const Mat Ak = state_jacobian(params, spec, x, u, sat);
            tr.A[ks] = Ak;
            P = Ak * P * Ak.transpose() + Q;
            symmetrize(P);
            x = state_update(params, spec, x, u, sat);
            if (!x.allFinite() || !P.allFinite()) {
                throw NumericalError(static_cast<std::size_t>(k), "non-finite filter state");
            }
            tr.x_next[ks] = x;
            tr.P_next[ks] = P;
        }

        Vec xs = x;
        Mat Ps = P;
        for (Eigen::Index k = N; k-- > 0;) {
            const auto ks = static_cast<std::size_t>(k);
            Eigen::LDLT<Mat> ldlt(tr.P_next[ks]);
            if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all()) {
                throw NumericalError(static_cast<std::size_t>(k), "singular predicted covariance");
            }
            // G = P_{k|k} A' P_{k+1|k}^{-1}, all covariances symmetric
            const Mat G = ldlt.solve(tr.A[ks] * tr.P_filt[ks]).transpose();
            xs = tr.x_filt[ks] + G * (xs - tr.x_next[ks]);
            Ps = tr.P_filt[ks] + G * (Ps - tr.P_next[ks]) * G.transpose();
            symmetrize(Ps);
            tr.G[ks] = G;
            tr.x_smooth[ks] = xs;
            tr.P_smooth[ks] = Ps;
        }
        out.x0 = xs;
        out.P0 = Ps;
        out.epoch_x0.push_back(xs);
        if (keep_trace) out.trace.push_back(tr);
    }
    return out;
}

RefineResult refine_x0(const ModelParams& params, const ModelSpec& spec, const Experiment& data,
                       const SaturationConfig& sat, const Vec& x0_init, double rho_x, const LbfgsbOptions& opts)
{
    spec.validate();
    params.check_dims(spec);
    check_data(spec, data);
    if (x0_init.size() != spec.n_x) throw DimensionError("x0_init", "expected length n_x");
    if (rho_x < 0.0) throw ConfigError("rho_x must be non-negative");

    ModelSpec frozen = spec;
    frozen.mask.A = BlockMask::fixed(params.A);
    frozen.mask.B = BlockMask::fixed(params.B);
    frozen.mask.C = BlockMask::fixed(params.C);
    frozen.mask.D = BlockMask::fixed(params.D);
    frozen.mask.fix_theta_x = true;
    frozen.mask.fix_theta_y = true;
    frozen.mask.fix_x0 = false;
    ModelParams fixed = params;
    fixed.x0.assign(1, x0_init);
    const ParamLayout layout(frozen, fixed);
    Dataset one;
    one.experiments.push_back(data);

    auto objective = [&](const Vec& v, Vec& g) {
        LossGradient lg = loss_and_grad_serial(v, layout, one, sat);
        g = lg.grad + rho_x * v;
        return lg.value + 0.5 * rho_x * v.squaredNorm();
    };
    RefineResult r;
    Vec g;
    r.loss_init = objective(x0_init, g);
    r.solver = lbfgsb_minimize(objective, x0_init, {}, {}, opts);
    r.x0 = r.solver.x_opt;
    r.loss_final = r.solver.f_opt;
    return r;
}

PredictionReport ekf_output_disturbance_predict(const ModelParams& params, const ModelSpec& spec,
                                                const Experiment& data, const SaturationConfig& sat, int horizon,
                                                const PredictorConfig& cfg)
{
    spec.validate();
    params.check_dims(spec);
    check_data(spec, data);
    if (horizon < 1) throw ConfigError("horizon must be at least 1");
    const int nx = spec.n_x, ny = spec.n_y;
    const int nq = cfg.output_disturbance ? ny : 0;
    const int na = nx + nq;
    const Eigen::Index N = data.length();

    const Mat Qx = cfg.Qx.size() ? cfg.Qx : Mat(1e-8 * Mat::Identity(nx, nx));
    const Mat Qq = cfg.Qq.size() ? cfg.Qq : Mat(1e-4 * Mat::Identity(ny, ny));
    const Mat R = cfg.R.size() ? cfg.R : Mat(Mat::Identity(ny, ny));
    Mat Q = Mat::Zero(na, na);
    Q.topLeftCorner(nx, nx) = Qx;
    if (nq) Q.bottomRightCorner(nq, nq) = Qq;
    Mat P = cfg.P0.size() ? cfg.P0 : Mat(Mat::Identity(na, na));
    check_spd(Q, na, "predictor Q");
    check_spd(R, ny, "predictor R");
    check_spd(P, na, "predictor P0");

    Vec x = cfg.x0.size() ? cfg.x0 : Vec::Zero(nx);
    Vec q = Vec::Zero(nq);
    if (x.size() != nx) throw DimensionError("x0", "expected length n_x");

    // predictions[h-1] row k+h holds yhat_{k+h|k}
    std::vector<Mat> pred(static_cast<std::size_t>(horizon), Mat::Zero(N, ny));
    for (Eigen::Index k = 0; k < N; ++k) {
        const Vec u = input_at(data, k);
        Mat H(ny, na);
        H.leftCols(nx) = output_jacobian(params, spec, x, u);
        if (nq) H.rightCols(nq) = Mat::Identity(ny, ny);
        Vec yhat = output_map(params, spec, x, u);
        if (nq) yhat += q;
        const Mat Z = P * H.transpose();
        Mat S = R + H * Z;
        symmetrize(S);
        Eigen::LDLT<Mat> ldlt(S);
        if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all()) {
            throw NumericalError(static_cast<std::size_t>(k), "singular innovation covariance");
        }
        const Mat M = ldlt.solve(Z.transpose()).transpose();
        const Vec dx = M * (data.Y.row(k).transpose() - yhat);
        x += dx.head(nx);
        if (nq) q += dx.tail(nq);
        P -= M * Z.transpose();
        symmetrize(P);

        Vec xp = x;
        for (int h = 1; h <= horizon && k + h < N; ++h) {
            xp = state_update(params, spec, xp, input_at(data, k + h - 1), sat);
            Vec y = output_map(params, spec, xp, input_at(data, k + h));
            if (nq) y += q;
            pred[static_cast<std::size_t>(h - 1)].row(k + h) = y.transpose();
        }

        Mat F = Mat::Identity(na, na);
        F.topLeftCorner(nx, nx) = state_jacobian(params, spec, x, u, sat);
        P = F * P * F.transpose() + Q;
        symmetrize(P);
        x = state_update(params, spec, x, u, sat);
        if (!x.allFinite() || !P.allFinite()) {
            throw NumericalError(static_cast<std::size_t>(k), "non-finite filter state");
        }
    }

    PredictionReport rep;
    rep.q_final = q;
    for (int h = 1; h <= horizon; ++h) {
        const Eigen::Index n = N - h;
        if (n < 2) throw ConfigError("horizon " + std::to_string(h) + " leaves too few samples to score");
        const R2Report r2 = r2_score(data.Y.bottomRows(n), pred[static_cast<std::size_t>(h - 1)].bottomRows(n));
        rep.horizon.push_back(h);
        rep.r2_average.push_back(r2.average);
        rep.r2_per_output.push_back(r2.per_output);
        rep.samples.push_back(n);
    }
    return rep;
}

} // namespace sysid
