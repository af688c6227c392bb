#include "sysid/gradient.hpp"

#include <exception>
#include <string>

#include "kernels.hpp"
#include "sysid/error.hpp"

namespace sysid {

namespace {

const SquaredError kSquaredError;

void zero_like(const ModelParams& shape, ModelParams& out)
{
    out.x0.assign(shape.x0.size(), Vec::Zero(shape.A.rows()));
    out.A = Mat::Zero(shape.A.rows(), shape.A.cols());
    out.B = Mat::Zero(shape.B.rows(), shape.B.cols());
    out.C = Mat::Zero(shape.C.rows(), shape.C.cols());
    out.D = Mat::Zero(shape.D.rows(), shape.D.cols());
    out.theta_x = shape.theta_x;
    out.theta_y = shape.theta_y;
    for (auto& l : out.theta_x) {
        l.W.setZero();
        l.b.setZero();
    }
    for (auto& l : out.theta_y) {
        l.W.setZero();
        l.b.setZero();
    }
}

void accumulate(ModelParams& into, const ModelParams& g)
{
    for (std::size_t j = 0; j < into.x0.size(); ++j) into.x0[j] += g.x0[j];
    into.A += g.A;
    into.B += g.B;
    into.C += g.C;
    into.D += g.D;
    for (std::size_t l = 0; l < into.theta_x.size(); ++l) {
        into.theta_x[l].W += g.theta_x[l].W;
        into.theta_x[l].b += g.theta_x[l].b;
    }
    for (std::size_t l = 0; l < into.theta_y.size(); ++l) {
        into.theta_y[l].W += g.theta_y[l].W;
        into.theta_y[l].b += g.theta_y[l].b;
    }
}

void check_data(const ParamLayout& layout, const Dataset& data)
{
    const ModelSpec& spec = layout.spec();
    if (static_cast<int>(data.experiments.size()) != layout.n_experiments()) {
        throw DimensionError("data", "layout expects " + std::to_string(layout.n_experiments()) +
                                         " experiments, data has " +
                                         std::to_string(data.experiments.size()));
    }
    for (const auto& e : data.experiments) {
        if (e.U.cols() != spec.n_u || e.Y.cols() != spec.n_y || e.U.rows() != e.Y.rows()) {
            throw DimensionError("data", "experiment shape does not match the model");
        }
    }
}

// Sum of per-sample losses of experiment `j`; gradient (unnormalized) goes to `grad`.
double experiment_loss(const ModelParams& p, const ModelSpec& spec, const Experiment& e, const Vec& x0,
                       const SaturationConfig& sat, const Vec& bounds, const OutputLoss& loss,
                       ModelParams* grad, std::size_t j)
{
    const Eigen::Index N = e.Y.rows();
    if (N == 0) return 0.0;
    const int nx = spec.n_x, nu = spec.n_u, ny = spec.n_y;
    const Mat Ut = e.U.transpose();
    const Mat Yt = e.Y.transpose();
    detail::Trajectory tr;
    detail::forward(p, spec, Ut, x0, sat, bounds, tr);

    Vec g_y(ny);
    double total = 0.0;
    if (!grad) {
        for (Eigen::Index k = 0; k < N; ++k) {
            total += loss.value_and_grad(Yt.col(k), tr.Yhat.col(k), g_y);
        }
        return total;
    }

    Vec lam = Vec::Zero(nx); // dL/dx_{k+1}
    Vec gx(nx), g_v(nx), satd(nx);
    Vec zx(spec.fx_input_dim()), zy(spec.fy_input_dim());
    Vec gzx(spec.fx_input_dim()), gzy(spec.fy_input_dim());
    for (Eigen::Index k = N; k-- > 0;) {
        const auto x = tr.X.col(k);
        const auto u = Ut.col(k);
        total += loss.value_and_grad(Yt.col(k), tr.Yhat.col(k), g_y);

        gx.noalias() = p.C.transpose() * g_y;
        grad->C.noalias() += g_y * x.transpose();
        if (nu > 0) grad->D.noalias() += g_y * u.transpose();
        if (spec.has_fy()) {
            zy.head(nx) = x;
            if (spec.feedthrough && nu > 0) zy.tail(nu) = u;
            detail::mlp_backward(p.theta_y, spec.activation, zy, tr.fy_pre, k, g_y, grad->theta_y, gzy);
            gx += gzy.head(nx);
        }
        if (k + 1 < N) {
            detail::saturation_derivative(tr.V.col(k), sat, bounds, satd);
            g_v = satd.cwiseProduct(lam);
            grad->A.noalias() += g_v * x.transpose();
            if (nu > 0) grad->B.noalias() += g_v * u.transpose();
            gx.noalias() += p.A.transpose() * g_v;
            if (spec.has_fx()) {
                zx.head(nx) = x;
                if (nu > 0) zx.tail(nu) = u;
                detail::mlp_backward(p.theta_x, spec.activation, zx, tr.fx_pre, k, g_v, grad->theta_x, gzx);
                gx += gzx.head(nx);
            }
        }
        lam = gx;
    }
    grad->x0[j] += lam;
    return total;
}

double total_samples(const Dataset& data)
{
    double n = 0.0;
    for (const auto& e : data.experiments) n += static_cast<double>(e.Y.rows());
    return n;
}

LossGradient run(const Vec& v, const ParamLayout& layout, const Dataset& data, const SaturationConfig& sat,
                 const OutputLoss* loss, bool parallel)
{
    check_data(layout, data);
    sat.validate(layout.spec().n_x);
    const OutputLoss& l = loss ? *loss : kSquaredError;
    const ModelParams p = layout.unpack(v);
    const Vec bounds = sat.bounds(layout.spec().n_x);
    const std::size_t M = data.experiments.size();

    std::vector<double> values(M, 0.0);
    std::vector<ModelParams> grads(M);
    std::vector<std::exception_ptr> errors(M);
    const long long Ml = static_cast<long long>(M);
#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic) if (parallel && M > 1)
#endif
    for (long long jj = 0; jj < Ml; ++jj) {
        const auto j = static_cast<std::size_t>(jj);
        try {
            zero_like(p, grads[j]);
            values[j] = experiment_loss(p, layout.spec(), data.experiments[j], p.x0[j], sat, bounds, l,
                                        &grads[j], j);
        } catch (...) {
            errors[j] = std::current_exception();
        }
    }
    (void)parallel;
    for (const auto& err : errors) {
        if (err) std::rethrow_exception(err);
    }

    ModelParams g;
    zero_like(p, g);
    double value = 0.0;
    for (std::size_t j = 0; j < M; ++j) {
        value += values[j];
        accumulate(g, grads[j]);
    }
    const double n = total_samples(data);
    LossGradient out;
    out.value = n > 0 ? value / n : 0.0;
    out.grad = layout.pack(g);
    if (n > 0) out.grad /= n;
    return out;
}

} // namespace

LossGradient loss_and_grad(const Vec& v, const ParamLayout& layout, const Dataset& data,
                           const SaturationConfig& sat, const OutputLoss* loss)
{
    return run(v, layout, data, sat, loss, true);
}

LossGradient loss_and_grad_serial(const Vec& v, const ParamLayout& layout, const Dataset& data,
                                  const SaturationConfig& sat, const OutputLoss* loss)
{
    return run(v, layout, data, sat, loss, false);
}

double loss_value(const Vec& v, const ParamLayout& layout, const Dataset& data, const SaturationConfig& sat,
                  const OutputLoss* loss)
{
    check_data(layout, data);
    sat.validate(layout.spec().n_x);
    const OutputLoss& l = loss ? *loss : kSquaredError;
    const ModelParams p = layout.unpack(v);
    const Vec bounds = sat.bounds(layout.spec().n_x);
    double value = 0.0;
    for (std::size_t j = 0; j < data.experiments.size(); ++j) {
        value += experiment_loss(p, layout.spec(), data.experiments[j], p.x0[j], sat, bounds, l, nullptr, j);
    }
    const double n = total_samples(data);
    return n > 0 ? value / n : 0.0;
}

} // namespace sysid
