#include "sysid/model.hpp"

#include <cmath>
#include <string>

#include "kernels.hpp"
#include "sysid/error.hpp"

namespace sysid {

namespace {

double sigmoid(double t)
{
    if (t >= 0.0) {
        return 1.0 / (1.0 + std::exp(-t));
    }
    const double e = std::exp(t);
    return e / (1.0 + e);
}

double softplus(double t)
{
    return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
}

void check_shape(const std::string& block, const Mat& m, Eigen::Index rows, Eigen::Index cols)
{
    if (m.rows() != rows || m.cols() != cols) {
        throw DimensionError(block, "expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                                        ", got " + std::to_string(m.rows()) + "x" +
                                        std::to_string(m.cols()));
    }
}

std::vector<DenseLayer> zero_network(const std::vector<int>& dims)
{
    std::vector<DenseLayer> net;
    if (dims.size() < 2) {
        return net;
    }
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        net.push_back({Mat::Zero(dims[l + 1], dims[l]), Vec::Zero(dims[l + 1])});
    }
    return net;
}

std::vector<int> network_dims(int in, const std::vector<int>& hidden, int out)
{
    if (hidden.empty()) {
        return {};
    }
    std::vector<int> dims{in};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(out);
    return dims;
}

} // namespace

std::string_view to_string(Activation a)
{
    switch (a) {
    case Activation::swish: return "swish";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
    }
    return "identity";
}

Activation activation_from_string(std::string_view name)
{
    if (name == "swish") return Activation::swish;
    if (name == "tanh") return Activation::tanh;
    if (name == "relu") return Activation::relu;
    if (name == "identity") return Activation::identity;
    throw ConfigError("unknown activation '" + std::string(name) + "'");
}

double activate(Activation a, double v)
{
    switch (a) {
    case Activation::swish: return v * sigmoid(v);
    case Activation::tanh: return std::tanh(v);
    case Activation::relu: return v > 0.0 ? v : 0.0;
    case Activation::identity: return v;
    }
    return v;
}

double activate_derivative(Activation a, double v)
{
    switch (a) {
    case Activation::swish: {
        const double s = sigmoid(v);
        return s + v * s * (1.0 - s);
    }
    case Activation::tanh: {
        const double t = std::tanh(v);
        return 1.0 - t * t;
    }
    case Activation::relu: return v > 0.0 ? 1.0 : 0.0;
    case Activation::identity: return 1.0;
    }
    return 1.0;
}

BlockMask BlockMask::all_free(Eigen::Index rows, Eigen::Index cols)
{
    return {BoolMat::Constant(rows, cols, true), Mat::Zero(rows, cols)};
}

BlockMask BlockMask::diagonal(Eigen::Index n)
{
    BlockMask m{BoolMat::Constant(n, n, false), Mat::Zero(n, n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        m.free(i, i) = true;
    }
    return m;
}

BlockMask BlockMask::fixed(const Mat& value)
{
    return {BoolMat::Constant(value.rows(), value.cols(), false), value};
}

std::vector<int> ModelSpec::fx_dims() const { return network_dims(fx_input_dim(), fx_layers, n_x); }
std::vector<int> ModelSpec::fy_dims() const { return network_dims(fy_input_dim(), fy_layers, n_y); }

void ModelSpec::validate() const
{
    if (n_x < 1) throw ConfigError("n_x must be >= 1");
    if (n_u < 0) throw ConfigError("n_u must be >= 0");
    if (n_y < 1) throw ConfigError("n_y must be >= 1");
    for (int w : fx_layers) {
        if (w < 1) throw ConfigError("fx_layers widths must be >= 1");
    }
    for (int w : fy_layers) {
        if (w < 1) throw ConfigError("fy_layers widths must be >= 1");
    }
    auto check_mask = [](const std::optional<BlockMask>& m, const char* name, int r, int c) {
        if (!m) return;
        if (m->free.rows() != r || m->free.cols() != c || m->value.rows() != r ||
            m->value.cols() != c) {
            throw DimensionError(std::string("mask.") + name,
                                 "expected " + std::to_string(r) + "x" + std::to_string(c));
        }
    };
    check_mask(mask.A, "A", n_x, n_x);
    check_mask(mask.B, "B", n_x, n_u);
    check_mask(mask.C, "C", n_y, n_x);
    check_mask(mask.D, "D", n_y, n_u);
}

ModelParams ModelParams::zeros(const ModelSpec& spec, int n_experiments)
{
    ModelParams p;
    p.x0.assign(static_cast<std::size_t>(n_experiments), Vec::Zero(spec.n_x));
    p.A = Mat::Zero(spec.n_x, spec.n_x);
    p.B = Mat::Zero(spec.n_x, spec.n_u);
    p.C = Mat::Zero(spec.n_y, spec.n_x);
    p.D = Mat::Zero(spec.n_y, spec.n_u);
    p.theta_x = zero_network(spec.fx_dims());
    p.theta_y = zero_network(spec.fy_dims());
    return p;
}

void ModelParams::check_dims(const ModelSpec& spec) const
{
    for (std::size_t j = 0; j < x0.size(); ++j) {
        check_shape("x0[" + std::to_string(j) + "]", x0[j], spec.n_x, 1);
    }
    check_shape("A", A, spec.n_x, spec.n_x);
    check_shape("B", B, spec.n_x, spec.n_u);
    check_shape("C", C, spec.n_y, spec.n_x);
    check_shape("D", D, spec.n_y, spec.n_u);
    auto check_net = [](const std::vector<DenseLayer>& net, const std::vector<int>& dims,
                        const std::string& name) {
        const std::size_t layers = dims.empty() ? 0 : dims.size() - 1;
        if (net.size() != layers) {
            throw DimensionError(name, "expected " + std::to_string(layers) + " layers, got " +
                                           std::to_string(net.size()));
        }
        for (std::size_t l = 0; l < layers; ++l) {
            check_shape(name + ".W" + std::to_string(l), net[l].W, dims[l + 1], dims[l]);
            check_shape(name + ".b" + std::to_string(l), net[l].b, dims[l + 1], 1);
        }
    };
    check_net(theta_x, spec.fx_dims(), "theta_x");
    check_net(theta_y, spec.fy_dims(), "theta_y");
}

Vec SaturationConfig::bounds(int n_x) const
{
    if (per_component.size() > 0) {
        return per_component;
    }
    return Vec::Constant(n_x, bound);
}

void SaturationConfig::validate(int n_x) const
{
    if (!enabled) return;
    if (per_component.size() > 0 && per_component.size() != n_x) {
        throw DimensionError("x_sat", "expected length " + std::to_string(n_x));
    }
    const Vec b = bounds(n_x);
    for (Eigen::Index i = 0; i < b.size(); ++i) {
        if (!std::isfinite(b[i]) || b[i] <= 0.0) {
            throw ConfigError("x_sat components must be finite and > 0");
        }
    }
    if (mode == SaturationMode::soft && !(gamma > 0.0)) {
        throw ConfigError("soft saturation requires gamma > 0");
    }
}

double soft_sat(double x, double x_sat, double gamma)
{
    return x_sat + (softplus(-gamma * (x + x_sat)) - softplus(-gamma * (x - x_sat))) / gamma;
}

double soft_sat_derivative(double x, double x_sat, double gamma)
{
    return sigmoid(-gamma * (x - x_sat)) - sigmoid(-gamma * (x + x_sat));
}

Vec soft_sat(const Vec& x, const Vec& x_sat, double gamma)
{
    if (x.size() != x_sat.size()) {
        throw DimensionError("x_sat", "length differs from x");
    }
    Vec out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        out[i] = soft_sat(x[i], x_sat[i], gamma);
    }
    return out;
}

// ---------------------------------------------------------------------------
// ParamLayout

ParamLayout::ParamLayout(const ModelSpec& spec, int n_experiments)
    : spec_(spec), fixed_(ModelParams::zeros(spec, n_experiments))
{
    spec_.validate();
    if (n_experiments < 1) {
        throw ConfigError("at least one experiment is required");
    }
    const auto& m = spec_.mask;
    if (m.A) fixed_.A = m.A->value;
    if (m.B) fixed_.B = m.B->value;
    if (m.C) fixed_.C = m.C->value;
    if (m.D) fixed_.D = m.D->value;
    build();
}

ParamLayout::ParamLayout(const ModelSpec& spec, ModelParams fixed_values)
    : spec_(spec), fixed_(std::move(fixed_values))
{
    spec_.validate();
    if (fixed_.n_experiments() < 1) {
        throw ConfigError("at least one experiment is required");
    }
    fixed_.check_dims(spec_);
    build();
}

void ParamLayout::build()
{
    int next = 0;
    auto table = [&](Eigen::Index rows, Eigen::Index cols, const BoolMat* free_mask, bool all_fixed) {
        std::vector<int> idx(static_cast<std::size_t>(rows * cols), -1);
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index c = 0; c < cols; ++c) {
                const bool is_free = !all_fixed && (free_mask == nullptr || (*free_mask)(r, c));
                if (is_free) {
                    idx[static_cast<std::size_t>(r * cols + c)] = next++;
                }
            }
        }
        return idx;
    };
    const auto& m = spec_.mask;
    const int nx = spec_.n_x, nu = spec_.n_u, ny = spec_.n_y;

    x0_.clear();
    for (int j = 0; j < n_experiments(); ++j) {
        x0_.push_back(table(nx, 1, nullptr, m.fix_x0));
    }
    A_ = table(nx, nx, m.A ? &m.A->free : nullptr, false);
    B_ = table(nx, nu, m.B ? &m.B->free : nullptr, false);
    C_ = table(ny, nx, m.C ? &m.C->free : nullptr, false);
    D_ = table(ny, nu, m.D ? &m.D->free : nullptr, !spec_.feedthrough);

    auto net_tables = [&](const std::vector<DenseLayer>& net, bool fixed, std::vector<std::vector<int>>& W,
                          std::vector<std::vector<int>>& b) {
        W.clear();
        b.clear();
        for (const auto& layer : net) {
            W.push_back(table(layer.W.rows(), layer.W.cols(), nullptr, fixed));
            b.push_back(table(layer.b.rows(), 1, nullptr, fixed));
        }
    };
    net_tables(fixed_.theta_x, m.fix_theta_x, fxW_, fxb_);
    net_tables(fixed_.theta_y, m.fix_theta_y, fyW_, fyb_);
    size_ = next;
}

template <class Params, class Fn>
void ParamLayout::visit(Params& p, Fn&& fn) const
{
    for (std::size_t j = 0; j < x0_.size(); ++j) {
        fn(p.x0[j], x0_[j]);
    }
    fn(p.A, A_);
    fn(p.B, B_);
    fn(p.C, C_);
    fn(p.D, D_);
    for (std::size_t l = 0; l < fxW_.size(); ++l) {
        fn(p.theta_x[l].W, fxW_[l]);
        fn(p.theta_x[l].b, fxb_[l]);
    }
    for (std::size_t l = 0; l < fyW_.size(); ++l) {
        fn(p.theta_y[l].W, fyW_[l]);
        fn(p.theta_y[l].b, fyb_[l]);
    }
}

Vec ParamLayout::pack(const ModelParams& params) const
{
    if (params.n_experiments() != n_experiments()) {
        throw DimensionError("x0", "expected " + std::to_string(n_experiments()) +
                                       " initial states, got " +
                                       std::to_string(params.n_experiments()));
    }
    params.check_dims(spec_);
    Vec v(size_);
    visit(params, [&](const auto& block, const std::vector<int>& idx) {
        const Eigen::Index cols = block.cols();
        for (Eigen::Index r = 0; r < block.rows(); ++r) {
            for (Eigen::Index c = 0; c < cols; ++c) {
                const int i = idx[static_cast<std::size_t>(r * cols + c)];
                if (i >= 0) v[i] = block(r, c);
            }
        }
    });
    return v;
}

ModelParams ParamLayout::unpack(const Vec& v) const
{
    ModelParams p = fixed_;
    unpack_into(v, p);
    return p;
}

void ParamLayout::unpack_into(const Vec& v, ModelParams& p) const
{
    if (v.size() != size_) {
        throw DimensionError("parameter vector", "expected length " + std::to_string(size_) +
                                                     ", got " + std::to_string(v.size()));
    }
    visit(p, [&](auto& block, const std::vector<int>& idx) {
        const Eigen::Index cols = block.cols();
        for (Eigen::Index r = 0; r < block.rows(); ++r) {
            for (Eigen::Index c = 0; c < cols; ++c) {
                const int i = idx[static_cast<std::size_t>(r * cols + c)];
                if (i >= 0) block(r, c) = v[i];
            }
        }
    });
}

namespace {
void append_free(std::vector<int>& out, const std::vector<int>& idx)
{
    for (int i : idx) {
        if (i >= 0) out.push_back(i);
    }
}
} // namespace

std::vector<int> ParamLayout::x0_indices() const
{
    std::vector<int> out;
    for (const auto& t : x0_) append_free(out, t);
    return out;
}

std::vector<int> ParamLayout::theta_indices() const
{
    std::vector<int> out;
    append_free(out, A_);
    append_free(out, B_);
    append_free(out, C_);
    append_free(out, D_);
    const auto net = network_indices();
    out.insert(out.end(), net.begin(), net.end());
    return out;
}

std::vector<int> ParamLayout::network_indices() const
{
    std::vector<int> out;
    for (std::size_t l = 0; l < fxW_.size(); ++l) {
        append_free(out, fxW_[l]);
        append_free(out, fxb_[l]);
    }
    for (std::size_t l = 0; l < fyW_.size(); ++l) {
        append_free(out, fyW_[l]);
        append_free(out, fyb_[l]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Kernels

namespace detail {

void alloc_hidden(const std::vector<DenseLayer>& net, Eigen::Index n, std::vector<Mat>& pre)
{
    pre.resize(net.empty() ? 0 : net.size() - 1);
    for (std::size_t l = 0; l + 1 < net.size(); ++l) {
        pre[l].resize(net[l].W.rows(), n);
    }
}

void mlp_forward(const std::vector<DenseLayer>& net, Activation act, const Eigen::Ref<const Vec>& in,
                 std::vector<Mat>& pre, Eigen::Index k, Eigen::Ref<Vec> out)
{
    Vec h = in;
    for (std::size_t l = 0; l < net.size(); ++l) {
        Vec a = net[l].W * h + net[l].b;
        if (l + 1 < net.size()) {
            pre[l].col(k) = a;
            h = a.unaryExpr([act](double v) { return activate(act, v); });
        } else {
            out = a;
        }
    }
}

void mlp_backward(const std::vector<DenseLayer>& net, Activation act, const Eigen::Ref<const Vec>& in,
                  const std::vector<Mat>& pre, Eigen::Index k, const Eigen::Ref<const Vec>& g_out,
                  std::vector<DenseLayer>& grad, Eigen::Ref<Vec> g_in)
{
    Vec g = g_out;
    for (std::size_t li = net.size(); li-- > 0;) {
        if (li == 0) {
            grad[0].W.noalias() += g * in.transpose();
        } else {
            const Vec h = pre[li - 1].col(k).unaryExpr([act](double v) { return activate(act, v); });
            grad[li].W.noalias() += g * h.transpose();
        }
        grad[li].b += g;
        Vec gh = net[li].W.transpose() * g;
        if (li > 0) {
            g = gh.cwiseProduct(
                pre[li - 1].col(k).unaryExpr([act](double v) { return activate_derivative(act, v); }));
        } else {
            g_in = gh;
        }
    }
}

Mat mlp_input_jacobian(const std::vector<DenseLayer>& net, Activation act, const Eigen::Ref<const Vec>& in)
{
    Vec a = net[0].W * in + net[0].b;
    Mat J = net[0].W;
    for (std::size_t l = 1; l < net.size(); ++l) {
        const Vec d = a.unaryExpr([act](double v) { return activate_derivative(act, v); });
        const Vec h = a.unaryExpr([act](double v) { return activate(act, v); });
        J = net[l].W * (d.asDiagonal() * J);
        a = net[l].W * h + net[l].b;
    }
    return J;
}

void saturate(Eigen::Ref<Vec> v, const SaturationConfig& sat, const Vec& bounds)
{
    if (!sat.enabled) return;
    if (sat.mode == SaturationMode::hard) {
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = hard_sat(v[i], bounds[i]);
    } else {
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = soft_sat(v[i], bounds[i], sat.gamma);
    }
}

void saturation_derivative(const Eigen::Ref<const Vec>& v, const SaturationConfig& sat, const Vec& bounds,
                           Eigen::Ref<Vec> d)
{
    if (!sat.enabled) {
        d.setOnes();
        return;
    }
    if (sat.mode == SaturationMode::hard) {
        for (Eigen::Index i = 0; i < v.size(); ++i) d[i] = std::abs(v[i]) > bounds[i] ? 0.0 : 1.0;
    } else {
        for (Eigen::Index i = 0; i < v.size(); ++i) d[i] = soft_sat_derivative(v[i], bounds[i], sat.gamma);
    }
}

void forward(const ModelParams& p, const ModelSpec& spec, const Mat& Ut, const Vec& x0,
             const SaturationConfig& sat, const Vec& sat_bounds, Trajectory& traj)
{
    const Eigen::Index N = Ut.cols();
    const int nx = spec.n_x, nu = spec.n_u, ny = spec.n_y;
    traj.X.resize(nx, N);
    traj.V.resize(nx, N);
    traj.Yhat.resize(ny, N);
    alloc_hidden(p.theta_x, N, traj.fx_pre);
    alloc_hidden(p.theta_y, N, traj.fy_pre);
    if (N == 0) return;
    if (!x0.allFinite()) {
        throw NumericalError(0, "non-finite initial state");
    }

    Vec zx(spec.fx_input_dim());
    Vec zy(spec.fy_input_dim());
    Vec net_out_x(nx);
    Vec net_out_y(ny);
    traj.X.col(0) = x0;
    for (Eigen::Index k = 0; k < N; ++k) {
        auto x = traj.X.col(k);
        auto y = traj.Yhat.col(k);
        y.noalias() = p.C * x;
        if (nu > 0) y.noalias() += p.D * Ut.col(k);
        if (spec.has_fy()) {
            zy.head(nx) = x;
            if (spec.feedthrough && nu > 0) zy.tail(nu) = Ut.col(k);
            mlp_forward(p.theta_y, spec.activation, zy, traj.fy_pre, k, net_out_y);
            y += net_out_y;
        }
        if (!y.allFinite()) {
            throw NumericalError(static_cast<std::size_t>(k), "non-finite output");
        }
        if (k + 1 == N) break;

        auto v = traj.V.col(k);
        v.noalias() = p.A * x;
        if (nu > 0) v.noalias() += p.B * Ut.col(k);
        if (spec.has_fx()) {
            zx.head(nx) = x;
            if (nu > 0) zx.tail(nu) = Ut.col(k);
            mlp_forward(p.theta_x, spec.activation, zx, traj.fx_pre, k, net_out_x);
            v += net_out_x;
        }
        auto xn = traj.X.col(k + 1);
        xn = v;
        saturate(xn, sat, sat_bounds);
        if (!xn.allFinite()) {
            throw NumericalError(static_cast<std::size_t>(k + 1), "non-finite state");
        }
    }
}

} // namespace detail

Simulation simulate_from(const ModelParams& params, const ModelSpec& spec, const Mat& U,
                         const SaturationConfig& sat, const Vec& x0)
{
    if (U.cols() != spec.n_u) {
        throw DimensionError("u", "expected " + std::to_string(spec.n_u) + " input channels, got " +
                                      std::to_string(U.cols()));
    }
    if (x0.size() != spec.n_x) {
        throw DimensionError("x0", "expected length " + std::to_string(spec.n_x));
    }
    params.check_dims(spec);
    sat.validate(spec.n_x);
    detail::Trajectory traj;
    const Mat Ut = U.transpose();
    detail::forward(params, spec, Ut, x0, sat, sat.bounds(spec.n_x), traj);
    return {traj.X.transpose(), traj.Yhat.transpose()};
}

Simulation simulate(const ModelParams& params, const ModelSpec& spec, const Mat& U,
                    const SaturationConfig& sat, int experiment)
{
    if (experiment < 0 || experiment >= params.n_experiments()) {
        throw DimensionError("x0", "no initial state for experiment " + std::to_string(experiment));
    }
    return simulate_from(params, spec, U, sat, params.x0[static_cast<std::size_t>(experiment)]);
}

Vec state_update(const ModelParams& p, const ModelSpec& spec, const Vec& x, const Vec& u,
                 const SaturationConfig& sat)
{
    Vec v = p.A * x;
    if (spec.n_u > 0) v += p.B * u;
    if (spec.has_fx()) {
        Vec z(spec.fx_input_dim());
        z.head(spec.n_x) = x;
        if (spec.n_u > 0) z.tail(spec.n_u) = u;
        std::vector<Mat> pre;
        detail::alloc_hidden(p.theta_x, 1, pre);
        Vec out(spec.n_x);
        detail::mlp_forward(p.theta_x, spec.activation, z, pre, 0, out);
        v += out;
    }
    detail::saturate(v, sat, sat.bounds(spec.n_x));
    return v;
}

Vec output_map(const ModelParams& p, const ModelSpec& spec, const Vec& x, const Vec& u)
{
    Vec y = p.C * x;
    if (spec.n_u > 0) y += p.D * u;
    if (spec.has_fy()) {
        Vec z(spec.fy_input_dim());
        z.head(spec.n_x) = x;
        if (spec.feedthrough && spec.n_u > 0) z.tail(spec.n_u) = u;
        std::vector<Mat> pre;
        detail::alloc_hidden(p.theta_y, 1, pre);
        Vec out(spec.n_y);
        detail::mlp_forward(p.theta_y, spec.activation, z, pre, 0, out);
        y += out;
    }
    return y;
}

Mat state_jacobian(const ModelParams& p, const ModelSpec& spec, const Vec& x, const Vec& u,
                   const SaturationConfig& sat)
{
    Vec v = p.A * x;
    if (spec.n_u > 0) v += p.B * u;
    Mat J = p.A;
    if (spec.has_fx()) {
        Vec z(spec.fx_input_dim());
        z.head(spec.n_x) = x;
        if (spec.n_u > 0) z.tail(spec.n_u) = u;
        std::vector<Mat> pre;
        detail::alloc_hidden(p.theta_x, 1, pre);
        Vec out(spec.n_x);
        detail::mlp_forward(p.theta_x, spec.activation, z, pre, 0, out);
        v += out;
        J += detail::mlp_input_jacobian(p.theta_x, spec.activation, z).leftCols(spec.n_x);
    }
    Vec d(spec.n_x);
    detail::saturation_derivative(v, sat, sat.bounds(spec.n_x), d);
    return d.asDiagonal() * J;
}

Mat output_jacobian(const ModelParams& p, const ModelSpec& spec, const Vec& x, const Vec& u)
{
    Mat J = p.C;
    if (spec.has_fy()) {
        Vec z(spec.fy_input_dim());
        z.head(spec.n_x) = x;
        if (spec.feedthrough && spec.n_u > 0) z.tail(spec.n_u) = u;
        J += detail::mlp_input_jacobian(p.theta_y, spec.activation, z).leftCols(spec.n_x);
    }
    return J;
}

} // namespace sysid
