#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "sysid/function.hpp"

namespace sysid {

using BoolMat = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

enum class Activation { swish, tanh, relu, identity };

std::string_view to_string(Activation a);
/// Throws ConfigError on an unknown name.
Activation activation_from_string(std::string_view name);

double activate(Activation a, double v);
/// Derivative of the activation with respect to its pre-activation argument.
double activate_derivative(Activation a, double v);

/// Entries with `free(i,j) == false` are pinned to `value(i,j)` and never enter the
/// optimization vector.
struct BlockMask
{
    BoolMat free;
    Mat value;

    static BlockMask all_free(Eigen::Index rows, Eigen::Index cols);
    static BlockMask diagonal(Eigen::Index n);
    static BlockMask fixed(const Mat& value);
};

/// Structural restrictions, e.g. D = 0, A diagonal, y = [I 0] x.
struct StructureMask
{
    std::optional<BlockMask> A;
    std::optional<BlockMask> B;
    std::optional<BlockMask> C;
    std::optional<BlockMask> D;
    bool fix_x0 = false;      // x0 of every experiment pinned to zero
    bool fix_theta_x = false; // f_x weights pinned to the layout's fixed values
    bool fix_theta_y = false;
};

/// Structure of the model
///   x_{k+1} = A x_k + B u_k + f_x(x_k, u_k)
///   y_k     = C x_k + D u_k + f_y(x_k, u_k)
/// with f_x, f_y feedforward networks (empty layer lists mean the term is absent).
/// f_y reads u_k only when the model has feedthrough.
struct ModelSpec
{
    int n_x = 1;
    int n_u = 0;
    int n_y = 1;
    std::vector<int> fx_layers;
    std::vector<int> fy_layers;
    Activation activation = Activation::swish;
    bool feedthrough = false;
    StructureMask mask;

    bool has_fx() const { return !fx_layers.empty(); }
    bool has_fy() const { return !fy_layers.empty(); }
    int fx_input_dim() const { return n_x + n_u; }
    int fy_input_dim() const { return n_x + (feedthrough ? n_u : 0); }

    /// Layer sizes including input and output, e.g. {n_x + n_u, 36, n_x}.
    std::vector<int> fx_dims() const;
    std::vector<int> fy_dims() const;

    /// Throws DimensionError / ConfigError on invalid structure.
    void validate() const;
};

struct DenseLayer
{
    Mat W; // out x in
    Vec b; // out
};

struct ModelParams
{
    std::vector<Vec> x0; // one per experiment
    Mat A, B, C, D;
    std::vector<DenseLayer> theta_x;
    std::vector<DenseLayer> theta_y;

    /// All-zero parameters shaped for `spec` with `n_experiments` initial states.
    static ModelParams zeros(const ModelSpec& spec, int n_experiments = 1);

    int n_experiments() const { return static_cast<int>(x0.size()); }

    /// Throws DimensionError naming the first block inconsistent with `spec`.
    void check_dims(const ModelSpec& spec) const;
};

enum class SaturationMode { hard, soft };

struct SaturationConfig
{
    bool enabled = true;
    double bound = 1e4;    // used for every component unless per_component is set
    Vec per_component;     // optional, length n_x
    SaturationMode mode = SaturationMode::hard;
    double gamma = 10.0;   // soft mode sharpness

    Vec bounds(int n_x) const;
    void validate(int n_x) const;
};

/// sat_gamma(x, s) = s + log((1 + exp(-g (x + s))) / (1 + exp(-g (x - s)))) / g, componentwise.
double soft_sat(double x, double x_sat, double gamma);
double soft_sat_derivative(double x, double x_sat, double gamma);
Vec soft_sat(const Vec& x, const Vec& x_sat, double gamma);

/// Maps between ModelParams and the flat optimization vector.
///
/// Ordering: x0 blocks (experiment by experiment), A, B, C, D (each row-major),
/// then f_x layer by layer (W row-major, then b), then f_y the same way.
/// Entries pinned by the structure mask are skipped; their values come from
/// `fixed_values()`.
class ParamLayout
{
public:
    /// Fixed entries take the mask values (zero where no mask value applies).
    ParamLayout(const ModelSpec& spec, int n_experiments);
    /// Fixed entries are read from `fixed_values`, which must be shaped for `spec`.
    ParamLayout(const ModelSpec& spec, ModelParams fixed_values);

    int size() const { return size_; }
    const ModelSpec& spec() const { return spec_; }
    int n_experiments() const { return fixed_.n_experiments(); }
    const ModelParams& fixed_values() const { return fixed_; }

    Vec pack(const ModelParams& params) const;
    ModelParams unpack(const Vec& v) const;
    /// Writes the free entries of `v` into `params` in place.
    void unpack_into(const Vec& v, ModelParams& params) const;

    /// Row-major flat indices of each block entry; -1 marks a fixed entry.
    const std::vector<int>& x0_index(int experiment) const { return x0_[experiment]; }
    const std::vector<int>& A_index() const { return A_; }
    const std::vector<int>& B_index() const { return B_; }
    const std::vector<int>& C_index() const { return C_; }
    const std::vector<int>& D_index() const { return D_; }
    const std::vector<int>& fx_weight_index(std::size_t layer) const { return fxW_[layer]; }
    const std::vector<int>& fx_bias_index(std::size_t layer) const { return fxb_[layer]; }
    const std::vector<int>& fy_weight_index(std::size_t layer) const { return fyW_[layer]; }
    const std::vector<int>& fy_bias_index(std::size_t layer) const { return fyb_[layer]; }

    /// Free indices of all initial states.
    std::vector<int> x0_indices() const;
    /// Free indices of everything except initial states (A, B, C, D and networks).
    std::vector<int> theta_indices() const;
    /// Free indices of the network weights and biases only.
    std::vector<int> network_indices() const;

private:
    template <class Params, class Fn>
    void visit(Params& params, Fn&& fn) const;

    void build();

    ModelSpec spec_;
    ModelParams fixed_;
    int size_ = 0;
    std::vector<std::vector<int>> x0_;
    std::vector<int> A_, B_, C_, D_;
    std::vector<std::vector<int>> fxW_, fxb_, fyW_, fyb_;
};

/// Open-loop simulation result; rows are time samples.
struct Simulation
{
    Mat states;  // N x n_x, x_0 .. x_{N-1}
    Mat outputs; // N x n_y
};

/// Simulates from `params.x0[experiment]`. The saturation is applied to every
/// updated state. Throws NumericalError at the first non-finite step.
Simulation simulate(const ModelParams& params, const ModelSpec& spec, const Mat& U,
                    const SaturationConfig& sat, int experiment = 0);
/// Same, from an explicit initial state.
Simulation simulate_from(const ModelParams& params, const ModelSpec& spec, const Mat& U,
                         const SaturationConfig& sat, const Vec& x0);

/// One-step maps and their state Jacobians, used by the Kalman filters.
Vec state_update(const ModelParams& params, const ModelSpec& spec, const Vec& x, const Vec& u,
                 const SaturationConfig& sat);
Vec output_map(const ModelParams& params, const ModelSpec& spec, const Vec& x, const Vec& u);
Mat state_jacobian(const ModelParams& params, const ModelSpec& spec, const Vec& x, const Vec& u,
                   const SaturationConfig& sat);
Mat output_jacobian(const ModelParams& params, const ModelSpec& spec, const Vec& x, const Vec& u);

} // namespace sysid
