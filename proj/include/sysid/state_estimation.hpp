#pragma once

#include <vector>

#include "sysid/dataset.hpp"
#include "sysid/model.hpp"
#include "sysid/optimizers.hpp"

namespace sysid {

/// Settings of the multi-epoch EKF + RTS initial-state reconstruction.
/// Empty matrices take the defaults: Q = 1e-8 I, R = I, P0 = I / (rho_x N), or
/// P0 = 1e3 I when rho_x = 0, and x0_init = 0.
struct EkfConfig
{
    int epochs = 1;
    Mat Q;
    Mat R;
    Mat P0;
    double rho_x = 0.0;
    Vec x0_init;

    Mat resolved_Q(int n_x) const;
    Mat resolved_R(int n_y) const;
    Mat resolved_P0(int n_x, Eigen::Index N) const;
    /// Throws ConfigError unless epochs >= 1 and the covariances are symmetric positive definite.
    void validate(int n_x, int n_y) const;
};

/// Quantities stored by one epoch, indexed by time step k = 0 .. N-1.
struct SmootherTrace
{
    std::vector<Vec> x_pred;   // x_{k|k-1}
    std::vector<Vec> x_filt;   // x_{k|k}
    std::vector<Vec> x_next;   // x_{k+1|k}
    std::vector<Mat> P_pred;   // P_{k|k-1}
    std::vector<Mat> P_filt;   // P_{k|k}
    std::vector<Mat> P_next;   // P_{k+1|k}
    std::vector<Mat> A;        // df/dx at x_{k|k}
    std::vector<Mat> G;        // smoother gains
    std::vector<Vec> e;        // innovations
    std::vector<Vec> x_smooth; // x^s_k
    std::vector<Mat> P_smooth; // P^s_k
};

struct Reconstruction
{
    Vec x0;
    Mat P0;
    std::vector<Vec> epoch_x0;        // x^s_0 after each epoch
    std::vector<SmootherTrace> trace; // one per epoch, filled when requested
};

/// Initial state of `data` under the model by N_e passes of a forward extended
/// Kalman filter and a backward Rauch-Tung-Striebel smoother; each pass starts from
/// the previous smoothed (x^s_0, P^s_0). Throws NumericalError with the step index
/// when an innovation or predicted covariance cannot be factorized.
Reconstruction ekf_rts_reconstruct(const ModelParams& params, const ModelSpec& spec, const Experiment& data,
                                   const SaturationConfig& sat, const EkfConfig& cfg, bool keep_trace = false);

struct RefineResult
{
    Vec x0;
    double loss_init = 0.0;  // 1/2 rho_x |x0|^2 + mean squared error at the start
    double loss_final = 0.0;
    SolveResult solver;
};

/// Minimizes 1/2 rho_x |x0|^2 + mean squared simulation error over x0 alone.
RefineResult refine_x0(const ModelParams& params, const ModelSpec& spec, const Experiment& data,
                       const SaturationConfig& sat, const Vec& x0_init, double rho_x,
                       const LbfgsbOptions& opts = {});

/// EKF with an optional constant output disturbance q (q_{k+1} = q_k + noise,
/// yhat = g(x, u) + q) used for multi-step prediction.
struct PredictorConfig
{
    bool output_disturbance = true;
    Mat Qx;   // default 1e-8 I
    Mat Qq;   // default 1e-4 I
    Mat R;    // default I
    Mat P0;   // default I on the augmented state
    Vec x0;   // default 0
};

struct PredictionReport
{
    std::vector<int> horizon;            // 1 .. p
    std::vector<double> r2_average;      // per horizon
    std::vector<Vec> r2_per_output;      // per horizon
    std::vector<Eigen::Index> samples;   // predictions scored per horizon
    Vec q_final;                         // last filtered disturbance (empty without augmentation)
};

/// After each measurement update at step k, propagates the model open loop with q
/// frozen and scores yhat_{k+h|k} against y_{k+h} for h = 1 .. p.
PredictionReport ekf_output_disturbance_predict(const ModelParams& params, const ModelSpec& spec,
                                                const Experiment& data, const SaturationConfig& sat,
                                                int horizon, const PredictorConfig& cfg = {});

} // namespace sysid
