#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "sysid/dataset.hpp"
#include "sysid/error.hpp"
#include "sysid/model.hpp"
#include "sysid/objectives.hpp"
#include "sysid/optimizers.hpp"
#include "sysid/state_estimation.hpp"

namespace sysid {

enum class X0Mode { free_per_experiment, fixed_zero };
enum class Selection { r2, loss, leaderboard };

std::string_view to_string(X0Mode m);
X0Mode x0_mode_from_string(std::string_view name);
std::string_view to_string(Selection s);
Selection selection_from_string(std::string_view name);

struct StartProgress
{
    int start = 0;
    std::string_view phase; // "adam" or "lbfgsb"
    IterationInfo info;
};

/// Called from worker threads when starts run concurrently.
using ProgressCallback = std::function<void(const StartProgress&)>;

struct TrainConfig
{
    int n_starts = 1;
    std::uint64_t seed = 0;
    AdamOptions adam;
    LbfgsbOptions lbfgsb;
    RegularizationConfig reg;
    SaturationConfig sat;
    double init_A_scale = 0.5;
    double init_std = 0.1;
    X0Mode x0_mode = X0Mode::free_per_experiment;
    double zero_threshold = 1e-6;
    Selection selection = Selection::r2;
    int presample = 0;       // candidates drawn per start, best by loss kept; 0 disables
    bool auto_scale = false; // standard-scale unscaled data before training
    int max_reinit = 10;     // redraws when the initial point is not finite
    int jobs = 0;            // concurrent starts; 0 lets OpenMP decide, 1 runs serially
    bool timings = false;
    EkfConfig leaderboard_ekf; // x0 reconstruction for leaderboard selection
    ProgressCallback progress;

    void validate() const;
};

struct StartSummary
{
    int start = 0;
    bool ok = false;
    std::string message;
    int reinit = 0;
    SolveStatus adam_status = SolveStatus::iteration_limit;
    SolveStatus lbfgsb_status = SolveStatus::converged;
    int adam_evals = 0;
    int lbfgsb_evals = 0;
    double loss = 0.0;      // mean squared simulation error
    double objective = 0.0; // loss plus regularizer
    double r2_average = 0.0;
    double selection_score = 0.0; // leaderboard R2 when that selection is active
    double seconds = 0.0;
};

struct Sparsity
{
    int network_zeros = 0;
    int network_entries = 0;
    int theta_zeros = 0; // over every free non-initial-state entry
    int theta_entries = 0;
};

struct FitReport
{
    ModelSpec spec; // as trained, including the x0 mode
    ModelParams best_params;
    ChannelScaling u_scaling;
    ChannelScaling y_scaling;
    bool scaled = false;
    int best_start = 0;
    R2Report r2_train;
    double final_loss = 0.0;
    double final_objective = 0.0;
    Sparsity sparsity;
    int effective_order = 0;
    int active_inputs = 0;
    std::vector<StartSummary> starts;
    double total_seconds = 0.0;
};

/// Thrown when every start failed; carries the per-start diagnostics.
class TrainingError : public Error
{
public:
    TrainingError(const std::string& what, std::vector<StartSummary> starts)
        : Error(what), starts_(std::move(starts))
    {
    }
    const std::vector<StartSummary>& starts() const { return starts_; }

private:
    std::vector<StartSummary> starts_;
};

/// Spec actually trained: fixed_zero sets the x0 mask.
ModelSpec training_spec(const ModelSpec& spec, const TrainConfig& cfg);

/// Initial flat vector: free A entries init_A_scale * I, initial states zero, every other
/// free entry Gaussian with std init_std.
Vec draw_initial(const ParamLayout& layout, const TrainConfig& cfg, std::uint64_t stream_seed);

/// Best of `n_samples` initial draws by open-loop loss. Draws come from one stream, so
/// the first k samples do not depend on n_samples.
Vec multi_start_presample(const ModelSpec& spec, const Dataset& data, const TrainConfig& cfg, int n_samples,
                          int start = 0);

/// Multi-start Adam + L-BFGS-B training. `leaderboard` is only read with
/// Selection::leaderboard, which picks the start with the best R2 on that data.
FitReport fit(const ModelSpec& spec, const Dataset& data, const TrainConfig& cfg,
              const Dataset* leaderboard = nullptr);

/// Number of state groups whose largest entry in magnitude exceeds `threshold`.
int effective_order(const ModelParams& params, const ModelSpec& spec, double threshold);
/// Number of input groups (columns of B and D and the input weights) above `threshold`.
int active_inputs(const ModelParams& params, const ModelSpec& spec, double threshold);
Sparsity count_sparsity(const Vec& v, const ParamLayout& layout, double threshold);

enum class X0Policy { from_fit, ekf_rts, refine };

std::string_view to_string(X0Policy p);
X0Policy x0_policy_from_string(std::string_view name);

struct EvalReport
{
    R2Report r2;
    double loss = 0.0;
    std::vector<Vec> x0;
};

/// Open-loop simulation of every experiment from the policy-selected initial state,
/// scored on the concatenated outputs. from_fit needs one stored x0 per experiment
/// (a single stored x0 is reused for all).
EvalReport evaluate(const ModelParams& params, const ModelSpec& spec, const Dataset& data, X0Policy policy,
                    const SaturationConfig& sat, const EkfConfig& ekf = {}, const LbfgsbOptions& refine = {});

} // namespace sysid
