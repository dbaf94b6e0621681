#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "deepinsert/insertion/engine.hpp"
#include "deepinsert/modality/adapter.hpp"
#include "deepinsert/modality/encoder.hpp"
#include "deepinsert/modality/grid_task.hpp"
#include "deepinsert/model/config.hpp"
#include "deepinsert/model/weights.hpp"
#include "deepinsert/numerics/kernels.hpp"
#include "deepinsert/numerics/rng.hpp"

namespace deepinsert::training {

enum class Schedule { constant, cosine };

std::string to_string(Schedule s);
Schedule parse_schedule(const std::string& s);

struct TrainConfig {
    double lr = 3e-4;
    Schedule schedule = Schedule::cosine;
    std::size_t warmup_steps = 0;  // linear ramp before the schedule proper
    std::size_t batch_size = 32;
    std::size_t steps = 20000;
    std::size_t eval_interval = 1000;
    std::size_t eval_limit = 0;  // 0 = whole validation split
    std::uint64_t seed = 0;
    double grad_clip = 1.0;               // global L2 norm; 0 disables
    std::string checkpoint_path;          // empty = no checkpoints
    std::size_t checkpoint_interval = 0;  // 0 = only at the end

    void validate() const;
};

// Learning rate for 1-based optimizer step t.
double learning_rate(const TrainConfig& config, std::uint64_t step);

struct EvalRow {
    std::uint64_t step = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_acc_identity = 0.0;
    double val_acc_majority = 0.0;
    double muladds_fwd = 0.0;  // mean core mul-adds per prefill
    double ms_fwd = 0.0;
    double elapsed_s = 0.0;
};

struct MetricsLog {
    std::uint64_t first_step = 1;
    std::vector<double> step_loss;  // step_loss[i] belongs to step first_step + i
    std::vector<EvalRow> evals;

    // step,loss,val_acc_identity,val_acc_majority,muladds_fwd,ms_fwd
    std::string to_csv() const;
    // step,loss
    std::string loss_curve_csv() const;
};

struct EvalResult {
    std::size_t n_cell = 0;
    std::size_t n_majority = 0;
    double acc_cell = 0.0;
    double acc_majority = 0.0;
    double accuracy = 0.0;
    double mean_nll = 0.0;
    double muladds_fwd = 0.0;
    double ms_fwd = 0.0;
    std::vector<std::int64_t> predictions;
};

// Greedy single-token answer, restricted to the symbol tokens, against gold.
// NLL is over the full vocabulary.
EvalResult evaluate(const model::Weights& weights, const modality::Adapter& adapter,
                    const modality::FrozenEncoder& encoder, const std::vector<modality::GridSample>& split,
                    const model::ModelConfig& config, const insertion::PruneConfig& prune = {});

struct TrainState {
    model::ModelConfig config;
    model::Weights weights;
    modality::Adapter adapter;
    std::vector<numerics::AdamMoments<float>> moments;  // parameter enumeration order
    std::uint64_t step = 0;
    numerics::Rng batch_rng;
    std::map<std::string, std::uint64_t> metadata;  // carried through checkpoints untouched
};

TrainState init_train_state(const model::ModelConfig& config, std::size_t d_enc, std::size_t adapter_hidden,
                            std::uint64_t seed);

// Every trainable tensor, language model first, then adapter.
void for_each_parameter(TrainState& state, const std::function<void(const std::string&, numerics::Matrix&)>& f);

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(const std::string& what, std::uint64_t step) : std::runtime_error(what), step_(step) {}
    std::uint64_t step() const { return step_; }

private:
    std::uint64_t step_;
};

using EvalCallback = std::function<void(const EvalRow&)>;

// Runs optimizer steps state.step+1 .. config.steps. Resuming a saved state
// reproduces the uninterrupted run. On a non-finite loss or gradient the
// pre-step state is checkpointed (if a path is set) and TrainingDiverged is
// thrown; the state is left unmodified.
MetricsLog train(TrainState& state, const std::vector<modality::GridSample>& train_split,
                 const std::vector<modality::GridSample>& val_split, const modality::FrozenEncoder& encoder,
                 const TrainConfig& config, const EvalCallback& on_eval = {});

// Weights, adapter, Adam moments, step, batch RNG position and metadata.
void save_checkpoint(const std::filesystem::path& path, const TrainState& state);

// Config and tensor shapes come from the file. Throws CheckpointError on a
// malformed file.
TrainState load_checkpoint(const std::filesystem::path& path);

// Restores into an existing state, rejecting shape mismatches by tensor name.
void restore_checkpoint(const std::filesystem::path& path, TrainState& state);

}  // namespace deepinsert::training
