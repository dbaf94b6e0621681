#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deepinsert/modality/adapter.hpp"
#include "deepinsert/modality/encoder.hpp"
#include "deepinsert/modality/grid_task.hpp"
#include "deepinsert/model/config.hpp"
#include "deepinsert/model/weights.hpp"
#include "deepinsert/numerics/kernels.hpp"
#include "deepinsert/training/trainer.hpp"

namespace deepinsert::selection {

struct SweepEntry {
    std::size_t insert_layer = 0;
    training::EvalResult eval;
    double flops = 0.0;  // analytical, mean per prefill over the split
};

struct SweepResult {
    std::vector<SweepEntry> entries;  // candidate order

    // insert_layer,accuracy,acc_cell,acc_majority,nll,flops,muladds_fwd
    std::string to_csv() const;
};

// Loads baseline weights into the late-insertion architecture at every
// candidate layer and evaluates without any update.
SweepResult noretrain_sweep(const model::Weights& weights, const modality::Adapter& adapter,
                            const modality::FrozenEncoder& encoder, const model::ModelConfig& config,
                            const std::vector<std::size_t>& candidates, const std::vector<modality::GridSample>& split);

struct PolicyConfig {
    double lambda = 0.0;
    double lr = 0.02;
    std::size_t rollout_steps = 400;
    std::vector<std::size_t> candidates{0, 2, 4, 6};
    std::size_t hidden = 16;
    double baseline_decay = 0.9;  // moving-average reward baseline
    std::uint64_t seed = 0;

    void validate(std::size_t n_layers) const;
};

// reward = -nll + lambda * layer / n_layers
double layer_reward(double nll, double lambda, std::size_t layer, std::size_t n_layers);

// MLP: mean language-token embedding -> tanh hidden -> softmax over candidates.
struct LayerPolicy {
    std::vector<std::size_t> candidates;
    numerics::MatrixD w1, b1, w2, b2;

    static LayerPolicy init(std::size_t d_model, std::size_t hidden, std::vector<std::size_t> candidates,
                            numerics::Rng& rng);
    std::vector<double> probabilities(const std::vector<double>& input) const;
};

// Mean token embedding of the sample's language tokens.
std::vector<double> policy_input(const modality::GridSample& sample, const model::Weights& weights);

struct RewardRow {
    std::size_t step = 0;
    std::size_t sample = 0;
    std::size_t layer = 0;
    double performance = 0.0;  // -nll
    double redundancy = 0.0;   // layer / n_layers
    double total = 0.0;
    double baseline = 0.0;
};

struct PolicyResult {
    LayerPolicy policy;
    std::vector<RewardRow> log;
    std::vector<double> mean_probabilities;  // over the data subset
    double expected_depth = 0.0;             // sum p(layer) * layer, averaged over samples
    std::size_t modal_layer = 0;             // argmax of mean_probabilities, ties to the deeper layer

    // step,sample,layer,performance,redundancy,total,baseline
    std::string reward_csv() const;
};

// Answer NLL of each sample at each candidate layer, with the model frozen;
// rows follow candidates.
std::vector<std::vector<double>> exhaustive_nll(const model::Weights& weights, const modality::Adapter& adapter,
                                                const modality::FrozenEncoder& encoder,
                                                const model::ModelConfig& config,
                                                const std::vector<std::size_t>& candidates,
                                                const std::vector<modality::GridSample>& subset);

// REINFORCE over candidate layers against the frozen model.
PolicyResult reinforce_train(const model::Weights& weights, const modality::Adapter& adapter,
                             const modality::FrozenEncoder& encoder, const model::ModelConfig& config,
                             const PolicyConfig& policy_config, const std::vector<modality::GridSample>& subset);

enum class Criterion { best_accuracy, knee, expected_depth };

std::string to_string(Criterion c);
Criterion parse_criterion(const std::string& s);

// best_accuracy: argmax accuracy, ties to the deeper layer. knee: deepest
// layer within delta_points accuracy points of the shallowest candidate.
std::size_t select_layer(const SweepResult& sweep, Criterion criterion, double delta_points = 1.0);
// expected_depth only: the rounded policy mean.
std::size_t select_layer(const PolicyResult& policy, Criterion criterion);

}  // namespace deepinsert::selection
