#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deepinsert/insertion/engine.hpp"
#include "deepinsert/insertion/layout.hpp"
#include "deepinsert/model/block.hpp"
#include "deepinsert/numerics/matrix.hpp"

namespace deepinsert::analysis {

struct LayerTrace {
    std::vector<std::int64_t> key_positions;
    std::vector<model::Segment> key_segments;
    std::vector<std::vector<double>> heads;  // heads[h][key]
};

// Attention rows of one query token through every layer. Keys differ per
// layer: layers below the insertion layer never see multimodal positions.
struct AttentionTrace {
    std::int64_t query_position = 0;
    std::vector<LayerTrace> layers;

    // Each row must sum to 1 within tol.
    void validate(double tol = 1e-6) const;
};

// Trace from the last prompt token during prefill.
AttentionTrace capture_prompt_trace(const insertion::PromptLayout& layout, const model::Weights& weights,
                                    const model::ModelConfig& config, const insertion::PruneConfig& prune = {});

struct AnswerTrace {
    std::int64_t answer_token = 0;  // greedy prediction after the prompt
    AttentionTrace trace;           // from that token as it is decoded
};

// Trace from the first generated token. vocab_filter, if non-empty, restricts
// the greedy choice.
AnswerTrace capture_answer_trace(const insertion::PromptLayout& layout, const model::Weights& weights,
                                 const model::ModelConfig& config, const std::vector<std::int64_t>& vocab_filter = {});

struct ContributionMap {
    numerics::MatrixD scores;  // layers x multimodal slots
    std::vector<std::string> warnings;
};

// Per layer, the score of each multimodal token is the mean attention it
// receives over the top_k heads ranked by attention to that same token,
// averaged over traces. Each token column is then normalized to sum to 1
// over layers (left at zero when its total is zero). Layers below
// exclude_first_layers are zeroed before normalizing.
ContributionMap token_contribution_map(const std::vector<AttentionTrace>& traces, std::int64_t mm_begin,
                                       std::size_t mm_length, std::size_t top_k = 5,
                                       std::size_t exclude_first_layers = 0);

// Per layer: attention mass on multimodal keys summed over heads, divided by
// the number of heads.
std::vector<double> var_per_layer(const AttentionTrace& trace);
std::vector<double> var_per_layer(const std::vector<AttentionTrace>& traces);

// One JSON object per (layer, head) row, after a version header line.
std::string trace_to_jsonl(const AttentionTrace& trace);

}  // namespace deepinsert::analysis
