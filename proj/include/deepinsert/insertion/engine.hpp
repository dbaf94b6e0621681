#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "deepinsert/insertion/kv_cache.hpp"
#include "deepinsert/insertion/layout.hpp"
#include "deepinsert/model/block.hpp"
#include "deepinsert/model/config.hpp"
#include "deepinsert/model/weights.hpp"

namespace deepinsert::insertion {

enum class PruneMode { none, fastv, vtw };

// Multimodal token reduction applied after insertion.
//  fastv: from layer start_layer on, keep the ceil(retention * L_mm) tokens
//         that received the most attention at layer start_layer - 1.
//  vtw:   from layer exit_layer on, drop every multimodal token.
struct PruneConfig {
    PruneMode mode = PruneMode::none;
    std::size_t start_layer = 0;
    double retention = 1.0;
    std::size_t exit_layer = 0;

    void validate(const model::ModelConfig& config) const;
    static PruneConfig fastv(std::size_t start_layer, double retention);
    static PruneConfig vtw(std::size_t exit_layer);
};

// ceil(retention * mm_length), at least 1 when mm_length > 0.
std::size_t fastv_keep_count(std::size_t mm_length, double retention);

// Attention seen by one layer during a forward call.
struct LayerAttention {
    std::size_t layer = 0;
    std::vector<numerics::Matrix> head_probs;  // queries x keys per head
    std::vector<std::int64_t> query_positions;
    std::vector<std::int64_t> key_positions;
    std::vector<model::Segment> key_segments;
};

struct ForwardObserver {
    std::function<void(const LayerAttention&)> on_attention;
    // Residual stream after each layer.
    std::function<void(std::size_t layer, const model::HiddenState&)> on_layer_output;
};

struct PrefillOptions {
    PruneConfig prune;
    const ForwardObserver* observer = nullptr;
};

struct PrefillResult {
    numerics::Matrix logits;  // 1 x vocab_size, at the last prompt position
    SplitKVCache cache;
    // Slot indices of multimodal tokens still present after the last layer.
    std::vector<std::size_t> retained_mm;
};

// Two-phase prefill. Layers [0, insert_layer) run over the language tokens
// only; the adapter embeddings are then spliced in at their reserved
// positions and layers [insert_layer, n_layers) run over the full sequence.
// The prompt must end with a language token.
PrefillResult deepinsert_prefill(const PromptLayout& layout, const model::Weights& weights,
                                 const model::ModelConfig& config, const PrefillOptions& options = {});

// Runs one new token through every layer against the split cache and appends
// its K/V to each layer. position must equal cache.next_position().
numerics::Matrix decode_step(SplitKVCache& cache, std::int64_t token, std::int64_t position,
                             const model::Weights& weights, const model::ModelConfig& config,
                             const ForwardObserver* observer = nullptr);

struct GenerateOptions {
    std::size_t max_new_tokens = 1;
    std::optional<std::int64_t> stop_token;
    PruneConfig prune;
};

// Greedy decoding; the stop token, if produced, is the last element.
std::vector<std::int64_t> generate(const PromptLayout& layout, const model::Weights& weights,
                                   const model::ModelConfig& config, const GenerateOptions& options);

// Index of the largest entry of row 0; ties go to the lower index.
std::int64_t argmax_row(const numerics::Matrix& logits, std::size_t row = 0);

// Multimodal slot indices ranked for FastV: mean over heads and over
// later-position queries of the attention each multimodal key receives.
// Returns the keep_count best, in slot order. Ties go to the lower index.
std::vector<std::size_t> fastv_select(const LayerAttention& attention, std::int64_t mm_begin, std::size_t mm_length,
                                      std::size_t keep_count);

}  // namespace deepinsert::insertion
