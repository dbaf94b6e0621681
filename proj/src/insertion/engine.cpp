#include "deepinsert/insertion/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "deepinsert/model/transformer.hpp"

namespace deepinsert::insertion {

using model::HiddenState;
using model::Segment;
using numerics::Matrix;

PruneConfig PruneConfig::fastv(std::size_t start_layer, double retention) {
    PruneConfig p;
    p.mode = PruneMode::fastv;
    p.start_layer = start_layer;
    p.retention = retention;
    return p;
}

PruneConfig PruneConfig::vtw(std::size_t exit_layer) {
    PruneConfig p;
    p.mode = PruneMode::vtw;
    p.exit_layer = exit_layer;
    return p;
}

void PruneConfig::validate(const model::ModelConfig& config) const {
    switch (mode) {
        case PruneMode::none:
            return;
        case PruneMode::fastv:
            if (!(retention > 0.0 && retention <= 1.0)) {
                throw std::invalid_argument("fastv: retention ratio must be in (0, 1]");
            }
            // The ranking uses attention at start_layer - 1, which must already
            // contain the multimodal tokens.
            if (start_layer <= config.insert_layer || start_layer > config.n_layers) {
                throw std::invalid_argument("fastv: start layer " + std::to_string(start_layer) + " must be in (" +
                                            std::to_string(config.insert_layer) + ", " +
                                            std::to_string(config.n_layers) + "]");
            }
            return;
        case PruneMode::vtw:
            if (exit_layer < config.insert_layer || exit_layer > config.n_layers) {
                throw std::invalid_argument("vtw: exit layer " + std::to_string(exit_layer) + " must be in [" +
                                            std::to_string(config.insert_layer) + ", " +
                                            std::to_string(config.n_layers) + "]");
            }
            return;
    }
}

std::size_t fastv_keep_count(std::size_t mm_length, double retention) {
    if (mm_length == 0) return 0;
    const double raw = retention * static_cast<double>(mm_length);
    auto keep = static_cast<std::size_t>(std::ceil(raw - 1e-9));
    return std::clamp<std::size_t>(keep, 1, mm_length);
}

std::int64_t argmax_row(const Matrix& logits, std::size_t row) {
    auto r = logits.row(row);
    return static_cast<std::int64_t>(std::max_element(r.begin(), r.end()) - r.begin());
}

std::vector<std::size_t> fastv_select(const LayerAttention& attention, std::int64_t mm_begin, std::size_t mm_length,
                                      std::size_t keep_count) {
    std::vector<double> score(mm_length, 0.0);
    const std::size_t n_heads = attention.head_probs.size();
    for (std::size_t key = 0; key < attention.key_positions.size(); ++key) {
        if (attention.key_segments[key] != Segment::multimodal) continue;
        const auto slot = static_cast<std::size_t>(attention.key_positions[key] - mm_begin);
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t q = 0; q < attention.query_positions.size(); ++q) {
            if (attention.query_positions[q] <= attention.key_positions[key]) continue;
            for (const auto& probs : attention.head_probs) sum += probs(q, key);
            ++n;
        }
        score[slot] = n ? sum / static_cast<double>(n * n_heads) : 0.0;
    }
    std::vector<std::size_t> order(mm_length);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
    order.resize(std::min(keep_count, mm_length));
    std::sort(order.begin(), order.end());
    return order;
}

namespace {

// Keeps language rows and the multimodal rows whose slot is in keep.
HiddenState filter_multimodal(const HiddenState& state, std::int64_t mm_begin, const std::vector<std::size_t>& keep) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < state.rows(); ++i) {
        if (state.segments[i] == Segment::language ||
            std::binary_search(keep.begin(), keep.end(), static_cast<std::size_t>(state.positions[i] - mm_begin))) {
            rows.push_back(i);
        }
    }
    HiddenState out;
    out.activations = Matrix(rows.size(), state.activations.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        auto src = state.activations.row(rows[r]);
        std::copy(src.begin(), src.end(), out.activations.row(r).begin());
        out.positions.push_back(state.positions[rows[r]]);
        out.segments.push_back(state.segments[rows[r]]);
    }
    return out;
}

HiddenState run_layer(const model::ModelConfig& config, const model::Weights& weights, std::size_t layer,
                      const HiddenState& state, model::LayerKV& kv, const ForwardObserver* observer,
                      LayerAttention* keep_attention) {
    const bool want_attention = keep_attention || (observer && observer->on_attention);
    std::vector<Matrix> probs;
    HiddenState out = model::block_forward<float>(config, weights.layers[layer], state, &kv, nullptr,
                                                  want_attention ? &probs : nullptr);
    if (want_attention) {
        LayerAttention att;
        att.layer = layer;
        att.head_probs = std::move(probs);
        att.query_positions = state.positions;
        att.key_positions = kv.positions;
        att.key_segments = kv.segments;
        if (observer && observer->on_attention) observer->on_attention(att);
        if (keep_attention) *keep_attention = std::move(att);
    }
    if (observer && observer->on_layer_output) observer->on_layer_output(layer, out);
    return out;
}

}  // namespace

PrefillResult deepinsert_prefill(const PromptLayout& layout, const model::Weights& weights,
                                 const model::ModelConfig& config, const PrefillOptions& options) {
    config.validate();
    options.prune.validate(config);
    if (layout.mm_length() > 0 && layout.mm_embeddings.cols() != config.d_model) {
        throw numerics::ShapeError("prefill: adapter embeddings width " + std::to_string(layout.mm_embeddings.cols()) +
                                   " != d_model " + std::to_string(config.d_model));
    }
    if (layout.total_length() > config.max_positions) {
        throw std::out_of_range("prefill: combined length " + std::to_string(layout.total_length()) +
                                " exceeds max_positions " + std::to_string(config.max_positions));
    }
    if (layout.text_length() == 0 || (layout.mm_length() > 0 && layout.post_text.empty())) {
        throw std::invalid_argument("prefill: prompt must end with a language token");
    }

    const std::size_t n_di = config.insert_layer;
    const std::int64_t mm_begin = layout.mm_range().begin;
    const ForwardObserver* observer = options.observer;
    const PruneConfig& prune = options.prune;

    PrefillResult result;
    result.cache = SplitKVCache(config.n_layers, n_di);

    // Phase 1: language tokens only, slot positions reserved.
    HiddenState state = assemble_text(layout, weights, config);
    for (std::size_t layer = 0; layer < n_di; ++layer) {
        state = run_layer(config, weights, layer, state, result.cache.layer(layer), observer, nullptr);
    }

    // Phase 2: adapter outputs enter raw at the insertion layer.
    std::vector<std::size_t> retained(layout.mm_length());
    std::iota(retained.begin(), retained.end(), std::size_t{0});
    if (n_di < config.n_layers) {
        state = splice_multimodal(state, layout.mm_embeddings, mm_begin);
    } else {
        retained.clear();
    }
    LayerAttention fastv_attention;
    for (std::size_t layer = n_di; layer < config.n_layers; ++layer) {
        if (prune.mode == PruneMode::vtw && layer == prune.exit_layer) {
            retained.clear();
            state = filter_multimodal(state, mm_begin, retained);
        }
        if (prune.mode == PruneMode::fastv && layer == prune.start_layer) {
            retained = fastv_select(fastv_attention, mm_begin, layout.mm_length(),
                                    fastv_keep_count(layout.mm_length(), prune.retention));
            state = filter_multimodal(state, mm_begin, retained);
        }
        const bool ranking_layer = prune.mode == PruneMode::fastv && layer + 1 == prune.start_layer;
        state = run_layer(config, weights, layer, state, result.cache.layer(layer), observer,
                          ranking_layer ? &fastv_attention : nullptr);
    }

    const std::size_t last = state.rows() - 1;
    result.logits = model::output_logits(state, std::span<const std::size_t>(&last, 1), weights, config);
    result.cache.set_next_position(static_cast<std::int64_t>(layout.total_length()));
    result.retained_mm = std::move(retained);
    return result;
}

Matrix decode_step(SplitKVCache& cache, std::int64_t token, std::int64_t position, const model::Weights& weights,
                   const model::ModelConfig& config, const ForwardObserver* observer) {
    if (cache.n_layers() != config.n_layers || cache.insert_layer() != config.insert_layer) {
        throw std::invalid_argument("decode_step: cache was built for a different layer layout");
    }
    if (position != cache.next_position()) {
        throw std::invalid_argument("decode_step: token position " + std::to_string(position) +
                                    " does not match cache length " + std::to_string(cache.next_position()));
    }
    if (static_cast<std::size_t>(position) >= config.max_positions) {
        throw std::out_of_range("decode_step: position exceeds max_positions");
    }
    HiddenState state = model::embed(std::span<const std::int64_t>(&token, 1),
                                     std::span<const std::int64_t>(&position, 1), weights, config);
    for (std::size_t layer = 0; layer < config.n_layers; ++layer) {
        state = run_layer(config, weights, layer, state, cache.layer(layer), observer, nullptr);
    }
    const std::size_t row = 0;
    Matrix logits = model::output_logits(state, std::span<const std::size_t>(&row, 1), weights, config);
    cache.set_next_position(position + 1);
    return logits;
}

std::vector<std::int64_t> generate(const PromptLayout& layout, const model::Weights& weights,
                                   const model::ModelConfig& config, const GenerateOptions& options) {
    if (options.max_new_tokens < 1) throw std::invalid_argument("generate: max_new_tokens must be at least 1");
    PrefillOptions prefill_options;
    prefill_options.prune = options.prune;
    PrefillResult prefill = deepinsert_prefill(layout, weights, config, prefill_options);
    std::vector<std::int64_t> out;
    std::int64_t token = argmax_row(prefill.logits);
    out.push_back(token);
    while (out.size() < options.max_new_tokens && token != options.stop_token) {
        const Matrix logits = decode_step(prefill.cache, token, prefill.cache.next_position(), weights, config);
        token = argmax_row(logits);
        out.push_back(token);
    }
    return out;
}

}  // namespace deepinsert::insertion
