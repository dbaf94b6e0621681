#include "deepinsert/analysis/attention.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace deepinsert::analysis {

using model::Segment;

void AttentionTrace::validate(double tol) const {
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        for (std::size_t h = 0; h < layer.heads.size(); ++h) {
            if (layer.heads[h].size() != layer.key_positions.size()) {
                throw std::invalid_argument("trace layer " + std::to_string(l) + " head " + std::to_string(h) +
                                            ": row length differs from key count");
            }
            const double sum = std::accumulate(layer.heads[h].begin(), layer.heads[h].end(), 0.0);
            if (std::abs(sum - 1.0) > tol) {
                throw std::invalid_argument("trace layer " + std::to_string(l) + " head " + std::to_string(h) +
                                            ": row sums to " + std::to_string(sum));
            }
        }
    }
}

namespace {

// Records the attention row of the last query in each layer callback.
struct TraceRecorder {
    AttentionTrace trace;
    insertion::ForwardObserver observer;

    explicit TraceRecorder(std::size_t n_layers) {
        trace.layers.resize(n_layers);
        observer.on_attention = [this](const insertion::LayerAttention& att) {
            LayerTrace& out = trace.layers[att.layer];
            const std::size_t q = att.query_positions.size() - 1;
            trace.query_position = att.query_positions[q];
            out.key_positions = att.key_positions;
            out.key_segments = att.key_segments;
            out.heads.clear();
            for (const auto& probs : att.head_probs) {
                auto row = probs.row(q);
                out.heads.emplace_back(row.begin(), row.end());
            }
        };
    }
};

}  // namespace

AttentionTrace capture_prompt_trace(const insertion::PromptLayout& layout, const model::Weights& weights,
                                    const model::ModelConfig& config, const insertion::PruneConfig& prune) {
    TraceRecorder recorder(config.n_layers);
    insertion::PrefillOptions options;
    options.prune = prune;
    options.observer = &recorder.observer;
    insertion::deepinsert_prefill(layout, weights, config, options);
    return recorder.trace;
}

AnswerTrace capture_answer_trace(const insertion::PromptLayout& layout, const model::Weights& weights,
                                 const model::ModelConfig& config, const std::vector<std::int64_t>& vocab_filter) {
    auto prefill = insertion::deepinsert_prefill(layout, weights, config, {});
    AnswerTrace out;
    if (vocab_filter.empty()) {
        out.answer_token = insertion::argmax_row(prefill.logits);
    } else {
        auto logits = prefill.logits.row(0);
        out.answer_token = vocab_filter.front();
        for (std::int64_t tok : vocab_filter) {
            if (logits[tok] > logits[out.answer_token]) out.answer_token = tok;
        }
    }
    TraceRecorder recorder(config.n_layers);
    insertion::decode_step(prefill.cache, out.answer_token, prefill.cache.next_position(), weights, config,
                           &recorder.observer);
    out.trace = std::move(recorder.trace);
    return out;
}

ContributionMap token_contribution_map(const std::vector<AttentionTrace>& traces, std::int64_t mm_begin,
                                       std::size_t mm_length, std::size_t top_k, std::size_t exclude_first_layers) {
    if (traces.empty()) throw std::invalid_argument("token_contribution_map: no traces");
    const std::size_t n_layers = traces.front().layers.size();
    ContributionMap out;
    out.scores = numerics::MatrixD(n_layers, mm_length);
    bool warned = false;
    for (const auto& trace : traces) {
        if (trace.layers.size() != n_layers) throw std::invalid_argument("token_contribution_map: layer count differs");
        for (std::size_t l = exclude_first_layers; l < n_layers; ++l) {
            const auto& layer = trace.layers[l];
            const std::size_t n_heads = layer.heads.size();
            const std::size_t k = std::min(top_k, n_heads);
            if (k < top_k && !warned) {
                out.warnings.push_back("only " + std::to_string(n_heads) + " heads per layer; averaging all of them");
                warned = true;
            }
            std::vector<double> per_head(n_heads);
            for (std::size_t key = 0; key < layer.key_positions.size(); ++key) {
                if (layer.key_segments[key] != Segment::multimodal) continue;
                const std::int64_t slot = layer.key_positions[key] - mm_begin;
                if (slot < 0 || static_cast<std::size_t>(slot) >= mm_length) continue;
                for (std::size_t h = 0; h < n_heads; ++h) per_head[h] = layer.heads[h][key];
                std::partial_sort(per_head.begin(), per_head.begin() + static_cast<std::ptrdiff_t>(k), per_head.end(),
                                  std::greater<>());
                const double mean =
                    std::accumulate(per_head.begin(), per_head.begin() + static_cast<std::ptrdiff_t>(k), 0.0) /
                    static_cast<double>(k);
                out.scores(l, static_cast<std::size_t>(slot)) += mean / static_cast<double>(traces.size());
            }
        }
    }
    for (std::size_t t = 0; t < mm_length; ++t) {
        double total = 0.0;
        for (std::size_t l = 0; l < n_layers; ++l) total += out.scores(l, t);
        if (total <= 0.0) continue;
        for (std::size_t l = 0; l < n_layers; ++l) out.scores(l, t) /= total;
    }
    return out;
}

std::vector<double> var_per_layer(const AttentionTrace& trace) {
    std::vector<double> out;
    for (const auto& layer : trace.layers) {
        double mm = 0.0;
        for (const auto& row : layer.heads) {
            for (std::size_t key = 0; key < row.size(); ++key) {
                if (layer.key_segments[key] == Segment::multimodal) mm += row[key];
            }
        }
        out.push_back(layer.heads.empty() ? 0.0 : std::clamp(mm / static_cast<double>(layer.heads.size()), 0.0, 1.0));
    }
    return out;
}

std::vector<double> var_per_layer(const std::vector<AttentionTrace>& traces) {
    if (traces.empty()) throw std::invalid_argument("var_per_layer: no traces");
    std::vector<double> mean(traces.front().layers.size(), 0.0);
    for (const auto& trace : traces) {
        const auto v = var_per_layer(trace);
        if (v.size() != mean.size()) throw std::invalid_argument("var_per_layer: layer count differs");
        for (std::size_t l = 0; l < v.size(); ++l) mean[l] += v[l] / static_cast<double>(traces.size());
    }
    return mean;
}

std::string trace_to_jsonl(const AttentionTrace& trace) {
    std::ostringstream out;
    out << "# attention_trace schema_version=1 query_position=" << trace.query_position << '\n';
    for (std::size_t l = 0; l < trace.layers.size(); ++l) {
        const auto& layer = trace.layers[l];
        std::vector<std::string> segments;
        for (auto s : layer.key_segments) segments.push_back(s == Segment::multimodal ? "mm" : "text");
        for (std::size_t h = 0; h < layer.heads.size(); ++h) {
            nlohmann::json row = {{"layer", l},
                                  {"head", h},
                                  {"key_positions", layer.key_positions},
                                  {"segments", segments},
                                  {"weights", layer.heads[h]}};
            out << row.dump() << '\n';
        }
    }
    return out.str();
}

}  // namespace deepinsert::analysis
