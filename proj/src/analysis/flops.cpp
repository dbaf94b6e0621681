#include "deepinsert/analysis/flops.hpp"

#include <stdexcept>

namespace deepinsert::analysis {

void FlopsQuery::validate() const {
    if (n_layers == 0 || d_model == 0 || d_ff == 0 || n_heads == 0 || text_length == 0) {
        throw std::invalid_argument("flops query: n_layers, d_model, d_ff, n_heads and text_length must be positive");
    }
    if (insert_layer > n_layers) {
        throw std::invalid_argument("flops query: insert layer " + std::to_string(insert_layer) + " exceeds " +
                                    std::to_string(n_layers) + " layers");
    }
}

FlopsQuery FlopsQuery::from(const model::ModelConfig& config, std::uint64_t text_length, std::uint64_t mm_length) {
    return {config.n_layers, config.d_model, config.d_ff, config.n_heads, text_length, mm_length, config.insert_layer};
}

LayerFlops& LayerFlops::operator+=(const LayerFlops& o) {
    projection += o.projection;
    attention += o.attention;
    feed_forward += o.feed_forward;
    return *this;
}

LayerFlops flops_per_layer(std::uint64_t length, std::uint64_t d_model, std::uint64_t d_ff, std::uint64_t) {
    const std::uint64_t L = length, d = d_model;
    return {6 * L * d * d, 4 * L * L * d + 2 * L * d * d, 4 * L * d * d_ff};
}

FlopsReport flops_deepinsert(const FlopsQuery& q) {
    q.validate();
    FlopsReport r;
    r.query = q;
    r.text_layer = flops_per_layer(q.text_length, q.d_model, q.d_ff, q.n_heads);
    r.full_layer = flops_per_layer(q.text_length + q.mm_length, q.d_model, q.d_ff, q.n_heads);
    for (std::uint64_t l = 0; l < q.n_layers; ++l) r.sum += l < q.insert_layer ? r.text_layer : r.full_layer;
    r.total = r.sum.total();
    return r;
}

std::uint64_t flops_subtractive(const FlopsQuery& q) {
    q.validate();
    const std::uint64_t d = q.d_model, lt = q.text_length, lm = q.mm_length;
    const std::uint64_t saved = 8 * lm * d * d + 4 * (2 * lt + lm) * lm * d + 4 * lm * d * q.d_ff;
    return q.n_layers * flops_per_layer(lt + lm, d, q.d_ff, q.n_heads).total() - q.insert_layer * saved;
}

std::uint64_t flops_split(const FlopsQuery& q) {
    q.validate();
    return q.insert_layer * flops_per_layer(q.text_length, q.d_model, q.d_ff, q.n_heads).total() +
           (q.n_layers - q.insert_layer) *
               flops_per_layer(q.text_length + q.mm_length, q.d_model, q.d_ff, q.n_heads).total();
}

std::vector<std::uint64_t> effective_lengths(const FlopsQuery& q, const insertion::PruneConfig& prune) {
    q.validate();
    model::ModelConfig shape;
    shape.n_layers = q.n_layers;
    shape.insert_layer = q.insert_layer;
    prune.validate(shape);
    std::vector<std::uint64_t> out;
    for (std::uint64_t l = 0; l < q.n_layers; ++l) {
        std::uint64_t mm = l < q.insert_layer ? 0 : q.mm_length;
        if (prune.mode == insertion::PruneMode::vtw && l >= prune.exit_layer) mm = 0;
        if (prune.mode == insertion::PruneMode::fastv && l >= prune.start_layer) {
            mm = insertion::fastv_keep_count(q.mm_length, prune.retention);
        }
        out.push_back(q.text_length + mm);
    }
    return out;
}

LayerFlops flops_piecewise(const std::vector<std::uint64_t>& lengths, std::uint64_t d_model, std::uint64_t d_ff,
                           std::uint64_t n_heads) {
    LayerFlops sum;
    for (std::uint64_t L : lengths) sum += flops_per_layer(L, d_model, d_ff, n_heads);
    return sum;
}

LayerFlops from_counter(const numerics::OpCounter& c) {
    using numerics::OpTag;
    return {c.get(OpTag::projection), c.attention_total(), c.get(OpTag::feed_forward)};
}

Reconciliation reconcile_counts(const numerics::OpCounter& instrumented, const LayerFlops& expected) {
    Reconciliation r;
    r.expected = expected;
    r.instrumented = from_counter(instrumented);
    r.exact = r.expected == r.instrumented;
    auto diff = [&](const char* name, std::uint64_t want, std::uint64_t got) {
        if (want == got) return;
        const auto delta = static_cast<long long>(got) - static_cast<long long>(want);
        r.message += std::string(r.message.empty() ? "" : "; ") + name + ": expected " + std::to_string(want) +
                     ", counted " + std::to_string(got) + " (" + (delta > 0 ? "+" : "") + std::to_string(delta) + ")";
    };
    diff("projection", expected.projection, r.instrumented.projection);
    diff("attention", expected.attention, r.instrumented.attention);
    diff("feed_forward", expected.feed_forward, r.instrumented.feed_forward);
    if (r.exact) r.message = "exact: " + std::to_string(expected.total());
    return r;
}

}  // namespace deepinsert::analysis
