#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "deepinsert/model/block.hpp"
#include "deepinsert/model/config.hpp"
#include "deepinsert/model/weights.hpp"
#include "deepinsert/numerics/matrix.hpp"

namespace deepinsert::insertion {

// Half-open range of global positions.
struct PositionRange {
    std::int64_t begin = 0;
    std::int64_t end = 0;

    std::int64_t size() const { return end - begin; }
    bool contains(std::int64_t p) const { return p >= begin && p < end; }
    friend bool operator==(const PositionRange&, const PositionRange&) = default;
};

// A prompt split into text before the multimodal slot, the slot's adapter
// embeddings, and text after it. Positions are assigned as if the slot were
// present, whether or not a given layer sees it.
struct PromptLayout {
    std::vector<std::int64_t> pre_text;
    numerics::Matrix mm_embeddings;  // mm_length x d_model
    std::vector<std::int64_t> post_text;

    std::size_t mm_length() const { return mm_embeddings.rows(); }
    std::size_t text_length() const { return pre_text.size() + post_text.size(); }
    std::size_t total_length() const { return text_length() + mm_length(); }

    PositionRange pre_range() const;
    PositionRange mm_range() const;
    PositionRange post_range() const;

    // pre_text followed by post_text, with their reserved global positions.
    std::vector<std::int64_t> text_tokens() const;
    std::vector<std::int64_t> text_positions() const;
};

// Splits a template holding exactly one placeholder token.
PromptLayout segment_prompt(std::span<const std::int64_t> template_tokens, std::int64_t placeholder,
                            numerics::Matrix mm_embeddings, std::size_t d_model);

// Same prompt with extra tokens appended to the post text.
PromptLayout extend_prompt(const PromptLayout& layout, std::span<const std::int64_t> extra_tokens);

// Layer-0 state of the conventional architecture: language and multimodal
// rows interleaved by position.
model::HiddenState assemble_full(const PromptLayout& layout, const model::Weights& weights,
                                 const model::ModelConfig& config);

// Layer-0 state holding only the language tokens (the multimodal slot stays
// reserved in the position numbering).
model::HiddenState assemble_text(const PromptLayout& layout, const model::Weights& weights,
                                 const model::ModelConfig& config);

// Merges multimodal rows (positions mm_begin, mm_begin + 1, ...) into a
// language-only state, keeping rows ordered by position.
template <typename T>
model::BasicHiddenState<T> splice_multimodal(const model::BasicHiddenState<T>& text_state,
                                             const numerics::BasicMatrix<T>& mm, std::int64_t mm_begin) {
    std::size_t split = 0;
    while (split < text_state.rows() && text_state.positions[split] < mm_begin) ++split;
    const std::size_t width = text_state.activations.cols();
    model::BasicHiddenState<T> out;
    out.activations = numerics::BasicMatrix<T>(text_state.rows() + mm.rows(), width);
    std::size_t row = 0;
    auto copy_text = [&](std::size_t i) {
        auto src = text_state.activations.row(i);
        std::copy(src.begin(), src.end(), out.activations.row(row++).begin());
        out.positions.push_back(text_state.positions[i]);
        out.segments.push_back(text_state.segments[i]);
    };
    for (std::size_t i = 0; i < split; ++i) copy_text(i);
    for (std::size_t i = 0; i < mm.rows(); ++i) {
        auto src = mm.row(i);
        std::copy(src.begin(), src.end(), out.activations.row(row++).begin());
        out.positions.push_back(mm_begin + static_cast<std::int64_t>(i));
        out.segments.push_back(model::Segment::multimodal);
    }
    for (std::size_t i = split; i < text_state.rows(); ++i) copy_text(i);
    return out;
}

}  // namespace deepinsert::insertion
