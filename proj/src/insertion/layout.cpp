#include "deepinsert/insertion/layout.hpp"

#include <algorithm>
#include <stdexcept>

#include "deepinsert/model/transformer.hpp"

namespace deepinsert::insertion {

PositionRange PromptLayout::pre_range() const { return {0, static_cast<std::int64_t>(pre_text.size())}; }

PositionRange PromptLayout::mm_range() const {
    const auto begin = static_cast<std::int64_t>(pre_text.size());
    return {begin, begin + static_cast<std::int64_t>(mm_length())};
}

PositionRange PromptLayout::post_range() const {
    const auto begin = mm_range().end;
    return {begin, begin + static_cast<std::int64_t>(post_text.size())};
}

std::vector<std::int64_t> PromptLayout::text_tokens() const {
    std::vector<std::int64_t> out = pre_text;
    out.insert(out.end(), post_text.begin(), post_text.end());
    return out;
}

std::vector<std::int64_t> PromptLayout::text_positions() const {
    std::vector<std::int64_t> out;
    out.reserve(text_length());
    for (auto p = pre_range().begin; p < pre_range().end; ++p) out.push_back(p);
    for (auto p = post_range().begin; p < post_range().end; ++p) out.push_back(p);
    return out;
}

PromptLayout segment_prompt(std::span<const std::int64_t> template_tokens, std::int64_t placeholder,
                            numerics::Matrix mm_embeddings, std::size_t d_model) {
    const auto n = std::count(template_tokens.begin(), template_tokens.end(), placeholder);
    if (n != 1) {
        throw std::invalid_argument("segment_prompt: expected exactly one multimodal placeholder, found " +
                                    std::to_string(n));
    }
    if (mm_embeddings.rows() > 0 && mm_embeddings.cols() != d_model) {
        throw numerics::ShapeError("segment_prompt: adapter embeddings width " + std::to_string(mm_embeddings.cols()) +
                                   " != d_model " + std::to_string(d_model));
    }
    if (mm_embeddings.rows() == 0) mm_embeddings = numerics::Matrix(0, d_model);
    const auto it = std::find(template_tokens.begin(), template_tokens.end(), placeholder);
    PromptLayout layout;
    layout.pre_text.assign(template_tokens.begin(), it);
    layout.post_text.assign(it + 1, template_tokens.end());
    layout.mm_embeddings = std::move(mm_embeddings);
    return layout;
}

PromptLayout extend_prompt(const PromptLayout& layout, std::span<const std::int64_t> extra_tokens) {
    PromptLayout out = layout;
    out.post_text.insert(out.post_text.end(), extra_tokens.begin(), extra_tokens.end());
    return out;
}

model::HiddenState assemble_text(const PromptLayout& layout, const model::Weights& weights,
                                 const model::ModelConfig& config) {
    const auto tokens = layout.text_tokens();
    const auto positions = layout.text_positions();
    return model::embed(std::span<const std::int64_t>(tokens), std::span<const std::int64_t>(positions), weights,
                        config);
}

model::HiddenState assemble_full(const PromptLayout& layout, const model::Weights& weights,
                                 const model::ModelConfig& config) {
    return splice_multimodal(assemble_text(layout, weights, config), layout.mm_embeddings, layout.mm_range().begin);
}

}  // namespace deepinsert::insertion
