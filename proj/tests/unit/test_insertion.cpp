#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "deepinsert/insertion/engine.hpp"
#include "deepinsert/model/transformer.hpp"
#include "deepinsert/numerics/rng.hpp"
#include "fixtures.hpp"
#include "reference.hpp"

using namespace deepinsert;
using insertion::PositionRange;
using insertion::PromptLayout;
using numerics::Matrix;

namespace {

std::vector<std::int64_t> full_tokens(const PromptLayout& layout) {
    std::vector<std::int64_t> t = layout.pre_text;
    t.resize(t.size() + layout.mm_length(), 0);
    t.insert(t.end(), layout.post_text.begin(), layout.post_text.end());
    return t;
}

double rel_diff(const Matrix& a, const Matrix& b) { return ref::max_rel_diff(ref::row_of(a), ref::row_of(b)); }

}  // namespace

TEST_CASE("layout: ranges and degenerate slots") {
    PromptLayout l;
    l.pre_text = {1, 2, 3, 4};
    l.mm_embeddings = Matrix(3, 8);
    l.post_text = {5, 6};
    CHECK(l.pre_range() == PositionRange{0, 4});
    CHECK(l.mm_range() == PositionRange{4, 7});
    CHECK(l.post_range() == PositionRange{7, 9});
    CHECK(l.text_positions() == std::vector<std::int64_t>{0, 1, 2, 3, 7, 8});

    l.mm_embeddings = Matrix(0, 8);
    CHECK(l.mm_range() == PositionRange{4, 4});
    CHECK(l.post_range() == PositionRange{4, 6});

    std::vector<std::int64_t> tmpl{99, 7, 8};
    auto s = insertion::segment_prompt(tmpl, 99, Matrix(5, 8), 8);
    CHECK(s.pre_text.empty());
    CHECK(s.mm_range() == PositionRange{0, 5});
    CHECK(s.post_text == std::vector<std::int64_t>{7, 8});
}

TEST_CASE("layout: placeholder count and width are enforced") {
    std::vector<std::int64_t> none{1, 3}, two{2, 1, 2};
    CHECK_THROWS_AS(insertion::segment_prompt(none, 2, Matrix(1, 8), 8), std::invalid_argument);
    CHECK_THROWS_AS(insertion::segment_prompt(two, 2, Matrix(1, 8), 8), std::invalid_argument);
    std::vector<std::int64_t> one{0, 2, 3};
    CHECK_THROWS_AS(insertion::segment_prompt(one, 2, Matrix(1, 6), 8), numerics::ShapeError);
}

TEST_CASE("prefill: insertion layer 0 is the conventional model, bitwise") {
    auto cfg = fx::tiny_config(4, 0);
    auto w = fx::strong_weights(cfg, 1);
    for (std::uint64_t seed : {1, 2, 3}) {
        auto layout = fx::random_layout(cfg, 2, 4, 3, seed);
        auto di = insertion::deepinsert_prefill(layout, w, cfg);
        auto base = model::baseline_forward(insertion::assemble_full(layout, w, cfg), w, cfg);
        CHECK(di.logits == base);
    }
}

TEST_CASE("prefill: insertion past the last layer ignores the multimodal slot") {
    auto cfg = fx::tiny_config(4, 4);
    auto w = fx::strong_weights(cfg, 2);
    auto layout = fx::random_layout(cfg, 2, 4, 3, 5);
    auto di = insertion::deepinsert_prefill(layout, w, cfg);
    auto text_only = model::baseline_forward(insertion::assemble_text(layout, w, cfg), w, cfg);
    CHECK(di.logits == text_only);
    CHECK(di.retained_mm.empty());

    // Changing the adapter rows cannot matter.
    layout.mm_embeddings = fx::random_matrix(4, 8, 77);
    CHECK(insertion::deepinsert_prefill(layout, w, cfg).logits == text_only);
}

TEST_CASE("prefill: matches the overwrite-and-mask reference") {
    numerics::Rng pick(17);
    for (int trial = 0; trial < 12; ++trial) {
        const std::size_t n_layers = 2 + pick.below(4);
        auto cfg = fx::tiny_config(n_layers, pick.below(n_layers + 1));
        auto w = fx::strong_weights(cfg, 100 + trial);
        auto layout = fx::random_layout(cfg, pick.below(3), 1 + pick.below(5), 1 + pick.below(3), 200 + trial);
        auto got = insertion::deepinsert_prefill(layout, w, cfg).logits;
        auto want =
            ref::overwrite_and_mask_logits(full_tokens(layout), layout.mm_range().begin, layout.mm_embeddings, w, cfg);
        INFO("trial " << trial << " N=" << n_layers << " N_DI=" << cfg.insert_layer);
        CHECK(ref::max_rel_diff(ref::row_of(got), want) <= 1e-6);
    }
}

TEST_CASE("prefill: prompt validation") {
    auto cfg = fx::tiny_config(4, 2);
    auto w = fx::strong_weights(cfg, 3);
    auto ends_mm = fx::random_layout(cfg, 2, 3, 0, 1);
    CHECK_THROWS_AS(insertion::deepinsert_prefill(ends_mm, w, cfg), std::invalid_argument);
    auto narrow = fx::random_layout(cfg, 2, 3, 1, 1);
    narrow.mm_embeddings = Matrix(3, 4);
    CHECK_THROWS_AS(insertion::deepinsert_prefill(narrow, w, cfg), numerics::ShapeError);
    auto small = cfg;
    small.max_positions = 5;
    CHECK_THROWS_AS(insertion::deepinsert_prefill(fx::random_layout(cfg, 2, 3, 1, 1), w, small), std::out_of_range);
}

TEST_CASE("decode: matches recompute and keeps split bookkeeping") {
    for (std::size_t n_di : {0, 1, 2, 4}) {
        auto cfg = fx::tiny_config(4, n_di);
        auto w = fx::strong_weights(cfg, 4);
        auto layout = fx::random_layout(cfg, 2, 3, 2, 9);
        auto pre = insertion::deepinsert_prefill(layout, w, cfg);
        auto& cache = pre.cache;
        CHECK(cache.next_position() == 7);
        auto extra = fx::random_tokens(4, cfg.vocab_size, 31);
        for (std::size_t t = 0; t < extra.size(); ++t) {
            auto logits = insertion::decode_step(cache, extra[t], cache.next_position(), w, cfg);
            std::vector<std::int64_t> suffix(extra.begin(), extra.begin() + t + 1);
            auto fresh = insertion::deepinsert_prefill(insertion::extend_prompt(layout, suffix), w, cfg);
            INFO("N_DI=" << n_di << " step " << t);
            CHECK(rel_diff(logits, fresh.logits) <= 1e-5);
            if (n_di > 0) CHECK(cache.shallow_rows() == 4 + t + 1);
            if (n_di < 4) CHECK(cache.deep_rows() == 4 + 3 + t + 1);
            CHECK_NOTHROW(cache.validate());
        }
        CHECK_THROWS_AS(insertion::decode_step(cache, 1, 3, w, cfg), std::invalid_argument);
    }
}

TEST_CASE("generate: contracts") {
    auto cfg = fx::tiny_config(4, 2);
    auto w = fx::strong_weights(cfg, 6);
    auto layout = fx::random_layout(cfg, 1, 3, 2, 4);
    insertion::GenerateOptions one;
    auto first = insertion::generate(layout, w, cfg, one);
    REQUIRE(first.size() == 1);
    CHECK(first[0] == insertion::argmax_row(insertion::deepinsert_prefill(layout, w, cfg).logits));

    insertion::GenerateOptions many;
    many.max_new_tokens = 6;
    auto a = insertion::generate(layout, w, cfg, many);
    CHECK(a == insertion::generate(layout, w, cfg, many));
    CHECK(a.size() == 6);

    many.stop_token = a[2];
    auto stopped = insertion::generate(layout, w, cfg, many);
    auto at = std::find(a.begin(), a.end(), a[2]) - a.begin();
    CHECK(stopped.size() == static_cast<std::size_t>(at) + 1);
    CHECK(stopped.back() == a[2]);

    many.max_new_tokens = 0;
    CHECK_THROWS_AS(insertion::generate(layout, w, cfg, many), std::invalid_argument);
}

TEST_CASE("fastv: no-op at full retention, keep counts") {
    auto cfg = fx::tiny_config(4, 1);
    auto w = fx::strong_weights(cfg, 7);
    auto layout = fx::random_layout(cfg, 2, 5, 2, 8);
    insertion::PrefillOptions opt;
    opt.prune = insertion::PruneConfig::fastv(2, 1.0);
    auto pruned = insertion::deepinsert_prefill(layout, w, cfg, opt);
    CHECK(pruned.logits == insertion::deepinsert_prefill(layout, w, cfg).logits);
    CHECK(pruned.retained_mm.size() == 5);

    CHECK(insertion::fastv_keep_count(576, 0.25) == 144);
    CHECK(insertion::fastv_keep_count(5, 0.5) == 3);
    CHECK(insertion::fastv_keep_count(0, 0.5) == 0);

    opt.prune = insertion::PruneConfig::fastv(2, 0.5);
    CHECK(insertion::deepinsert_prefill(layout, w, cfg, opt).retained_mm.size() == 3);
    opt.prune = insertion::PruneConfig::fastv(1, 0.5);  // ranking layer would precede insertion
    CHECK_THROWS_AS(insertion::deepinsert_prefill(layout, w, cfg, opt), std::invalid_argument);
    opt.prune = insertion::PruneConfig::fastv(2, 0.0);
    CHECK_THROWS_AS(insertion::deepinsert_prefill(layout, w, cfg, opt), std::invalid_argument);
}

TEST_CASE("fastv: selection matches an exhaustive ranking") {
    // Keys: text@0, mm@1..4, text@5, text@6; queries at 5 and 6, one head.
    insertion::LayerAttention att;
    att.key_positions = {0, 1, 2, 3, 4, 5, 6};
    using model::Segment;
    att.key_segments = {Segment::language,   Segment::multimodal, Segment::multimodal, Segment::multimodal,
                        Segment::multimodal, Segment::language,   Segment::language};
    att.query_positions = {5, 6};
    att.head_probs = {Matrix::from_rows(
        {{0.1f, 0.3f, 0.05f, 0.4f, 0.1f, 0.05f, 0.0f}, {0.1f, 0.1f, 0.2f, 0.25f, 0.05f, 0.1f, 0.2f}})};
    // Brute force: score every 2-subset by total attention, keep the best.
    std::vector<double> total(4, 0.0);
    for (std::size_t s = 0; s < 4; ++s)
        for (std::size_t q = 0; q < 2; ++q) total[s] += att.head_probs[0](q, s + 1);
    std::vector<std::size_t> best;
    double best_sum = -1;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = i + 1; j < 4; ++j)
            if (total[i] + total[j] > best_sum) {
                best_sum = total[i] + total[j];
                best = {i, j};
            }
    CHECK(insertion::fastv_select(att, 1, 4, 2) == best);
    CHECK(best == std::vector<std::size_t>{0, 2});
}

TEST_CASE("vtw: exit at the last layer is a no-op, exit at insertion drops the slot") {
    auto cfg = fx::tiny_config(4, 1);
    auto w = fx::strong_weights(cfg, 9);
    auto layout = fx::random_layout(cfg, 2, 4, 2, 10);
    insertion::PrefillOptions opt;
    opt.prune = insertion::PruneConfig::vtw(4);
    auto none = insertion::deepinsert_prefill(layout, w, cfg, opt);
    CHECK(none.logits == insertion::deepinsert_prefill(layout, w, cfg).logits);
    CHECK(none.retained_mm.size() == 4);

    opt.prune = insertion::PruneConfig::vtw(1);
    auto dropped = insertion::deepinsert_prefill(layout, w, cfg, opt);
    auto never = insertion::deepinsert_prefill(layout, w, model::with_insert_layer(cfg, 4));
    CHECK(dropped.logits == never.logits);
    CHECK(dropped.retained_mm.empty());

    opt.prune = insertion::PruneConfig::vtw(0);
    CHECK_THROWS_AS(insertion::deepinsert_prefill(layout, w, cfg, opt), std::invalid_argument);
}
