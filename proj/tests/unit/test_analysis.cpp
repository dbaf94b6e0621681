#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include "deepinsert/analysis/alignment.hpp"
#include "deepinsert/analysis/attention.hpp"
#include "deepinsert/analysis/flops.hpp"
#include "deepinsert/analysis/report.hpp"
#include "deepinsert/analysis/timing.hpp"
#include "deepinsert/insertion/engine.hpp"
#include "deepinsert/model/block.hpp"
#include "deepinsert/numerics/rng.hpp"
#include "fixtures.hpp"

using namespace deepinsert;
using namespace deepinsert::analysis;
using model::Segment;
using numerics::MatrixD;

namespace {

// Independent restatement of the per-layer cost, term by term.
std::uint64_t layer_cost(std::uint64_t L, std::uint64_t d, std::uint64_t dff) {
    const std::uint64_t qkv = 3 * 2 * L * d * d;
    const std::uint64_t scores = 2 * L * L * d;
    const std::uint64_t mix = 2 * L * L * d;
    const std::uint64_t out = 2 * L * d * d;
    const std::uint64_t ff = 2 * 2 * L * d * dff;
    return qkv + scores + mix + out + ff;
}

numerics::OpCounter prefill_counter(const insertion::PromptLayout& layout, const model::Weights& w,
                                    const model::ModelConfig& cfg, const insertion::PruneConfig& prune = {}) {
    insertion::PrefillOptions opt;
    opt.prune = prune;
    numerics::CounterScope scope;
    insertion::deepinsert_prefill(layout, w, cfg, opt);
    return scope.delta();
}

MatrixD random_features(std::size_t n, std::size_t d, std::uint64_t seed) {
    numerics::Rng rng(seed);
    MatrixD m(n, d);
    for (auto& v : m.values()) v = rng.normal();
    return m;
}

std::vector<std::vector<std::size_t>> brute_knn(const MatrixD& x, std::size_t k) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        std::vector<std::pair<double, std::size_t>> cand;
        for (std::size_t j = 0; j < x.rows(); ++j) {
            if (j == i) continue;
            double ip = 0;
            for (std::size_t c = 0; c < x.cols(); ++c) ip += x(i, c) * x(j, c);
            cand.push_back({-ip, j});
        }
        std::sort(cand.begin(), cand.end());
        std::vector<std::size_t> set;
        for (std::size_t t = 0; t < k; ++t) set.push_back(cand[t].second);
        std::sort(set.begin(), set.end());
        out.push_back(set);
    }
    return out;
}

double brute_alignment(const MatrixD& a, const MatrixD& b, std::size_t k) {
    auto ka = brute_knn(a, k), kb = brute_knn(b, k);
    double sum = 0;
    for (std::size_t i = 0; i < ka.size(); ++i) {
        std::vector<std::size_t> both;
        std::set_intersection(ka[i].begin(), ka[i].end(), kb[i].begin(), kb[i].end(), std::back_inserter(both));
        sum += static_cast<double>(both.size()) / static_cast<double>(k);
    }
    return sum / static_cast<double>(ka.size());
}

LayerTrace layer_trace(std::vector<Segment> segs, std::vector<std::vector<double>> heads) {
    LayerTrace t;
    for (std::size_t i = 0; i < segs.size(); ++i) t.key_positions.push_back(static_cast<std::int64_t>(i));
    t.key_segments = std::move(segs);
    t.heads = std::move(heads);
    return t;
}

}  // namespace

TEST_CASE("flops: per-layer substitutions") {
    CHECK(flops_per_layer(1, 1, 1, 1).total() == 16);
    CHECK(flops_per_layer(5, 8, 16, 2).total() == 5920);
    for (std::uint64_t L : {1, 3, 17})
        for (std::uint64_t d : {4, 8, 64}) CHECK(flops_per_layer(L, d, 2 * d, 1).total() == layer_cost(L, d, 2 * d));
}

TEST_CASE("flops: an instrumented block counts the per-layer formula") {
    auto cfg = fx::tiny_config();
    auto w = fx::strong_weights(cfg, 1);
    model::HiddenState s;
    s.activations = fx::random_matrix(5, 8, 2);
    for (std::int64_t p = 0; p < 5; ++p) {
        s.positions.push_back(p);
        s.segments.push_back(Segment::language);
    }
    numerics::CounterScope scope;
    model::block_forward<float>(cfg, w.layers[0], s);
    auto c = scope.delta();
    CHECK(c.core_total() == 5920);
    CHECK(reconcile_counts(c, flops_per_layer(5, 8, 16, 2)).exact);
}

TEST_CASE("flops: monotone in every argument, decreasing in the insertion layer") {
    FlopsQuery base{4, 8, 16, 2, 3, 2, 2};
    const auto t = flops_deepinsert(base).total;
    auto bump = [&](auto member) {
        FlopsQuery q = base;
        q.*member += 1;
        return flops_deepinsert(q).total;
    };
    CHECK(bump(&FlopsQuery::n_layers) > t);
    CHECK(bump(&FlopsQuery::d_model) > t);
    CHECK(bump(&FlopsQuery::d_ff) > t);
    CHECK(bump(&FlopsQuery::text_length) > t);
    CHECK(bump(&FlopsQuery::mm_length) > t);
    for (std::uint64_t n_di = 0; n_di < 4; ++n_di) {
        FlopsQuery a = base, b = base;
        a.insert_layer = n_di;
        b.insert_layer = n_di + 1;
        CHECK(flops_deepinsert(b).total < flops_deepinsert(a).total);
    }
    FlopsQuery zero = base;
    zero.insert_layer = 0;
    CHECK(flops_deepinsert(zero).total == 4 * layer_cost(5, 8, 16));
    FlopsQuery over = base;
    over.insert_layer = 5;
    CHECK_THROWS_AS(flops_deepinsert(over), std::invalid_argument);
}

TEST_CASE("flops: the reference configuration") {
    FlopsQuery q{4, 8, 16, 2, 3, 2, 2};
    CHECK(flops_deepinsert(q).total == 18560);
    CHECK(flops_split(q) == 18560);
    CHECK(flops_subtractive(q) == 18560);
    CHECK(2 * layer_cost(3, 8, 16) + 2 * layer_cost(5, 8, 16) == 18560);

    // Prompt [t, mm, mm, t, t]: three text tokens, two multimodal.
    auto cfg = fx::tiny_config(4, 2);
    auto w = fx::strong_weights(cfg, 3);
    auto layout = fx::random_layout(cfg, 1, 2, 2, 4);
    auto c = prefill_counter(layout, w, cfg);
    auto r = reconcile_counts(c, flops_deepinsert(q).sum);
    CHECK_MESSAGE(r.exact, r.message);
    CHECK(c.core_total() == 18560);
}

TEST_CASE("flops: both algebraic forms agree on random queries") {
    numerics::Rng rng(42);
    for (int i = 0; i < 1000; ++i) {
        FlopsQuery q;
        q.n_layers = 1 + rng.below(48);
        q.d_model = 1 + rng.below(4096);
        q.d_ff = 1 + rng.below(16384);
        q.n_heads = 1;
        q.text_length = 1 + rng.below(512);
        q.mm_length = rng.below(1024);
        q.insert_layer = rng.below(q.n_layers + 1);
        REQUIRE(flops_subtractive(q) == flops_split(q));
        REQUIRE(flops_deepinsert(q).total == flops_split(q));
    }
}

TEST_CASE("flops: instrumented prefill reconciles on random configs") {
    numerics::Rng rng(7);
    for (int i = 0; i < 5; ++i) {
        auto cfg = fx::tiny_config(1 + rng.below(6));
        cfg.n_heads = 1 + rng.below(2);
        cfg.d_model = 4 * (1 + rng.below(3));
        cfg.d_ff = 4 * (1 + rng.below(8));
        cfg.insert_layer = rng.below(cfg.n_layers + 1);
        auto w = fx::strong_weights(cfg, 10 + i);
        const std::size_t pre = rng.below(3), mm = rng.below(6), post = 1 + rng.below(3);
        auto layout = fx::random_layout(cfg, pre, mm, post, 20 + i);
        auto q = FlopsQuery::from(cfg, pre + post, mm);
        auto r = reconcile_counts(prefill_counter(layout, w, cfg), flops_deepinsert(q).sum);
        INFO(model::describe(cfg));
        CHECK_MESSAGE(r.exact, r.message);
    }
}

TEST_CASE("flops: pruned prefill matches the piecewise formula") {
    auto cfg = fx::tiny_config(6, 1);
    auto w = fx::strong_weights(cfg, 5);
    auto layout = fx::random_layout(cfg, 1, 6, 2, 6);
    auto q = FlopsQuery::from(cfg, 3, 6);
    for (std::size_t k = 1; k <= 6; ++k) {
        auto prune = insertion::PruneConfig::vtw(k);
        auto lengths = effective_lengths(q, prune);
        for (std::size_t l = 0; l < 6; ++l) CHECK(lengths[l] == ((l >= 1 && l < k) ? 9u : 3u));
        auto r = reconcile_counts(prefill_counter(layout, w, cfg, prune), flops_piecewise(lengths, 8, 16, 2));
        CHECK_MESSAGE(r.exact, r.message);
    }
    auto fastv = insertion::PruneConfig::fastv(3, 0.5);
    auto lengths = effective_lengths(q, fastv);
    CHECK(lengths == std::vector<std::uint64_t>{3, 9, 9, 6, 6, 6});
    auto r = reconcile_counts(prefill_counter(layout, w, cfg, fastv), flops_piecewise(lengths, 8, 16, 2));
    CHECK_MESSAGE(r.exact, r.message);

    numerics::OpCounter off;
    off.add(numerics::OpTag::projection, 1);
    auto bad = reconcile_counts(off, flops_per_layer(1, 1, 1, 1));
    CHECK_FALSE(bad.exact);
    CHECK(bad.message.find("projection") != std::string::npos);
}

TEST_CASE("contribution map: hand trace") {
    // Keys: text, mm, mm, text. Two layers, two heads.
    const std::vector<Segment> segs{Segment::language, Segment::multimodal, Segment::multimodal, Segment::language};
    AttentionTrace t;
    t.query_position = 3;
    t.layers.push_back(layer_trace(segs, {{0.1, 0.5, 0.2, 0.2}, {0.3, 0.1, 0.4, 0.2}}));
    t.layers.push_back(layer_trace(segs, {{0.25, 0.25, 0.25, 0.25}, {0.1, 0.6, 0.1, 0.2}}));
    CHECK_NOTHROW(t.validate());

    auto top1 = token_contribution_map({t}, 1, 2, 1);
    CHECK(top1.scores(0, 0) == doctest::Approx(0.5 / 1.1));
    CHECK(top1.scores(1, 0) == doctest::Approx(0.6 / 1.1));
    CHECK(top1.scores(0, 1) == doctest::Approx(0.4 / 0.65));
    CHECK(top1.scores(1, 1) == doctest::Approx(0.25 / 0.65));

    auto top2 = token_contribution_map({t}, 1, 2, 2);
    CHECK(top2.scores(0, 0) == doctest::Approx(0.3 / 0.725));
    CHECK(top2.scores(1, 0) == doctest::Approx(0.425 / 0.725));

    auto excluded = token_contribution_map({t}, 1, 2, 1, 1);
    CHECK(excluded.scores(0, 0) == 0.0);
    CHECK(excluded.scores(1, 0) == doctest::Approx(1.0));

    // A layer that never saw the slot contributes zero.
    AttentionTrace late = t;
    late.layers[0] = layer_trace({Segment::language, Segment::language}, {{0.5, 0.5}, {0.9, 0.1}});
    late.layers[0].key_positions = {0, 3};
    auto m = token_contribution_map({late}, 1, 2, 2);
    CHECK(m.scores(0, 0) == 0.0);
    CHECK(m.scores(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("contribution map: uniform attention spreads evenly") {
    const std::size_t n_layers = 4;
    AttentionTrace t;
    std::vector<Segment> segs{Segment::language, Segment::multimodal, Segment::multimodal, Segment::multimodal,
                              Segment::language};
    for (std::size_t l = 0; l < n_layers; ++l) t.layers.push_back(layer_trace(segs, {std::vector<double>(5, 0.2)}));
    auto m = token_contribution_map({t, t}, 1, 3, 5);
    for (std::size_t l = 0; l < n_layers; ++l)
        for (std::size_t s = 0; s < 3; ++s) CHECK(m.scores(l, s) == doctest::Approx(1.0 / n_layers));
}

TEST_CASE("VAR: uniform, saturated, brute force") {
    std::vector<Segment> segs{Segment::language, Segment::multimodal, Segment::multimodal, Segment::multimodal,
                              Segment::language, Segment::language,   Segment::language,   Segment::language};
    AttentionTrace uniform;
    uniform.layers.push_back(layer_trace(segs, {std::vector<double>(8, 0.125), std::vector<double>(8, 0.125)}));
    CHECK(var_per_layer(uniform)[0] == 3.0 / 8.0);

    AttentionTrace saturated;
    saturated.layers.push_back(layer_trace(segs, {{0, 0.5, 0.25, 0.25, 0, 0, 0, 0}, {0, 0, 1, 0, 0, 0, 0, 0}}));
    CHECK(var_per_layer(saturated)[0] == doctest::Approx(1.0));

    numerics::Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        AttentionTrace t;
        for (int l = 0; l < 3; ++l) {
            std::vector<std::vector<double>> heads(3, std::vector<double>(8));
            for (auto& h : heads) {
                double z = 0;
                for (auto& v : h) z += (v = rng.uniform());
                for (auto& v : h) v /= z;
            }
            t.layers.push_back(layer_trace(segs, heads));
        }
        auto var = var_per_layer(t);
        for (std::size_t l = 0; l < 3; ++l) {
            double mass = 0;
            for (const auto& h : t.layers[l].heads)
                for (std::size_t k = 0; k < 8; ++k)
                    if (segs[k] == Segment::multimodal) mass += h[k];
            CHECK(var[l] == doctest::Approx(mass / 3.0));
            CHECK(var[l] >= 0.0);
            CHECK(var[l] <= 1.0);
        }
    }
}

TEST_CASE("attention capture from a real prefill") {
    auto cfg = fx::tiny_config(4, 2);
    auto w = fx::strong_weights(cfg, 8);
    auto layout = fx::random_layout(cfg, 1, 3, 2, 9);
    auto trace = capture_prompt_trace(layout, w, cfg);
    CHECK(trace.query_position == 5);
    REQUIRE(trace.layers.size() == 4);
    CHECK_NOTHROW(trace.validate());
    CHECK(trace.layers[0].key_positions == std::vector<std::int64_t>{0, 4, 5});
    CHECK(trace.layers[3].key_positions.size() == 6);
    auto var = var_per_layer(trace);
    CHECK(var[0] == 0.0);
    CHECK(var[1] == 0.0);
    CHECK(var[2] > 0.0);

    auto answer = capture_answer_trace(layout, w, cfg, {13, 14, 15});
    CHECK(answer.answer_token >= 13);
    CHECK(answer.answer_token <= 15);
    CHECK(answer.trace.query_position == 6);
    CHECK_NOTHROW(answer.trace.validate());

    auto jsonl = trace_to_jsonl(trace);
    CHECK(jsonl.rfind("# attention_trace schema_version=1 query_position=5\n", 0) == 0);
    CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == 1 + 4 * 2);
}

TEST_CASE("mutual kNN: identical, disjoint, brute force") {
    auto a = random_features(16, 8, 1);
    CHECK(mutual_knn_alignment(a, a, 3) == 1.0);

    MatrixD line = MatrixD::from_rows({{1}, {2}, {-1}, {-2}});
    MatrixD axes = MatrixD::from_rows({{1, 0}, {0, 1}, {2, 0}, {0, 2}});
    CHECK(brute_alignment(line, axes, 1) == 0.0);
    CHECK(mutual_knn_alignment(line, axes, 1) == 0.0);

    for (std::uint64_t s = 0; s < 20; ++s) {
        auto x = random_features(16, 8, 100 + s), y = random_features(16, 4, 200 + s);
        const std::size_t k = 1 + s % 5;
        CHECK(knn_sets(x, k) == brute_knn(x, k));
        CHECK(mutual_knn_alignment(x, y, k) == doctest::Approx(brute_alignment(x, y, k)).epsilon(1e-12));
    }
    CHECK_THROWS(mutual_knn_alignment(a, random_features(15, 8, 2), 3));
    CHECK_THROWS(mutual_knn_alignment(a, a, 16));
}

TEST_CASE("mutual kNN: invariant to rotations of either space") {
    auto x = random_features(32, 2, 5), y = random_features(32, 3, 6);
    const double angle = 0.7;
    MatrixD r(32, 2);
    for (std::size_t i = 0; i < 32; ++i) {
        r(i, 0) = std::cos(angle) * x(i, 0) - std::sin(angle) * x(i, 1);
        r(i, 1) = std::sin(angle) * x(i, 0) + std::cos(angle) * x(i, 1);
    }
    CHECK(mutual_knn_alignment(r, y, 4) == doctest::Approx(mutual_knn_alignment(x, y, 4)));
    CHECK(mutual_knn_alignment(r, x, 4) == doctest::Approx(1.0));
}

TEST_CASE("alignment grid: diagonal, transpose, per-pair composition") {
    std::vector<MatrixD> a{random_features(20, 4, 1), random_features(20, 4, 2), random_features(20, 4, 3)};
    std::vector<MatrixD> b{random_features(20, 6, 4), random_features(20, 6, 5), random_features(20, 6, 6)};
    auto aa = alignment_grid(a, a, 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(aa(i, i) == 1.0);
    auto ab = alignment_grid(a, b, 3), ba = alignment_grid(b, a, 3);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(ab(i, j) == ba(j, i));
            CHECK(ab(i, j) == mutual_knn_alignment(a[i], b[j], 3));
        }
}

TEST_CASE("layer features have one row per sample per layer") {
    modality::DatasetConfig dc;
    dc.size = 100;
    auto d = modality::generate_dataset(dc);
    auto cfg = fx::tiny_config(3, 1);
    auto w = fx::strong_weights(cfg, 1);
    numerics::Rng rng(0);
    auto adapter = modality::init_adapter(16, 8, 8, rng);
    modality::FrozenEncoder enc(0, 8, 16);
    std::vector<modality::GridSample> five(d.train.begin(), d.train.begin() + 5);
    auto f = collect_layer_features(five, w, adapter, enc, cfg);
    REQUIRE(f.size() == 3);
    CHECK(f[2].rows() == 5);
    CHECK(f[2].cols() == 8);
}

TEST_CASE("reports and timing helpers") {
    MatrixD m = MatrixD::from_rows({{0.5, 1.0}, {0.25, 0.0}});
    auto csv = matrix_csv(m, "layer", {"0", "1"}, {"a", "b"});
    CHECK(csv == "layer,a,b\n0,0.5,1\n1,0.25,0\n");
    auto svg = heatmap_svg(m, "t", "rows", "cols");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(std::count(svg.begin(), svg.end(), '\n') > 4);
    auto chart = line_chart_svg("t", "x", {0, 1, 2}, {{"acc", {1, 0.9, 0.8}}, {"flops", {3, 2, 1}}});
    CHECK(chart.find("acc") != std::string::npos);

    CHECK(median({3, 1, 2}) == 2);
    CHECK(median({4, 1, 2, 3}) == 2.5);
    CHECK(pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0));
    CHECK(pearson({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
    CHECK_THROWS(pearson({1, 1, 1}, {1, 2, 3}));

    auto cfg = fx::tiny_config(2, 1);
    auto w = fx::strong_weights(cfg, 1);
    auto stats = time_prefill(fx::random_layout(cfg, 1, 2, 1, 1), w, cfg, 5, 1);
    CHECK(stats.samples_ms.size() == 5);
    CHECK(stats.min_ms <= stats.median_ms);
    CHECK(stats.median_ms <= stats.max_ms);
}
