#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "deepinsert/model/block.hpp"
#include "deepinsert/model/checkpoint.hpp"
#include "deepinsert/model/transformer.hpp"
#include "fixtures.hpp"
#include "reference.hpp"

using namespace deepinsert;
using model::HiddenState;
using numerics::Matrix;

namespace {

HiddenState random_state(std::size_t rows, std::size_t width, std::uint64_t seed) {
    HiddenState s;
    s.activations = fx::random_matrix(rows, width, seed);
    for (std::size_t i = 0; i < rows; ++i) {
        s.positions.push_back(static_cast<std::int64_t>(2 * i + 1));
        s.segments.push_back(model::Segment::language);
    }
    return s;
}

}  // namespace

TEST_CASE("init: deterministic, shaped, centered") {
    auto cfg = fx::tiny_config();
    cfg.vocab_size = 11;
    numerics::Rng r1(3), r2(3);
    auto a = model::init_weights(cfg, r1);
    auto b = model::init_weights(cfg, r2);
    CHECK(a.token_embedding == b.token_embedding);
    CHECK(a.layers.back().w_ff2 == b.layers.back().w_ff2);
    CHECK(a.token_embedding.rows() == 11);
    CHECK(a.token_embedding.cols() == 8);
    CHECK(a.layers.size() == 4);

    model::ModelConfig wide;
    wide.d_model = 64;
    wide.d_ff = 128;
    numerics::Rng r3(0);
    auto w = model::init_weights(wide, r3);
    w.for_each_tensor([](const std::string& name, const Matrix& m) {
        double mean = std::accumulate(m.values().begin(), m.values().end(), 0.0) / static_cast<double>(m.size());
        if (name.find("gain") != std::string::npos) {
            CHECK(mean == 1.0);
        } else {
            CHECK_MESSAGE(std::abs(mean) <= 0.01, name);
        }
    });
}

TEST_CASE("config validation") {
    auto cfg = fx::tiny_config();
    CHECK_NOTHROW(cfg.validate());
    auto bad = cfg;
    bad.n_heads = 3;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.insert_layer = 5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.n_heads = 4;  // head_dim 2 is fine; odd head_dim is not
    CHECK_NOTHROW(bad.validate());
    bad.d_model = 12;
    bad.n_heads = 4;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("embed: rows, empty input, positions pass through") {
    auto cfg = fx::tiny_config();
    auto w = fx::strong_weights(cfg, 1);
    std::vector<std::int64_t> tokens{4, 4, 9}, pos{0, 1, 5};
    auto s = model::embed<float>(tokens, pos, w, cfg);
    CHECK(s.activations.rows() == 3);
    for (std::size_t c = 0; c < 8; ++c) CHECK(s.activations(0, c) == s.activations(1, c));
    CHECK(s.positions == pos);
    CHECK(std::all_of(s.segments.begin(), s.segments.end(), [](auto g) { return g == model::Segment::language; }));

    std::vector<std::int64_t> none;
    CHECK(model::embed<float>(none, none, w, cfg).rows() == 0);

    std::vector<std::int64_t> oov{21}, p0{0};
    CHECK_THROWS_AS(model::embed<float>(oov, p0, w, cfg), std::out_of_range);
}

TEST_CASE("block: single token attends to itself, causal mask") {
    auto cfg = fx::tiny_config();
    auto w = fx::strong_weights(cfg, 2);
    std::vector<Matrix> probs;
    model::block_forward<float>(cfg, w.layers[0], random_state(1, 8, 3), nullptr, nullptr, &probs);
    REQUIRE(probs.size() == 2);
    CHECK(probs[0](0, 0) == 1.0f);

    probs.clear();
    model::block_forward<float>(cfg, w.layers[0], random_state(6, 8, 4), nullptr, nullptr, &probs);
    for (const auto& p : probs) {
        for (std::size_t i = 0; i < 6; ++i) {
            double sum = 0;
            for (std::size_t j = 0; j < 6; ++j) {
                if (j > i) CHECK(p(i, j) == 0.0f);
                sum += p(i, j);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("block: incremental cache equals full recompute") {
    auto cfg = fx::tiny_config();
    auto w = fx::strong_weights(cfg, 5);
    auto state = random_state(7, 8, 6);
    auto full = model::block_forward<float>(cfg, w.layers[1], state);

    model::LayerKV cache;
    auto part = [&](std::size_t b, std::size_t e) {
        HiddenState s;
        s.activations = numerics::slice_rows(state.activations, b, e);
        s.positions.assign(state.positions.begin() + b, state.positions.begin() + e);
        s.segments.assign(state.segments.begin() + b, state.segments.begin() + e);
        return model::block_forward<float>(cfg, w.layers[1], s, &cache);
    };
    auto first = part(0, 4);
    auto rest = [&] {
        std::vector<HiddenState> steps;
        for (std::size_t i = 4; i < 7; ++i) steps.push_back(part(i, i + 1));
        return steps;
    }();
    CHECK(cache.rows() == 7);
    for (std::size_t c = 0; c < 8; ++c) {
        CHECK(first.activations(3, c) == doctest::Approx(full.activations(3, c)).epsilon(1e-5));
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(rest[i].activations(0, c) == doctest::Approx(full.activations(4 + i, c)).epsilon(1e-5));
        }
    }
    // A cached position at or after the new rows is rejected.
    CHECK_THROWS(part(2, 3));
}

TEST_CASE("baseline: shape, reference agreement, batch permutation") {
    auto cfg = fx::tiny_config();
    auto w = fx::strong_weights(cfg, 8);
    auto tokens = fx::random_tokens(6, cfg.vocab_size, 9);
    std::vector<std::int64_t> pos(6);
    std::iota(pos.begin(), pos.end(), 0);
    auto input = model::embed<float>(tokens, pos, w, cfg);
    std::vector<std::size_t> rows{1, 3, 5};
    auto logits = model::baseline_forward(input, w, cfg, rows);
    CHECK(logits.rows() == 3);
    CHECK(logits.cols() == cfg.vocab_size);

    // With nothing to insert the reference is a plain double forward.
    auto ref_logits = ref::overwrite_and_mask_logits(tokens, 6, Matrix(0, 8), w, cfg);
    CHECK(ref::max_abs_diff(ref::row_of(logits, 2), ref_logits) <= 1e-4);

    std::vector<HiddenState> batch;
    for (std::uint64_t s = 0; s < 4; ++s) {
        auto t = fx::random_tokens(3 + s, cfg.vocab_size, 20 + s);
        std::vector<std::int64_t> p(t.size());
        std::iota(p.begin(), p.end(), 0);
        batch.push_back(model::embed<float>(t, p, w, cfg));
    }
    auto out = model::baseline_forward_batch(batch, w, cfg);
    std::vector<HiddenState> permuted{batch[2], batch[0], batch[3], batch[1]};
    auto out_p = model::baseline_forward_batch(permuted, w, cfg);
    CHECK(out_p[0] == out[2]);
    CHECK(out_p[1] == out[0]);
    CHECK(out_p[2] == out[3]);
    CHECK(out_p[3] == out[1]);
}

TEST_CASE("checkpoint: round trip and error contracts") {
    auto cfg = fx::tiny_config();
    auto w = fx::strong_weights(cfg, 10);
    model::TensorFile file;
    file.config = cfg;
    file.metadata["train.step"] = 42;
    model::append_weights(file, w);
    auto path = std::filesystem::temp_directory_path() / "deepinsert_test_model.ckpt";
    model::write_tensor_file(path, file);
    auto back = model::read_tensor_file(path);
    CHECK(back.config == cfg);
    CHECK(back.metadata.at("train.step") == 42);

    auto restored = model::zero_weights<float>(cfg);
    model::restore_weights(back, restored);
    w.for_each_tensor([&](const std::string& name, const Matrix& m) { CHECK_MESSAGE(back.get(name) == m, name); });
    CHECK(restored.token_embedding == w.token_embedding);
    CHECK(restored.layers[3].wo == w.layers[3].wo);

    auto wide = cfg;
    wide.d_model = 16;
    auto other = model::zero_weights<float>(wide);
    try {
        model::restore_weights(back, other);
        FAIL("expected a shape mismatch");
    } catch (const model::CheckpointError& e) {
        CHECK(std::string(e.what()).find("tok_embedding") != std::string::npos);
    }

    auto bytes = model::serialize(file);
    CHECK_THROWS_AS(model::deserialize(bytes.substr(0, bytes.size() - 3)), model::CheckpointError);
    CHECK_THROWS_AS(model::deserialize("NOTACKPT" + bytes.substr(8)), model::CheckpointError);
    auto bumped = bytes;
    bumped[8] = 9;
    CHECK_THROWS_AS(model::deserialize(bumped), model::CheckpointError);
    std::filesystem::remove(path);
}
