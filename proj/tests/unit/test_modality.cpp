#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "deepinsert/modality/adapter.hpp"
#include "deepinsert/modality/dataset_io.hpp"
#include "deepinsert/modality/encoder.hpp"
#include "deepinsert/modality/grid_task.hpp"
#include "deepinsert/numerics/rng.hpp"

using namespace deepinsert;
using namespace deepinsert::modality;
using numerics::MatrixD;

namespace {

DatasetConfig small_config(std::uint64_t seed = 0, std::size_t size = 300) {
    DatasetConfig c;
    c.seed = seed;
    c.size = size;
    return c;
}

}  // namespace

TEST_CASE("vocab layout") {
    GridVocab v;
    CHECK(v.size() == 21);
    CHECK(v.row(0) == 5);
    CHECK(v.col(3) == 12);
    CHECK(v.symbol(0) == 13);
    CHECK(v.symbol(7) == 20);
    CHECK(v.symbol_tokens().size() == 8);
}

TEST_CASE("dataset: deterministic and answers follow from the grid") {
    auto a = generate_dataset(small_config(4));
    auto b = generate_dataset(small_config(4));
    CHECK(a.train == b.train);
    CHECK(a.val == b.val);
    CHECK(a.test == b.test);
    CHECK(a.train.size() + a.val.size() + a.test.size() == 300);
    CHECK(generate_dataset(small_config(5)).train != a.train);

    GridVocab v;
    for (const auto* split : {&a.train, &a.val, &a.test}) {
        for (const auto& s : *split) {
            CHECK(s.cells.size() == 16);
            auto prompt = s.prompt_template();
            CHECK(prompt[0] == GridVocab::bos);
            CHECK(prompt[1] == GridVocab::image);
            if (s.qtype == QueryType::cell) {
                REQUIRE(s.args.size() == 2);
                auto r = static_cast<std::size_t>(s.args[0]), c = static_cast<std::size_t>(s.args[1]);
                CHECK(s.question_tokens == std::vector<std::int64_t>{GridVocab::query_cell, v.row(r), v.col(c)});
                CHECK(s.answer_token == v.symbol(static_cast<std::size_t>(s.at(r, c))));
            } else {
                auto r = static_cast<std::size_t>(s.args[0]);
                CHECK(s.question_tokens == std::vector<std::int64_t>{GridVocab::query_majority, v.row(r)});
                // Brute-force majority count.
                std::map<int, int> count;
                for (std::size_t c = 0; c < 4; ++c) ++count[s.at(r, c)];
                int best = -1, best_n = 0, ties = 0;
                for (auto [sym, n] : count) {
                    if (n > best_n) {
                        best = sym;
                        best_n = n;
                        ties = 0;
                    } else if (n == best_n) {
                        ++ties;
                    }
                }
                CHECK(ties == 0);
                CHECK(s.answer_token == v.symbol(static_cast<std::size_t>(best)));
            }
        }
    }
}

TEST_CASE("dataset: grids distinct across splits") {
    auto d = generate_dataset(small_config(1, 600));
    std::map<std::uint64_t, int> seen;
    for (const auto* split : {&d.train, &d.val, &d.test})
        for (const auto& s : *split) ++seen[grid_hash(s)];
    for (auto [h, n] : seen) CHECK(n == 1);
}

TEST_CASE("dataset: answer histogram near uniform") {
    DatasetConfig c = small_config(2, 6000);
    auto d = generate_dataset(c);
    GridVocab v;
    std::map<std::int64_t, double> hist;
    for (const auto& s : d.train) hist[s.answer_token] += 1;
    const double expected = static_cast<double>(d.train.size()) / 8.0;
    REQUIRE(d.train.size() >= 1000);
    for (std::size_t s = 0; s < 8; ++s) {
        CHECK(hist[v.symbol(s)] >= 0.8 * expected);
        CHECK(hist[v.symbol(s)] <= 1.2 * expected);
    }
}

TEST_CASE("dataset: config errors") {
    auto c = small_config();
    c.n_symbols = 1;
    CHECK_THROWS_AS(generate_dataset(c), std::invalid_argument);
    c = small_config();
    c.val_fraction = 0.6;
    c.test_fraction = 0.5;
    CHECK_THROWS_AS(generate_dataset(c), std::invalid_argument);
}

TEST_CASE("encoder: locality, determinism, golden norms") {
    FrozenEncoder enc(0, 8, 16);
    auto d = generate_dataset(small_config());
    GridSample a = d.train[0], b = a;
    b.cells[5] = (b.cells[5] + 1) % 8;
    auto fa = enc.encode(a), fb = enc.encode(b);
    CHECK(fa == enc.encode(a));
    std::size_t differing = 0;
    for (std::size_t r = 0; r < fa.rows(); ++r) {
        bool same = true;
        for (std::size_t c = 0; c < fa.cols(); ++c) same = same && fa(r, c) == fb(r, c);
        if (!same) ++differing;
    }
    CHECK(differing == 1);

    // Frozen reference: row norms of the symbol features for seed 0.
    const double golden[8] = {0x1.02f029ae0e21ep+2, 0x1.ec980073243b2p+1, 0x1.14ff69637d78cp+2, 0x1.17294c680a2e4p+1,
                              0x1.dd132cad99011p+1, 0x1.9df4bb063c64dp+1, 0x1.2995c559c5a6dp+2, 0x1.c795b62da7ad6p+1};
    GridSample all;
    all.grid_size = 3;
    all.cells = {0, 1, 2, 3, 4, 5, 6, 7, 0};
    auto f = enc.encode(all);
    for (std::size_t r = 0; r < 8; ++r) {
        double n = 0;
        for (float v : f.row(r)) n += static_cast<double>(v) * static_cast<double>(v);
        CHECK(std::sqrt(n) == golden[r]);
    }
    CHECK(enc.checksum() == "e845ab80e3a5d718");
    CHECK(enc.checksum() == FrozenEncoder(0, 8, 16).checksum());
    CHECK(enc.checksum() != FrozenEncoder(1, 8, 16).checksum());

    GridSample bad = a;
    bad.cells[0] = 8;
    CHECK_THROWS_AS(enc.encode(bad), std::out_of_range);
}

TEST_CASE("adapter: zero weights give zero rows, output shape") {
    auto z = zero_adapter<float>(16, 32, 64);
    auto out = adapt(numerics::Matrix(16, 16, 1.5f), z);
    CHECK(out.rows() == 16);
    CHECK(out.cols() == 64);
    for (float v : out.values()) CHECK(v == 0.0f);
    CHECK_THROWS_AS(adapt(numerics::Matrix(16, 15), z), numerics::ShapeError);
}

TEST_CASE("adapter: gradient matches finite differences") {
    numerics::Rng rng(3);
    auto a = adapter_cast<double>(init_adapter(4, 6, 8, rng));
    for (auto* m : {&a.w1, &a.b1, &a.w2, &a.b2})
        for (auto& v : m->values()) v = rng.normal(0.0, 0.7);
    MatrixD x(5, 4), probe(5, 8);
    for (auto& v : x.values()) v = rng.normal();
    for (auto& v : probe.values()) v = rng.normal();
    auto loss = [&](const BasicAdapter<double>& ad) {
        auto y = adapt(x, ad);
        double s = 0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y.data()[i] * probe.data()[i];
        return s;
    };
    AdapterTape<double> tape;
    adapt(x, a, &tape);
    auto grads = zero_adapter<double>(4, 6, 8);
    adapt_backward(tape, probe, a, grads);

    auto perturbed = a;
    std::vector<std::pair<MatrixD*, MatrixD*>> pairs{
        {&perturbed.w1, &grads.w1}, {&perturbed.b1, &grads.b1}, {&perturbed.w2, &grads.w2}, {&perturbed.b2, &grads.b2}};
    for (auto [p, g] : pairs) {
        for (std::size_t i = 0; i < p->size(); ++i) {
            const double keep = p->data()[i], h = 1e-5;
            p->data()[i] = keep + h;
            const double up = loss(perturbed);
            p->data()[i] = keep - h;
            const double down = loss(perturbed);
            p->data()[i] = keep;
            const double fd = (up - down) / (2 * h);
            const double an = g->data()[i];
            CHECK(std::abs(an - fd) <= 1e-3 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("dataset io: round trip, empty split, error lines") {
    auto d = generate_dataset(small_config(3));
    auto path = std::filesystem::temp_directory_path() / "deepinsert_test_split.jsonl";
    write_split(path, d.val);
    CHECK(read_split(path) == d.val);
    std::filesystem::remove(path);

    auto empty = to_jsonl({});
    CHECK(empty == "# gridqa schema_version=1\n");
    CHECK(from_jsonl(empty).empty());

    auto text = to_jsonl({d.train[0], d.train[1], d.train[2]});
    auto third = text.find('\n', text.find('\n', text.find('\n') + 1) + 1);
    auto broken = text.substr(0, third + 1) + "{\"grid\": [[1,2]\n";
    try {
        from_jsonl(broken, "broken.jsonl");
        FAIL("expected a format error");
    } catch (const DatasetFormatError& e) {
        CHECK(std::string(e.what()).find("line 4") != std::string::npos);
    }
    CHECK_THROWS_AS(from_jsonl("# gridqa schema_version=2\n"), DatasetFormatError);
    CHECK_THROWS_AS(from_jsonl("{}\n"), DatasetFormatError);
}
