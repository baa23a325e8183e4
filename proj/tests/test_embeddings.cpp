#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "keyetm/digest.hpp"
#include "keyetm/embeddings.hpp"
#include "keyetm/errors.hpp"
#include "keyetm/rng.hpp"

using namespace keyetm;

namespace {

Vocabulary make_vocab(const std::vector<std::string>& terms) {
    Vocabulary v;
    v.terms = terms;
    for (size_t i = 0; i < terms.size(); ++i) v.term_to_index[terms[i]] = static_cast<int>(i);
    v.doc_freq.assign(terms.size(), 1);
    return v;
}

std::filesystem::path tmp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("cosine similarity anchors") {
    std::vector<double> e1 = {1, 0}, e2 = {0, 1}, d = {1, 1}, nd = {-1, -1};
    CHECK(cosine_similarity(e1, e1) == doctest::Approx(1.0));
    CHECK(cosine_similarity(e1, e2) == doctest::Approx(0.0));
    CHECK(cosine_similarity(d, nd) == doctest::Approx(-1.0));
    std::vector<double> zero = {0, 0};
    CHECK_THROWS_AS(cosine_similarity(e1, zero), ZeroVector);
    std::vector<double> three = {1, 2, 3};
    CHECK_THROWS_AS(cosine_similarity(e1, three), DimensionMismatch);
}

TEST_CASE("cosine similarity is symmetric") {
    Rng g(4);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> a(8), b(8);
        for (auto& x : a) x = g.uniform(-2, 2);
        for (auto& x : b) x = g.uniform(-2, 2);
        a[0] += 0.1;
        b[0] += 0.1;
        const double ab = cosine_similarity(a, b);
        const double ba = cosine_similarity(b, a);
        CHECK(std::abs(ab - ba) <= 1e-12);
        CHECK(ab >= -1.0 - 1e-12);
        CHECK(ab <= 1.0 + 1e-12);
    }
}

TEST_CASE("index streams keep order and drop unknown terms") {
    auto vocab = make_vocab({"mask", "wear", "vote"});
    auto streams = index_streams({{"mask", "unknown", "wear"}, {"vote"}}, vocab);
    REQUIRE(streams.size() == 2);
    CHECK(streams[0] == std::vector<int>{0, 1});
    CHECK(streams[1] == std::vector<int>{2});
}

TEST_CASE("skip-gram separates co-occurring terms from never co-occurring ones") {
    // "mask wear" sentences never mention "vote"; "vote poll" never mention "mask"
    auto vocab = make_vocab({"mask", "wear", "vote", "poll", "filler"});
    std::vector<std::vector<int>> streams;
    Rng g(77);
    for (int i = 0; i < 300; ++i) {
        if (i % 2 == 0)
            streams.push_back({0, 1, 4, 0, 1});
        else
            streams.push_back({2, 3, 4, 2, 3});
    }
    SkipGramConfig cfg;
    cfg.dim = 16;
    cfg.epochs = 8;
    cfg.window = 2;
    cfg.rng_seed = 9;
    auto result = train_skipgram(streams, vocab, cfg);
    const auto& e = result.embeddings;
    const double close = cosine_similarity(e.vec(0), e.vec(1));
    const double far = cosine_similarity(e.vec(0), e.vec(2));
    CHECK(close > far);
    CHECK(e.rho.rows == 5);
    CHECK(e.rho.cols == 16);
    CHECK(e.vocab_hash == vocab_digest(vocab.terms));

    // negative-sampling loss decreases in moving average
    REQUIRE(result.epoch_loss.size() == 8);
    const double head = (result.epoch_loss[0] + result.epoch_loss[1]) / 2;
    const double tail = (result.epoch_loss[6] + result.epoch_loss[7]) / 2;
    CHECK(tail < head);
}

TEST_CASE("deterministic training is bit-identical") {
    auto vocab = make_vocab({"aa", "bb", "cc", "dd"});
    std::vector<std::vector<int>> streams;
    Rng g(3);
    for (int i = 0; i < 40; ++i) {
        std::vector<int> s;
        for (int j = 0; j < 12; ++j) s.push_back(static_cast<int>(g.below(4)));
        streams.push_back(s);
    }
    SkipGramConfig cfg;
    cfg.dim = 8;
    cfg.epochs = 3;
    cfg.rng_seed = 41;
    auto a = train_skipgram(streams, vocab, cfg);
    auto b = train_skipgram(streams, vocab, cfg);
    CHECK(a.embeddings.rho.v == b.embeddings.rho.v);
    CHECK(a.epoch_loss == b.epoch_loss);
}

TEST_CASE("tiny corpus trains with a warning and stream validation works") {
    auto vocab = make_vocab({"aa", "bb"});
    SkipGramConfig cfg;
    cfg.dim = 4;
    auto result = train_skipgram({{0, 1}}, vocab, cfg);
    CHECK(result.embeddings.rho.rows == 2);
    CHECK_THROWS_AS(train_skipgram({{0, 7}}, vocab, cfg), VocabMismatch);
    CHECK_THROWS_AS(train_skipgram({{}}, vocab, cfg), VocabMismatch);
}

TEST_CASE("embedding text file round trip and coverage") {
    auto vocab = make_vocab({"mask", "wear", "vote"});
    EmbeddingMatrix emb;
    emb.rho = Mat(3, 4, {0.25, -1.5, 3.125e-3, 7.0,
                         1.0, 2.0, -3.0, 4.0,
                         0.1234567890123456, -9.9, 0.0, 2.5e-8});
    emb.vocab_hash = vocab_digest(vocab.terms);
    auto path = tmp_file("keyetm_emb_test.txt");
    save_embeddings(emb, vocab, path.string());
    auto loaded = load_embeddings(path.string(), vocab, 7);
    CHECK(loaded.coverage == doctest::Approx(1.0));
    CHECK(loaded.missing_terms.empty());
    CHECK(loaded.embeddings.rho.v == emb.rho.v);  // %.17g survives the round trip
    std::remove(path.string().c_str());
}

TEST_CASE("missing vocabulary terms get small random rows") {
    auto vocab = make_vocab({"mask", "wear", "vote", "novel"});
    auto path = tmp_file("keyetm_emb_partial.txt");
    {
        std::ofstream out(path);
        out << "2 3\n";
        out << "mask 1 0 0\n";
        out << "vote 0 1 0\n";
    }
    auto loaded = load_embeddings(path.string(), vocab, 7);
    CHECK(loaded.coverage == doctest::Approx(0.5));
    REQUIRE(loaded.missing_terms.size() == 2);
    CHECK(loaded.missing_terms[0] == "wear");
    CHECK(loaded.missing_terms[1] == "novel");
    CHECK(loaded.embeddings.rho.at(0, 0) == 1.0);
    CHECK(loaded.embeddings.rho.at(2, 1) == 1.0);
    double norm = 0.0;
    for (int c = 0; c < 3; ++c) norm += std::abs(loaded.embeddings.rho.at(1, c));
    CHECK(norm > 0.0);
    CHECK(norm < 0.2);
    // same seed, same random rows
    auto again = load_embeddings(path.string(), vocab, 7);
    CHECK(again.embeddings.rho.v == loaded.embeddings.rho.v);
    std::remove(path.string().c_str());
}

TEST_CASE("malformed embedding files") {
    auto vocab = make_vocab({"mask"});
    auto path = tmp_file("keyetm_emb_bad.txt");
    auto write = [&](const std::string& body) {
        std::ofstream out(path);
        out << body;
    };
    write("");
    CHECK_THROWS_AS(load_embeddings(path.string(), vocab, 1), MalformedHeader);
    write("not a header\n");
    CHECK_THROWS_AS(load_embeddings(path.string(), vocab, 1), MalformedHeader);
    write("1 3\nmask 1 0\n");
    CHECK_THROWS_AS(load_embeddings(path.string(), vocab, 1), DimensionMismatch);
    std::remove(path.string().c_str());
}

TEST_CASE("index stream file round trip") {
    std::vector<std::vector<int>> streams = {{0, 2, 1}, {}, {3}};
    auto path = tmp_file("keyetm_streams.txt");
    save_index_streams(streams, path.string());
    auto loaded = load_index_streams(path.string(), 4);
    CHECK(loaded == streams);
    CHECK_THROWS_AS(load_index_streams(path.string(), 3), VocabMismatch);
    std::remove(path.string().c_str());
}
