#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "keyetm/corpus.hpp"
#include "keyetm/embeddings.hpp"
#include "keyetm/mat.hpp"
#include "keyetm/prior.hpp"
#include "keyetm/rng.hpp"

namespace keyetm {

// synthetic corpus sampled from a known topic model: vocabulary blocks per
// group, Zipf-weighted topic rows, concentrated document mixtures
struct PlantedConfig {
    int k = 3;
    int vocab_size = 300;
    int num_docs = 600;
    int doc_length = 60;
    int seeds_per_topic = 3;
    int embed_dim = 16;
    double own_mass_lo = 0.78;  // document weight on its own group
    double own_mass_hi = 0.92;
    double block_mass = 0.9;  // topic weight on its own vocabulary block
    std::vector<double> mix;  // group proportions; empty = uniform
    uint64_t rng_seed = 1;
};

struct PlantedCorpus {
    BowCorpus bow;
    Vocabulary vocab;
    EmbeddingMatrix embeddings;  // geometric: block-clustered directions
    SeedSpec seeds;              // top words of each block
    Mat theta_true;              // D x K
    Mat beta_true;               // K x V
    std::vector<std::string> labels;                 // per document group name
    std::unordered_map<int, std::string> label_map;  // topic index -> group name
    std::vector<std::vector<int>> streams;           // sampled token order per doc
};

PlantedCorpus make_planted_corpus(const PlantedConfig& config);

// the sampled tokens as whitespace text; terms are stemmer fixed points, so
// preprocessing reproduces the planted token streams exactly
std::vector<RawDocument> render_text(const PlantedCorpus& planted);

// newsgroups-style corpus: three coarse themes (rec / sci / talk) drawn from
// curated word banks plus a shared background bank, with seed lists per theme
struct TextFixture {
    std::vector<RawDocument> docs;
    SeedSpec seeds;
};

TextFixture make_grouped_text_corpus(int num_docs, uint64_t rng_seed);

void save_raw_jsonl(const std::vector<RawDocument>& docs, const std::string& path);
void save_seed_spec(const SeedSpec& spec, const std::string& path);

}  // namespace keyetm
