#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "keyetm/corpus.hpp"
#include "keyetm/mat.hpp"

namespace keyetm {

struct SkipGramConfig {
    int dim = 300;
    int window = 5;
    int negative_samples = 5;
    int epochs = 5;
    double learning_rate = 0.025;
    int min_count = 1;
    uint64_t rng_seed = 1;
    bool deterministic = true;  // false shards docs across workers (hogwild)
    int workers = 4;
};

// rho is pre-fit here and stays frozen during topic model training
struct EmbeddingMatrix {
    Mat rho;  // V x L
    uint64_t vocab_hash = 0;

    int dim() const { return rho.cols; }
    std::span<const double> vec(int v) const { return rho.row(v); }
};

struct SkipGramResult {
    EmbeddingMatrix embeddings;
    std::vector<double> epoch_loss;  // mean negative-sampling loss per epoch
};

struct EmbeddingLoad {
    EmbeddingMatrix embeddings;
    std::vector<std::string> missing_terms;  // random-initialized rows
    double coverage = 0.0;
};

std::vector<std::vector<int>> index_streams(const std::vector<std::vector<std::string>>& docs,
                                            const Vocabulary& vocab);

SkipGramResult train_skipgram(const std::vector<std::vector<int>>& streams,
                              const Vocabulary& vocab, const SkipGramConfig& config);

EmbeddingLoad load_embeddings(const std::string& path, const Vocabulary& vocab,
                              uint64_t rng_seed);

void save_embeddings(const EmbeddingMatrix& emb, const Vocabulary& vocab,
                     const std::string& path);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

void save_index_streams(const std::vector<std::vector<int>>& streams, const std::string& path);
std::vector<std::vector<int>> load_index_streams(const std::string& path, int vocab_size);

}  // namespace keyetm
