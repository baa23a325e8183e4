#pragma once

#include <string>
#include <vector>

#include "keyetm/corpus.hpp"
#include "keyetm/embeddings.hpp"
#include "keyetm/mat.hpp"

namespace keyetm {

struct SeedTopic {
    std::string name;
    std::vector<std::string> seeds;  // stemmed terms
};

struct SeedSpec {
    std::vector<SeedTopic> topics;

    int num_topics() const { return static_cast<int>(topics.size()); }
};

// binary keyword prior over (vocabulary term, topic)
struct PriorMatrix {
    Mat gamma_prior;  // V x K, entries in {0,1}
    double thr = 0.5;
};

struct GuidedSet {
    std::vector<int> indices;  // sorted vocabulary indices with any nonzero prior

    int size() const { return static_cast<int>(indices.size()); }
};

SeedSpec load_seed_spec(const std::string& path);

// a seed passes if it re-stems to itself or is already a vocabulary term;
// otherwise rejected with the stemmed form as a suggestion
void validate_seeds(const SeedSpec& spec, const Vocabulary& vocab);

// mean of in-vocabulary seed embeddings; out-of-vocabulary seeds are skipped
// with a warning and excluded from the divisor
std::vector<double> semantic_vector(const SeedTopic& topic, const Vocabulary& vocab,
                                    const EmbeddingMatrix& emb);

// entry (v,k) = 1 iff term v is a seed of topic k or its embedding lies within
// cosine thr of the topic's semantic vector
PriorMatrix build_prior(const SeedSpec& spec, const Vocabulary& vocab,
                        const EmbeddingMatrix& emb, double thr);

GuidedSet guided_set(const PriorMatrix& prior);

void save_prior_tsv(const PriorMatrix& prior, const SeedSpec& spec, const Vocabulary& vocab,
                    const std::string& path);

}  // namespace keyetm
