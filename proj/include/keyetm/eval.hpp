#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "keyetm/corpus.hpp"
#include "keyetm/mat.hpp"
#include "keyetm/rng.hpp"

namespace keyetm {

// document-level occurrence statistics: a term or pair counts once per document
struct CooccurrenceStats {
    long long doc_count = 0;
    std::vector<long long> term_doc_freq;                  // per vocabulary index
    std::unordered_map<uint64_t, long long> pair_counts;   // upper-triangle sparse

    int vocab_size() const { return static_cast<int>(term_doc_freq.size()); }
    long long pair_count(int a, int b) const;  // symmetric access
};

// restrict_to limits pair counting to the given terms (document frequencies
// still cover everything); metric callers pass the union of their top words
CooccurrenceStats count_cooccurrence(const BowCorpus& bow,
                                     const std::vector<int>* restrict_to = nullptr);

// normalized pointwise mutual information from document-level probabilities;
// a zero pair count is smoothed to 1e-12, a pair present in every document
// is defined as 0 (the normalizer vanishes there)
double npmi(int wi, int wj, const CooccurrenceStats& stats);

// mean npmi over every within-topic pair of top words
double topic_coherence(const std::vector<std::vector<int>>& topics,
                       const CooccurrenceStats& stats,
                       std::vector<double>* per_topic = nullptr);

// fraction of distinct terms across the per-topic lists
double topic_diversity(const std::vector<std::vector<int>>& topics);

struct MetricsReport {
    double coherence = 0.0;
    double diversity = 0.0;
    double quality = 0.0;  // coherence * diversity
    std::vector<double> per_topic;
};

MetricsReport evaluate_topics(const Mat& beta, const BowCorpus& bow, int coherence_m = 10,
                              int diversity_n = 25);

struct ClassificationReport {
    double precision_macro = 0.0;
    double recall_macro = 0.0;
    double f1_macro = 0.0;
    double f1_micro = 0.0;  // equals accuracy for single-label classification
    long long evaluated = 0;
    long long unlabeled = 0;
};

// predicted label = topic_to_label[argmax theta_d]; unlabeled documents are
// excluded and counted; a gold label outside the map's image is an error
ClassificationReport classification_eval(
    const Mat& theta, const std::vector<std::string>& gold,
    const std::unordered_map<int, std::string>& topic_to_label);

// maximum-agreement assignment of topics to gold labels on the argmax
// contingency table; surplus topics fall back to their own best label
std::unordered_map<int, std::string> suggest_topic_label_map(
    const Mat& theta, const std::vector<std::string>& gold);

// minimum-cost assignment of rows to columns, rows <= cols; used for the
// label-map suggestion and exposed for testing
std::vector<int> hungarian_min(const std::vector<std::vector<double>>& cost);

struct IntrusionItem {
    std::string id;
    int topic = 0;
    std::vector<int> shown;  // the topic's top five terms plus the intruder, shuffled
    int answer = 0;          // position of the intruder within shown
};

struct IntrusionSet {
    std::vector<IntrusionItem> items;
    std::vector<int> infeasible_topics;  // no term qualified as an intruder
};

// per topic, items_per_topic items whose intruder is a top-5 term of another
// topic ranked below 50 in the current one
IntrusionSet make_intrusion_items(const Mat& beta, int items_per_topic, Rng& rng);

struct IntrusionResponse {
    std::string item_id;
    int selected_index = 0;
    std::string rater_id;
};

double score_intrusion(const IntrusionSet& items, const std::vector<IntrusionResponse>& responses);

// items file is safe to show raters; the answer key lives separately
void save_intrusion_items(const IntrusionSet& set, const Vocabulary& vocab,
                          const std::string& items_path, const std::string& keys_path);
std::vector<IntrusionResponse> load_intrusion_responses(const std::string& path);
double score_intrusion_files(const std::string& keys_path, const std::string& responses_path);

}  // namespace keyetm
