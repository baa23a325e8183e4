#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace keyetm {

struct RawDocument {
    std::string id;
    std::string text;
    std::string label;  // empty = unlabeled
};

struct PreprocessConfig {
    double min_df = 0.0;
    double max_df = 1.0;
    bool lowercase = true;
    bool stem = true;
    std::unordered_set<std::string> stopwords;  // empty = use built-in list
};

struct Vocabulary {
    std::vector<std::string> terms;
    std::unordered_map<std::string, int> term_to_index;
    std::vector<long long> doc_freq;

    int size() const { return static_cast<int>(terms.size()); }
    // -1 when the term is unknown
    int index_of(const std::string& term) const {
        auto it = term_to_index.find(term);
        return it == term_to_index.end() ? -1 : it->second;
    }
};

// one document in sparse count form; counts sorted by term index
struct SparseDoc {
    std::string id;
    std::string label;
    std::vector<std::pair<int, int>> counts;
    long long total = 0;
};

struct BowCorpus {
    std::vector<SparseDoc> docs;
    int vocab_size = 0;
    std::vector<std::string> dropped_ids;  // documents with no in-vocabulary token

    int num_docs() const { return static_cast<int>(docs.size()); }
};

const std::unordered_set<std::string>& default_stopwords();
std::unordered_set<std::string> load_stopwords(const std::string& path);

std::vector<std::string> tokenize_and_stem(std::string_view text, const PreprocessConfig& config);

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& docs,
                            const PreprocessConfig& config);

BowCorpus to_bow(const std::vector<std::vector<std::string>>& docs,
                 const std::vector<RawDocument>& raw, const Vocabulary& vocab);

// counts -> frequencies summing to 1; throws ZeroLengthDocument on an all-zero row
std::vector<double> normalize_bow(const std::vector<double>& row);
std::vector<double> normalize_bow(const SparseDoc& doc, int vocab_size);

std::vector<RawDocument> load_jsonl(const std::string& path);

void save_vocabulary(const Vocabulary& vocab, const std::string& terms_path,
                     const std::string& sidecar_path, const PreprocessConfig& config);
Vocabulary load_vocabulary(const std::string& terms_path);

void save_bow(const BowCorpus& corpus, const std::string& path);
BowCorpus load_bow(const std::string& path);

}  // namespace keyetm
