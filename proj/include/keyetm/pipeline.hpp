#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "keyetm/corpus.hpp"
#include "keyetm/embeddings.hpp"
#include "keyetm/eval.hpp"
#include "keyetm/model.hpp"

namespace keyetm {

// single run-config file driving every stage; nested rng seeds are always
// overwritten by the top-level rng_seed so one value controls the whole run
struct RunConfig {
    std::string corpus_path;
    std::string seeds_path;      // empty = unguided run
    std::string vectors_path;    // optional pre-trained word vectors
    std::string stopwords_path;  // optional custom stopword list
    std::string output_dir = "out";
    uint64_t rng_seed = 1;
    bool deterministic = true;
    PreprocessConfig preprocess;
    SkipGramConfig skipgram;
    TrainConfig train;
    int coherence_m = 10;
    int diversity_n = 25;
    std::map<int, std::string> topic_labels;  // empty = suggest from gold labels
};

RunConfig load_run_config(const std::string& path);
std::string run_config_json(const RunConfig& config);  // snapshot for manifests

// output-dir artifact names, exposed so callers can find stage products
namespace artifact {
inline constexpr const char* kVocab = "vocab.txt";
inline constexpr const char* kVocabMeta = "vocab.meta.json";
inline constexpr const char* kBow = "bow.jsonl";
inline constexpr const char* kStreams = "streams.jsonl";
inline constexpr const char* kEmbeddings = "embeddings.txt";
inline constexpr const char* kPrior = "prior.tsv";
inline constexpr const char* kCheckpoint = "checkpoint.bin";
inline constexpr const char* kTrainLog = "train_log.jsonl";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kTopicsJson = "topics.json";
inline constexpr const char* kTopicsText = "topics.txt";
inline constexpr const char* kMetrics = "metrics.json";
inline constexpr const char* kClassification = "classification.json";
inline constexpr const char* kIntrusionItems = "intrusion_items.jsonl";
inline constexpr const char* kIntrusionKeys = "intrusion_keys.jsonl";
inline constexpr const char* kSweep = "sweep.csv";
inline constexpr const char* kDiagnostics = "nonfinite.json";
}  // namespace artifact

std::string artifact_path(const RunConfig& config, const char* name);

struct PreprocessOutcome {
    int docs = 0;
    int vocab = 0;
    int dropped = 0;
};
PreprocessOutcome run_preprocess(const RunConfig& config);

struct EmbedOutcome {
    int terms = 0;
    int dim = 0;
    double coverage = 1.0;  // < 1 only when loading external vectors
    bool trained = false;
};
EmbedOutcome run_embed(const RunConfig& config);

struct TrainOutcome {
    std::vector<EpochStats> history;
    bool early_stopped = false;
    int guided_terms = 0;  // |S|, zero for unguided runs
};
TrainOutcome run_train(const RunConfig& config, bool unguided,
                       const std::function<void(const EpochStats&)>& progress = nullptr);

struct TopicsOutcome {
    std::vector<int> topic_ids;
    std::vector<std::vector<std::string>> terms;
    std::string text_table;
};
TopicsOutcome run_topics(const RunConfig& config, int m);

struct EvalOutcome {
    MetricsReport metrics;
    std::optional<ClassificationReport> classification;
    std::map<int, std::string> label_map;
    bool label_map_suggested = false;
};
EvalOutcome run_eval(const RunConfig& config);

struct InferOutcome {
    std::vector<std::string> ids;
    Mat theta;  // one row per input document
};
InferOutcome run_infer(const RunConfig& config, const std::string& input_path);

struct IntrusionOutcome {
    int items = 0;
    std::vector<int> infeasible_topics;
};
IntrusionOutcome run_intrusion(const RunConfig& config, int items_per_topic);
double run_intrusion_score(const RunConfig& config, const std::string& responses_path);

struct SweepRow {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double coherence = 0.0;
    double diversity = 0.0;
    double quality = 0.0;
    double f1_micro = 0.0;
    double f1_macro = 0.0;
};
std::vector<SweepRow> run_sweep(const RunConfig& config, const std::vector<double>& lambda2_grid);

}  // namespace keyetm
