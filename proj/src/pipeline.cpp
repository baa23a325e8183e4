#include "keyetm/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <unistd.h>

#include "json.hpp"
#include "keyetm/checkpoint.hpp"
#include "keyetm/digest.hpp"
#include "keyetm/errors.hpp"
#include "keyetm/manifest.hpp"
#include "keyetm/prior.hpp"

namespace keyetm {

namespace {

using nlohmann::json;

void require_keys(const json& j, const std::string& where,
                  std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* a) { return key == a; }) == allowed.end())
            throw InputError(where + ": unknown key '" + key + "'");
    }
}

template <typename T>
void read_field(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw InputError(where + "." + key + ": " + e.what());
    }
}

void write_text_atomic(const std::string& path, const std::string& body) {
    const std::string tmp = path + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
        if (!out) throw InputError("cannot write " + tmp);
        out << body;
        if (!out) throw InputError("failed writing " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw InputError("cannot replace " + path + ": " + ec.message());
    }
}

std::string digest_of(const std::string& path) { return hex_digest(file_digest(path)); }

PreprocessConfig effective_preprocess(const RunConfig& config) {
    PreprocessConfig pc = config.preprocess;
    if (!config.stopwords_path.empty()) pc.stopwords = load_stopwords(config.stopwords_path);
    return pc;
}

// checkpoint plus the vocabulary it was trained against, hash-verified
struct LoadedModel {
    Checkpoint checkpoint;
    Vocabulary vocab;
};

LoadedModel load_model(const RunConfig& config, RunManifest& manifest) {
    require_fresh(manifest, "preprocess",
                  {{"vocab", artifact_path(config, artifact::kVocab)}});
    require_fresh(manifest, "train",
                  {{"checkpoint", artifact_path(config, artifact::kCheckpoint)}});
    LoadedModel m;
    m.vocab = load_vocabulary(artifact_path(config, artifact::kVocab));
    m.checkpoint = load_checkpoint(artifact_path(config, artifact::kCheckpoint));
    if (m.checkpoint.params.vocab_hash != vocab_digest(m.vocab.terms))
        throw VocabMismatch("checkpoint was trained against a different vocabulary than " +
                            artifact_path(config, artifact::kVocab));
    if (m.checkpoint.params.vocab_size() != m.vocab.size())
        throw VocabMismatch("checkpoint vocabulary size " +
                            std::to_string(m.checkpoint.params.vocab_size()) +
                            " does not match " + std::to_string(m.vocab.size()));
    return m;
}

json topics_json(const RunConfig& config, const std::vector<std::vector<int>>& ids,
                 const Vocabulary& vocab) {
    json topics = json::array();
    for (size_t k = 0; k < ids.size(); ++k) {
        json t;
        t["topic"] = k;
        const auto label = config.topic_labels.find(static_cast<int>(k));
        if (label != config.topic_labels.end()) t["label"] = label->second;
        json terms = json::array();
        for (const int v : ids[k]) terms.push_back(vocab.terms[static_cast<size_t>(v)]);
        t["terms"] = std::move(terms);
        topics.push_back(std::move(t));
    }
    return json{{"topics", topics}};
}

std::vector<std::string> gold_labels(const BowCorpus& bow) {
    std::vector<std::string> gold;
    gold.reserve(bow.docs.size());
    for (const auto& doc : bow.docs) gold.push_back(doc.label);
    return gold;
}

bool any_labeled(const std::vector<std::string>& gold) {
    return std::any_of(gold.begin(), gold.end(),
                       [](const std::string& l) { return !l.empty(); });
}

std::string format_row(const SweepRow& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%g,%g,%.6f,%.6f,%.6f,%.6f,%.6f", r.lambda1, r.lambda2,
                  r.coherence, r.diversity, r.quality, r.f1_micro, r.f1_macro);
    return buf;
}

}  // namespace

std::string artifact_path(const RunConfig& config, const char* name) {
    return (std::filesystem::path(config.output_dir) / name).string();
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open run config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw InputError(path + ": " + e.what());
    }
    if (!j.is_object()) throw InputError(path + ": expected a JSON object");
    require_keys(j, path,
                 {"corpus", "seeds", "vectors", "stopwords", "output_dir", "rng_seed",
                  "deterministic", "preprocess", "skipgram", "train", "eval"});

    RunConfig config;
    read_field(j, "corpus", config.corpus_path, path);
    read_field(j, "seeds", config.seeds_path, path);
    read_field(j, "vectors", config.vectors_path, path);
    read_field(j, "stopwords", config.stopwords_path, path);
    read_field(j, "output_dir", config.output_dir, path);
    read_field(j, "rng_seed", config.rng_seed, path);
    read_field(j, "deterministic", config.deterministic, path);

    if (j.contains("preprocess")) {
        const json& p = j["preprocess"];
        require_keys(p, path + ".preprocess", {"min_df", "max_df", "lowercase", "stem"});
        read_field(p, "min_df", config.preprocess.min_df, path + ".preprocess");
        read_field(p, "max_df", config.preprocess.max_df, path + ".preprocess");
        read_field(p, "lowercase", config.preprocess.lowercase, path + ".preprocess");
        read_field(p, "stem", config.preprocess.stem, path + ".preprocess");
    }
    if (j.contains("skipgram")) {
        const json& s = j["skipgram"];
        require_keys(s, path + ".skipgram",
                     {"dim", "window", "negative_samples", "epochs", "learning_rate",
                      "min_count", "workers"});
        read_field(s, "dim", config.skipgram.dim, path + ".skipgram");
        read_field(s, "window", config.skipgram.window, path + ".skipgram");
        read_field(s, "negative_samples", config.skipgram.negative_samples, path + ".skipgram");
        read_field(s, "epochs", config.skipgram.epochs, path + ".skipgram");
        read_field(s, "learning_rate", config.skipgram.learning_rate, path + ".skipgram");
        read_field(s, "min_count", config.skipgram.min_count, path + ".skipgram");
        read_field(s, "workers", config.skipgram.workers, path + ".skipgram");
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        require_keys(t, path + ".train",
                     {"k", "epochs", "batch_size", "learning_rate", "hidden_size", "lambda1",
                      "lambda2", "dropout_rate", "thr", "precision", "gamma_alpha_topic_axis",
                      "alpha_warm_start", "early_stop_rel", "early_stop_window",
                      "adam_weight_decay"});
        read_field(t, "k", config.train.k, path + ".train");
        read_field(t, "epochs", config.train.epochs, path + ".train");
        read_field(t, "batch_size", config.train.batch_size, path + ".train");
        read_field(t, "learning_rate", config.train.learning_rate, path + ".train");
        read_field(t, "hidden_size", config.train.hidden_size, path + ".train");
        read_field(t, "lambda1", config.train.lambda1, path + ".train");
        read_field(t, "lambda2", config.train.lambda2, path + ".train");
        read_field(t, "dropout_rate", config.train.dropout_rate, path + ".train");
        read_field(t, "thr", config.train.thr, path + ".train");
        read_field(t, "precision", config.train.precision, path + ".train");
        read_field(t, "gamma_alpha_topic_axis", config.train.gamma_alpha_topic_axis,
                   path + ".train");
        read_field(t, "alpha_warm_start", config.train.alpha_warm_start, path + ".train");
        read_field(t, "early_stop_rel", config.train.early_stop_rel, path + ".train");
        read_field(t, "early_stop_window", config.train.early_stop_window, path + ".train");
        read_field(t, "adam_weight_decay", config.train.adam_weight_decay, path + ".train");
    }
    if (j.contains("eval")) {
        const json& e = j["eval"];
        require_keys(e, path + ".eval", {"coherence_m", "diversity_n", "topic_labels"});
        read_field(e, "coherence_m", config.coherence_m, path + ".eval");
        read_field(e, "diversity_n", config.diversity_n, path + ".eval");
        if (e.contains("topic_labels")) {
            if (!e["topic_labels"].is_object())
                throw InputError(path + ".eval.topic_labels: expected an object");
            for (const auto& [key, value] : e["topic_labels"].items()) {
                try {
                    config.topic_labels[std::stoi(key)] = value.get<std::string>();
                } catch (const std::exception&) {
                    throw InputError(path + ".eval.topic_labels: bad entry '" + key + "'");
                }
            }
        }
    }
    if (config.corpus_path.empty()) throw InputError(path + ": 'corpus' is required");
    if (config.output_dir.empty()) throw InputError(path + ": 'output_dir' is required");

    config.skipgram.rng_seed = config.rng_seed;
    config.skipgram.deterministic = config.deterministic;
    config.train.rng_seed = config.rng_seed;
    return config;
}

std::string run_config_json(const RunConfig& config) {
    json j;
    j["corpus"] = config.corpus_path;
    if (!config.seeds_path.empty()) j["seeds"] = config.seeds_path;
    if (!config.vectors_path.empty()) j["vectors"] = config.vectors_path;
    if (!config.stopwords_path.empty()) j["stopwords"] = config.stopwords_path;
    j["output_dir"] = config.output_dir;
    j["rng_seed"] = config.rng_seed;
    j["deterministic"] = config.deterministic;
    j["preprocess"] = {{"min_df", config.preprocess.min_df},
                       {"max_df", config.preprocess.max_df},
                       {"lowercase", config.preprocess.lowercase},
                       {"stem", config.preprocess.stem}};
    j["skipgram"] = {{"dim", config.skipgram.dim},
                     {"window", config.skipgram.window},
                     {"negative_samples", config.skipgram.negative_samples},
                     {"epochs", config.skipgram.epochs},
                     {"learning_rate", config.skipgram.learning_rate},
                     {"min_count", config.skipgram.min_count},
                     {"workers", config.skipgram.workers}};
    j["train"] = {{"k", config.train.k},
                  {"epochs", config.train.epochs},
                  {"batch_size", config.train.batch_size},
                  {"learning_rate", config.train.learning_rate},
                  {"hidden_size", config.train.hidden_size},
                  {"lambda1", config.train.lambda1},
                  {"lambda2", config.train.lambda2},
                  {"dropout_rate", config.train.dropout_rate},
                  {"thr", config.train.thr},
                  {"precision", config.train.precision},
                  {"gamma_alpha_topic_axis", config.train.gamma_alpha_topic_axis},
                  {"alpha_warm_start", config.train.alpha_warm_start},
                  {"early_stop_rel", config.train.early_stop_rel},
                  {"early_stop_window", config.train.early_stop_window},
                  {"adam_weight_decay", config.train.adam_weight_decay}};
    json labels = json::object();
    for (const auto& [k, v] : config.topic_labels) labels[std::to_string(k)] = v;
    j["eval"] = {{"coherence_m", config.coherence_m},
                 {"diversity_n", config.diversity_n},
                 {"topic_labels", labels}};
    return j.dump();
}

PreprocessOutcome run_preprocess(const RunConfig& config) {
    std::filesystem::create_directories(config.output_dir);
    StageLock lock(config.output_dir, "preprocess");

    const auto raw = load_jsonl(config.corpus_path);
    const PreprocessConfig pc = effective_preprocess(config);
    std::vector<std::vector<std::string>> tokenized;
    tokenized.reserve(raw.size());
    for (const auto& doc : raw) tokenized.push_back(tokenize_and_stem(doc.text, pc));

    const Vocabulary vocab = build_vocabulary(tokenized, pc);
    const BowCorpus bow = to_bow(tokenized, raw, vocab);
    const auto streams = index_streams(tokenized, vocab);

    save_vocabulary(vocab, artifact_path(config, artifact::kVocab),
                    artifact_path(config, artifact::kVocabMeta), pc);
    save_bow(bow, artifact_path(config, artifact::kBow));
    save_index_streams(streams, artifact_path(config, artifact::kStreams));

    StageRecord record;
    record.config = run_config_json(config);
    record.rng_seed = config.rng_seed;
    record.inputs["corpus"] = digest_of(config.corpus_path);
    if (!config.stopwords_path.empty())
        record.inputs["stopwords"] = digest_of(config.stopwords_path);
    record.outputs["vocab"] = digest_of(artifact_path(config, artifact::kVocab));
    record.outputs["vocab_meta"] = digest_of(artifact_path(config, artifact::kVocabMeta));
    record.outputs["bow"] = digest_of(artifact_path(config, artifact::kBow));
    record.outputs["streams"] = digest_of(artifact_path(config, artifact::kStreams));
    RunManifest manifest = load_manifest(artifact_path(config, artifact::kManifest));
    record_stage(manifest, "preprocess", std::move(record),
                 artifact_path(config, artifact::kManifest));

    return {bow.num_docs(), vocab.size(), static_cast<int>(bow.dropped_ids.size())};
}

EmbedOutcome run_embed(const RunConfig& config) {
    StageLock lock(config.output_dir, "embed");
    RunManifest manifest = load_manifest(artifact_path(config, artifact::kManifest));
    require_fresh(manifest, "preprocess",
                  {{"vocab", artifact_path(config, artifact::kVocab)},
                   {"streams", artifact_path(config, artifact::kStreams)}});

    const Vocabulary vocab = load_vocabulary(artifact_path(config, artifact::kVocab));
    EmbedOutcome outcome;
    EmbeddingMatrix emb;
    if (!config.vectors_path.empty()) {
        EmbeddingLoad load = load_embeddings(config.vectors_path, vocab, config.rng_seed);
        emb = std::move(load.embeddings);
        outcome.coverage = load.coverage;
    } else {
        const auto streams = load_index_streams(artifact_path(config, artifact::kStreams),
                                                vocab.size());
        SkipGramConfig sc = config.skipgram;
        sc.rng_seed = config.rng_seed;
        sc.deterministic = config.deterministic;
        emb = train_skipgram(streams, vocab, sc).embeddings;
        outcome.trained = true;
    }
    save_embeddings(emb, vocab, artifact_path(config, artifact::kEmbeddings));
    outcome.terms = emb.rho.rows;
    outcome.dim = emb.rho.cols;

    StageRecord record;
    record.config = run_config_json(config);
    record.rng_seed = config.rng_seed;
    record.inputs["vocab"] = digest_of(artifact_path(config, artifact::kVocab));
    record.inputs["streams"] = digest_of(artifact_path(config, artifact::kStreams));
    if (!config.vectors_path.empty()) record.inputs["vectors"] = digest_of(config.vectors_path);
    record.outputs["embeddings"] = digest_of(artifact_path(config, artifact::kEmbeddings));
    record_stage(manifest, "embed", std::move(record),
                 artifact_path(config, artifact::kManifest));
    return outcome;
}

TrainOutcome run_train(const RunConfig& config, bool unguided,
                       const std::function<void(const EpochStats&)>& progress) {
    StageLock lock(config.output_dir, "train");
    RunManifest manifest = load_manifest(artifact_path(config, artifact::kManifest));
    require_fresh(manifest, "preprocess",
                  {{"vocab", artifact_path(config, artifact::kVocab)},
                   {"bow", artifact_path(config, artifact::kBow)}});
    require_fresh(manifest, "embed",
                  {{"embeddings", artifact_path(config, artifact::kEmbeddings)}});

    const Vocabulary vocab = load_vocabulary(artifact_path(config, artifact::kVocab));
    const BowCorpus bow = load_bow(artifact_path(config, artifact::kBow));
    EmbeddingLoad load = load_embeddings(artifact_path(config, artifact::kEmbeddings), vocab,
                                         config.rng_seed);
    if (!load.missing_terms.empty())
        throw VocabMismatch("embeddings file does not cover the vocabulary; rerun embed (" +
                            std::to_string(load.missing_terms.size()) + " terms missing)");
    const EmbeddingMatrix& emb = load.embeddings;

    TrainConfig tc = config.train;
    tc.rng_seed = config.rng_seed;
    if (unguided) {
        tc.lambda1 = 0.0;
        tc.lambda2 = 0.0;
    }

    const bool guided = !config.seeds_path.empty() && !unguided;
    SeedSpec seeds;
    PriorMatrix prior;
    GuidedSet guided_terms;
    Mat alpha_init;
    if (guided) {
        seeds = load_seed_spec(config.seeds_path);
        if (seeds.num_topics() != tc.k)
            throw InputError("train.k is " + std::to_string(tc.k) + " but the seed file has " +
                             std::to_string(seeds.num_topics()) + " topics");
        validate_seeds(seeds, vocab);
        prior = build_prior(seeds, vocab, emb, tc.thr);
        guided_terms = guided_set(prior);
        save_prior_tsv(prior, seeds, vocab, artifact_path(config, artifact::kPrior));
        if (tc.alpha_warm_start) {
            alpha_init = Mat(tc.k, emb.dim());
            for (int k = 0; k < tc.k; ++k) {
                const auto sv = semantic_vector(seeds.topics[static_cast<size_t>(k)], vocab, emb);
                for (int j = 0; j < emb.dim(); ++j) alpha_init.at(k, j) = sv[static_cast<size_t>(j)];
            }
        }
    } else if (tc.alpha_warm_start) {
        throw InputError("alpha_warm_start needs a seed file");
    }

    TrainResult result;
    try {
        result = train(bow, emb, guided ? &prior : nullptr, guided ? &guided_terms : nullptr,
                       tc, alpha_init.empty() ? nullptr : &alpha_init, progress);
    } catch (const NonFiniteLoss& e) {
        const json diag{{"epoch", e.epoch}, {"batch", e.batch}, {"message", e.what()}};
        write_text_atomic(artifact_path(config, artifact::kDiagnostics), diag.dump(2) + "\n");
        throw NonFiniteLoss(e.epoch, e.batch,
                            std::string(e.what()) + "; diagnostics written to " +
                                artifact_path(config, artifact::kDiagnostics));
    }

    std::string log;
    for (const auto& s : result.history) {
        const json line{{"epoch", s.epoch + 1},
                        {"neg_elbo", s.neg_elbo},
                        {"l_mu", s.l_mu},
                        {"l_alpha", s.l_alpha},
                        {"total", s.total}};
        log += line.dump() + "\n";
    }
    write_text_atomic(artifact_path(config, artifact::kTrainLog), log);
    save_checkpoint(artifact_path(config, artifact::kCheckpoint), result.params, seeds, tc,
                    result.history);

    StageRecord record;
    record.config = run_config_json(config);
    record.rng_seed = config.rng_seed;
    record.inputs["vocab"] = digest_of(artifact_path(config, artifact::kVocab));
    record.inputs["bow"] = digest_of(artifact_path(config, artifact::kBow));
    record.inputs["embeddings"] = digest_of(artifact_path(config, artifact::kEmbeddings));
    if (guided) record.inputs["seeds"] = digest_of(config.seeds_path);
    record.outputs["checkpoint"] = digest_of(artifact_path(config, artifact::kCheckpoint));
    record.outputs["train_log"] = digest_of(artifact_path(config, artifact::kTrainLog));
    if (guided) record.outputs["prior"] = digest_of(artifact_path(config, artifact::kPrior));
    record_stage(manifest, "train", std::move(record),
                 artifact_path(config, artifact::kManifest));

    return {result.history, result.early_stopped, guided ? guided_terms.size() : 0};
}

TopicsOutcome run_topics(const RunConfig& config, int m) {
    StageLock lock(config.output_dir, "topics");
    RunManifest manifest = load_manifest(artifact_path(config, artifact::kManifest));
    LoadedModel model = load_model(config, manifest);

    const Mat beta = compute_beta(model.checkpoint.params.rho,
                                  model.checkpoint.params.alpha->value);
    const auto ids = top_words(beta, std::min(m, beta.cols));

    TopicsOutcome outcome;
    std::string table;
    for (size_t k = 0; k < ids.size(); ++k) {
        outcome.topic_ids.push_back(static_cast<int>(k));
        std::vector<std::string> terms;
        std::string row = "topic " + std::to_string(k);
        const auto label = config.topic_labels.find(static_cast<int>(k));
        if (label != config.topic_labels.end()) row += " (" + label->second + ")";
        row += ":";
        for (const int v : ids[k]) {
            terms.push_back(model.vocab.terms[static_cast<size_t>(v)]);
            row += " " + terms.back();
        }
        table += row + "\n";
        outcome.terms.push_back(std::move(terms));
    }
    outcome.text_table = table;

    write_text_atomic(artifact_path(config, artifact::kTopicsJson),
                      topics_json(config, ids, model.vocab).dump(2) + "\n");
    write_text_atomic(artifact_path(config, artifact::kTopicsText), table);

    StageRecord record;
    record.config = run_config_json(config);
    record.rng_seed = config.rng_seed;
    record.inputs["checkpoint"] = digest_of(artifact_path(config, artifact::kCheckpoint));
    record.outputs["topics_json"] = digest_of(artifact_path(config, artifact::kTopicsJson));
    record.outputs["topics_text"] = digest_of(artifact_path(config, artifact::kTopicsText));
    record_stage(manifest, "topics", std::move(record),
                 artifact_path(config, artifact::kManifest));
    return outcome;
}

EvalOutcome run_eval(const RunConfig& config) {
    StageLock lock(config.output_dir, "eval");
    RunManifest manifest = load_manifest(artifact_path(config, artifact::kManifest));
    require_fresh(manifest, "preprocess",
                  {{"bow", artifact_path(config, artifact::kBow)}});
    LoadedModel model = load_model(config, manifest);
    const BowCorpus bow = load_bow(artifact_path(config, artifact::kBow));

    const Mat beta = compute_beta(model.checkpoint.params.rho,
                                  model.checkpoint.params.alpha->value);
    EvalOutcome outcome;
    outcome.metrics = evaluate_topics(beta, bow, config.coherence_m, config.diversity_n);

    json mj{{"coherence", outcome.metrics.coherence},
            {"diversity", outcome.metrics.diversity},
            {"quality", outcome.metrics.quality},
            {"per_topic", outcome.metrics.per_topic}};
    write_text_atomic(artifact_path(config, artifact::kMetrics), mj.dump(2) + "\n");

    const auto gold = gold_labels(bow);
    if (any_labeled(gold)) {
        const Mat theta = infer_theta_all(model.checkpoint.params, bow);
        std::unordered_map<int, std::string> map;
        if (config.topic_labels.empty()) {
            map = suggest_topic_label_map(theta, gold);
            outcome.label_map_suggested = true;
        } else {
            map.insert(config.topic_labels.begin(), config.topic_labels.end());
        }
        outcome.classification = classification_eval(theta, gold, map);
        outcome.label_map.insert(map.begin(), map.end());

        json labels = json::object();
        for (const auto& [k, v] : outcome.label_map) labels[std::to_string(k)] = v;
        const auto& r = *outcome.classification;
        const json cj{{"label_map", labels},
                      {"label_map_suggested", outcome.label_map_suggested},
                      {"precision_macro", r.precision_macro},
                      {"recall_macro", r.recall_macro},
                      {"f1_macro", r.f1_macro},
                      {"f1_micro", r.f1_micro},
                      {"evaluated", r.evaluated},
                      {"unlabeled", r.unlabeled}};
        write_text_atomic(artifact_path(config, artifact::kClassification), cj.dump(2) + "\n");
    }

    StageRecord record;
    record.config = run_config_json(config);
    record.rng_seed = config.rng_seed;
    record.inputs["checkpoint"] = digest_of(artifact_path(config, artifact::kCheckpoint));
    record.inputs["bow"] = digest_of(artifact_path(config, artifact::kBow));
    record.outputs["metrics"] = digest_of(artifact_path(config, artifact::kMetrics));
    if (outcome.classification)
        record.outputs["classification"] =
            digest_of(artifact_path(config, artifact::kClassification));
    record_stage(manifest, "eval", std::move(record),
                 artifact_path(config, artifact::kManifest));
    return outcome;
}

InferOutcome run_infer(const RunConfig& config, const std::string& input_path) {
    RunManifest manifest = load_manifest(artifact_path(config, artifact::kManifest));
    LoadedModel model = load_model(config, manifest);

    const auto raw = load_jsonl(input_path);
    const PreprocessConfig pc = effective_preprocess(config);
    InferOutcome outcome;
    outcome.theta = Mat(static_cast<int>(raw.size()), model.checkpoint.params.num_topics());
    for (size_t d = 0; d < raw.size(); ++d) {
        SparseDoc doc;
        doc.id = raw[d].id;
        std::map<int, int> counts;
        for (const auto& tok : tokenize_and_stem(raw[d].text, pc)) {
            const int v = model.vocab.index_of(tok);
            if (v >= 0) ++counts[v];
        }
        if (counts.empty()) throw ZeroLengthDocument(raw[d].id);
        for (const auto& [v, c] : counts) {
            doc.counts.push_back({v, c});
            doc.total += c;
        }
        const auto theta = infer_theta(model.checkpoint.params, doc);
        for (size_t k = 0; k < theta.size(); ++k)
            outcome.theta.at(static_cast<int>(d), static_cast<int>(k)) = theta[k];
        outcome.ids.push_back(raw[d].id);
    }
    return outcome;
}

IntrusionOutcome run_intrusion(const RunConfig& config, int items_per_topic) {
    StageLock lock(config.output_dir, "intrusion");
    RunManifest manifest = load_manifest(artifact_path(config, artifact::kManifest));
    LoadedModel model = load_model(config, manifest);

    const Mat beta = compute_beta(model.checkpoint.params.rho,
                                  model.checkpoint.params.alpha->value);
    Rng rng = Rng(config.rng_seed).fork(20);
    const IntrusionSet set = make_intrusion_items(beta, items_per_topic, rng);
    save_intrusion_items(set, model.vocab, artifact_path(config, artifact::kIntrusionItems),
                         artifact_path(config, artifact::kIntrusionKeys));

    StageRecord record;
    record.config = run_config_json(config);
    record.rng_seed = config.rng_seed;
    record.inputs["checkpoint"] = digest_of(artifact_path(config, artifact::kCheckpoint));
    record.outputs["items"] = digest_of(artifact_path(config, artifact::kIntrusionItems));
    record.outputs["keys"] = digest_of(artifact_path(config, artifact::kIntrusionKeys));
    record_stage(manifest, "intrusion", std::move(record),
                 artifact_path(config, artifact::kManifest));
    return {static_cast<int>(set.items.size()), set.infeasible_topics};
}

double run_intrusion_score(const RunConfig& config, const std::string& responses_path) {
    RunManifest manifest = load_manifest(artifact_path(config, artifact::kManifest));
    require_fresh(manifest, "intrusion",
                  {{"keys", artifact_path(config, artifact::kIntrusionKeys)}});
    return score_intrusion_files(artifact_path(config, artifact::kIntrusionKeys),
                                 responses_path);
}

std::vector<SweepRow> run_sweep(const RunConfig& config,
                                const std::vector<double>& lambda2_grid) {
    if (lambda2_grid.empty()) throw InputError("sweep needs at least one lambda2 value");
    if (config.seeds_path.empty()) throw InputError("sweep needs a seed file (guided runs)");
    StageLock lock(config.output_dir, "sweep");
    RunManifest manifest = load_manifest(artifact_path(config, artifact::kManifest));
    require_fresh(manifest, "preprocess",
                  {{"vocab", artifact_path(config, artifact::kVocab)},
                   {"bow", artifact_path(config, artifact::kBow)}});
    require_fresh(manifest, "embed",
                  {{"embeddings", artifact_path(config, artifact::kEmbeddings)}});

    const Vocabulary vocab = load_vocabulary(artifact_path(config, artifact::kVocab));
    const BowCorpus bow = load_bow(artifact_path(config, artifact::kBow));
    EmbeddingLoad load = load_embeddings(artifact_path(config, artifact::kEmbeddings), vocab,
                                         config.rng_seed);
    if (!load.missing_terms.empty())
        throw VocabMismatch("embeddings file does not cover the vocabulary; rerun embed");
    const auto gold = gold_labels(bow);
    if (!any_labeled(gold)) throw InputError("sweep needs labeled documents for F1");

    SeedSpec seeds = load_seed_spec(config.seeds_path);
    if (seeds.num_topics() != config.train.k)
        throw InputError("train.k does not match the seed topic count");
    validate_seeds(seeds, vocab);

    std::vector<SweepRow> rows;
    for (const double lambda2 : lambda2_grid) {
        TrainConfig tc = config.train;
        tc.rng_seed = config.rng_seed;
        tc.lambda2 = lambda2;
        const PriorMatrix prior = build_prior(seeds, vocab, load.embeddings, tc.thr);
        const GuidedSet guided = guided_set(prior);
        const TrainResult result = train(bow, load.embeddings, &prior, &guided, tc);

        const Mat beta = compute_beta(result.params.rho, result.params.alpha->value);
        const MetricsReport metrics =
            evaluate_topics(beta, bow, config.coherence_m, config.diversity_n);
        const Mat theta = infer_theta_all(result.params, bow);
        const auto map = suggest_topic_label_map(theta, gold);
        const ClassificationReport report = classification_eval(theta, gold, map);

        SweepRow row;
        row.lambda1 = tc.lambda1;
        row.lambda2 = lambda2;
        row.coherence = metrics.coherence;
        row.diversity = metrics.diversity;
        row.quality = metrics.quality;
        row.f1_micro = report.f1_micro;
        row.f1_macro = report.f1_macro;
        rows.push_back(row);
    }

    std::string csv = "lambda1,lambda2,coherence,diversity,quality,f1_micro,f1_macro\n";
    for (const auto& row : rows) csv += format_row(row) + "\n";
    write_text_atomic(artifact_path(config, artifact::kSweep), csv);

    StageRecord record;
    record.config = run_config_json(config);
    record.rng_seed = config.rng_seed;
    record.inputs["vocab"] = digest_of(artifact_path(config, artifact::kVocab));
    record.inputs["bow"] = digest_of(artifact_path(config, artifact::kBow));
    record.inputs["embeddings"] = digest_of(artifact_path(config, artifact::kEmbeddings));
    record.inputs["seeds"] = digest_of(config.seeds_path);
    record.outputs["sweep"] = digest_of(artifact_path(config, artifact::kSweep));
    record_stage(manifest, "sweep", std::move(record),
                 artifact_path(config, artifact::kManifest));
    return rows;
}

}  // namespace keyetm
