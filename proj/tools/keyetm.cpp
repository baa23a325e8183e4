#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "keyetm/errors.hpp"
#include "keyetm/manifest.hpp"
#include "keyetm/pipeline.hpp"

namespace {

using namespace keyetm;

constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitStale = 4;
constexpr int kExitMismatch = 5;

struct Overrides {
    std::optional<double> lambda1, lambda2, thr;
    std::optional<int> epochs;
    std::optional<uint64_t> seed;
    std::optional<bool> deterministic;
    std::optional<std::string> output_dir;
};

void add_override_flags(CLI::App* cmd, Overrides& ov) {
    cmd->add_option("--lambda1", ov.lambda1, "override the encoder-side regularizer weight");
    cmd->add_option("--lambda2", ov.lambda2, "override the topic-word regularizer weight");
    cmd->add_option("--thr", ov.thr, "override the prior cosine threshold");
    cmd->add_option("--epochs", ov.epochs, "override the training epoch count");
    cmd->add_option("--seed", ov.seed, "override the run rng seed");
    cmd->add_flag("--deterministic,!--no-deterministic", ov.deterministic,
                  "force deterministic single-threaded stages");
    cmd->add_option("--output-dir", ov.output_dir, "override the output directory");
}

RunConfig load_config(const std::string& path, const Overrides& ov) {
    RunConfig config = load_run_config(path);
    if (ov.lambda1) config.train.lambda1 = *ov.lambda1;
    if (ov.lambda2) config.train.lambda2 = *ov.lambda2;
    if (ov.thr) config.train.thr = *ov.thr;
    if (ov.epochs) config.train.epochs = *ov.epochs;
    if (ov.seed) {
        config.rng_seed = *ov.seed;
        config.skipgram.rng_seed = *ov.seed;
        config.train.rng_seed = *ov.seed;
    }
    if (ov.deterministic) {
        config.deterministic = *ov.deterministic;
        config.skipgram.deterministic = *ov.deterministic;
    }
    if (ov.output_dir) config.output_dir = *ov.output_dir;
    return config;
}

std::string slurp_stdin_to_temp() {
    const std::string path =
        (std::filesystem::temp_directory_path() /
         ("keyetm-stdin-" + std::to_string(::getpid()) + ".jsonl"))
            .string();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InputError("cannot buffer standard input to " + path);
    out << std::cin.rdbuf();
    return path;
}

void print_metrics(const EvalOutcome& outcome) {
    std::printf("coherence:  %.6f\n", outcome.metrics.coherence);
    std::printf("diversity:  %.6f\n", outcome.metrics.diversity);
    std::printf("quality:    %.6f\n", outcome.metrics.quality);
    for (size_t k = 0; k < outcome.metrics.per_topic.size(); ++k)
        std::printf("topic %zu coherence: %.6f\n", k, outcome.metrics.per_topic[k]);
    if (outcome.classification) {
        const auto& r = *outcome.classification;
        std::printf("label map%s:", outcome.label_map_suggested ? " (suggested)" : "");
        for (const auto& [topic, label] : outcome.label_map)
            std::printf(" %d->%s", topic, label.c_str());
        std::printf("\n");
        std::printf("precision_macro: %.6f\n", r.precision_macro);
        std::printf("recall_macro:    %.6f\n", r.recall_macro);
        std::printf("f1_macro:        %.6f\n", r.f1_macro);
        std::printf("f1_micro:        %.6f\n", r.f1_micro);
        std::printf("evaluated: %lld, unlabeled: %lld\n", r.evaluated, r.unlabeled);
    } else {
        std::printf("classification skipped: corpus has no gold labels\n");
    }
}

int dispatch(const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const StaleStageError& e) {
        std::fprintf(stderr, "error (stale stage): %s\n", e.what());
        return kExitStale;
    } catch (const MismatchError& e) {
        std::fprintf(stderr, "error (artifact mismatch): %s\n", e.what());
        return kExitMismatch;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "error (numeric): %s\n", e.what());
        return kExitNumeric;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInput;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInput;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"keyword-guided embedded topic modeling pipeline"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string("keyetm ") + kToolVersion);

    std::string config_path;
    Overrides ov;
    bool unguided = false;
    int topics_m = 10;
    std::string infer_input = "-";
    std::string infer_out;
    int intrusion_items = 4;
    std::string score_path;
    std::vector<double> lambda2_grid{5.0, 10.0, 20.0};

    auto* preprocess = app.add_subcommand("preprocess", "tokenize, stem, build vocab and bow");
    auto* embed = app.add_subcommand("embed", "fit skip-gram vectors or load external ones");
    auto* train = app.add_subcommand("train", "train the topic model and write a checkpoint");
    auto* topics = app.add_subcommand("topics", "print each topic's top terms");
    auto* eval = app.add_subcommand("eval", "compute coherence, diversity, quality, F1");
    auto* infer = app.add_subcommand("infer", "emit topic mixtures for new documents");
    auto* intrusion = app.add_subcommand("intrusion", "write or score word-intrusion items");
    auto* sweep = app.add_subcommand("sweep", "train across a lambda2 grid, emit CSV");

    for (auto* cmd : {preprocess, embed, train, topics, eval, infer, intrusion, sweep}) {
        cmd->add_option("--config", config_path, "run config JSON")->required();
        add_override_flags(cmd, ov);
    }
    train->add_flag("--unguided", unguided, "ignore seeds and train plain ETM (lambda = 0)");
    topics->add_option("--m", topics_m, "terms per topic");
    infer->add_option("--input", infer_input, "JSONL documents ('-' = standard input)");
    infer->add_option("--out", infer_out, "write theta rows here instead of stdout");
    intrusion->add_option("--items", intrusion_items, "items per topic");
    intrusion->add_option("--score", score_path, "score a responses JSONL against the keys");
    sweep->add_option("--lambda2-grid", lambda2_grid, "lambda2 values to sweep")
        ->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInput;
    }

    return dispatch([&] {
        const RunConfig config = load_config(config_path, ov);

        if (preprocess->parsed()) {
            const PreprocessOutcome r = run_preprocess(config);
            std::printf("documents: %d\nvocabulary: %d\ndropped: %d\n", r.docs, r.vocab,
                        r.dropped);
        } else if (embed->parsed()) {
            const EmbedOutcome r = run_embed(config);
            if (r.trained)
                std::printf("trained skip-gram vectors: %d terms, %d dims\n", r.terms, r.dim);
            else
                std::printf("loaded vectors: %d terms, %d dims, coverage %.4f\n", r.terms,
                            r.dim, r.coverage);
        } else if (train->parsed()) {
            const TrainOutcome r = run_train(config, unguided, [](const EpochStats& s) {
                const int shown = s.epoch + 1;
                if (shown == 1 || shown % 10 == 0)
                    std::fprintf(stderr, "epoch %d: total %.6f (neg_elbo %.6f)\n", shown,
                                 s.total, s.neg_elbo);
            });
            std::printf("epochs run: %zu%s\n", r.history.size(),
                        r.early_stopped ? " (early stop)" : "");
            std::printf("guided terms: %d\n", r.guided_terms);
            std::printf("checkpoint: %s\n", artifact_path(config, artifact::kCheckpoint).c_str());
        } else if (topics->parsed()) {
            const TopicsOutcome r = run_topics(config, topics_m);
            std::fputs(r.text_table.c_str(), stdout);
            std::printf("written: %s\n", artifact_path(config, artifact::kTopicsJson).c_str());
        } else if (eval->parsed()) {
            const EvalOutcome r = run_eval(config);
            print_metrics(r);
            std::printf("written: %s\n", artifact_path(config, artifact::kMetrics).c_str());
        } else if (infer->parsed()) {
            std::string input = infer_input;
            std::string temp;
            if (input == "-") {
                temp = slurp_stdin_to_temp();
                input = temp;
            }
            InferOutcome r;
            try {
                r = run_infer(config, input);
            } catch (...) {
                if (!temp.empty()) std::filesystem::remove(temp);
                throw;
            }
            if (!temp.empty()) std::filesystem::remove(temp);
            std::ostringstream rows;
            char buf[64];
            for (size_t d = 0; d < r.ids.size(); ++d) {
                rows << r.ids[d];
                for (int k = 0; k < r.theta.cols; ++k) {
                    std::snprintf(buf, sizeof(buf), "%.12g",
                                  r.theta.at(static_cast<int>(d), k));
                    rows << '\t' << buf;
                }
                rows << '\n';
            }
            if (infer_out.empty()) {
                std::fputs(rows.str().c_str(), stdout);
            } else {
                std::ofstream out(infer_out, std::ios::trunc);
                if (!out) throw InputError("cannot write " + infer_out);
                out << rows.str();
            }
        } else if (intrusion->parsed()) {
            if (!score_path.empty()) {
                const double score = run_intrusion_score(config, score_path);
                std::printf("intrusion score: %.6f\n", score);
            } else {
                const IntrusionOutcome r = run_intrusion(config, intrusion_items);
                std::printf("items: %d\n", r.items);
                if (!r.infeasible_topics.empty()) {
                    std::printf("infeasible topics:");
                    for (const int t : r.infeasible_topics) std::printf(" %d", t);
                    std::printf("\n");
                }
                std::printf("items file: %s\nkeys file: %s\n",
                            artifact_path(config, artifact::kIntrusionItems).c_str(),
                            artifact_path(config, artifact::kIntrusionKeys).c_str());
            }
        } else if (sweep->parsed()) {
            const auto rows = run_sweep(config, lambda2_grid);
            std::printf("lambda1,lambda2,coherence,diversity,quality,f1_micro,f1_macro\n");
            for (const auto& r : rows)
                std::printf("%g,%g,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.lambda1, r.lambda2,
                            r.coherence, r.diversity, r.quality, r.f1_micro, r.f1_macro);
            std::printf("written: %s\n", artifact_path(config, artifact::kSweep).c_str());
        }
    });
}
