#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "keyetm/errors.hpp"
#include "keyetm/fixtures.hpp"

using namespace keyetm;

int main(int argc, char** argv) {
    CLI::App app{"synthetic corpus generators for pipeline runs and tests"};
    app.require_subcommand(1);

    std::string out_dir;
    uint64_t seed = 1;
    int docs = 0;

    PlantedConfig pc;
    std::vector<double> mix;
    auto* planted = app.add_subcommand(
        "planted", "corpus sampled from known topic mixtures over vocabulary blocks");
    planted->add_option("--out", out_dir, "output directory")->required();
    planted->add_option("--docs", pc.num_docs, "document count");
    planted->add_option("--vocab", pc.vocab_size, "vocabulary size");
    planted->add_option("--k", pc.k, "group count");
    planted->add_option("--doc-length", pc.doc_length, "tokens per document");
    planted->add_option("--mix", mix, "group proportions, must sum to 1")->delimiter(',');
    planted->add_option("--seed", seed, "rng seed");

    auto* grouped = app.add_subcommand(
        "grouped", "newsgroups-style text corpus with three themes and seed lists");
    grouped->add_option("--out", out_dir, "output directory")->required();
    grouped->add_option("--docs", docs, "document count")->default_val(2000);
    grouped->add_option("--seed", seed, "rng seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        std::filesystem::create_directories(out_dir);
        const auto path = [&](const char* name) {
            return (std::filesystem::path(out_dir) / name).string();
        };
        if (planted->parsed()) {
            pc.rng_seed = seed;
            pc.mix = mix;
            const PlantedCorpus p = make_planted_corpus(pc);
            save_raw_jsonl(render_text(p), path("corpus.jsonl"));
            save_seed_spec(p.seeds, path("seeds.json"));
            save_embeddings(p.embeddings, p.vocab, path("vectors.txt"));
            std::printf("planted corpus: %d docs, %d terms, %d groups\n", p.bow.num_docs(),
                        p.vocab.size(), pc.k);
        } else {
            const TextFixture fx = make_grouped_text_corpus(docs, seed);
            save_raw_jsonl(fx.docs, path("corpus.jsonl"));
            save_seed_spec(fx.seeds, path("seeds.json"));
            std::printf("grouped corpus: %zu docs, %d themes\n", fx.docs.size(),
                        fx.seeds.num_topics());
        }
        std::printf("written to %s\n", out_dir.c_str());
        return 0;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
