#include "keyetm/prior.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <unordered_set>

#include "json.hpp"
#include "keyetm/digest.hpp"
#include "keyetm/errors.hpp"
#include "keyetm/porter.hpp"

namespace keyetm {
namespace {

// cosine that treats a directionless vector as similar to nothing
double sim_or_zero(std::span<const double> a, std::span<const double> b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

void require_matching_hash(const Vocabulary& vocab, const EmbeddingMatrix& emb) {
    if (emb.rho.rows != vocab.size())
        throw VocabMismatch("embedding rows " + std::to_string(emb.rho.rows) +
                            " do not match vocabulary size " + std::to_string(vocab.size()));
    if (emb.vocab_hash != vocab_digest(vocab.terms))
        throw VocabMismatch("embedding matrix was trained on a different vocabulary");
}

}  // namespace

SeedSpec load_seed_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open seed file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("topics") || !j["topics"].is_array())
        throw InputError(path + ": expected {\"topics\": [...]}");
    SeedSpec spec;
    for (const auto& t : j["topics"]) {
        if (!t.is_object() || !t.contains("name") || !t["name"].is_string() ||
            !t.contains("seeds") || !t["seeds"].is_array())
            throw InputError(path + ": each topic needs a name and a seed list");
        SeedTopic topic;
        topic.name = t["name"].get<std::string>();
        std::unordered_set<std::string> seen;
        for (const auto& s : t["seeds"]) {
            if (!s.is_string()) throw InputError(path + ": seeds must be strings");
            const auto seed = s.get<std::string>();
            if (seed.empty()) throw InputError(path + ": empty seed in topic '" + topic.name + "'");
            if (!seen.insert(seed).second)
                throw InputError(path + ": duplicate seed '" + seed + "' in topic '" +
                                 topic.name + "'");
            topic.seeds.push_back(seed);
        }
        if (topic.seeds.empty())
            throw InputError(path + ": topic '" + topic.name + "' has no seeds");
        spec.topics.push_back(std::move(topic));
    }
    if (spec.num_topics() < 2)
        throw InputError(path + ": need at least 2 topics, got " +
                         std::to_string(spec.num_topics()));
    return spec;
}

void validate_seeds(const SeedSpec& spec, const Vocabulary& vocab) {
    for (const auto& topic : spec.topics) {
        for (const auto& seed : topic.seeds) {
            const auto stem = porter_stem(seed);
            if (stem == seed || vocab.index_of(seed) >= 0) continue;
            throw InputError("seed '" + seed + "' in topic '" + topic.name +
                             "' is not a stem; did you mean '" + stem + "'?");
        }
    }
}

std::vector<double> semantic_vector(const SeedTopic& topic, const Vocabulary& vocab,
                                    const EmbeddingMatrix& emb) {
    std::vector<double> mean(static_cast<size_t>(emb.dim()), 0.0);
    int found = 0;
    for (const auto& seed : topic.seeds) {
        const int v = vocab.index_of(seed);
        if (v < 0) {
            std::cerr << "warning: seed '" << seed << "' of topic '" << topic.name
                      << "' is not in the vocabulary; skipped\n";
            continue;
        }
        const auto row = emb.vec(v);
        for (size_t c = 0; c < mean.size(); ++c) mean[c] += row[c];
        ++found;
    }
    if (found == 0) throw AllSeedsOutOfVocabulary(topic.name);
    for (auto& x : mean) x /= found;
    return mean;
}

PriorMatrix build_prior(const SeedSpec& spec, const Vocabulary& vocab,
                        const EmbeddingMatrix& emb, double thr) {
    require_matching_hash(vocab, emb);
    const int v_count = vocab.size();
    const int k_count = spec.num_topics();
    PriorMatrix prior;
    prior.thr = thr;
    prior.gamma_prior = Mat(v_count, k_count);
    for (int k = 0; k < k_count; ++k) {
        const auto& topic = spec.topics[static_cast<size_t>(k)];
        const auto omega = semantic_vector(topic, vocab, emb);
        std::unordered_set<int> members;
        for (const auto& seed : topic.seeds) {
            const int idx = vocab.index_of(seed);
            if (idx >= 0) members.insert(idx);
        }
        for (int v = 0; v < v_count; ++v) {
            const bool is_seed = members.count(v) > 0;
            const bool similar = sim_or_zero(emb.vec(v), omega) >= thr;
            prior.gamma_prior.at(v, k) = (is_seed || similar) ? 1.0 : 0.0;
        }
    }
    return prior;
}

GuidedSet guided_set(const PriorMatrix& prior) {
    GuidedSet s;
    for (int v = 0; v < prior.gamma_prior.rows; ++v) {
        for (int k = 0; k < prior.gamma_prior.cols; ++k) {
            if (prior.gamma_prior.at(v, k) != 0.0) {
                s.indices.push_back(v);
                break;
            }
        }
    }
    if (s.indices.empty()) throw EmptyGuidedSet();
    return s;
}

void save_prior_tsv(const PriorMatrix& prior, const SeedSpec& spec, const Vocabulary& vocab,
                    const std::string& path) {
    if (prior.gamma_prior.rows != vocab.size() || prior.gamma_prior.cols != spec.num_topics())
        throw VocabMismatch("prior matrix does not match vocabulary and topics");
    std::ofstream out(path);
    if (!out) throw InputError("cannot write prior export: " + path);
    out << "term\ttopic\tsource\n";
    for (int k = 0; k < prior.gamma_prior.cols; ++k) {
        const auto& topic = spec.topics[static_cast<size_t>(k)];
        std::unordered_set<std::string> seeds(topic.seeds.begin(), topic.seeds.end());
        for (int v = 0; v < prior.gamma_prior.rows; ++v) {
            if (prior.gamma_prior.at(v, k) == 0.0) continue;
            const auto& term = vocab.terms[static_cast<size_t>(v)];
            out << term << '\t' << topic.name << '\t'
                << (seeds.count(term) ? "seed" : "similarity") << '\n';
        }
    }
}

}  // namespace keyetm
