#include "keyetm/fixtures.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <span>
#include <unordered_set>

#include "json.hpp"
#include "keyetm/digest.hpp"
#include "keyetm/errors.hpp"
#include "keyetm/porter.hpp"

namespace keyetm {

namespace {

std::string stem_fixed_point(std::string word) {
    for (int i = 0; i < 8; ++i) {
        std::string next = porter_stem(word);
        if (next == word) return word;
        word = std::move(next);
    }
    return word;
}

// pronounceable unique terms that survive tokenization unchanged
std::vector<std::string> synthetic_terms(int n, Rng& rng) {
    static const char consonants[] = "bcdfgklmnprstvz";
    static const char vowels[] = "aeiou";
    std::unordered_set<std::string> seen;
    std::vector<std::string> out;
    out.reserve(static_cast<size_t>(n));
    while (static_cast<int>(out.size()) < n) {
        std::string w;
        const int syllables = 2 + static_cast<int>(rng.below(2));
        for (int s = 0; s < syllables; ++s) {
            w.push_back(consonants[rng.below(sizeof(consonants) - 1)]);
            w.push_back(vowels[rng.below(sizeof(vowels) - 1)]);
        }
        w = stem_fixed_point(w);
        if (w.size() < 3 || default_stopwords().count(w) || !seen.insert(w).second) continue;
        out.push_back(std::move(w));
    }
    return out;
}

int sample_categorical(std::span<const double> p, Rng& rng) {
    const double u = rng.uniform();
    double cum = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        cum += p[i];
        if (u <= cum) return static_cast<int>(i);
    }
    return static_cast<int>(p.size()) - 1;
}

void check_planted_config(const PlantedConfig& c) {
    if (c.k < 2) throw InputError("planted corpus needs at least 2 groups");
    if (c.vocab_size < c.k * (c.seeds_per_topic + 1))
        throw InputError("vocabulary too small for the requested seed count");
    if (c.num_docs < 1 || c.doc_length < 1) throw InputError("need documents and tokens");
    if (c.embed_dim < c.k)
        throw InputError("embedding dimension must be at least the group count");
    if (c.block_mass <= 0.0 || c.block_mass >= 1.0)
        throw InputError("block mass must lie in (0,1)");
    if (c.own_mass_lo <= 0.5 || c.own_mass_hi > 1.0 || c.own_mass_lo > c.own_mass_hi)
        throw InputError("own-group mass range must lie in (0.5, 1]");
    if (!c.mix.empty()) {
        if (static_cast<int>(c.mix.size()) != c.k)
            throw InputError("mix must list one proportion per group");
        double sum = 0.0;
        for (const double m : c.mix) {
            if (m <= 0.0) throw InputError("mix proportions must be positive");
            sum += m;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw InputError("mix proportions must sum to 1");
    }
}

struct ThemeBank {
    std::string name;
    std::vector<std::string> words;   // stemmed, deduplicated, rank-ordered
    std::vector<std::string> seeds;   // subset of words
    std::vector<double> cum_weights;  // Zipf sampling table
};

void finish_bank(ThemeBank& bank) {
    std::vector<double> w(bank.words.size());
    double sum = 0.0;
    for (size_t r = 0; r < w.size(); ++r) {
        w[r] = 1.0 / static_cast<double>(r + 2);
        sum += w[r];
    }
    bank.cum_weights.resize(w.size());
    double cum = 0.0;
    for (size_t r = 0; r < w.size(); ++r) {
        cum += w[r] / sum;
        bank.cum_weights[r] = cum;
    }
}

const std::string& draw_word(const ThemeBank& bank, Rng& rng) {
    const double u = rng.uniform();
    const auto it = std::lower_bound(bank.cum_weights.begin(), bank.cum_weights.end(), u);
    const size_t r = std::min(static_cast<size_t>(it - bank.cum_weights.begin()),
                              bank.words.size() - 1);
    return bank.words[r];
}

std::vector<ThemeBank> theme_banks() {
    struct RawBank {
        const char* name;
        std::vector<const char*> words;
        int seed_count;
    };
    const std::vector<RawBank> raw = {
        {"rec",
         {"team", "game", "player", "season", "hockey", "baseball", "score", "coach",
          "league", "playoff", "goal", "winning", "pitcher", "batter", "puck", "skate",
          "trade", "draft", "stadium", "inning", "referee", "defense", "offense",
          "tournament", "champion", "roster", "jersey", "rookie", "veteran", "fastball",
          "goalie", "shortstop", "dugout", "penalty", "overtime", "standings"},
         5},
        {"sci",
         {"space", "orbit", "launch", "shuttle", "rocket", "lunar", "satellite", "mission",
          "doctor", "disease", "patient", "medicine", "treatment", "vaccine", "clinical",
          "research", "theory", "physics", "energy", "chemical", "biology", "gene",
          "infection", "telescope", "gravity", "solar", "experiment", "laboratory",
          "astronomy", "molecule", "neuron", "diagnosis", "symptom", "spacecraft",
          "payload", "antibody"},
         5},
        {"talk",
         {"government", "president", "congress", "senate", "lawyer", "policy", "voter",
          "election", "rights", "firearm", "court", "judge", "taxes", "budget", "debate",
          "partisan", "campaign", "legislation", "amendment", "citizen", "freedom",
          "constitution", "federal", "reform", "justice", "liberal", "conservative",
          "crime", "security", "militia", "regulation", "candidate", "democracy",
          "supreme", "ruling", "prosecutor"},
         5},
        {"shared",
         {"making", "people", "years", "working", "things", "world", "number", "point",
          "place", "weeks", "company", "system", "program", "question", "night", "area",
          "money", "story", "fact", "month", "book", "job", "word", "business", "issue",
          "side", "kind", "head", "house", "service", "friend", "father", "power",
          "hour", "line", "member", "city", "community", "name", "idea", "list", "mail",
          "reading", "answer", "problem", "reason", "opinion", "article", "post",
          "computer", "phone", "car", "road", "water", "food", "school", "student",
          "family", "morning", "evening"},
         0},
    };

    std::unordered_set<std::string> taken;
    std::vector<ThemeBank> banks;
    for (const auto& rb : raw) {
        ThemeBank bank;
        bank.name = rb.name;
        for (const char* w : rb.words) {
            const std::string stem = stem_fixed_point(w);
            if (stem.size() < 3 || default_stopwords().count(stem)) continue;
            if (!taken.insert(stem).second) continue;  // first bank keeps a collision
            bank.words.push_back(stem);
        }
        for (int s = 0; s < rb.seed_count && s < static_cast<int>(bank.words.size()); ++s)
            bank.seeds.push_back(bank.words[static_cast<size_t>(s)]);
        finish_bank(bank);
        banks.push_back(std::move(bank));
    }
    return banks;
}

}  // namespace

PlantedCorpus make_planted_corpus(const PlantedConfig& config) {
    check_planted_config(config);
    Rng rng(config.rng_seed);
    Rng term_rng = rng.fork(1);
    Rng embed_rng = rng.fork(2);
    Rng doc_rng = rng.fork(3);

    const int k = config.k;
    const int v_total = config.vocab_size;
    const int block = v_total / k;

    PlantedCorpus out;
    out.vocab.terms = synthetic_terms(v_total, term_rng);
    for (int v = 0; v < v_total; ++v) out.vocab.term_to_index[out.vocab.terms[static_cast<size_t>(v)]] = v;
    out.vocab.doc_freq.assign(static_cast<size_t>(v_total), 0);

    out.beta_true = Mat(k, v_total);
    for (int g = 0; g < k; ++g) {
        const int lo = g * block;
        const int hi = g == k - 1 ? v_total : lo + block;
        double zipf_sum = 0.0;
        for (int v = lo; v < hi; ++v) zipf_sum += 1.0 / static_cast<double>(v - lo + 1);
        const double off = (1.0 - config.block_mass) / static_cast<double>(v_total - (hi - lo));
        for (int v = 0; v < v_total; ++v) out.beta_true.at(g, v) = off;
        for (int v = lo; v < hi; ++v)
            out.beta_true.at(g, v) =
                config.block_mass * (1.0 / static_cast<double>(v - lo + 1)) / zipf_sum;
    }

    for (int g = 0; g < k; ++g) {
        SeedTopic topic;
        topic.name = "g" + std::to_string(g);
        for (int s = 0; s < config.seeds_per_topic; ++s)
            topic.seeds.push_back(out.vocab.terms[static_cast<size_t>(g * block + s)]);
        out.seeds.topics.push_back(std::move(topic));
        out.label_map[g] = "g" + std::to_string(g);
    }

    // orthonormal group centers keep cross-block similarity near zero
    const int dim = config.embed_dim;
    Mat centers(k, dim);
    for (int g = 0; g < k; ++g) {
        for (int j = 0; j < dim; ++j) centers.at(g, j) = embed_rng.normal();
        for (int prev = 0; prev < g; ++prev) {
            double dot = 0.0;
            for (int j = 0; j < dim; ++j) dot += centers.at(g, j) * centers.at(prev, j);
            for (int j = 0; j < dim; ++j) centers.at(g, j) -= dot * centers.at(prev, j);
        }
        double norm = 0.0;
        for (int j = 0; j < dim; ++j) norm += centers.at(g, j) * centers.at(g, j);
        norm = std::sqrt(norm);
        for (int j = 0; j < dim; ++j) centers.at(g, j) /= norm;
    }
    out.embeddings.rho = Mat(v_total, dim);
    const double noise = 0.25 / std::sqrt(static_cast<double>(dim));
    for (int v = 0; v < v_total; ++v) {
        const int g = std::min(v / block, k - 1);
        for (int j = 0; j < dim; ++j)
            out.embeddings.rho.at(v, j) = centers.at(g, j) + noise * embed_rng.normal();
    }
    out.embeddings.vocab_hash = vocab_digest(out.vocab.terms);

    std::vector<double> mix = config.mix;
    if (mix.empty()) mix.assign(static_cast<size_t>(k), 1.0 / static_cast<double>(k));

    out.theta_true = Mat(config.num_docs, k);
    out.bow.vocab_size = v_total;
    for (int d = 0; d < config.num_docs; ++d) {
        const int group = sample_categorical(mix, doc_rng);
        const double own = doc_rng.uniform(config.own_mass_lo, config.own_mass_hi);
        double rest = 0.0;
        for (int g = 0; g < k; ++g) {
            if (g == group) continue;
            out.theta_true.at(d, g) = doc_rng.uniform(0.05, 1.0);
            rest += out.theta_true.at(d, g);
        }
        for (int g = 0; g < k; ++g)
            out.theta_true.at(d, g) =
                g == group ? own : out.theta_true.at(d, g) / rest * (1.0 - own);

        std::vector<int> tokens;
        tokens.reserve(static_cast<size_t>(config.doc_length));
        std::map<int, int> counts;
        for (int t = 0; t < config.doc_length; ++t) {
            const int z = sample_categorical(out.theta_true.row(d), doc_rng);
            const int w = sample_categorical(out.beta_true.row(z), doc_rng);
            tokens.push_back(w);
            ++counts[w];
        }
        SparseDoc doc;
        doc.id = "p" + std::to_string(d);
        doc.label = "g" + std::to_string(group);
        doc.total = config.doc_length;
        for (const auto& [v, c] : counts) {
            doc.counts.push_back({v, c});
            ++out.vocab.doc_freq[static_cast<size_t>(v)];
        }
        out.labels.push_back(doc.label);
        out.bow.docs.push_back(std::move(doc));
        out.streams.push_back(std::move(tokens));
    }
    return out;
}

std::vector<RawDocument> render_text(const PlantedCorpus& planted) {
    std::vector<RawDocument> docs;
    docs.reserve(planted.streams.size());
    for (size_t d = 0; d < planted.streams.size(); ++d) {
        RawDocument doc;
        doc.id = planted.bow.docs[d].id;
        doc.label = planted.bow.docs[d].label;
        for (const int v : planted.streams[d]) {
            if (!doc.text.empty()) doc.text.push_back(' ');
            doc.text += planted.vocab.terms[static_cast<size_t>(v)];
        }
        docs.push_back(std::move(doc));
    }
    return docs;
}

TextFixture make_grouped_text_corpus(int num_docs, uint64_t rng_seed) {
    if (num_docs < 1) throw InputError("need at least one document");
    auto banks = theme_banks();
    const int themes = static_cast<int>(banks.size()) - 1;
    const ThemeBank& shared = banks.back();
    static const char* fillers[] = {"the", "and", "of", "to", "in", "that", "was"};

    Rng rng(rng_seed);
    TextFixture out;
    for (int t = 0; t < themes; ++t) {
        SeedTopic topic;
        topic.name = banks[static_cast<size_t>(t)].name;
        topic.seeds = banks[static_cast<size_t>(t)].seeds;
        out.seeds.topics.push_back(std::move(topic));
    }

    for (int d = 0; d < num_docs; ++d) {
        const int group = static_cast<int>(rng.below(static_cast<uint64_t>(themes)));
        const ThemeBank& own = banks[static_cast<size_t>(group)];
        const int length = 40 + static_cast<int>(rng.below(31));
        RawDocument doc;
        doc.id = "doc-" + std::to_string(d);
        if (d % 40 != 39) doc.label = own.name;
        std::string text;
        for (int t = 0; t < length; ++t) {
            if (!text.empty()) text.push_back(' ');
            if (t % 7 == 3) {
                text += fillers[rng.below(std::size(fillers))];
                text.push_back(' ');
            }
            const double u = rng.uniform();
            if (u < 0.6) {
                text += draw_word(own, rng);
            } else if (u < 0.92) {
                text += draw_word(shared, rng);
            } else {
                const int other = (group + 1 + static_cast<int>(rng.below(
                                                  static_cast<uint64_t>(themes - 1)))) %
                                  themes;
                text += draw_word(banks[static_cast<size_t>(other)], rng);
            }
        }
        text[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
        doc.text = std::move(text);
        out.docs.push_back(std::move(doc));
    }
    return out;
}

void save_raw_jsonl(const std::vector<RawDocument>& docs, const std::string& path) {
    std::ofstream outf(path, std::ios::trunc);
    if (!outf) throw InputError("cannot write corpus file: " + path);
    for (const auto& doc : docs) {
        nlohmann::json j{{"id", doc.id}, {"text", doc.text}};
        if (!doc.label.empty()) j["label"] = doc.label;
        outf << j.dump() << "\n";
    }
    if (!outf) throw InputError("failed writing corpus file: " + path);
}

void save_seed_spec(const SeedSpec& spec, const std::string& path) {
    nlohmann::json topics = nlohmann::json::array();
    for (const auto& t : spec.topics)
        topics.push_back({{"name", t.name}, {"seeds", t.seeds}});
    std::ofstream outf(path, std::ios::trunc);
    if (!outf) throw InputError("cannot write seed file: " + path);
    outf << nlohmann::json{{"topics", topics}}.dump(2) << "\n";
    if (!outf) throw InputError("failed writing seed file: " + path);
}

}  // namespace keyetm
