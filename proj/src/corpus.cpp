#include "keyetm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <numeric>

#include "json.hpp"
#include "keyetm/errors.hpp"
#include "keyetm/porter.hpp"

namespace keyetm {
namespace {

bool blank(const std::string& s) {
    return std::all_of(s.begin(), s.end(),
                       [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace

std::vector<std::string> tokenize_and_stem(std::string_view text, const PreprocessConfig& config) {
    const auto& stop = config.stopwords.empty() ? default_stopwords() : config.stopwords;
    std::vector<std::string> out;
    std::string tok;
    auto flush = [&] {
        if (tok.empty()) return;
        std::string word = std::move(tok);
        tok.clear();
        if (stop.count(word)) return;
        if (config.stem) word = porter_stem(word);
        if (word.size() < 3) return;
        if (stop.count(word)) return;
        out.push_back(std::move(word));
    };
    for (const char c : text) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalpha(u)) {
            tok.push_back(config.lowercase ? static_cast<char>(std::tolower(u)) : c);
        } else {
            flush();
        }
    }
    flush();
    return out;
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& docs,
                            const PreprocessConfig& config) {
    std::unordered_map<std::string, long long> df;
    std::unordered_map<std::string, long long> tf;
    std::unordered_set<std::string> seen;
    for (const auto& doc : docs) {
        seen.clear();
        for (const auto& t : doc) {
            ++tf[t];
            if (seen.insert(t).second) ++df[t];
        }
    }
    const double d = static_cast<double>(docs.size());
    std::vector<std::string> kept;
    for (const auto& [term, n] : df) {
        const double frac = static_cast<double>(n) / d;
        if (frac >= config.min_df && frac <= config.max_df) kept.push_back(term);
    }
    if (kept.empty()) throw EmptyVocabulary();
    std::sort(kept.begin(), kept.end(), [&](const std::string& a, const std::string& b) {
        const long long fa = tf[a], fb = tf[b];
        if (fa != fb) return fa > fb;
        return a < b;
    });
    Vocabulary vocab;
    vocab.terms = std::move(kept);
    vocab.doc_freq.resize(vocab.terms.size());
    for (int i = 0; i < vocab.size(); ++i) {
        vocab.term_to_index[vocab.terms[static_cast<size_t>(i)]] = i;
        vocab.doc_freq[static_cast<size_t>(i)] = df[vocab.terms[static_cast<size_t>(i)]];
    }
    return vocab;
}

BowCorpus to_bow(const std::vector<std::vector<std::string>>& docs,
                 const std::vector<RawDocument>& raw, const Vocabulary& vocab) {
    if (docs.size() != raw.size())
        throw InputError("token stream count does not match document count");
    BowCorpus corpus;
    corpus.vocab_size = vocab.size();
    for (size_t i = 0; i < docs.size(); ++i) {
        std::map<int, int> counts;
        for (const auto& t : docs[i]) {
            const int idx = vocab.index_of(t);
            if (idx >= 0) ++counts[idx];
        }
        if (counts.empty()) {
            corpus.dropped_ids.push_back(raw[i].id);
            continue;
        }
        SparseDoc doc;
        doc.id = raw[i].id;
        doc.label = raw[i].label;
        doc.counts.assign(counts.begin(), counts.end());
        for (const auto& [idx, n] : doc.counts) doc.total += n;
        corpus.docs.push_back(std::move(doc));
    }
    return corpus;
}

std::vector<double> normalize_bow(const std::vector<double>& row) {
    const double sum = std::accumulate(row.begin(), row.end(), 0.0);
    if (sum <= 0.0) throw ZeroLengthDocument("(anonymous row)");
    std::vector<double> out(row.size());
    for (size_t i = 0; i < row.size(); ++i) out[i] = row[i] / sum;
    return out;
}

std::vector<double> normalize_bow(const SparseDoc& doc, int vocab_size) {
    if (doc.total <= 0) throw ZeroLengthDocument(doc.id);
    std::vector<double> out(static_cast<size_t>(vocab_size), 0.0);
    const double sum = static_cast<double>(doc.total);
    for (const auto& [idx, n] : doc.counts) out[static_cast<size_t>(idx)] = n / sum;
    return out;
}

std::vector<RawDocument> load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open corpus file: " + path);
    std::vector<RawDocument> docs;
    std::unordered_set<std::string> ids;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw InputError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j["id"].is_string() ||
            !j.contains("text") || !j["text"].is_string())
            throw InputError(path + ":" + std::to_string(lineno) +
                             ": expected {\"id\": string, \"text\": string}");
        RawDocument doc;
        doc.id = j["id"].get<std::string>();
        doc.text = j["text"].get<std::string>();
        if (j.contains("label") && j["label"].is_string())
            doc.label = j["label"].get<std::string>();
        if (blank(doc.text))
            throw InputError(path + ":" + std::to_string(lineno) + ": empty text for id '" +
                             doc.id + "'");
        if (!ids.insert(doc.id).second)
            throw InputError(path + ":" + std::to_string(lineno) + ": duplicate id '" + doc.id +
                             "'");
        docs.push_back(std::move(doc));
    }
    return docs;
}

void save_vocabulary(const Vocabulary& vocab, const std::string& terms_path,
                     const std::string& sidecar_path, const PreprocessConfig& config) {
    std::ofstream out(terms_path);
    if (!out) throw InputError("cannot write vocabulary: " + terms_path);
    for (const auto& t : vocab.terms) out << t << '\n';
    out.close();

    nlohmann::json j;
    j["doc_freq"] = vocab.doc_freq;
    j["config"] = {{"min_df", config.min_df},
                   {"max_df", config.max_df},
                   {"lowercase", config.lowercase},
                   {"stem", config.stem}};
    std::ofstream side(sidecar_path);
    if (!side) throw InputError("cannot write vocabulary sidecar: " + sidecar_path);
    side << j.dump(2) << '\n';
}

Vocabulary load_vocabulary(const std::string& terms_path) {
    std::ifstream in(terms_path);
    if (!in) throw InputError("cannot open vocabulary: " + terms_path);
    Vocabulary vocab;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        vocab.term_to_index[line] = static_cast<int>(vocab.terms.size());
        vocab.terms.push_back(line);
    }
    if (vocab.terms.empty()) throw EmptyVocabulary();
    vocab.doc_freq.assign(vocab.terms.size(), 0);
    return vocab;
}

void save_bow(const BowCorpus& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write corpus: " + path);
    nlohmann::json header = {{"vocab_size", corpus.vocab_size},
                             {"dropped_ids", corpus.dropped_ids}};
    out << header.dump() << '\n';
    for (const auto& doc : corpus.docs) {
        nlohmann::json j = {{"id", doc.id}, {"counts", doc.counts}};
        if (!doc.label.empty()) j["label"] = doc.label;
        out << j.dump() << '\n';
    }
}

BowCorpus load_bow(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open corpus: " + path);
    std::string line;
    if (!std::getline(in, line)) throw InputError("empty corpus file: " + path);
    BowCorpus corpus;
    try {
        nlohmann::json header = nlohmann::json::parse(line);
        corpus.vocab_size = header.at("vocab_size").get<int>();
        corpus.dropped_ids = header.at("dropped_ids").get<std::vector<std::string>>();
        int lineno = 1;
        while (std::getline(in, line)) {
            ++lineno;
            if (blank(line)) continue;
            nlohmann::json j = nlohmann::json::parse(line);
            SparseDoc doc;
            doc.id = j.at("id").get<std::string>();
            if (j.contains("label")) doc.label = j["label"].get<std::string>();
            doc.counts = j.at("counts").get<std::vector<std::pair<int, int>>>();
            for (const auto& [idx, n] : doc.counts) {
                if (idx < 0 || idx >= corpus.vocab_size)
                    throw InputError(path + ":" + std::to_string(lineno) +
                                     ": term index out of range");
                doc.total += n;
            }
            if (doc.total <= 0) throw ZeroLengthDocument(doc.id);
            corpus.docs.push_back(std::move(doc));
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path + ": " + e.what());
    }
    return corpus;
}

}  // namespace keyetm
