#include "keyetm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "json.hpp"
#include "keyetm/errors.hpp"
#include "keyetm/model.hpp"

namespace keyetm {

namespace {

using nlohmann::json;

constexpr double kPairSmooth = 1e-12;

uint64_t pair_key(int a, int b) {
    if (a > b) std::swap(a, b);
    return (static_cast<uint64_t>(a) << 32) | static_cast<uint64_t>(b);
}

}  // namespace

long long CooccurrenceStats::pair_count(int a, int b) const {
    const auto it = pair_counts.find(pair_key(a, b));
    return it == pair_counts.end() ? 0 : it->second;
}

CooccurrenceStats count_cooccurrence(const BowCorpus& bow, const std::vector<int>* restrict_to) {
    CooccurrenceStats stats;
    stats.doc_count = bow.num_docs();
    stats.term_doc_freq.assign(static_cast<size_t>(bow.vocab_size), 0);
    std::vector<char> wanted;
    if (restrict_to != nullptr) {
        wanted.assign(static_cast<size_t>(bow.vocab_size), 0);
        for (const int v : *restrict_to) {
            if (v < 0 || v >= bow.vocab_size)
                throw UnknownTerm("index " + std::to_string(v));
            wanted[static_cast<size_t>(v)] = 1;
        }
    }
    std::vector<int> present;
    for (const auto& doc : bow.docs) {
        present.clear();
        for (const auto& [v, c] : doc.counts) {
            if (c <= 0) continue;
            ++stats.term_doc_freq[static_cast<size_t>(v)];
            if (wanted.empty() || wanted[static_cast<size_t>(v)]) present.push_back(v);
        }
        for (size_t i = 0; i < present.size(); ++i)
            for (size_t j = i + 1; j < present.size(); ++j)
                ++stats.pair_counts[pair_key(present[i], present[j])];
    }
    return stats;
}

double npmi(int wi, int wj, const CooccurrenceStats& stats) {
    const int v = stats.vocab_size();
    if (wi < 0 || wi >= v) throw UnknownTerm("index " + std::to_string(wi));
    if (wj < 0 || wj >= v) throw UnknownTerm("index " + std::to_string(wj));
    const long long di = stats.term_doc_freq[static_cast<size_t>(wi)];
    const long long dj = stats.term_doc_freq[static_cast<size_t>(wj)];
    if (di == 0) throw UnknownTerm("index " + std::to_string(wi));
    if (dj == 0) throw UnknownTerm("index " + std::to_string(wj));
    const double d = static_cast<double>(stats.doc_count);
    const long long dij = stats.pair_count(wi, wj);
    if (dij == stats.doc_count) return 0.0;  // normalizer is zero
    const double pij = dij == 0 ? kPairSmooth : static_cast<double>(dij) / d;
    const double pi = static_cast<double>(di) / d;
    const double pj = static_cast<double>(dj) / d;
    return std::log(pij / (pi * pj)) / -std::log(pij);
}

double topic_coherence(const std::vector<std::vector<int>>& topics,
                       const CooccurrenceStats& stats, std::vector<double>* per_topic) {
    if (per_topic != nullptr) per_topic->clear();
    double sum = 0.0;
    long long pairs = 0;
    for (const auto& words : topics) {
        if (words.size() < 2) throw InputError("coherence needs at least two words per topic");
        double topic_sum = 0.0;
        long long topic_pairs = 0;
        for (size_t i = 0; i < words.size(); ++i)
            for (size_t j = i + 1; j < words.size(); ++j) {
                topic_sum += npmi(words[i], words[j], stats);
                ++topic_pairs;
            }
        if (per_topic != nullptr) per_topic->push_back(topic_sum / topic_pairs);
        sum += topic_sum;
        pairs += topic_pairs;
    }
    return sum / static_cast<double>(pairs);
}

double topic_diversity(const std::vector<std::vector<int>>& topics) {
    std::set<int> unique;
    long long total = 0;
    for (const auto& words : topics) {
        unique.insert(words.begin(), words.end());
        total += static_cast<long long>(words.size());
    }
    if (total == 0) throw InputError("diversity of empty topic lists");
    return static_cast<double>(unique.size()) / static_cast<double>(total);
}

MetricsReport evaluate_topics(const Mat& beta, const BowCorpus& bow, int coherence_m,
                              int diversity_n) {
    if (beta.cols != bow.vocab_size)
        throw VocabMismatch("topic-word matrix covers " + std::to_string(beta.cols) +
                            " terms but the corpus vocabulary has " +
                            std::to_string(bow.vocab_size));
    const auto coh_topics = top_words(beta, std::min(coherence_m, beta.cols));
    const auto div_topics = top_words(beta, std::min(diversity_n, beta.cols));
    std::set<int> used;
    for (const auto& words : coh_topics) used.insert(words.begin(), words.end());
    const std::vector<int> subset(used.begin(), used.end());
    const CooccurrenceStats stats = count_cooccurrence(bow, &subset);
    MetricsReport report;
    report.coherence = topic_coherence(coh_topics, stats, &report.per_topic);
    report.diversity = topic_diversity(div_topics);
    report.quality = report.coherence * report.diversity;
    return report;
}

ClassificationReport classification_eval(
    const Mat& theta, const std::vector<std::string>& gold,
    const std::unordered_map<int, std::string>& topic_to_label) {
    if (static_cast<size_t>(theta.rows) != gold.size())
        throw DimensionMismatch("theta rows and gold labels disagree");
    for (int k = 0; k < theta.cols; ++k)
        if (topic_to_label.find(k) == topic_to_label.end())
            throw InputError("topic " + std::to_string(k) + " has no label mapping");

    std::set<std::string> classes;
    for (const auto& [k, label] : topic_to_label) classes.insert(label);
    for (const auto& label : gold)
        if (!label.empty() && classes.find(label) == classes.end()) throw UnmappedLabel(label);

    std::map<std::string, long long> tp, fp, fn;
    ClassificationReport report;
    for (int d = 0; d < theta.rows; ++d) {
        if (gold[static_cast<size_t>(d)].empty()) {
            ++report.unlabeled;
            continue;
        }
        int best = 0;
        for (int k = 1; k < theta.cols; ++k)
            if (theta.at(d, k) > theta.at(d, best)) best = k;
        const std::string& predicted = topic_to_label.at(best);
        const std::string& truth = gold[static_cast<size_t>(d)];
        ++report.evaluated;
        if (predicted == truth) {
            ++tp[truth];
        } else {
            ++fp[predicted];
            ++fn[truth];
        }
    }
    if (report.evaluated == 0) throw InputError("no labeled documents to evaluate");

    double psum = 0.0, rsum = 0.0, fsum = 0.0;
    long long tp_total = 0;
    for (const auto& c : classes) {
        const double t = static_cast<double>(tp[c]);
        const double p = t + fp[c] > 0 ? t / (t + fp[c]) : 0.0;
        const double r = t + fn[c] > 0 ? t / (t + fn[c]) : 0.0;
        psum += p;
        rsum += r;
        fsum += p + r > 0 ? 2.0 * p * r / (p + r) : 0.0;
        tp_total += tp[c];
    }
    const double n = static_cast<double>(classes.size());
    report.precision_macro = psum / n;
    report.recall_macro = rsum / n;
    report.f1_macro = fsum / n;
    report.f1_micro = static_cast<double>(tp_total) / static_cast<double>(report.evaluated);
    return report;
}

std::vector<int> hungarian_min(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    if (n == 0) return {};
    const int m = static_cast<int>(cost[0].size());
    if (n > m) throw InputError("assignment needs at least as many columns as rows");
    constexpr double kInf = std::numeric_limits<double>::infinity();

    std::vector<double> u(static_cast<size_t>(n) + 1, 0.0), v(static_cast<size_t>(m) + 1, 0.0);
    std::vector<int> p(static_cast<size_t>(m) + 1, 0), way(static_cast<size_t>(m) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<size_t>(m) + 1, kInf);
        std::vector<char> used(static_cast<size_t>(m) + 1, 0);
        do {
            used[static_cast<size_t>(j0)] = 1;
            const int i0 = p[static_cast<size_t>(j0)];
            int j1 = -1;
            double delta = kInf;
            for (int j = 1; j <= m; ++j) {
                if (used[static_cast<size_t>(j)]) continue;
                const double cur = cost[static_cast<size_t>(i0 - 1)][static_cast<size_t>(j - 1)] -
                                   u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
                if (cur < minv[static_cast<size_t>(j)]) {
                    minv[static_cast<size_t>(j)] = cur;
                    way[static_cast<size_t>(j)] = j0;
                }
                if (minv[static_cast<size_t>(j)] < delta) {
                    delta = minv[static_cast<size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[static_cast<size_t>(j)]) {
                    u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
                    v[static_cast<size_t>(j)] -= delta;
                } else {
                    minv[static_cast<size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<size_t>(j0)];
            p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> row_to_col(static_cast<size_t>(n), -1);
    for (int j = 1; j <= m; ++j)
        if (p[static_cast<size_t>(j)] > 0)
            row_to_col[static_cast<size_t>(p[static_cast<size_t>(j)] - 1)] = j - 1;
    return row_to_col;
}

std::unordered_map<int, std::string> suggest_topic_label_map(
    const Mat& theta, const std::vector<std::string>& gold) {
    if (static_cast<size_t>(theta.rows) != gold.size())
        throw DimensionMismatch("theta rows and gold labels disagree");
    const int k = theta.cols;
    std::set<std::string> label_set;
    for (const auto& label : gold)
        if (!label.empty()) label_set.insert(label);
    if (label_set.empty()) throw InputError("no labeled documents to derive a mapping from");
    const std::vector<std::string> labels(label_set.begin(), label_set.end());
    const int nl = static_cast<int>(labels.size());
    std::map<std::string, int> label_index;
    for (int j = 0; j < nl; ++j) label_index[labels[static_cast<size_t>(j)]] = j;

    Mat agree(k, nl);
    for (int d = 0; d < theta.rows; ++d) {
        if (gold[static_cast<size_t>(d)].empty()) continue;
        int best = 0;
        for (int t = 1; t < k; ++t)
            if (theta.at(d, t) > theta.at(d, best)) best = t;
        agree.at(best, label_index[gold[static_cast<size_t>(d)]]) += 1.0;
    }

    // pad with zero-agreement dummy labels when topics outnumber labels
    const int cols = std::max(k, nl);
    std::vector<std::vector<double>> cost(static_cast<size_t>(k),
                                          std::vector<double>(static_cast<size_t>(cols), 0.0));
    for (int t = 0; t < k; ++t)
        for (int j = 0; j < nl; ++j) cost[static_cast<size_t>(t)][static_cast<size_t>(j)] = -agree.at(t, j);
    const std::vector<int> assigned = hungarian_min(cost);

    std::unordered_map<int, std::string> out;
    for (int t = 0; t < k; ++t) {
        const int j = assigned[static_cast<size_t>(t)];
        if (j < nl) {
            out[t] = labels[static_cast<size_t>(j)];
        } else {
            int best = 0;  // surplus topic: take its own most frequent label
            for (int c = 1; c < nl; ++c)
                if (agree.at(t, c) > agree.at(t, best)) best = c;
            out[t] = labels[static_cast<size_t>(best)];
        }
    }
    return out;
}

IntrusionSet make_intrusion_items(const Mat& beta, int items_per_topic, Rng& rng) {
    const int k = beta.rows;
    if (k < 2) throw InputError("intrusion items need at least two topics");
    if (items_per_topic < 1) throw InputError("items_per_topic must be positive");
    const auto top5 = top_words(beta, std::min(5, beta.cols));
    const auto top50 = top_words(beta, std::min(50, beta.cols));

    IntrusionSet set;
    for (int t = 0; t < k; ++t) {
        std::set<int> own(top50[static_cast<size_t>(t)].begin(),
                          top50[static_cast<size_t>(t)].end());
        std::set<int> pool_set;
        for (int other = 0; other < k; ++other) {
            if (other == t) continue;
            for (const int w : top5[static_cast<size_t>(other)])
                if (own.find(w) == own.end()) pool_set.insert(w);
        }
        if (pool_set.empty()) {
            set.infeasible_topics.push_back(t);
            continue;
        }
        const std::vector<int> pool(pool_set.begin(), pool_set.end());
        for (int n = 0; n < items_per_topic; ++n) {
            IntrusionItem item;
            item.id = "t" + std::to_string(t) + "_i" + std::to_string(n);
            item.topic = t;
            item.shown = top5[static_cast<size_t>(t)];
            const int intruder = pool[static_cast<size_t>(rng.below(pool.size()))];
            item.shown.push_back(intruder);
            rng.shuffle(item.shown);
            for (size_t pos = 0; pos < item.shown.size(); ++pos)
                if (item.shown[pos] == intruder) item.answer = static_cast<int>(pos);
            set.items.push_back(std::move(item));
        }
    }
    return set;
}

double score_intrusion(const IntrusionSet& items,
                       const std::vector<IntrusionResponse>& responses) {
    if (responses.empty()) throw InputError("no intrusion responses to score");
    std::unordered_map<std::string, int> answers;
    for (const auto& item : items.items) answers[item.id] = item.answer;
    long long correct = 0;
    for (const auto& r : responses) {
        const auto it = answers.find(r.item_id);
        if (it == answers.end()) throw UnknownItemId(r.item_id);
        if (r.selected_index == it->second) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(responses.size());
}

void save_intrusion_items(const IntrusionSet& set, const Vocabulary& vocab,
                          const std::string& items_path, const std::string& keys_path) {
    std::ofstream items(items_path), keys(keys_path);
    if (!items || !keys) throw InputError("cannot write intrusion files");
    for (const auto& item : set.items) {
        json j;
        j["id"] = item.id;
        j["topic"] = item.topic;
        json terms = json::array();
        for (const int w : item.shown) {
            if (w < 0 || w >= vocab.size()) throw UnknownTerm("index " + std::to_string(w));
            terms.push_back(vocab.terms[static_cast<size_t>(w)]);
        }
        j["terms"] = terms;
        items << j.dump() << "\n";
        keys << json{{"id", item.id}, {"answer", item.answer}}.dump() << "\n";
    }
}

std::vector<IntrusionResponse> load_intrusion_responses(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InputError("cannot read intrusion responses: " + path);
    std::vector<IntrusionResponse> out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            IntrusionResponse r;
            r.item_id = j.at("item_id").get<std::string>();
            r.selected_index = j.at("selected_index").get<int>();
            if (j.contains("rater_id")) r.rater_id = j.at("rater_id").get<std::string>();
            out.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw InputError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

double score_intrusion_files(const std::string& keys_path, const std::string& responses_path) {
    std::ifstream is(keys_path);
    if (!is) throw InputError("cannot read intrusion keys: " + keys_path);
    IntrusionSet set;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            IntrusionItem item;
            item.id = j.at("id").get<std::string>();
            item.answer = j.at("answer").get<int>();
            set.items.push_back(std::move(item));
        } catch (const json::exception& e) {
            throw InputError(keys_path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return score_intrusion(set, load_intrusion_responses(responses_path));
}

}  // namespace keyetm
