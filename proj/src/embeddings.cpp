#include "keyetm/embeddings.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "keyetm/digest.hpp"
#include "keyetm/errors.hpp"
#include "keyetm/rng.hpp"

namespace keyetm {
namespace {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// cumulative unigram^0.75 noise distribution, sampled by binary search
std::vector<double> noise_cdf(const std::vector<long long>& counts) {
    std::vector<double> cdf(counts.size());
    double acc = 0.0;
    for (size_t i = 0; i < counts.size(); ++i) {
        acc += std::pow(static_cast<double>(counts[i]), 0.75);
        cdf[i] = acc;
    }
    for (auto& x : cdf) x /= acc;
    return cdf;
}

int sample_noise(const std::vector<double>& cdf, Rng& rng) {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return static_cast<int>(std::min<size_t>(static_cast<size_t>(it - cdf.begin()), cdf.size() - 1));
}

struct TrainShared {
    Mat* syn0;
    Mat* syn1neg;
    const std::vector<std::vector<int>>* streams;
    const std::vector<double>* cdf;
    const SkipGramConfig* cfg;
    long long total_words;
    std::atomic<long long> words_done{0};
    std::atomic<double> loss_sum{0.0};
    std::atomic<long long> loss_pairs{0};
};

void train_range(TrainShared& sh, size_t begin, size_t end, int epoch, Rng rng) {
    const auto& cfg = *sh.cfg;
    const int dim = cfg.dim;
    std::vector<double> neu1e(static_cast<size_t>(dim));
    double local_loss = 0.0;
    long long local_pairs = 0;
    long long processed = 0;
    const long long span = sh.total_words * cfg.epochs;
    for (size_t d = begin; d < end; ++d) {
        const auto& sen = (*sh.streams)[d];
        const int n = static_cast<int>(sen.size());
        for (int i = 0; i < n; ++i) {
            ++processed;
            if ((processed & 0xfff) == 0) sh.words_done += 0x1000;
            const long long global =
                static_cast<long long>(epoch) * sh.total_words + sh.words_done.load();
            double alpha = cfg.learning_rate *
                           (1.0 - static_cast<double>(global) / static_cast<double>(span + 1));
            alpha = std::max(alpha, cfg.learning_rate * 1e-4);

            const int center = sen[static_cast<size_t>(i)];
            const int shrink = static_cast<int>(rng.below(static_cast<uint64_t>(cfg.window)));
            for (int off = shrink - cfg.window; off <= cfg.window - shrink; ++off) {
                if (off == 0) continue;
                const int j = i + off;
                if (j < 0 || j >= n) continue;
                const int context = sen[static_cast<size_t>(j)];
                auto vin = sh.syn0->row(context);
                std::fill(neu1e.begin(), neu1e.end(), 0.0);
                for (int neg = 0; neg <= cfg.negative_samples; ++neg) {
                    int target;
                    double label;
                    if (neg == 0) {
                        target = center;
                        label = 1.0;
                    } else {
                        target = sample_noise(*sh.cdf, rng);
                        if (target == center) continue;
                        label = 0.0;
                    }
                    auto vout = sh.syn1neg->row(target);
                    double dot = 0.0;
                    for (int c = 0; c < dim; ++c) dot += vin[static_cast<size_t>(c)] * vout[static_cast<size_t>(c)];
                    const double f = sigmoid(dot);
                    const double g = (label - f) * alpha;
                    local_loss += label > 0.5 ? -std::log(std::max(f, 1e-12))
                                              : -std::log(std::max(1.0 - f, 1e-12));
                    ++local_pairs;
                    for (int c = 0; c < dim; ++c) {
                        neu1e[static_cast<size_t>(c)] += g * vout[static_cast<size_t>(c)];
                        vout[static_cast<size_t>(c)] += g * vin[static_cast<size_t>(c)];
                    }
                }
                for (int c = 0; c < dim; ++c) vin[static_cast<size_t>(c)] += neu1e[static_cast<size_t>(c)];
            }
        }
    }
    sh.loss_sum += local_loss;
    sh.loss_pairs += local_pairs;
}

}  // namespace

std::vector<std::vector<int>> index_streams(const std::vector<std::vector<std::string>>& docs,
                                            const Vocabulary& vocab) {
    std::vector<std::vector<int>> streams;
    streams.reserve(docs.size());
    for (const auto& doc : docs) {
        std::vector<int> s;
        s.reserve(doc.size());
        for (const auto& t : doc) {
            const int idx = vocab.index_of(t);
            if (idx >= 0) s.push_back(idx);
        }
        streams.push_back(std::move(s));
    }
    return streams;
}

SkipGramResult train_skipgram(const std::vector<std::vector<int>>& streams,
                              const Vocabulary& vocab, const SkipGramConfig& config) {
    if (config.dim < 2 || config.window < 1 || config.negative_samples < 1 ||
        config.epochs < 1 || config.learning_rate <= 0.0)
        throw InputError("invalid skip-gram configuration");
    const int v = vocab.size();
    std::vector<long long> counts(static_cast<size_t>(v), 0);
    long long total_words = 0;
    for (const auto& sen : streams) {
        for (const int w : sen) {
            if (w < 0 || w >= v)
                throw VocabMismatch("token index " + std::to_string(w) +
                                    " outside vocabulary of size " + std::to_string(v));
            ++counts[static_cast<size_t>(w)];
            ++total_words;
        }
    }
    if (total_words == 0) throw VocabMismatch("no in-vocabulary tokens to train on");
    if (total_words <= config.window)
        std::cerr << "warning: corpus has " << total_words
                  << " tokens, smaller than the context window\n";

    Rng master(config.rng_seed);
    Rng init_rng = master.fork(1);

    Mat syn0(v, config.dim);
    for (auto& x : syn0.v) x = (init_rng.uniform() - 0.5) / config.dim;
    Mat syn1neg(v, config.dim);

    const auto cdf = noise_cdf(counts);

    TrainShared sh;
    sh.syn0 = &syn0;
    sh.syn1neg = &syn1neg;
    sh.streams = &streams;
    sh.cdf = &cdf;
    sh.cfg = &config;
    sh.total_words = total_words;

    std::vector<double> epoch_loss;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        sh.words_done = 0;
        sh.loss_sum = 0.0;
        sh.loss_pairs = 0;
        if (config.deterministic || config.workers <= 1) {
            train_range(sh, 0, streams.size(), epoch, master.fork(100 + static_cast<uint64_t>(epoch)));
        } else {
            const int workers = static_cast<int>(
                std::min<size_t>(static_cast<size_t>(config.workers), std::max<size_t>(streams.size(), 1)));
            std::vector<std::thread> pool;
            const size_t chunk = (streams.size() + workers - 1) / workers;
            for (int w = 0; w < workers; ++w) {
                const size_t b = static_cast<size_t>(w) * chunk;
                const size_t e = std::min(streams.size(), b + chunk);
                if (b >= e) break;
                pool.emplace_back(train_range, std::ref(sh), b, e, epoch,
                                  master.fork(100 + static_cast<uint64_t>(epoch) * 64 +
                                              static_cast<uint64_t>(w)));
            }
            for (auto& t : pool) t.join();
        }
        const long long pairs = sh.loss_pairs.load();
        epoch_loss.push_back(pairs > 0 ? sh.loss_sum.load() / static_cast<double>(pairs) : 0.0);
    }

    SkipGramResult result;
    result.embeddings.rho = std::move(syn0);
    result.embeddings.vocab_hash = vocab_digest(vocab.terms);
    result.epoch_loss = std::move(epoch_loss);
    return result;
}

EmbeddingLoad load_embeddings(const std::string& path, const Vocabulary& vocab,
                              uint64_t rng_seed) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open embeddings: " + path);
    std::string header;
    if (!std::getline(in, header)) throw MalformedHeader("empty embeddings file: " + path);
    std::istringstream hs(header);
    long long file_v = 0;
    int dim = 0;
    if (!(hs >> file_v >> dim) || file_v <= 0 || dim <= 0)
        throw MalformedHeader("expected 'V L' header, got '" + header + "'");

    std::unordered_map<std::string, std::vector<double>> rows;
    std::string line;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string term;
        ls >> term;
        std::vector<double> vals;
        vals.reserve(static_cast<size_t>(dim));
        double x;
        while (ls >> x) vals.push_back(x);
        if (static_cast<int>(vals.size()) != dim)
            throw DimensionMismatch(path + ":" + std::to_string(lineno) + ": " + term + " has " +
                                    std::to_string(vals.size()) + " values, header says " +
                                    std::to_string(dim));
        rows[term] = std::move(vals);
    }

    EmbeddingLoad out;
    out.embeddings.rho = Mat(vocab.size(), dim);
    out.embeddings.vocab_hash = vocab_digest(vocab.terms);
    Rng rng = Rng(rng_seed).fork(2);
    for (int i = 0; i < vocab.size(); ++i) {
        const auto it = rows.find(vocab.terms[static_cast<size_t>(i)]);
        if (it == rows.end()) {
            out.missing_terms.push_back(vocab.terms[static_cast<size_t>(i)]);
            for (int c = 0; c < dim; ++c) out.embeddings.rho.at(i, c) = 0.01 * rng.normal();
        } else {
            for (int c = 0; c < dim; ++c) out.embeddings.rho.at(i, c) = it->second[static_cast<size_t>(c)];
        }
    }
    out.coverage = vocab.size() == 0
                       ? 0.0
                       : 1.0 - static_cast<double>(out.missing_terms.size()) / vocab.size();
    return out;
}

void save_embeddings(const EmbeddingMatrix& emb, const Vocabulary& vocab,
                     const std::string& path) {
    if (emb.rho.rows != vocab.size())
        throw VocabMismatch("embedding rows " + std::to_string(emb.rho.rows) +
                            " do not match vocabulary size " + std::to_string(vocab.size()));
    std::ofstream out(path);
    if (!out) throw InputError("cannot write embeddings: " + path);
    out << emb.rho.rows << ' ' << emb.rho.cols << '\n';
    char buf[32];
    for (int r = 0; r < emb.rho.rows; ++r) {
        out << vocab.terms[static_cast<size_t>(r)];
        for (int c = 0; c < emb.rho.cols; ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", emb.rho.at(r, c));
            out << ' ' << buf;
        }
        out << '\n';
    }
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw DimensionMismatch("cosine of vectors with sizes " + std::to_string(a.size()) +
                                " and " + std::to_string(b.size()));
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw ZeroVector();
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

void save_index_streams(const std::vector<std::vector<int>>& streams, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write token streams: " + path);
    for (const auto& s : streams) {
        for (size_t i = 0; i < s.size(); ++i) out << (i ? " " : "") << s[i];
        out << '\n';
    }
}

std::vector<std::vector<int>> load_index_streams(const std::string& path, int vocab_size) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open token streams: " + path);
    std::vector<std::vector<int>> streams;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::vector<int> s;
        int w;
        while (ls >> w) {
            if (w < 0 || w >= vocab_size)
                throw VocabMismatch("token index " + std::to_string(w) +
                                    " outside vocabulary of size " + std::to_string(vocab_size));
            s.push_back(w);
        }
        streams.push_back(std::move(s));
    }
    return streams;
}

}  // namespace keyetm
