#include "keyetm/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "keyetm/errors.hpp"

namespace keyetm {

namespace {

constexpr double kLogvarLo = -20.0;
constexpr double kLogvarHi = 20.0;
constexpr double kLogEps = 1e-10;

// consumer ids for the forked rng streams; each draw source stays independent
// so disabling one (e.g. the regularizer path at lambda = 0) shifts no other
enum StreamId : uint64_t {
    kInitStream = 10,
    kShuffleStream = 11,
    kEpsStream = 12,
    kEncoderDropStream = 13,
    kGammaMuDropStream = 14,
};

Mat uniform_fan_in(int rows, int cols, int fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Mat m(rows, cols);
    for (auto& x : m.v) x = rng.uniform(-bound, bound);
    return m;
}

ag::NodePtr encoder_hidden(const ModelParams& p, const ag::NodePtr& x_norm, const Mat* mask) {
    auto h1 = ag::softplus(ag::add_bias(ag::matmul_nt(x_norm, p.W1), p.b1));
    auto h2 = ag::softplus(ag::add_bias(ag::matmul_nt(h1, p.W2), p.b2));
    if (mask != nullptr && !mask->v.empty()) h2 = ag::dropout_with_mask(h2, *mask);
    return h2;
}

ag::NodePtr mu_head(const ModelParams& p, const ag::NodePtr& h) {
    return ag::add_bias(ag::matmul_nt(h, p.Wmu), p.bmu);
}

ag::NodePtr logvar_head(const ModelParams& p, const ag::NodePtr& h) {
    return ag::clamp(ag::add_bias(ag::matmul_nt(h, p.Wlogvar), p.blogvar), kLogvarLo, kLogvarHi);
}

std::vector<double> softmax_vec(std::span<const double> z) {
    std::vector<double> out(z.begin(), z.end());
    double mx = out[0];
    for (const double x : out) mx = std::max(mx, x);
    double sum = 0.0;
    for (auto& x : out) sum += (x = std::exp(x - mx));
    for (auto& x : out) x /= sum;
    return out;
}

void check_regularizer_inputs(const PriorMatrix* prior, const GuidedSet* guided, int V, int K) {
    if (prior == nullptr || guided == nullptr)
        throw InputError("keyword regularizers need a prior matrix and a guided set");
    if (prior->gamma_prior.rows != V || prior->gamma_prior.cols != K)
        throw VocabMismatch("prior matrix is " + std::to_string(prior->gamma_prior.rows) + "x" +
                            std::to_string(prior->gamma_prior.cols) + ", expected " +
                            std::to_string(V) + "x" + std::to_string(K));
    if (guided->indices.empty()) throw EmptyGuidedSet();
    for (const int v : guided->indices)
        if (v < 0 || v >= V) throw VocabMismatch("guided index out of vocabulary range");
}

}  // namespace

ModelParams init_params(int vocab_size, const EmbeddingMatrix& emb, const TrainConfig& config,
                        const Mat* alpha_init) {
    if (vocab_size <= 0) throw EmptyVocabulary();
    if (emb.rho.rows != vocab_size)
        throw VocabMismatch("embeddings cover " + std::to_string(emb.rho.rows) +
                            " terms but the vocabulary has " + std::to_string(vocab_size));
    if (config.k < 1) throw InputError("need at least one topic");
    if (config.hidden_size < 1) throw InputError("hidden size must be positive");

    const int V = vocab_size, K = config.k, L = emb.dim(), H = config.hidden_size;
    Rng init = Rng(config.rng_seed).fork(kInitStream);

    ModelParams p;
    p.W1 = ag::param(uniform_fan_in(H, V, V, init));
    p.b1 = ag::param(Mat(1, H));
    p.W2 = ag::param(uniform_fan_in(H, H, H, init));
    p.b2 = ag::param(Mat(1, H));
    p.Wmu = ag::param(uniform_fan_in(K, H, H, init));
    p.bmu = ag::param(Mat(1, K));
    p.Wlogvar = ag::param(uniform_fan_in(K, H, H, init));
    p.blogvar = ag::param(Mat(1, K));
    if (alpha_init != nullptr) {
        if (alpha_init->rows != K || alpha_init->cols != L)
            throw DimensionMismatch("alpha warm start is " + std::to_string(alpha_init->rows) +
                                    "x" + std::to_string(alpha_init->cols) + ", expected " +
                                    std::to_string(K) + "x" + std::to_string(L));
        p.alpha = ag::param(*alpha_init);
    } else {
        Mat a(K, L);
        for (auto& x : a.v) x = 0.02 * init.normal();
        p.alpha = ag::param(std::move(a));
    }
    p.rho = emb.rho;
    p.vocab_hash = emb.vocab_hash;
    return p;
}

Mat compute_beta(const Mat& rho, const Mat& alpha) {
    if (rho.cols != alpha.cols)
        throw ShapeMismatch("topic embeddings have width " + std::to_string(alpha.cols) +
                            " but word embeddings have width " + std::to_string(rho.cols));
    return ag::softmax_rows(ag::matmul_nt(ag::constant(alpha), ag::constant(rho)))->value;
}

std::pair<Mat, Mat> encode_batch(const ModelParams& params, const Mat& x_norm) {
    if (x_norm.cols != params.vocab_size())
        throw ShapeMismatch("encoder input has " + std::to_string(x_norm.cols) +
                            " columns, expected " + std::to_string(params.vocab_size()));
    auto h = encoder_hidden(params, ag::constant(x_norm), nullptr);
    return {mu_head(params, h)->value, logvar_head(params, h)->value};
}

DocInference sample_theta(std::span<const double> mu, std::span<const double> logvar, Rng* rng) {
    if (mu.size() != logvar.size() || mu.empty())
        throw ShapeMismatch("mu and logvar lengths disagree");
    DocInference d;
    d.mu.assign(mu.begin(), mu.end());
    d.logvar.assign(logvar.begin(), logvar.end());
    d.delta.resize(mu.size());
    for (size_t k = 0; k < mu.size(); ++k)
        d.delta[k] = rng == nullptr ? mu[k] : mu[k] + std::exp(0.5 * logvar[k]) * rng->normal();
    d.theta = softmax_vec(d.delta);
    return d;
}

double reconstruction_loglik(std::span<const double> x_counts, std::span<const double> theta,
                             const Mat& beta) {
    if (static_cast<int>(theta.size()) != beta.rows ||
        static_cast<int>(x_counts.size()) != beta.cols)
        throw ShapeMismatch("counts/theta/beta shapes disagree");
    double ll = 0.0;
    for (int v = 0; v < beta.cols; ++v) {
        if (x_counts[static_cast<size_t>(v)] == 0.0) continue;
        double p = 0.0;
        for (int k = 0; k < beta.rows; ++k) p += theta[static_cast<size_t>(k)] * beta.at(k, v);
        ll += x_counts[static_cast<size_t>(v)] * std::log(p + kLogEps);
    }
    return ll;
}

double kl_to_standard_normal(std::span<const double> mu, std::span<const double> logvar) {
    if (mu.size() != logvar.size()) throw ShapeMismatch("mu and logvar lengths disagree");
    double kl = 0.0;
    for (size_t k = 0; k < mu.size(); ++k)
        kl += std::exp(logvar[k]) + mu[k] * mu[k] - 1.0 - logvar[k];
    return 0.5 * kl;
}

Mat gamma_mu_matrix(const ModelParams& params, const std::vector<double>& doc_mask) {
    const int V = params.vocab_size();
    if (static_cast<int>(doc_mask.size()) != V)
        throw ShapeMismatch("document mask has " + std::to_string(doc_mask.size()) +
                            " entries, expected " + std::to_string(V));
    auto m = ag::softplus(ag::add_bias(ag::transpose(params.W1), params.b1));
    auto n = ag::softplus(ag::add_bias(ag::matmul_nt(m, params.W2), params.b2));
    auto wmean = ag::softmax_rows(ag::add_bias(ag::matmul_nt(n, params.Wmu), params.bmu));
    Mat out = wmean->value;
    for (int v = 0; v < V; ++v)
        for (int k = 0; k < out.cols; ++k) out.at(v, k) *= doc_mask[static_cast<size_t>(v)];
    return out;
}

BatchLoss build_batch_loss(const ModelParams& params, const Mat& x_counts, const Mat& x_norm,
                           const PriorMatrix* prior, const GuidedSet* guided,
                           const TrainConfig& config, const BatchNoise& noise) {
    const int B = x_counts.rows;
    const int V = params.vocab_size();
    const int K = params.num_topics();
    if (B < 1 || x_norm.rows != B || x_counts.cols != V || x_norm.cols != V)
        throw ShapeMismatch("batch count and frequency matrices disagree");
    const bool want_lmu = config.lambda1 > 0.0;
    const bool want_lalpha = config.lambda2 > 0.0;
    if (want_lmu || want_lalpha) check_regularizer_inputs(prior, guided, V, K);

    auto xc = ag::constant(x_counts);
    auto xn = ag::constant(x_norm);
    auto rho = ag::constant(params.rho);

    auto logits = ag::matmul_nt(params.alpha, rho);  // K x V
    auto beta = ag::softmax_rows(logits);

    auto h = encoder_hidden(params, xn, &noise.enc_mask);
    auto mu = mu_head(params, h);
    auto logvar = logvar_head(params, h);
    ag::NodePtr delta;
    if (noise.eps.v.empty()) {
        delta = mu;
    } else {
        if (noise.eps.rows != B || noise.eps.cols != K)
            throw ShapeMismatch("reparameterization noise is " + std::to_string(noise.eps.rows) +
                                "x" + std::to_string(noise.eps.cols));
        delta = ag::gaussian_reparameterize(mu, logvar, ag::constant(noise.eps));
    }
    auto theta = ag::softmax_rows(delta);

    auto recon = ag::sum(ag::mul(xc, ag::log(ag::add_scalar(ag::matmul(theta, beta), kLogEps))));
    auto kl = ag::scale(
        ag::sum(ag::sub(ag::add(ag::exp(logvar), ag::square(mu)), ag::add_scalar(logvar, 1.0))),
        0.5);

    BatchLoss out;
    out.recon = recon->value.v[0];
    out.kl = kl->value.v[0];
    auto total = ag::sub(kl, recon);

    if (want_lmu) {
        const auto& S = guided->indices;
        const int ns = static_cast<int>(S.size());
        // per guided word: how many batch documents contain it, and the constant
        // contribution of the documents that do not (their masked row is zero)
        std::vector<double> in_doc(S.size(), 0.0);
        double off_doc = 0.0;
        Mat prior_s(ns, K);
        for (int i = 0; i < ns; ++i) {
            double cnt = 0.0, norm2 = 0.0;
            for (int d = 0; d < B; ++d)
                if (x_counts.at(d, S[static_cast<size_t>(i)]) > 0.0) cnt += 1.0;
            for (int k = 0; k < K; ++k) {
                const double pv = prior->gamma_prior.at(S[static_cast<size_t>(i)], k);
                prior_s.at(i, k) = pv;
                norm2 += pv * pv;
            }
            in_doc[static_cast<size_t>(i)] = cnt;
            off_doc += (B - cnt) * norm2;
        }
        auto w1s = ag::transpose(ag::gather_cols(params.W1, S));  // |S| x H1
        auto m = ag::softplus(ag::add_bias(w1s, params.b1));
        auto n = ag::softplus(ag::add_bias(ag::matmul_nt(m, params.W2), params.b2));
        if (!noise.gmu_mask.v.empty()) n = ag::dropout_with_mask(n, noise.gmu_mask);
        auto wmean = ag::softmax_rows(ag::add_bias(ag::matmul_nt(n, params.Wmu), params.bmu));
        auto sq = ag::square(ag::sub(wmean, ag::constant(std::move(prior_s))));
        auto lmu = ag::add_scalar(ag::sum(ag::scale_rows(sq, std::move(in_doc))), off_doc);
        out.l_mu = lmu->value.v[0];
        total = ag::add(total, ag::scale(lmu, config.lambda1));
    }

    if (want_lalpha) {
        const auto& S = guided->indices;
        const int ns = static_cast<int>(S.size());
        Mat prior_t(K, ns);
        for (int i = 0; i < ns; ++i)
            for (int k = 0; k < K; ++k)
                prior_t.at(k, i) = prior->gamma_prior.at(S[static_cast<size_t>(i)], k);
        auto ga = config.gamma_alpha_topic_axis ? ag::softmax_cols(logits) : beta;
        auto picked = ag::gather_cols(ga, S);  // K x |S|
        auto lalpha = ag::sum(ag::square(ag::sub(picked, ag::constant(std::move(prior_t)))));
        out.l_alpha = lalpha->value.v[0];
        total = ag::add(total, ag::scale(lalpha, config.lambda2));
    }

    out.total = total;
    return out;
}

TrainResult train(const BowCorpus& bow, const EmbeddingMatrix& emb, const PriorMatrix* prior,
                  const GuidedSet* guided, const TrainConfig& config, const Mat* alpha_init,
                  const std::function<void(const EpochStats&)>& progress) {
    const int D = bow.num_docs();
    const int V = bow.vocab_size;
    if (D == 0) throw InputError("corpus has no documents");
    if (config.batch_size < 1) throw InputError("batch size must be at least 1");
    if (config.epochs < 1) throw InputError("epoch count must be at least 1");
    if (config.learning_rate <= 0.0) throw InputError("learning rate must be positive");
    if (config.lambda1 < 0.0 || config.lambda2 < 0.0)
        throw InputError("regularizer weights must be nonnegative");
    if (config.dropout_rate < 0.0 || config.dropout_rate >= 1.0)
        throw InputError("dropout rate must lie in [0, 1)");
    if (config.precision != "f64")
        throw InputError("unsupported precision '" + config.precision + "'; only f64 is built");
    if (config.lambda1 > 0.0 || config.lambda2 > 0.0)
        check_regularizer_inputs(prior, guided, V, config.k);
    for (const auto& doc : bow.docs)
        if (doc.total <= 0) throw ZeroLengthDocument(doc.id);

    ModelParams params = init_params(V, emb, config, alpha_init);
    const int K = config.k;
    const int H = config.hidden_size;

    ag::AdamConfig acfg;
    acfg.lr = config.learning_rate;
    acfg.weight_decay = config.adam_weight_decay;
    ag::AdamState adam;
    adam.cfg = acfg;
    auto trainable = params.trainable();

    Rng master(config.rng_seed);
    Rng shuffle_rng = master.fork(kShuffleStream);
    Rng eps_rng = master.fork(kEpsStream);
    Rng enc_drop_rng = master.fork(kEncoderDropStream);
    Rng gmu_drop_rng = master.fork(kGammaMuDropStream);

    const int ns = guided != nullptr ? static_cast<int>(guided->indices.size()) : 0;

    std::vector<int> order(static_cast<size_t>(D));
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    result.history.reserve(static_cast<size_t>(config.epochs));

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        EpochStats stats;
        stats.epoch = epoch;
        int batch_index = 0;
        for (int start = 0; start < D; start += config.batch_size, ++batch_index) {
            const int b = std::min(config.batch_size, D - start);
            Mat xc(b, V), xn(b, V);
            for (int i = 0; i < b; ++i) {
                const SparseDoc& doc = bow.docs[static_cast<size_t>(order[start + i])];
                for (const auto& [v, c] : doc.counts) {
                    xc.at(i, v) = c;
                    xn.at(i, v) = static_cast<double>(c) / doc.total;
                }
            }
            BatchNoise noise;
            noise.eps = Mat(b, K);
            for (auto& e : noise.eps.v) e = eps_rng.normal();
            if (config.dropout_rate > 0.0)
                noise.enc_mask = ag::dropout_mask(b, H, config.dropout_rate, enc_drop_rng);
            if (config.lambda1 > 0.0 && config.dropout_rate > 0.0)
                noise.gmu_mask = ag::dropout_mask(ns, H, config.dropout_rate, gmu_drop_rng);
            try {
                BatchLoss loss = build_batch_loss(params, xc, xn, prior, guided, config, noise);
                ag::zero_grad(trainable);
                ag::backward(loss.total, trainable);
                ag::adam_step(trainable, adam);
                stats.neg_elbo += loss.kl - loss.recon;
                stats.l_mu += loss.l_mu;
                stats.l_alpha += loss.l_alpha;
                stats.total += loss.total->value.v[0];
            } catch (const NonFiniteValue& e) {
                std::ostringstream dump;
                dump << e.what() << "; batch documents:";
                for (int i = 0; i < b; ++i)
                    dump << ' ' << bow.docs[static_cast<size_t>(order[start + i])].id;
                throw NonFiniteLoss(epoch, batch_index, dump.str());
            }
        }
        result.history.push_back(stats);
        if (progress) progress(stats);
        if (config.early_stop_window > 0 && epoch >= config.early_stop_window) {
            const double before =
                result.history[static_cast<size_t>(epoch - config.early_stop_window)].total;
            if (before - stats.total < config.early_stop_rel * std::abs(before)) {
                result.early_stopped = true;
                break;
            }
        }
    }
    result.params = std::move(params);
    return result;
}

std::vector<double> infer_theta(const ModelParams& params, const SparseDoc& doc) {
    const int V = params.vocab_size();
    Mat x(1, V, normalize_bow(doc, V));
    auto [mu, logvar] = encode_batch(params, x);
    return sample_theta(mu.row(0), logvar.row(0), nullptr).theta;
}

Mat infer_theta_all(const ModelParams& params, const BowCorpus& bow) {
    const int V = params.vocab_size();
    const int K = params.num_topics();
    if (bow.vocab_size != V) throw VocabMismatch("corpus vocabulary does not match the model");
    const int D = bow.num_docs();
    Mat theta(D, K);
    constexpr int kChunk = 256;
    for (int start = 0; start < D; start += kChunk) {
        const int b = std::min(kChunk, D - start);
        Mat x(b, V);
        for (int i = 0; i < b; ++i) {
            const SparseDoc& doc = bow.docs[static_cast<size_t>(start + i)];
            if (doc.total <= 0) throw ZeroLengthDocument(doc.id);
            for (const auto& [v, c] : doc.counts)
                x.at(i, v) = static_cast<double>(c) / doc.total;
        }
        auto [mu, logvar] = encode_batch(params, x);
        for (int i = 0; i < b; ++i) {
            const auto t = softmax_vec(mu.row(i));
            for (int k = 0; k < K; ++k) theta.at(start + i, k) = t[static_cast<size_t>(k)];
        }
    }
    return theta;
}

std::vector<std::vector<int>> top_words(const Mat& beta, int m) {
    if (m < 1 || m > beta.cols)
        throw InputError("requested " + std::to_string(m) + " top words from a vocabulary of " +
                         std::to_string(beta.cols));
    std::vector<std::vector<int>> out(static_cast<size_t>(beta.rows));
    std::vector<int> idx(static_cast<size_t>(beta.cols));
    for (int k = 0; k < beta.rows; ++k) {
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
            const double xa = beta.at(k, a), xb = beta.at(k, b);
            if (xa != xb) return xa > xb;
            return a < b;
        });
        out[static_cast<size_t>(k)].assign(idx.begin(), idx.begin() + m);
    }
    return out;
}

}  // namespace keyetm
