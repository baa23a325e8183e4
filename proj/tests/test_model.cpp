#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>
#include <vector>

#include "keyetm/errors.hpp"
#include "keyetm/model.hpp"

using namespace keyetm;
namespace ag = keyetm::ag;

namespace {

Mat rnd(int r, int c, Rng& g, double lo = -1.0, double hi = 1.0) {
    Mat m(r, c);
    for (auto& x : m.v) x = g.uniform(lo, hi);
    return m;
}

EmbeddingMatrix random_embeddings(int v, int l, uint64_t seed) {
    Rng g(seed);
    EmbeddingMatrix emb;
    emb.rho = rnd(v, l, g);
    emb.vocab_hash = seed;
    return emb;
}

ModelParams random_params(int v, int k, int l, int h, uint64_t seed) {
    TrainConfig cfg;
    cfg.k = k;
    cfg.hidden_size = h;
    cfg.rng_seed = seed;
    ModelParams p = init_params(v, random_embeddings(v, l, seed + 7), cfg);
    // nonzero biases so bias gradients and broadcasts are exercised
    Rng g(seed + 13);
    for (auto& x : p.b1->value.v) x = g.uniform(-0.1, 0.1);
    for (auto& x : p.b2->value.v) x = g.uniform(-0.1, 0.1);
    for (auto& x : p.bmu->value.v) x = g.uniform(-0.1, 0.1);
    for (auto& x : p.blogvar->value.v) x = g.uniform(-0.1, 0.1);
    return p;
}

// loop-only reimplementations used as oracles for the graph-built losses

double softplus_ref(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

std::vector<double> softmax_ref(const std::vector<double>& z) {
    double mx = z[0];
    for (const double x : z) mx = std::max(mx, x);
    double sum = 0.0;
    std::vector<double> out(z.size());
    for (size_t i = 0; i < z.size(); ++i) sum += (out[i] = std::exp(z[i] - mx));
    for (auto& x : out) x /= sum;
    return out;
}

Mat beta_ref(const Mat& rho, const Mat& alpha) {
    Mat beta(alpha.rows, rho.rows);
    for (int k = 0; k < alpha.rows; ++k) {
        std::vector<double> logits(static_cast<size_t>(rho.rows));
        for (int v = 0; v < rho.rows; ++v) {
            double dot = 0.0;
            for (int j = 0; j < rho.cols; ++j) dot += rho.at(v, j) * alpha.at(k, j);
            logits[static_cast<size_t>(v)] = dot;
        }
        const auto row = softmax_ref(logits);
        for (int v = 0; v < rho.rows; ++v) beta.at(k, v) = row[static_cast<size_t>(v)];
    }
    return beta;
}

// eval-mode encoder, one document at a time
std::pair<std::vector<double>, std::vector<double>> encode_ref(const ModelParams& p,
                                                               const std::vector<double>& xn) {
    const int h1n = p.W1->value.rows, h2n = p.W2->value.rows, k = p.Wmu->value.rows;
    std::vector<double> h1(static_cast<size_t>(h1n)), h2(static_cast<size_t>(h2n));
    for (int j = 0; j < h1n; ++j) {
        double a = p.b1->value.at(0, j);
        for (int v = 0; v < p.W1->value.cols; ++v)
            a += p.W1->value.at(j, v) * xn[static_cast<size_t>(v)];
        h1[static_cast<size_t>(j)] = softplus_ref(a);
    }
    for (int j = 0; j < h2n; ++j) {
        double a = p.b2->value.at(0, j);
        for (int i = 0; i < h1n; ++i) a += p.W2->value.at(j, i) * h1[static_cast<size_t>(i)];
        h2[static_cast<size_t>(j)] = softplus_ref(a);
    }
    std::vector<double> mu(static_cast<size_t>(k)), logvar(static_cast<size_t>(k));
    for (int t = 0; t < k; ++t) {
        double am = p.bmu->value.at(0, t), al = p.blogvar->value.at(0, t);
        for (int j = 0; j < h2n; ++j) {
            am += p.Wmu->value.at(t, j) * h2[static_cast<size_t>(j)];
            al += p.Wlogvar->value.at(t, j) * h2[static_cast<size_t>(j)];
        }
        mu[static_cast<size_t>(t)] = am;
        logvar[static_cast<size_t>(t)] = std::min(20.0, std::max(-20.0, al));
    }
    return {mu, logvar};
}

// regularizer word-topic distributions before document masking, no dropout
Mat wmean_ref(const ModelParams& p) {
    const int v_all = p.W1->value.cols, h1n = p.W1->value.rows, h2n = p.W2->value.rows,
              k = p.Wmu->value.rows;
    Mat out(v_all, k);
    for (int v = 0; v < v_all; ++v) {
        std::vector<double> m(static_cast<size_t>(h1n)), n(static_cast<size_t>(h2n));
        for (int j = 0; j < h1n; ++j)
            m[static_cast<size_t>(j)] = softplus_ref(p.W1->value.at(j, v) + p.b1->value.at(0, j));
        for (int j = 0; j < h2n; ++j) {
            double a = p.b2->value.at(0, j);
            for (int i = 0; i < h1n; ++i) a += p.W2->value.at(j, i) * m[static_cast<size_t>(i)];
            n[static_cast<size_t>(j)] = softplus_ref(a);
        }
        std::vector<double> logits(static_cast<size_t>(k));
        for (int t = 0; t < k; ++t) {
            double a = p.bmu->value.at(0, t);
            for (int j = 0; j < h2n; ++j) a += p.Wmu->value.at(t, j) * n[static_cast<size_t>(j)];
            logits[static_cast<size_t>(t)] = a;
        }
        const auto row = softmax_ref(logits);
        for (int t = 0; t < k; ++t) out.at(v, t) = row[static_cast<size_t>(t)];
    }
    return out;
}

std::pair<Mat, Mat> random_batch(int b, int v, Rng& g) {
    Mat xc(b, v), xn(b, v);
    for (int d = 0; d < b; ++d) {
        double total = 0.0;
        for (int t = 0; t < v; ++t)
            if (g.uniform() < 0.4) total += (xc.at(d, t) = 1.0 + static_cast<double>(g.below(5)));
        if (total == 0.0) total = xc.at(d, d % v) = 2.0;
        for (int t = 0; t < v; ++t) xn.at(d, t) = xc.at(d, t) / total;
    }
    return {xc, xn};
}

PriorMatrix random_prior(int v, int k, Rng& g) {
    PriorMatrix prior;
    prior.gamma_prior = Mat(v, k);
    for (int t = 0; t < v; ++t)
        if (g.uniform() < 0.3) prior.gamma_prior.at(t, static_cast<int>(g.below(k))) = 1.0;
    if (prior.gamma_prior.v == std::vector<double>(prior.gamma_prior.size(), 0.0))
        prior.gamma_prior.at(0, 0) = 1.0;
    return prior;
}

GuidedSet guided_of(const PriorMatrix& prior) {
    GuidedSet s;
    for (int v = 0; v < prior.gamma_prior.rows; ++v)
        for (int k = 0; k < prior.gamma_prior.cols; ++k)
            if (prior.gamma_prior.at(v, k) != 0.0) {
                s.indices.push_back(v);
                break;
            }
    return s;
}

// three topics over thirty terms; documents draw mostly from their own block
BowCorpus planted_corpus(int docs_per_topic, uint64_t seed) {
    Rng g(seed);
    BowCorpus bow;
    bow.vocab_size = 30;
    for (int t = 0; t < 3; ++t)
        for (int d = 0; d < docs_per_topic; ++d) {
            std::map<int, int> counts;
            for (int n = 0; n < 25; ++n) {
                const int v = g.uniform() < 0.85 ? 10 * t + static_cast<int>(g.below(10))
                                                 : static_cast<int>(g.below(30));
                ++counts[v];
            }
            SparseDoc doc;
            doc.id = "t" + std::to_string(t) + "_" + std::to_string(d);
            doc.label = "topic" + std::to_string(t);
            doc.counts.assign(counts.begin(), counts.end());
            doc.total = 25;
            bow.docs.push_back(std::move(doc));
        }
    return bow;
}

}  // namespace

TEST_CASE("topic-word distributions from embeddings") {
    SUBCASE("zero topic vector gives the uniform row") {
        Rng g(3);
        Mat rho = rnd(7, 4, g);
        Mat alpha(2, 4);
        for (int j = 0; j < 4; ++j) alpha.at(1, j) = g.uniform();
        const Mat beta = compute_beta(rho, alpha);
        for (int v = 0; v < 7; ++v) CHECK(beta.at(0, v) == doctest::Approx(1.0 / 7).epsilon(1e-12));
    }
    SUBCASE("hand-computed three-term instance") {
        // logits for the single topic: rho * [1, 0] = [0.1, 0.7, -0.2]
        Mat rho(3, 2, {0.1, 5.0, 0.7, -3.0, -0.2, 2.0});
        Mat alpha(1, 2, {1.0, 0.0});
        const Mat beta = compute_beta(rho, alpha);
        const double z = std::exp(0.1) + std::exp(0.7) + std::exp(-0.2);
        CHECK(beta.at(0, 0) == doctest::Approx(std::exp(0.1) / z).epsilon(1e-12));
        CHECK(beta.at(0, 1) == doctest::Approx(std::exp(0.7) / z).epsilon(1e-12));
        CHECK(beta.at(0, 2) == doctest::Approx(std::exp(-0.2) / z).epsilon(1e-12));
    }
    SUBCASE("rows are distributions and match the loop oracle") {
        Rng g(11);
        Mat rho = rnd(20, 6, g), alpha = rnd(4, 6, g, -2.0, 2.0);
        const Mat beta = compute_beta(rho, alpha);
        const Mat ref = beta_ref(rho, alpha);
        for (int k = 0; k < 4; ++k) {
            double sum = 0.0;
            for (int v = 0; v < 20; ++v) {
                CHECK(beta.at(k, v) > 0.0);
                CHECK(beta.at(k, v) == doctest::Approx(ref.at(k, v)).epsilon(1e-12));
                sum += beta.at(k, v);
            }
            CHECK(std::abs(sum - 1.0) < 1e-9);
        }
    }
    SUBCASE("width mismatch is rejected") {
        CHECK_THROWS_AS(compute_beta(Mat(3, 2), Mat(2, 5)), ShapeMismatch);
    }
}

TEST_CASE("encoder") {
    SUBCASE("zero weights pass the biases through") {
        ModelParams p = random_params(6, 2, 3, 4, 21);
        p.Wmu->value = Mat(2, 4);
        p.Wlogvar->value = Mat(2, 4);
        p.bmu->value = Mat(1, 2, {0.3, -0.2});
        p.blogvar->value = Mat(1, 2, {-1.0, 0.5});
        Rng g(5);
        Mat xn(2, 6);
        for (int d = 0; d < 2; ++d) {
            for (int v = 0; v < 6; ++v) xn.at(d, v) = g.uniform(0.0, 1.0);
        }
        const auto [mu, logvar] = encode_batch(p, xn);
        for (int d = 0; d < 2; ++d) {
            CHECK(mu.at(d, 0) == 0.3);
            CHECK(mu.at(d, 1) == -0.2);
            CHECK(logvar.at(d, 0) == -1.0);
            CHECK(logvar.at(d, 1) == 0.5);
        }
    }
    SUBCASE("matches the loop oracle on random weights") {
        ModelParams p = random_params(9, 3, 4, 5, 22);
        Rng g(6);
        const auto [xc, xn] = random_batch(3, 9, g);
        const auto [mu, logvar] = encode_batch(p, xn);
        CHECK(mu.rows == 3);
        CHECK(mu.cols == 3);
        for (int d = 0; d < 3; ++d) {
            std::vector<double> row(xn.row(d).begin(), xn.row(d).end());
            const auto [rmu, rlogvar] = encode_ref(p, row);
            for (int k = 0; k < 3; ++k) {
                CHECK(mu.at(d, k) == doctest::Approx(rmu[static_cast<size_t>(k)]).epsilon(1e-12));
                CHECK(logvar.at(d, k) ==
                      doctest::Approx(rlogvar[static_cast<size_t>(k)]).epsilon(1e-12));
            }
        }
    }
    SUBCASE("input width is checked") {
        ModelParams p = random_params(6, 2, 3, 4, 23);
        CHECK_THROWS_AS(encode_batch(p, Mat(1, 5)), ShapeMismatch);
    }
}

TEST_CASE("logistic-normal document draws") {
    SUBCASE("symmetric mean gives the uniform point in eval mode") {
        std::vector<double> mu{0.0, 0.0, 0.0}, logvar{-30.0, -30.0, -30.0};
        const DocInference d = sample_theta(mu, logvar, nullptr);
        for (int k = 0; k < 3; ++k) CHECK(d.theta[static_cast<size_t>(k)] == doctest::Approx(1.0 / 3));
        CHECK(d.delta == mu);
    }
    SUBCASE("dominant mean concentrates the topic") {
        std::vector<double> mu{10.0, 0.0, 0.0}, logvar{0.0, 0.0, 0.0};
        const DocInference d = sample_theta(mu, logvar, nullptr);
        CHECK(d.theta[0] == doctest::Approx(0.99991).epsilon(1e-4));
    }
    SUBCASE("sampling is reproducible and lands on the simplex") {
        std::vector<double> mu{0.4, -0.3}, logvar{0.2, -0.5};
        Rng a(7), b(7);
        const DocInference da = sample_theta(mu, logvar, &a);
        const DocInference db = sample_theta(mu, logvar, &b);
        CHECK(da.delta == db.delta);
        CHECK(da.theta == db.theta);
        CHECK(da.delta != mu);
        double sum = 0.0;
        for (const double t : da.theta) {
            CHECK(t > 0.0);
            sum += t;
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
        // delta matches the closed form for the drawn eps
        Rng c(7);
        for (size_t k = 0; k < mu.size(); ++k) {
            const double eps = c.normal();
            CHECK(da.delta[k] == doctest::Approx(mu[k] + std::exp(0.5 * logvar[k]) * eps));
        }
    }
}

TEST_CASE("reconstruction log-likelihood") {
    SUBCASE("single-term vocabulary is certain") {
        Mat beta(2, 1, {1.0, 1.0});
        std::vector<double> x{5.0}, theta{0.3, 0.7};
        CHECK(std::abs(reconstruction_loglik(x, theta, beta)) < 1e-8);
    }
    SUBCASE("one-hot mixture collapses to a single row") {
        Rng g(9);
        Mat rho = rnd(8, 3, g), alpha = rnd(3, 3, g);
        const Mat beta = compute_beta(rho, alpha);
        std::vector<double> x{1.0, 0.0, 2.0, 0.0, 4.0, 0.0, 0.0, 1.0};
        std::vector<double> theta{0.0, 1.0, 0.0};
        double expected = 0.0;
        for (int v = 0; v < 8; ++v)
            expected += x[static_cast<size_t>(v)] * std::log(beta.at(1, v) + 1e-10);
        CHECK(reconstruction_loglik(x, theta, beta) == doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("equals the per-token sum") {
        Rng g(10);
        Mat rho = rnd(6, 3, g), alpha = rnd(2, 3, g);
        const Mat beta = compute_beta(rho, alpha);
        const std::vector<int> tokens{0, 0, 3, 5, 5, 5, 2};
        std::vector<double> x(6, 0.0), theta{0.6, 0.4};
        double expected = 0.0;
        for (const int w : tokens) {
            x[static_cast<size_t>(w)] += 1.0;
            double p = 0.0;
            for (int k = 0; k < 2; ++k) p += theta[static_cast<size_t>(k)] * beta.at(k, w);
            expected += std::log(p + 1e-10);
        }
        CHECK(reconstruction_loglik(x, theta, beta) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("divergence from the standard normal") {
    CHECK(kl_to_standard_normal(std::vector<double>{0.0, 0.0},
                                std::vector<double>{0.0, 0.0}) == 0.0);
    CHECK(kl_to_standard_normal(std::vector<double>{1.0, 0.0},
                                std::vector<double>{0.0, 0.0}) == doctest::Approx(0.5));
    Rng g(12);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> mu(4), logvar(4);
        for (auto& x : mu) x = g.uniform(-2.0, 2.0);
        for (auto& x : logvar) x = g.uniform(-3.0, 2.0);
        double expected = 0.0;
        for (size_t k = 0; k < 4; ++k) {
            const double var = std::exp(logvar[k]);
            expected += 0.5 * (var + mu[k] * mu[k] - 1.0 - std::log(var));
        }
        const double got = kl_to_standard_normal(mu, logvar);
        CHECK(got >= 0.0);
        CHECK(got == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("regularizer word-topic distributions") {
    ModelParams p = random_params(6, 2, 3, 4, 31);
    SUBCASE("all-zero mask blanks the matrix") {
        const Mat gm = gamma_mu_matrix(p, std::vector<double>(6, 0.0));
        for (const double x : gm.v) CHECK(x == 0.0);
    }
    SUBCASE("unmasked rows are distributions over topics") {
        const Mat gm = gamma_mu_matrix(p, std::vector<double>(6, 1.0));
        for (int v = 0; v < 6; ++v) {
            double sum = 0.0;
            for (int k = 0; k < 2; ++k) {
                CHECK(gm.at(v, k) > 0.0);
                sum += gm.at(v, k);
            }
            CHECK(std::abs(sum - 1.0) < 1e-9);
        }
    }
    SUBCASE("matches the step-by-step loop evaluation") {
        std::vector<double> mask{1.0, 0.0, 1.0, 1.0, 0.0, 1.0};
        const Mat gm = gamma_mu_matrix(p, mask);
        const Mat ref = wmean_ref(p);
        for (int v = 0; v < 6; ++v)
            for (int k = 0; k < 2; ++k)
                CHECK(gm.at(v, k) ==
                      doctest::Approx(ref.at(v, k) * mask[static_cast<size_t>(v)]).epsilon(1e-12));
    }
    SUBCASE("mask length is checked") {
        CHECK_THROWS_AS(gamma_mu_matrix(p, std::vector<double>(5, 1.0)), ShapeMismatch);
    }
}

TEST_CASE("batch loss") {
    const int v = 14, k = 3, l = 4, h = 5, b = 4;
    ModelParams p = random_params(v, k, l, h, 41);
    Rng g(42);
    const auto [xc, xn] = random_batch(b, v, g);
    PriorMatrix prior = random_prior(v, k, g);
    GuidedSet guided = guided_of(prior);
    REQUIRE(guided.size() >= 2);

    SUBCASE("negative elbo matches the loop oracle in eval mode") {
        TrainConfig cfg;
        cfg.k = k;
        const BatchLoss loss = build_batch_loss(p, xc, xn, nullptr, nullptr, cfg, BatchNoise{});
        const Mat beta = beta_ref(p.rho, p.alpha->value);
        double recon = 0.0, kl = 0.0;
        for (int d = 0; d < b; ++d) {
            std::vector<double> row(xn.row(d).begin(), xn.row(d).end());
            const auto [mu, logvar] = encode_ref(p, row);
            const auto theta = softmax_ref(mu);
            std::vector<double> counts(xc.row(d).begin(), xc.row(d).end());
            recon += reconstruction_loglik(counts, theta, beta);
            kl += kl_to_standard_normal(mu, logvar);
        }
        CHECK(loss.recon == doctest::Approx(recon).epsilon(1e-9));
        CHECK(loss.kl == doctest::Approx(kl).epsilon(1e-9));
        CHECK(loss.total->value.v[0] == doctest::Approx(kl - recon).epsilon(1e-9));
        CHECK(loss.l_mu == 0.0);
        CHECK(loss.l_alpha == 0.0);
    }

    SUBCASE("encoder-side regularizer matches the brute-force double loop") {
        TrainConfig cfg;
        cfg.k = k;
        cfg.lambda1 = 15.0;
        const BatchLoss loss = build_batch_loss(p, xc, xn, &prior, &guided, cfg, BatchNoise{});
        const Mat wm = wmean_ref(p);
        double expected = 0.0;
        for (int d = 0; d < b; ++d)
            for (const int t : guided.indices)
                for (int j = 0; j < k; ++j) {
                    const double gmu = xc.at(d, t) > 0.0 ? wm.at(t, j) : 0.0;
                    const double diff = gmu - prior.gamma_prior.at(t, j);
                    expected += diff * diff;
                }
        CHECK(loss.l_mu == doctest::Approx(expected).epsilon(1e-9));
        CHECK(loss.total->value.v[0] ==
              doctest::Approx(loss.kl - loss.recon + 15.0 * loss.l_mu).epsilon(1e-12));
    }

    SUBCASE("topic-word regularizer matches the brute-force loop") {
        TrainConfig cfg;
        cfg.k = k;
        cfg.lambda2 = 10.0;
        const BatchLoss loss = build_batch_loss(p, xc, xn, &prior, &guided, cfg, BatchNoise{});
        const Mat beta = beta_ref(p.rho, p.alpha->value);
        double expected = 0.0;
        for (const int t : guided.indices)
            for (int j = 0; j < k; ++j) {
                const double diff = beta.at(j, t) - prior.gamma_prior.at(t, j);
                expected += diff * diff;
            }
        CHECK(loss.l_alpha == doctest::Approx(expected).epsilon(1e-9));
        CHECK(loss.total->value.v[0] ==
              doctest::Approx(loss.kl - loss.recon + 10.0 * loss.l_alpha).epsilon(1e-12));
    }

    SUBCASE("topic-axis flag normalizes over topics instead") {
        TrainConfig cfg;
        cfg.k = k;
        cfg.lambda2 = 1.0;
        cfg.gamma_alpha_topic_axis = true;
        const BatchLoss loss = build_batch_loss(p, xc, xn, &prior, &guided, cfg, BatchNoise{});
        // oracle: per-term softmax over the K logits
        Mat logits(k, v);
        for (int j = 0; j < k; ++j)
            for (int t = 0; t < v; ++t) {
                double dot = 0.0;
                for (int e = 0; e < l; ++e) dot += p.rho.at(t, e) * p.alpha->value.at(j, e);
                logits.at(j, t) = dot;
            }
        double expected = 0.0;
        for (const int t : guided.indices) {
            std::vector<double> col(static_cast<size_t>(k));
            for (int j = 0; j < k; ++j) col[static_cast<size_t>(j)] = logits.at(j, t);
            const auto ga = softmax_ref(col);
            for (int j = 0; j < k; ++j) {
                const double diff = ga[static_cast<size_t>(j)] - prior.gamma_prior.at(t, j);
                expected += diff * diff;
            }
        }
        CHECK(loss.l_alpha == doctest::Approx(expected).epsilon(1e-9));
    }

    SUBCASE("symmetric weights give the worked half-half example") {
        // zeroed network: every regularizer row is softmax(0) = [1/2, 1/2]
        ModelParams z = random_params(3, 2, 2, 2, 43);
        for (const auto& node : z.trainable()) node->value.v.assign(node->value.size(), 0.0);
        Mat one_xc(1, 3), one_xn(1, 3);
        one_xc.at(0, 1) = 4.0;
        one_xn.at(0, 1) = 1.0;
        PriorMatrix pm;
        pm.gamma_prior = Mat(3, 2);
        pm.gamma_prior.at(1, 0) = 1.0;
        GuidedSet gs;
        gs.indices = {1};
        TrainConfig cfg;
        cfg.k = 2;
        cfg.lambda1 = 1.0;
        const BatchLoss loss = build_batch_loss(z, one_xc, one_xn, &pm, &gs, cfg, BatchNoise{});
        CHECK(loss.l_mu == doctest::Approx(0.5).epsilon(1e-12));
    }

    SUBCASE("guided words absent from every document still contribute the prior mass") {
        // one guided word, not contained in the single document
        ModelParams z = random_params(3, 2, 2, 2, 44);
        Mat one_xc(1, 3), one_xn(1, 3);
        one_xc.at(0, 0) = 2.0;
        one_xn.at(0, 0) = 1.0;
        PriorMatrix pm;
        pm.gamma_prior = Mat(3, 2);
        pm.gamma_prior.at(2, 0) = 1.0;
        pm.gamma_prior.at(2, 1) = 1.0;
        GuidedSet gs;
        gs.indices = {2};
        TrainConfig cfg;
        cfg.k = 2;
        cfg.lambda1 = 2.0;
        const BatchLoss loss = build_batch_loss(z, one_xc, one_xn, &pm, &gs, cfg, BatchNoise{});
        CHECK(loss.l_mu == doctest::Approx(2.0).epsilon(1e-12));  // ||0 - [1,1]||^2
    }

    SUBCASE("regularizers require prior inputs") {
        TrainConfig cfg;
        cfg.k = k;
        cfg.lambda1 = 1.0;
        CHECK_THROWS_AS(build_batch_loss(p, xc, xn, nullptr, nullptr, cfg, BatchNoise{}),
                        InputError);
        GuidedSet empty;
        CHECK_THROWS_AS(build_batch_loss(p, xc, xn, &prior, &empty, cfg, BatchNoise{}),
                        EmptyGuidedSet);
        PriorMatrix wrong;
        wrong.gamma_prior = Mat(v + 1, k);
        CHECK_THROWS_AS(build_batch_loss(p, xc, xn, &wrong, &guided, cfg, BatchNoise{}),
                        VocabMismatch);
    }
}

TEST_CASE("full objective gradient matches finite differences") {
    const int v = 12, k = 3, l = 4, h = 5, b = 3;
    ModelParams p = random_params(v, k, l, h, 51);
    Rng g(52);
    const auto [xc, xn] = random_batch(b, v, g);
    PriorMatrix prior = random_prior(v, k, g);
    GuidedSet guided = guided_of(prior);
    TrainConfig cfg;
    cfg.k = k;
    cfg.lambda1 = 3.0;
    cfg.lambda2 = 2.0;

    BatchNoise noise;
    Rng ng(53);
    noise.eps = rnd(b, k, ng);
    noise.enc_mask = ag::dropout_mask(b, h, 0.25, ng);
    noise.gmu_mask = ag::dropout_mask(guided.size(), h, 0.25, ng);

    auto eval = [&] { return build_batch_loss(p, xc, xn, &prior, &guided, cfg, noise); };

    BatchLoss loss = eval();
    ag::zero_grad(p.trainable());
    ag::backward(loss.total, p.trainable());

    const double step = 1e-6;
    double worst = 0.0;
    for (const auto& node : p.trainable()) {
        for (size_t i = 0; i < node->value.size(); ++i) {
            const double keep = node->value.v[i];
            node->value.v[i] = keep + step;
            const double up = eval().total->value.v[0];
            node->value.v[i] = keep - step;
            const double down = eval().total->value.v[0];
            node->value.v[i] = keep;
            const double numeric = (up - down) / (2.0 * step);
            const double analytic = node->grad.v[i];
            const double err = std::abs(analytic - numeric) /
                               (1e-7 + 1e-5 * std::max(std::abs(analytic), std::abs(numeric)));
            worst = std::max(worst, err);
        }
    }
    CHECK(worst <= 1.0);
}

TEST_CASE("training") {
    const BowCorpus bow = planted_corpus(20, 61);
    const EmbeddingMatrix emb = random_embeddings(30, 8, 62);

    TrainConfig cfg;
    cfg.k = 3;
    cfg.epochs = 25;
    cfg.batch_size = 10;
    cfg.learning_rate = 0.01;
    cfg.hidden_size = 16;
    cfg.rng_seed = 63;
    cfg.early_stop_window = 0;

    SUBCASE("loss falls, outputs stay on simplexes, embeddings stay frozen") {
        const TrainResult r = train(bow, emb, nullptr, nullptr, cfg);
        REQUIRE(r.history.size() == 25);
        CHECK(r.history.front().total > r.history.back().total);
        for (const auto& e : r.history) {
            CHECK(std::isfinite(e.total));
            CHECK(e.l_mu == 0.0);
            CHECK(e.l_alpha == 0.0);
            CHECK(e.total == doctest::Approx(e.neg_elbo));
        }
        CHECK(r.params.rho.v == emb.rho.v);  // bit-identical, never touched
        const Mat beta = compute_beta(r.params.rho, r.params.alpha->value);
        for (int k = 0; k < 3; ++k) {
            double sum = 0.0;
            for (int v = 0; v < 30; ++v) {
                CHECK(beta.at(k, v) > 0.0);
                sum += beta.at(k, v);
            }
            CHECK(std::abs(sum - 1.0) < 1e-9);
        }
        const Mat theta = infer_theta_all(r.params, bow);
        for (int d = 0; d < theta.rows; ++d) {
            double sum = 0.0;
            for (int k = 0; k < 3; ++k) {
                CHECK(theta.at(d, k) > 0.0);
                sum += theta.at(d, k);
            }
            CHECK(std::abs(sum - 1.0) < 1e-9);
        }
    }

    SUBCASE("identical seeds reproduce bitwise; different seeds do not") {
        const TrainResult a = train(bow, emb, nullptr, nullptr, cfg);
        const TrainResult b = train(bow, emb, nullptr, nullptr, cfg);
        CHECK(a.params.alpha->value.v == b.params.alpha->value.v);
        CHECK(a.params.W1->value.v == b.params.W1->value.v);
        CHECK(a.params.Wmu->value.v == b.params.Wmu->value.v);
        for (size_t e = 0; e < a.history.size(); ++e)
            CHECK(a.history[e].total == b.history[e].total);
        TrainConfig other = cfg;
        other.rng_seed = 64;
        const TrainResult c = train(bow, emb, nullptr, nullptr, other);
        CHECK(a.params.alpha->value.v != c.params.alpha->value.v);
    }

    SUBCASE("zero-weight regularizers reduce to the unguided path bitwise") {
        Rng g(65);
        PriorMatrix prior = random_prior(30, 3, g);
        GuidedSet guided = guided_of(prior);
        const TrainResult unguided = train(bow, emb, nullptr, nullptr, cfg);
        const TrainResult with_prior = train(bow, emb, &prior, &guided, cfg);
        CHECK(unguided.params.alpha->value.v == with_prior.params.alpha->value.v);
        CHECK(unguided.params.W1->value.v == with_prior.params.W1->value.v);
        CHECK(unguided.params.Wlogvar->value.v == with_prior.params.Wlogvar->value.v);
        for (size_t e = 0; e < unguided.history.size(); ++e)
            CHECK(unguided.history[e].total == with_prior.history[e].total);
    }

    SUBCASE("guided run tracks the regularizers in its history") {
        Rng g(66);
        PriorMatrix prior = random_prior(30, 3, g);
        GuidedSet guided = guided_of(prior);
        TrainConfig guided_cfg = cfg;
        guided_cfg.epochs = 5;
        guided_cfg.lambda1 = 5.0;
        guided_cfg.lambda2 = 3.0;
        const TrainResult r = train(bow, emb, &prior, &guided, guided_cfg);
        for (const auto& e : r.history) {
            CHECK(e.l_mu > 0.0);
            CHECK(e.l_alpha > 0.0);
            CHECK(e.total == doctest::Approx(e.neg_elbo + 5.0 * e.l_mu + 3.0 * e.l_alpha)
                                 .epsilon(1e-9));
        }
    }

    SUBCASE("early stopping cuts the run short") {
        TrainConfig es = cfg;
        es.epochs = 50;
        es.early_stop_window = 1;
        es.early_stop_rel = 1e9;
        const TrainResult r = train(bow, emb, nullptr, nullptr, es);
        CHECK(r.early_stopped);
        CHECK(r.history.size() == 2);
    }

    SUBCASE("exploding updates abort with the offending batch") {
        TrainConfig bad = cfg;
        bad.learning_rate = 1e200;
        bad.epochs = 3;
        try {
            train(bow, emb, nullptr, nullptr, bad);
            FAIL("expected a non-finite loss");
        } catch (const NonFiniteLoss& e) {
            CHECK(e.epoch >= 0);
            CHECK(e.batch >= 0);
            CHECK(std::string(e.what()).find("batch documents:") != std::string::npos);
        }
    }

    SUBCASE("configuration is validated") {
        TrainConfig bad = cfg;
        bad.batch_size = 0;
        CHECK_THROWS_AS(train(bow, emb, nullptr, nullptr, bad), InputError);
        bad = cfg;
        bad.lambda1 = -1.0;
        CHECK_THROWS_AS(train(bow, emb, nullptr, nullptr, bad), InputError);
        bad = cfg;
        bad.lambda1 = 1.0;  // no prior supplied
        CHECK_THROWS_AS(train(bow, emb, nullptr, nullptr, bad), InputError);
        bad = cfg;
        bad.precision = "f32";
        CHECK_THROWS_AS(train(bow, emb, nullptr, nullptr, bad), InputError);
        const EmbeddingMatrix small = random_embeddings(29, 8, 67);
        CHECK_THROWS_AS(train(bow, small, nullptr, nullptr, cfg), VocabMismatch);
    }
}

TEST_CASE("warm-started topic embeddings") {
    const EmbeddingMatrix emb = random_embeddings(10, 4, 71);
    TrainConfig cfg;
    cfg.k = 2;
    cfg.hidden_size = 6;
    Rng g(72);
    const Mat warm = rnd(2, 4, g);
    const ModelParams p = init_params(10, emb, cfg, &warm);
    CHECK(p.alpha->value.v == warm.v);
    const Mat bad(3, 4);
    CHECK_THROWS_AS(init_params(10, emb, cfg, &bad), DimensionMismatch);
    CHECK_THROWS_AS(init_params(9, emb, cfg), VocabMismatch);
}

TEST_CASE("document inference") {
    ModelParams p = random_params(8, 3, 4, 5, 81);
    SparseDoc doc;
    doc.id = "d0";
    doc.counts = {{1, 2}, {4, 1}, {6, 3}};
    doc.total = 6;

    const auto theta = infer_theta(p, doc);
    REQUIRE(theta.size() == 3);
    double sum = 0.0;
    for (const double t : theta) {
        CHECK(t > 0.0);
        sum += t;
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
    CHECK(infer_theta(p, doc) == theta);  // eval path has no randomness

    SparseDoc empty;
    empty.id = "empty";
    CHECK_THROWS_AS(infer_theta(p, empty), ZeroLengthDocument);

    // the batched variant agrees with the one-document path
    BowCorpus bow;
    bow.vocab_size = 8;
    bow.docs = {doc, doc};
    const Mat all = infer_theta_all(p, bow);
    for (int k = 0; k < 3; ++k)
        CHECK(all.at(0, k) == doctest::Approx(theta[static_cast<size_t>(k)]).epsilon(1e-12));
}

TEST_CASE("top words") {
    SUBCASE("uniform row falls back to vocabulary order") {
        Mat beta(1, 6, std::vector<double>(6, 1.0 / 6));
        const auto top = top_words(beta, 4);
        CHECK(top[0] == std::vector<int>{0, 1, 2, 3});
    }
    SUBCASE("hand-ranked row") {
        Mat beta(2, 4, {0.1, 0.4, 0.2, 0.3, 0.25, 0.25, 0.25, 0.25});
        const auto top = top_words(beta, 3);
        CHECK(top[0] == std::vector<int>{1, 3, 2});
        CHECK(top[1] == std::vector<int>{0, 1, 2});
    }
    SUBCASE("agrees with a full sort on random rows") {
        Rng g(91);
        Mat beta = rnd(3, 12, g, 0.0, 1.0);
        const auto top = top_words(beta, 12);
        for (int k = 0; k < 3; ++k) {
            for (int i = 1; i < 12; ++i) {
                const double prev = beta.at(k, top[static_cast<size_t>(k)][i - 1]);
                const double cur = beta.at(k, top[static_cast<size_t>(k)][i]);
                CHECK(prev >= cur);
            }
            std::vector<int> sorted = top[static_cast<size_t>(k)];
            std::sort(sorted.begin(), sorted.end());
            for (int i = 0; i < 12; ++i) CHECK(sorted[static_cast<size_t>(i)] == i);
        }
    }
    SUBCASE("asking beyond the vocabulary is rejected") {
        CHECK_THROWS_AS(top_words(Mat(1, 3, {0.2, 0.5, 0.3}), 4), InputError);
    }
}
