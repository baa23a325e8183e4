#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "keyetm/autograd.hpp"
#include "keyetm/corpus.hpp"
#include "keyetm/embeddings.hpp"
#include "keyetm/mat.hpp"
#include "keyetm/prior.hpp"

namespace keyetm {

struct TrainConfig {
    int k = 3;
    int epochs = 150;
    int batch_size = 40;
    double learning_rate = 0.005;
    int hidden_size = 800;  // H1 = H2
    double lambda1 = 0.0;   // weight of the encoder-side regularizer
    double lambda2 = 0.0;   // weight of the topic-word regularizer
    double dropout_rate = 0.1;
    double thr = 0.5;
    uint64_t rng_seed = 1;
    std::string precision = "f64";
    bool gamma_alpha_topic_axis = false;  // per-word softmax over topics instead of beta rows
    bool alpha_warm_start = false;        // start alpha rows at the topic semantic vectors
    double early_stop_rel = 1e-4;         // stop when 20-epoch improvement falls below 0.01%
    int early_stop_window = 20;
    double adam_weight_decay = 0.0;
};

// encoder heads map the shared hidden state to K-dim mean and log-variance
struct ModelParams {
    ag::NodePtr alpha;    // K x L
    ag::NodePtr W1, b1;   // H1 x V, 1 x H1
    ag::NodePtr W2, b2;   // H2 x H1, 1 x H2
    ag::NodePtr Wmu, bmu;  // K x H2, 1 x K
    ag::NodePtr Wlogvar, blogvar;
    Mat rho;  // V x L, frozen
    uint64_t vocab_hash = 0;

    int vocab_size() const { return W1->value.cols; }
    int num_topics() const { return Wmu->value.rows; }
    int embed_dim() const { return alpha->value.cols; }
    int hidden_size() const { return W1->value.rows; }
    std::vector<ag::NodePtr> trainable() const {
        return {alpha, W1, b1, W2, b2, Wmu, bmu, Wlogvar, blogvar};
    }
};

struct DocInference {
    std::vector<double> mu;
    std::vector<double> logvar;
    std::vector<double> delta;
    std::vector<double> theta;
};

struct EpochStats {
    int epoch = 0;
    double neg_elbo = 0.0;
    double l_mu = 0.0;
    double l_alpha = 0.0;
    double total = 0.0;
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochStats> history;
    bool early_stopped = false;
};

// frozen stochastic draws for one batch, so a loss can be rebuilt exactly
struct BatchNoise {
    Mat eps;       // B x K
    Mat enc_mask;  // B x H2; empty = no encoder dropout
    Mat gmu_mask;  // |S| x H2; empty = no regularizer dropout
};

struct BatchLoss {
    ag::NodePtr total;
    double recon = 0.0;
    double kl = 0.0;
    double l_mu = 0.0;
    double l_alpha = 0.0;
};

ModelParams init_params(int vocab_size, const EmbeddingMatrix& emb, const TrainConfig& config,
                        const Mat* alpha_init = nullptr);

Mat compute_beta(const Mat& rho, const Mat& alpha);  // K x V, rows on the simplex

// evaluation-mode encoder (no dropout): returns mu and clamped logvar rows
std::pair<Mat, Mat> encode_batch(const ModelParams& params, const Mat& x_norm);

DocInference sample_theta(std::span<const double> mu, std::span<const double> logvar,
                          Rng* rng);  // rng == nullptr: delta = mu

double reconstruction_loglik(std::span<const double> x_counts, std::span<const double> theta,
                             const Mat& beta);
double kl_to_standard_normal(std::span<const double> mu, std::span<const double> logvar);

// full regularizer path over all vocabulary rows, mask applied last
Mat gamma_mu_matrix(const ModelParams& params, const std::vector<double>& doc_mask);

BatchLoss build_batch_loss(const ModelParams& params, const Mat& x_counts, const Mat& x_norm,
                           const PriorMatrix* prior, const GuidedSet* guided,
                           const TrainConfig& config, const BatchNoise& noise);

TrainResult train(const BowCorpus& bow, const EmbeddingMatrix& emb, const PriorMatrix* prior,
                  const GuidedSet* guided, const TrainConfig& config,
                  const Mat* alpha_init = nullptr,
                  const std::function<void(const EpochStats&)>& progress = nullptr);

std::vector<double> infer_theta(const ModelParams& params, const SparseDoc& doc);
Mat infer_theta_all(const ModelParams& params, const BowCorpus& bow);  // D x K

// per-topic m best terms, ties broken by vocabulary index
std::vector<std::vector<int>> top_words(const Mat& beta, int m);

}  // namespace keyetm
