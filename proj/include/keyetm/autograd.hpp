#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "keyetm/mat.hpp"
#include "keyetm/rng.hpp"

namespace keyetm::ag {

// node in a define-by-run graph; the graph is rebuilt per minibatch
struct Node {
    Mat value;
    Mat grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backprop;  // adds into inputs' grads
    const char* op = "leaf";

    void ensure_grad() {
        if (grad.v.empty()) grad = Mat(value.rows, value.cols);
    }
};

using NodePtr = std::shared_ptr<Node>;

NodePtr constant(Mat v);
NodePtr param(Mat v);

NodePtr matmul(const NodePtr& a, const NodePtr& b);     // (m,k)·(k,n)
NodePtr matmul_nt(const NodePtr& a, const NodePtr& b);  // (m,k)·(n,k)ᵀ
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr sub(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);
NodePtr add_bias(const NodePtr& a, const NodePtr& bias);  // bias shape (1,n)
NodePtr scale(const NodePtr& a, double c);
NodePtr add_scalar(const NodePtr& a, double c);
NodePtr square(const NodePtr& a);
NodePtr exp(const NodePtr& a);
NodePtr log(const NodePtr& a);
NodePtr softplus(const NodePtr& a);
NodePtr softmax_rows(const NodePtr& a);
NodePtr softmax_cols(const NodePtr& a);
NodePtr clamp(const NodePtr& a, double lo, double hi);
NodePtr sum(const NodePtr& a);  // (1,1)
NodePtr gather_rows(const NodePtr& a, std::vector<int> rows);
NodePtr gather_cols(const NodePtr& a, std::vector<int> cols);
NodePtr scale_rows(const NodePtr& a, std::vector<double> w);  // row r times w[r]
NodePtr transpose(const NodePtr& a);

// inverted dropout; eval mode and rate 0 are the identity
Mat dropout_mask(int rows, int cols, double rate, Rng& rng);
NodePtr dropout_with_mask(const NodePtr& a, Mat mask);
NodePtr dropout(const NodePtr& a, double rate, Rng& rng, bool train);

// mu + exp(0.5·logvar)⊙eps, built from primitives
NodePtr gaussian_reparameterize(const NodePtr& mu, const NodePtr& logvar, const NodePtr& eps);

void backward(const NodePtr& loss);
// warns (once per call) about parameters the loss does not reach; their grad is zeroed
void backward(const NodePtr& loss, const std::vector<NodePtr>& params);
void zero_grad(const std::vector<NodePtr>& params);

struct AdamConfig {
    double lr = 0.005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

struct AdamState {
    AdamConfig cfg;
    long long step = 0;
    std::vector<Mat> m;
    std::vector<Mat> v;
};

void adam_step(const std::vector<NodePtr>& params, AdamState& state);

}  // namespace keyetm::ag
