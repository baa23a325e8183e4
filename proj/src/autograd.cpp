#include "keyetm/autograd.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <iostream>
#include <unordered_set>

#include "keyetm/errors.hpp"

namespace keyetm::ag {
namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;

EMap emap(Mat& m) { return EMap(m.v.data(), m.rows, m.cols); }

void check_finite(const Mat& m, const char* op) {
    for (const double x : m.v)
        if (!std::isfinite(x)) throw NonFiniteValue(op);
}

NodePtr make(const char* op, Mat value, std::vector<NodePtr> inputs,
             std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->value = std::move(value);
    check_finite(n->value, op);
    for (const auto& in : inputs)
        if (in->requires_grad) n->requires_grad = true;
    if (n->requires_grad) {
        n->inputs = std::move(inputs);
        n->backprop = std::move(backprop);
    }
    return n;
}

void require_same_shape(const NodePtr& a, const NodePtr& b, const char* op) {
    if (a->value.rows != b->value.rows || a->value.cols != b->value.cols)
        throw ShapeMismatch(std::string(op) + ": " + std::to_string(a->value.rows) + "x" +
                            std::to_string(a->value.cols) + " vs " +
                            std::to_string(b->value.rows) + "x" +
                            std::to_string(b->value.cols));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

NodePtr constant(Mat v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    check_finite(n->value, "constant");
    return n;
}

NodePtr param(Mat v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = true;
    check_finite(n->value, "param");
    return n;
}

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
    if (a->value.cols != b->value.rows)
        throw ShapeMismatch("matmul: " + std::to_string(a->value.rows) + "x" +
                            std::to_string(a->value.cols) + " by " +
                            std::to_string(b->value.rows) + "x" + std::to_string(b->value.cols));
    Mat out(a->value.rows, b->value.cols);
    emap(out) = emap(a->value) * emap(b->value);
    return make("matmul", std::move(out), {a, b}, [](Node& n) {
        auto &a = *n.inputs[0], &b = *n.inputs[1];
        if (a.requires_grad) {
            a.ensure_grad();
            emap(a.grad) += emap(n.grad) * emap(b.value).transpose();
        }
        if (b.requires_grad) {
            b.ensure_grad();
            emap(b.grad) += emap(a.value).transpose() * emap(n.grad);
        }
    });
}

NodePtr matmul_nt(const NodePtr& a, const NodePtr& b) {
    if (a->value.cols != b->value.cols)
        throw ShapeMismatch("matmul_nt: " + std::to_string(a->value.rows) + "x" +
                            std::to_string(a->value.cols) + " by " +
                            std::to_string(b->value.rows) + "x" + std::to_string(b->value.cols) +
                            " transposed");
    Mat out(a->value.rows, b->value.rows);
    emap(out) = emap(a->value) * emap(b->value).transpose();
    return make("matmul_nt", std::move(out), {a, b}, [](Node& n) {
        auto &a = *n.inputs[0], &b = *n.inputs[1];
        if (a.requires_grad) {
            a.ensure_grad();
            emap(a.grad) += emap(n.grad) * emap(b.value);
        }
        if (b.requires_grad) {
            b.ensure_grad();
            emap(b.grad) += emap(n.grad).transpose() * emap(a.value);
        }
    });
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
    require_same_shape(a, b, "add");
    Mat out = a->value;
    emap(out) += emap(b->value);
    return make("add", std::move(out), {a, b}, [](Node& n) {
        for (auto& in : n.inputs)
            if (in->requires_grad) {
                in->ensure_grad();
                emap(in->grad) += emap(n.grad);
            }
    });
}

NodePtr sub(const NodePtr& a, const NodePtr& b) {
    require_same_shape(a, b, "sub");
    Mat out = a->value;
    emap(out) -= emap(b->value);
    return make("sub", std::move(out), {a, b}, [](Node& n) {
        auto &a = *n.inputs[0], &b = *n.inputs[1];
        if (a.requires_grad) {
            a.ensure_grad();
            emap(a.grad) += emap(n.grad);
        }
        if (b.requires_grad) {
            b.ensure_grad();
            emap(b.grad) -= emap(n.grad);
        }
    });
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
    require_same_shape(a, b, "mul");
    Mat out(a->value.rows, a->value.cols);
    for (size_t i = 0; i < out.size(); ++i) out.v[i] = a->value.v[i] * b->value.v[i];
    return make("mul", std::move(out), {a, b}, [](Node& n) {
        auto &a = *n.inputs[0], &b = *n.inputs[1];
        if (a.requires_grad) {
            a.ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) a.grad.v[i] += n.grad.v[i] * b.value.v[i];
        }
        if (b.requires_grad) {
            b.ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) b.grad.v[i] += n.grad.v[i] * a.value.v[i];
        }
    });
}

NodePtr add_bias(const NodePtr& a, const NodePtr& bias) {
    if (bias->value.rows != 1 || bias->value.cols != a->value.cols)
        throw ShapeMismatch("add_bias: bias " + std::to_string(bias->value.rows) + "x" +
                            std::to_string(bias->value.cols) + " on " +
                            std::to_string(a->value.rows) + "x" + std::to_string(a->value.cols));
    Mat out = a->value;
    for (int r = 0; r < out.rows; ++r)
        for (int c = 0; c < out.cols; ++c) out.at(r, c) += bias->value.at(0, c);
    return make("add_bias", std::move(out), {a, bias}, [](Node& n) {
        auto &a = *n.inputs[0], &b = *n.inputs[1];
        if (a.requires_grad) {
            a.ensure_grad();
            emap(a.grad) += emap(n.grad);
        }
        if (b.requires_grad) {
            b.ensure_grad();
            for (int r = 0; r < n.grad.rows; ++r)
                for (int c = 0; c < n.grad.cols; ++c) b.grad.at(0, c) += n.grad.at(r, c);
        }
    });
}

NodePtr scale(const NodePtr& a, double c) {
    Mat out = a->value;
    for (auto& x : out.v) x *= c;
    return make("scale", std::move(out), {a}, [c](Node& n) {
        auto& a = *n.inputs[0];
        a.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) a.grad.v[i] += c * n.grad.v[i];
    });
}

NodePtr add_scalar(const NodePtr& a, double c) {
    Mat out = a->value;
    for (auto& x : out.v) x += c;
    return make("add_scalar", std::move(out), {a}, [](Node& n) {
        auto& a = *n.inputs[0];
        a.ensure_grad();
        emap(a.grad) += emap(n.grad);
    });
}

NodePtr square(const NodePtr& a) {
    Mat out = a->value;
    for (auto& x : out.v) x *= x;
    return make("square", std::move(out), {a}, [](Node& n) {
        auto& a = *n.inputs[0];
        a.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i)
            a.grad.v[i] += 2.0 * a.value.v[i] * n.grad.v[i];
    });
}

NodePtr exp(const NodePtr& a) {
    Mat out = a->value;
    for (auto& x : out.v) x = std::exp(x);
    return make("exp", std::move(out), {a}, [](Node& n) {
        auto& a = *n.inputs[0];
        a.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) a.grad.v[i] += n.value.v[i] * n.grad.v[i];
    });
}

NodePtr log(const NodePtr& a) {
    Mat out = a->value;
    for (auto& x : out.v) x = std::log(x);
    return make("log", std::move(out), {a}, [](Node& n) {
        auto& a = *n.inputs[0];
        a.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) a.grad.v[i] += n.grad.v[i] / a.value.v[i];
    });
}

NodePtr softplus(const NodePtr& a) {
    Mat out = a->value;
    for (auto& x : out.v) x = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    return make("softplus", std::move(out), {a}, [](Node& n) {
        auto& a = *n.inputs[0];
        a.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i)
            a.grad.v[i] += sigmoid(a.value.v[i]) * n.grad.v[i];
    });
}

NodePtr softmax_rows(const NodePtr& a) {
    Mat out = a->value;
    for (int r = 0; r < out.rows; ++r) {
        auto row = out.row(r);
        double mx = row[0];
        for (const double x : row) mx = std::max(mx, x);
        double z = 0.0;
        for (auto& x : row) z += (x = std::exp(x - mx));
        for (auto& x : row) x /= z;
    }
    return make("softmax_rows", std::move(out), {a}, [](Node& n) {
        auto& a = *n.inputs[0];
        a.ensure_grad();
        for (int r = 0; r < n.grad.rows; ++r) {
            double dot = 0.0;
            for (int c = 0; c < n.grad.cols; ++c) dot += n.grad.at(r, c) * n.value.at(r, c);
            for (int c = 0; c < n.grad.cols; ++c)
                a.grad.at(r, c) += n.value.at(r, c) * (n.grad.at(r, c) - dot);
        }
    });
}

NodePtr softmax_cols(const NodePtr& a) {
    Mat out = a->value;
    for (int c = 0; c < out.cols; ++c) {
        double mx = out.at(0, c);
        for (int r = 0; r < out.rows; ++r) mx = std::max(mx, out.at(r, c));
        double z = 0.0;
        for (int r = 0; r < out.rows; ++r) z += (out.at(r, c) = std::exp(out.at(r, c) - mx));
        for (int r = 0; r < out.rows; ++r) out.at(r, c) /= z;
    }
    return make("softmax_cols", std::move(out), {a}, [](Node& n) {
        auto& a = *n.inputs[0];
        a.ensure_grad();
        for (int c = 0; c < n.grad.cols; ++c) {
            double dot = 0.0;
            for (int r = 0; r < n.grad.rows; ++r) dot += n.grad.at(r, c) * n.value.at(r, c);
            for (int r = 0; r < n.grad.rows; ++r)
                a.grad.at(r, c) += n.value.at(r, c) * (n.grad.at(r, c) - dot);
        }
    });
}

NodePtr clamp(const NodePtr& a, double lo, double hi) {
    Mat out = a->value;
    for (auto& x : out.v) x = std::min(hi, std::max(lo, x));
    return make("clamp", std::move(out), {a}, [lo, hi](Node& n) {
        auto& a = *n.inputs[0];
        a.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i)
            if (a.value.v[i] > lo && a.value.v[i] < hi) a.grad.v[i] += n.grad.v[i];
    });
}

NodePtr sum(const NodePtr& a) {
    Mat out(1, 1);
    for (const double x : a->value.v) out.v[0] += x;
    return make("sum", std::move(out), {a}, [](Node& n) {
        auto& a = *n.inputs[0];
        a.ensure_grad();
        const double g = n.grad.v[0];
        for (auto& x : a.grad.v) x += g;
    });
}

NodePtr gather_rows(const NodePtr& a, std::vector<int> rows) {
    for (const int r : rows)
        if (r < 0 || r >= a->value.rows) throw ShapeMismatch("gather_rows: index out of range");
    Mat out(static_cast<int>(rows.size()), a->value.cols);
    for (size_t i = 0; i < rows.size(); ++i)
        for (int c = 0; c < out.cols; ++c) out.at(static_cast<int>(i), c) = a->value.at(rows[i], c);
    return make("gather_rows", std::move(out), {a}, [rows = std::move(rows)](Node& n) {
        auto& a = *n.inputs[0];
        a.ensure_grad();
        for (size_t i = 0; i < rows.size(); ++i)
            for (int c = 0; c < n.grad.cols; ++c)
                a.grad.at(rows[i], c) += n.grad.at(static_cast<int>(i), c);
    });
}

NodePtr gather_cols(const NodePtr& a, std::vector<int> cols) {
    for (const int c : cols)
        if (c < 0 || c >= a->value.cols) throw ShapeMismatch("gather_cols: index out of range");
    Mat out(a->value.rows, static_cast<int>(cols.size()));
    for (int r = 0; r < out.rows; ++r)
        for (size_t j = 0; j < cols.size(); ++j) out.at(r, static_cast<int>(j)) = a->value.at(r, cols[j]);
    return make("gather_cols", std::move(out), {a}, [cols = std::move(cols)](Node& n) {
        auto& a = *n.inputs[0];
        a.ensure_grad();
        for (int r = 0; r < n.grad.rows; ++r)
            for (size_t j = 0; j < cols.size(); ++j)
                a.grad.at(r, cols[j]) += n.grad.at(r, static_cast<int>(j));
    });
}

NodePtr transpose(const NodePtr& a) {
    Mat out(a->value.cols, a->value.rows);
    for (int r = 0; r < a->value.rows; ++r)
        for (int c = 0; c < a->value.cols; ++c) out.at(c, r) = a->value.at(r, c);
    return make("transpose", std::move(out), {a}, [](Node& n) {
        auto& a = *n.inputs[0];
        a.ensure_grad();
        for (int r = 0; r < n.grad.rows; ++r)
            for (int c = 0; c < n.grad.cols; ++c) a.grad.at(c, r) += n.grad.at(r, c);
    });
}

NodePtr scale_rows(const NodePtr& a, std::vector<double> w) {
    if (static_cast<int>(w.size()) != a->value.rows)
        throw ShapeMismatch("scale_rows: " + std::to_string(w.size()) + " weights on " +
                            std::to_string(a->value.rows) + " rows");
    Mat out = a->value;
    for (int r = 0; r < out.rows; ++r)
        for (int c = 0; c < out.cols; ++c) out.at(r, c) *= w[static_cast<size_t>(r)];
    return make("scale_rows", std::move(out), {a}, [w = std::move(w)](Node& n) {
        auto& a = *n.inputs[0];
        a.ensure_grad();
        for (int r = 0; r < n.grad.rows; ++r)
            for (int c = 0; c < n.grad.cols; ++c)
                a.grad.at(r, c) += n.grad.at(r, c) * w[static_cast<size_t>(r)];
    });
}

Mat dropout_mask(int rows, int cols, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw InputError("dropout rate must be in [0,1), got " + std::to_string(rate));
    Mat mask(rows, cols);
    const double keep = 1.0 / (1.0 - rate);
    for (auto& x : mask.v) x = rng.uniform() < rate ? 0.0 : keep;
    return mask;
}

NodePtr dropout_with_mask(const NodePtr& a, Mat mask) {
    if (mask.rows != a->value.rows || mask.cols != a->value.cols)
        throw ShapeMismatch("dropout mask shape");
    Mat out(a->value.rows, a->value.cols);
    for (size_t i = 0; i < out.size(); ++i) out.v[i] = a->value.v[i] * mask.v[i];
    return make("dropout", std::move(out), {a}, [mask = std::move(mask)](Node& n) {
        auto& a = *n.inputs[0];
        a.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) a.grad.v[i] += n.grad.v[i] * mask.v[i];
    });
}

NodePtr dropout(const NodePtr& a, double rate, Rng& rng, bool train) {
    if (rate < 0.0 || rate >= 1.0)
        throw InputError("dropout rate must be in [0,1), got " + std::to_string(rate));
    if (!train || rate == 0.0) return a;
    return dropout_with_mask(a, dropout_mask(a->value.rows, a->value.cols, rate, rng));
}

NodePtr gaussian_reparameterize(const NodePtr& mu, const NodePtr& logvar, const NodePtr& eps) {
    require_same_shape(mu, logvar, "gaussian_reparameterize");
    require_same_shape(mu, eps, "gaussian_reparameterize");
    return add(mu, mul(exp(scale(logvar, 0.5)), eps));
}

void backward(const NodePtr& loss) {
    if (loss->value.rows != 1 || loss->value.cols != 1) throw NotScalarLoss();
    if (!loss->requires_grad) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> seen{loss.get()};
    std::vector<std::pair<Node*, size_t>> stack{{loss.get(), 0}};
    while (!stack.empty()) {
        Node* n = stack.back().first;
        const size_t i = stack.back().second;
        if (i < n->inputs.size()) {
            ++stack.back().second;
            Node* child = n->inputs[i].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    // reset intermediates so repeated backward accumulates exactly once per call
    for (Node* n : order)
        if (n->backprop && !n->grad.empty()) std::fill(n->grad.v.begin(), n->grad.v.end(), 0.0);

    loss->ensure_grad();
    loss->grad.v[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && !n->grad.empty()) n->backprop(*n);
    }
}

void backward(const NodePtr& loss, const std::vector<NodePtr>& params) {
    backward(loss);
    int disconnected = 0;
    for (const auto& p : params) {
        if (p->grad.empty()) {
            p->ensure_grad();
            ++disconnected;
        }
    }
    if (disconnected > 0)
        std::cerr << "warning: " << disconnected
                  << " parameter(s) not reached by the loss; gradient set to zero\n";
}

void zero_grad(const std::vector<NodePtr>& params) {
    for (const auto& p : params) {
        p->ensure_grad();
        std::fill(p->grad.v.begin(), p->grad.v.end(), 0.0);
    }
}

void adam_step(const std::vector<NodePtr>& params, AdamState& state) {
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p->value.rows, p->value.cols);
            state.v.emplace_back(p->value.rows, p->value.cols);
        }
    }
    ++state.step;
    const auto& c = state.cfg;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        p.ensure_grad();
        for (size_t j = 0; j < p.value.size(); ++j) {
            const double g = p.grad.v[j] + c.weight_decay * p.value.v[j];
            state.m[i].v[j] = c.beta1 * state.m[i].v[j] + (1.0 - c.beta1) * g;
            state.v[i].v[j] = c.beta2 * state.v[i].v[j] + (1.0 - c.beta2) * g * g;
            const double mhat = state.m[i].v[j] / bc1;
            const double vhat = state.v[i].v[j] / bc2;
            p.value.v[j] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
        }
    }
}

}  // namespace keyetm::ag
