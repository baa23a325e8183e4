#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>

#include "keyetm/autograd.hpp"
#include "keyetm/errors.hpp"

using namespace keyetm;
namespace ag = keyetm::ag;

namespace {

Mat rnd(int r, int c, Rng& g, double lo = -1.0, double hi = 1.0) {
    Mat m(r, c);
    for (auto& x : m.v) x = g.uniform(lo, hi);
    return m;
}

// worst |analytic - central difference| scaled by 1e-9 + 1e-6 * magnitude; pass is <= 1
double fd_worst(const std::function<ag::NodePtr()>& build,
                const std::vector<ag::NodePtr>& params, double h = 1e-5) {
    auto loss = build();
    ag::zero_grad(params);
    ag::backward(loss, params);
    std::vector<Mat> analytic;
    for (const auto& p : params) analytic.push_back(p->grad);
    double worst = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        for (size_t j = 0; j < p->value.size(); ++j) {
            const double x = p->value.v[j];
            p->value.v[j] = x + h;
            const double fp = build()->value.v[0];
            p->value.v[j] = x - h;
            const double fm = build()->value.v[0];
            p->value.v[j] = x;
            const double num = (fp - fm) / (2.0 * h);
            const double a = analytic[pi].v[j];
            const double err =
                std::abs(a - num) / (1e-9 + 1e-6 * std::max(std::abs(a), std::abs(num)));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("analytic gradient of sum of squares") {
    auto x = ag::param(Mat(1, 2, {1.0, 2.0}));
    auto loss = ag::sum(ag::square(x));
    CHECK(loss->value.v[0] == doctest::Approx(5.0));
    ag::backward(loss);
    CHECK(x->grad.at(0, 0) == doctest::Approx(2.0));
    CHECK(x->grad.at(0, 1) == doctest::Approx(4.0));
}

TEST_CASE("softmax and softplus anchors") {
    auto x = ag::constant(Mat(1, 3, {1.0, 1.0, 1.0}));
    auto y = ag::softmax_rows(x);
    for (int c = 0; c < 3; ++c) CHECK(y->value.at(0, c) == doctest::Approx(1.0 / 3));
    auto z = ag::softplus(ag::constant(Mat(1, 1, {0.0})));
    CHECK(z->value.v[0] == doctest::Approx(std::log(2.0)));
    auto t = ag::transpose(ag::constant(Mat(2, 3, {1, 2, 3, 4, 5, 6})));
    CHECK(t->value.rows == 3);
    CHECK(t->value.cols == 2);
    CHECK(t->value.at(0, 1) == 4.0);
    CHECK(t->value.at(2, 0) == 3.0);
}

TEST_CASE("softmax rows sum to one and stay positive") {
    Rng g(31);
    auto x = ag::constant(rnd(7, 11, g, -30.0, 30.0));
    auto y = ag::softmax_rows(x);
    for (int r = 0; r < 7; ++r) {
        double s = 0.0;
        for (int c = 0; c < 11; ++c) {
            CHECK(y->value.at(r, c) > 0.0);
            s += y->value.at(r, c);
        }
        CHECK(std::abs(s - 1.0) <= 1e-9);
    }
    auto yc = ag::softmax_cols(x);
    for (int c = 0; c < 11; ++c) {
        double s = 0.0;
        for (int r = 0; r < 7; ++r) s += yc->value.at(r, c);
        CHECK(std::abs(s - 1.0) <= 1e-9);
    }
}

TEST_CASE("finite difference per op") {
    Rng g(17);

    SUBCASE("matmul") {
        auto a = ag::param(rnd(3, 4, g));
        auto b = ag::param(rnd(4, 5, g));
        auto w = ag::constant(rnd(3, 5, g));
        auto build = [&] { return ag::sum(ag::mul(w, ag::matmul(a, b))); };
        CHECK(fd_worst(build, {a, b}) <= 1.0);
    }
    SUBCASE("matmul_nt") {
        auto a = ag::param(rnd(3, 4, g));
        auto b = ag::param(rnd(5, 4, g));
        auto w = ag::constant(rnd(3, 5, g));
        auto build = [&] { return ag::sum(ag::mul(w, ag::matmul_nt(a, b))); };
        CHECK(fd_worst(build, {a, b}) <= 1.0);
    }
    SUBCASE("add sub mul") {
        auto a = ag::param(rnd(4, 3, g));
        auto b = ag::param(rnd(4, 3, g));
        auto w = ag::constant(rnd(4, 3, g));
        auto build = [&] {
            return ag::sum(ag::mul(w, ag::mul(ag::add(a, b), ag::sub(a, b))));
        };
        CHECK(fd_worst(build, {a, b}) <= 1.0);
    }
    SUBCASE("add_bias") {
        auto a = ag::param(rnd(4, 3, g));
        auto b = ag::param(rnd(1, 3, g));
        auto w = ag::constant(rnd(4, 3, g));
        auto build = [&] { return ag::sum(ag::mul(w, ag::add_bias(a, b))); };
        CHECK(fd_worst(build, {a, b}) <= 1.0);
    }
    SUBCASE("scale add_scalar square") {
        auto a = ag::param(rnd(3, 3, g));
        auto build = [&] { return ag::sum(ag::square(ag::add_scalar(ag::scale(a, 1.7), 0.3))); };
        CHECK(fd_worst(build, {a}) <= 1.0);
    }
    SUBCASE("exp log") {
        auto a = ag::param(rnd(3, 3, g, 0.5, 2.0));
        auto build = [&] { return ag::sum(ag::log(ag::add_scalar(ag::exp(a), 0.1))); };
        CHECK(fd_worst(build, {a}) <= 1.0);
    }
    SUBCASE("softplus") {
        auto a = ag::param(rnd(3, 4, g, -2.0, 2.0));
        auto w = ag::constant(rnd(3, 4, g));
        auto build = [&] { return ag::sum(ag::mul(w, ag::softplus(a))); };
        CHECK(fd_worst(build, {a}) <= 1.0);
    }
    SUBCASE("softmax_rows") {
        auto a = ag::param(rnd(3, 5, g, -2.0, 2.0));
        auto w = ag::constant(rnd(3, 5, g));
        auto build = [&] { return ag::sum(ag::mul(w, ag::softmax_rows(a))); };
        CHECK(fd_worst(build, {a}) <= 1.0);
    }
    SUBCASE("softmax_cols") {
        auto a = ag::param(rnd(4, 3, g, -2.0, 2.0));
        auto w = ag::constant(rnd(4, 3, g));
        auto build = [&] { return ag::sum(ag::mul(w, ag::softmax_cols(a))); };
        CHECK(fd_worst(build, {a}) <= 1.0);
    }
    SUBCASE("clamp away from bounds") {
        auto a = ag::param(rnd(3, 3, g, -1.0, 1.0));
        auto build = [&] { return ag::sum(ag::square(ag::clamp(a, -5.0, 5.0))); };
        CHECK(fd_worst(build, {a}) <= 1.0);
    }
    SUBCASE("gather and scale_rows") {
        auto a = ag::param(rnd(6, 4, g));
        auto w = ag::constant(rnd(3, 2, g));
        auto build = [&] {
            auto picked = ag::gather_cols(ag::gather_rows(a, {4, 0, 2}), {3, 1});
            return ag::sum(ag::mul(w, ag::scale_rows(picked, {2.0, 0.5, 3.0})));
        };
        CHECK(fd_worst(build, {a}) <= 1.0);
    }
    SUBCASE("transpose") {
        auto a = ag::param(rnd(3, 5, g));
        auto w = ag::constant(rnd(5, 3, g));
        auto build = [&] { return ag::sum(ag::mul(w, ag::transpose(a))); };
        CHECK(fd_worst(build, {a}) <= 1.0);
    }
    SUBCASE("dropout with frozen mask") {
        auto a = ag::param(rnd(4, 4, g));
        Rng mg(5);
        Mat mask = ag::dropout_mask(4, 4, 0.5, mg);
        auto build = [&] { return ag::sum(ag::square(ag::dropout_with_mask(a, mask))); };
        CHECK(fd_worst(build, {a}) <= 1.0);
    }
    SUBCASE("gaussian reparameterization") {
        auto mu = ag::param(rnd(2, 3, g));
        auto logvar = ag::param(rnd(2, 3, g, -1.0, 1.0));
        auto eps = ag::constant(rnd(2, 3, g, -2.0, 2.0));
        auto w = ag::constant(rnd(2, 3, g));
        auto build = [&] {
            return ag::sum(ag::mul(w, ag::gaussian_reparameterize(mu, logvar, eps)));
        };
        CHECK(fd_worst(build, {mu, logvar}) <= 1.0);
    }
}

TEST_CASE("zero variance reparameterization returns mu") {
    auto mu = ag::constant(Mat(1, 3, {0.4, -1.2, 2.0}));
    auto logvar = ag::constant(Mat(1, 3, {-200.0, -50.0, -100.0}));
    auto clamped = ag::clamp(logvar, -20.0, 20.0);
    auto eps = ag::constant(Mat(1, 3, {1.5, -2.0, 3.0}));
    auto z = ag::gaussian_reparameterize(mu, clamped, eps);
    for (int c = 0; c < 3; ++c)
        CHECK(std::abs(z->value.at(0, c) - mu->value.at(0, c)) < 2e-4);
}

TEST_CASE("dropout conventions") {
    Rng g(9);
    auto a = ag::constant(rnd(10, 10, g, 1.0, 2.0));
    auto eval = ag::dropout(a, 0.4, g, false);
    CHECK(eval.get() == a.get());
    auto zero = ag::dropout(a, 0.0, g, true);
    CHECK(zero.get() == a.get());

    double kept_scale = 0.0;
    const int trials = 4000;
    Rng mg(123);
    for (int t = 0; t < trials; ++t) {
        Mat mask = ag::dropout_mask(1, 1, 0.3, mg);
        kept_scale += mask.v[0];
    }
    CHECK(kept_scale / trials == doctest::Approx(1.0).epsilon(0.05));
    CHECK_THROWS_AS(ag::dropout(a, 1.0, g, true), InputError);
}

TEST_CASE("disconnected parameter gets zero gradient") {
    auto used = ag::param(Mat(1, 2, {1.0, 2.0}));
    auto orphan = ag::param(Mat(2, 2, {1, 2, 3, 4}));
    auto loss = ag::sum(ag::square(used));
    ag::backward(loss, {used, orphan});
    REQUIRE(!orphan->grad.empty());
    for (const double x : orphan->grad.v) CHECK(x == 0.0);
    CHECK(used->grad.at(0, 1) == doctest::Approx(4.0));
}

TEST_CASE("repeated backward accumulates") {
    auto x = ag::param(Mat(1, 1, {3.0}));
    auto loss = ag::sum(ag::square(x));
    ag::backward(loss);
    CHECK(x->grad.v[0] == doctest::Approx(6.0));
    ag::backward(loss);
    CHECK(x->grad.v[0] == doctest::Approx(12.0));
    ag::zero_grad({x});
    CHECK(x->grad.v[0] == 0.0);
}

TEST_CASE("shape and domain errors") {
    auto a = ag::param(Mat(2, 3));
    auto b = ag::param(Mat(2, 3));
    CHECK_THROWS_AS(ag::matmul(a, b), ShapeMismatch);
    CHECK_THROWS_AS(ag::add(a, ag::param(Mat(3, 2))), ShapeMismatch);
    CHECK_THROWS_AS(ag::backward(a), NotScalarLoss);
    CHECK_THROWS_AS(ag::gather_rows(a, {2}), ShapeMismatch);
    auto neg = ag::constant(Mat(1, 1, {-1.0}));
    CHECK_THROWS_AS(ag::log(neg), NonFiniteValue);
}

TEST_CASE("adam stays put on zero gradient") {
    auto p = ag::param(Mat(1, 2, {0.5, -0.5}));
    ag::zero_grad({p});
    ag::AdamState st;
    adam_step({p}, st);
    CHECK(p->value.v[0] == 0.5);
    CHECK(p->value.v[1] == -0.5);
}

TEST_CASE("adam moves against a constant gradient") {
    auto p = ag::param(Mat(1, 1, {1.0}));
    ag::AdamState st;
    for (int i = 0; i < 10; ++i) {
        ag::zero_grad({p});
        p->grad.v[0] = 2.5;
        adam_step({p}, st);
    }
    CHECK(p->value.v[0] < 1.0);
}

TEST_CASE("adam finds the bottom of a quadratic bowl") {
    const Mat target(1, 4, {0.3, -0.7, 1.1, 0.0});
    auto p = ag::param(Mat(1, 4, {1.0, 0.2, 0.4, -0.9}));
    auto t = ag::constant(target);
    ag::AdamState st;
    st.cfg.lr = 0.005;
    for (int i = 0; i < 2000; ++i) {
        ag::zero_grad({p});
        auto loss = ag::sum(ag::square(ag::sub(p, t)));
        ag::backward(loss);
        adam_step({p}, st);
    }
    for (int c = 0; c < 4; ++c)
        CHECK(std::abs(p->value.at(0, c) - target.at(0, c)) < 1e-3);
}
