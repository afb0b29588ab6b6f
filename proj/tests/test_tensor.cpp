#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <lanet/gradcheck.hpp>
#include <lanet/ops.hpp>
#include <lanet/optim.hpp>
#include <lanet/rng.hpp>

using namespace lanet;

namespace {

Tensor<double> random_tensor(Shape s, Rng& rng, bool requires_grad = false,
                             double lo = -1.0, double hi = 1.0) {
    auto t = Tensor<double>::leaf(s, requires_grad);
    for (std::size_t i = 0; i < t.size(); ++i) (*t.data)[i] = rng.uniform(lo, hi);
    return t;
}

// Six-nested-loop cross-correlation, written independently of conv2d.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w,
                           const std::optional<Tensor<double>>& bias, int stride, int pad) {
    const int oh = (x.shape.h + 2 * pad - w.shape.h) / stride + 1;
    const int ow = (x.shape.w + 2 * pad - w.shape.w) / stride + 1;
    Tensor<double> y(Shape{x.shape.n, w.shape.n, oh, ow});
    for (int n = 0; n < x.shape.n; ++n)
        for (int oc = 0; oc < w.shape.n; ++oc)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = bias ? (*bias->data)[oc] : 0.0;
                    for (int ic = 0; ic < x.shape.c; ++ic)
                        for (int ky = 0; ky < w.shape.h; ++ky)
                            for (int kx = 0; kx < w.shape.w; ++kx) {
                                const int iy = oy * stride - pad + ky;
                                const int ix = ox * stride - pad + kx;
                                if (iy < 0 || iy >= x.shape.h || ix < 0 || ix >= x.shape.w)
                                    continue;
                                acc += x.at(n, ic, iy, ix) * w.at(oc, ic, ky, kx);
                            }
                    y.at(n, oc, oy, ox) = acc;
                }
    return y;
}

}  // namespace

TEST_CASE("conv2d identity with 1x1 identity weights") {
    Rng rng(1);
    auto x = random_tensor(Shape{2, 3, 5, 5}, rng);
    Tensor<double> w(Shape{3, 3, 1, 1});
    for (int c = 0; c < 3; ++c) w.at(c, c, 0, 0) = 1.0;
    auto y = conv2d(x, w, 1, 0);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK((*y.data)[i] == (*x.data)[i]);
}

TEST_CASE("conv2d zero weights gives per-channel bias") {
    Rng rng(2);
    auto x = random_tensor(Shape{1, 2, 4, 4}, rng);
    Tensor<double> w(Shape{3, 2, 3, 3});
    Tensor<double> b(Shape{1, 3, 1, 1}, {0.5, -1.25, 2.0});
    auto y = conv2d(x, w, std::optional<Tensor<double>>(b), 1, 1);
    for (int oc = 0; oc < 3; ++oc)
        for (int iy = 0; iy < 4; ++iy)
            for (int ix = 0; ix < 4; ++ix) CHECK(y.at(0, oc, iy, ix) == (*b.data)[oc]);
}

TEST_CASE("conv2d matches brute-force oracle on random instances") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = rng.range(1, 2), ci = rng.range(1, 3), co = rng.range(1, 3);
        const int k = rng.coin() ? 1 : 3;
        const int pad = (k == 3) ? rng.range(0, 1) : 0;
        const int stride = rng.range(1, 2);
        const int h = rng.range(k, 6), w = rng.range(k, 6);
        auto x = random_tensor(Shape{n, ci, h, w}, rng);
        auto wt = random_tensor(Shape{co, ci, k, k}, rng);
        auto b = random_tensor(Shape{1, co, 1, 1}, rng);
        auto opt_b = rng.coin() ? std::optional<Tensor<double>>(b) : std::nullopt;
        auto got = conv2d(x, wt, opt_b, stride, pad);
        auto want = conv_oracle(x, wt, opt_b, stride, pad);
        REQUIRE(got.shape == want.shape);
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK((*got.data)[i] == doctest::Approx((*want.data)[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv2d rejects bad shapes") {
    Tensor<double> x(Shape{1, 2, 4, 4});
    Tensor<double> w(Shape{1, 3, 3, 3});
    CHECK_THROWS_AS(conv2d(x, w, 1, 1), std::invalid_argument);
    Tensor<double> w2(Shape{1, 2, 3, 3});
    CHECK_THROWS_AS(conv2d(Tensor<double>(Shape{1, 2, 2, 2}), w2, 1, 0), std::invalid_argument);
}

TEST_CASE("avg_pool2d trivial cases and oracle") {
    Tensor<double> c7(Shape{1, 2, 4, 4}, 7.0);
    auto p = avg_pool2d(c7, 2, 2);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK((*p.data)[i] == 7.0);

    Rng rng(4);
    auto x = random_tensor(Shape{1, 1, 8, 8}, rng);
    auto id = avg_pool2d(x, 1, 1);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK((*id.data)[i] == (*x.data)[i]);

    for (int trial = 0; trial < 100; ++trial) {
        const int ph = rng.range(1, 4), pw = rng.range(1, 4);
        const int h = ph * rng.range(1, 3), w = pw * rng.range(1, 3);
        auto t = random_tensor(Shape{rng.range(1, 2), rng.range(1, 3), h, w}, rng);
        auto got = avg_pool2d(t, ph, pw);
        for (int n = 0; n < t.shape.n; ++n)
            for (int c = 0; c < t.shape.c; ++c)
                for (int oy = 0; oy < h / ph; ++oy)
                    for (int ox = 0; ox < w / pw; ++ox) {
                        double acc = 0;
                        for (int ky = 0; ky < ph; ++ky)
                            for (int kx = 0; kx < pw; ++kx)
                                acc += t.at(n, c, oy * ph + ky, ox * pw + kx);
                        CHECK(got.at(n, c, oy, ox) ==
                              doctest::Approx(acc / (ph * pw)).epsilon(1e-13));
                    }
    }
    CHECK_THROWS_AS(avg_pool2d(Tensor<double>(Shape{1, 1, 5, 4}), 2, 2), std::invalid_argument);
}

TEST_CASE("upsample_nearest replication and pool round trip") {
    Tensor<double> x(Shape{1, 1, 1, 2}, {1.0, 2.0});
    auto y = upsample_nearest(x, 2, 2);
    const std::vector<double> want{1, 1, 2, 2, 1, 1, 2, 2};
    REQUIRE(y.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) CHECK((*y.data)[i] == want[i]);

    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const int k = rng.range(1, 4);
        auto t = random_tensor(Shape{1, rng.range(1, 3), rng.range(1, 5), rng.range(1, 5)}, rng);
        auto rt = avg_pool2d(upsample_nearest(t, k, k), k, k);
        REQUIRE(rt.shape == t.shape);
        for (std::size_t i = 0; i < t.size(); ++i) CHECK((*rt.data)[i] == (*t.data)[i]);
    }
}

TEST_CASE("activations") {
    Tensor<double> x(Shape{1, 1, 1, 3}, {-3.0, 0.0, 3.0});
    auto r = relu(x);
    CHECK((*r.data)[0] == 0.0);
    CHECK((*r.data)[2] == 3.0);
    auto s = sigmoid(x);
    CHECK((*s.data)[1] == 0.5);

    Rng rng(6);
    auto in = random_tensor(Shape{1, 2, 3, 3}, rng, true, -2.0, 2.0);
    std::vector<Tensor<double>> inputs{in};
    auto err = grad_check([](const std::vector<Tensor<double>>& v) { return sum(sigmoid(v[0])); },
                          inputs, 1e-6);
    CHECK(err < 1e-6);
}

TEST_CASE("elementwise add/mul") {
    Rng rng(7);
    auto a = random_tensor(Shape{1, 2, 3, 3}, rng);
    Tensor<double> ones(a.shape, 1.0);
    Tensor<double> zeros(a.shape, 0.0);
    auto m = mul(a, ones);
    auto s = add(a, zeros);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK((*m.data)[i] == (*a.data)[i]);
        CHECK((*s.data)[i] == (*a.data)[i]);
    }
    CHECK_THROWS_AS(add(a, Tensor<double>(Shape{1, 2, 3, 4})), std::invalid_argument);

    // x + x*sigmoid(0) = 1.5x
    auto g = sigmoid(zeros);
    auto y = add(a, mul(a, g));
    for (std::size_t i = 0; i < a.size(); ++i) CHECK((*y.data)[i] == 1.5 * (*a.data)[i]);
}

TEST_CASE("softmax cross entropy") {
    SUBCASE("zero logits gives ln K") {
        Tensor<double> logits(Shape{1, 6, 2, 2});
        LabelMap labels(1, 2, 2);
        labels.ids = {0, 1, 2, 5};
        auto loss = softmax_cross_entropy(logits, labels);
        CHECK(loss.scalar() == doctest::Approx(std::log(6.0)).epsilon(1e-14));
    }
    SUBCASE("saturated correct class") {
        Tensor<double> logits(Shape{1, 3, 1, 1});
        logits.at(0, 1, 0, 0) = 50.0;
        LabelMap labels(1, 1, 1);
        labels.ids = {1};
        CHECK(softmax_cross_entropy(logits, labels).scalar() < 1e-9);
    }
    SUBCASE("matches direct formula on random instances") {
        Rng rng(8);
        for (int trial = 0; trial < 100; ++trial) {
            auto logits = random_tensor(Shape{1, 2, 2, 2}, rng, false, -3.0, 3.0);
            LabelMap labels(1, 2, 2);
            for (auto& l : labels.ids) l = static_cast<int32_t>(rng.below(2));
            double want = 0;
            for (int iy = 0; iy < 2; ++iy)
                for (int ix = 0; ix < 2; ++ix) {
                    const double a = logits.at(0, 0, iy, ix), b = logits.at(0, 1, iy, ix);
                    const double z = std::log(std::exp(a) + std::exp(b));
                    const double picked = labels.at(0, iy, ix) == 0 ? a : b;
                    want += z - picked;
                }
            want /= 4.0;
            CHECK(softmax_cross_entropy(logits, labels).scalar() ==
                  doctest::Approx(want).epsilon(1e-10));
        }
    }
    SUBCASE("errors") {
        Tensor<double> logits(Shape{1, 3, 1, 2});
        LabelMap labels(1, 1, 2);
        labels.ids = {0, 7};
        CHECK_THROWS_WITH_AS(softmax_cross_entropy(logits, labels).scalar(),
                             doctest::Contains("(0,0,1)"), std::invalid_argument);
        labels.ids = {255, 255};
        CHECK_THROWS_AS(softmax_cross_entropy(logits, labels, 255), std::invalid_argument);
    }
}

TEST_CASE("backward basics") {
    SUBCASE("linear loss") {
        auto w = Tensor<double>::leaf(Shape{1, 1, 2, 2}, true);
        auto loss = sum(scale(w, 3.0));
        backward(loss);
        for (double g : w.node->grad) CHECK(g == 3.0);
    }
    SUBCASE("unused parameter has zero gradient") {
        auto w = Tensor<double>::leaf(Shape{1, 1, 2, 2}, true);
        auto u = Tensor<double>::leaf(Shape{1, 1, 2, 2}, true);
        auto loss = sum(w);
        // make u reachable so grads are defined, with zero contribution
        auto total = add(loss, scale(sum(u), 0.0));
        backward(total);
        for (double g : u.node->grad) CHECK(g == 0.0);
    }
    SUBCASE("non-scalar loss rejected") {
        auto w = Tensor<double>::leaf(Shape{1, 1, 2, 2}, true);
        CHECK_THROWS_AS(backward(relu(w)), std::invalid_argument);
    }
}

TEST_CASE("composite graph passes finite-difference check") {
    Rng rng(9);
    auto x = random_tensor(Shape{1, 2, 4, 4}, rng, true);
    auto w = random_tensor(Shape{3, 2, 3, 3}, rng, true, -0.5, 0.5);
    auto b = random_tensor(Shape{1, 3, 1, 1}, rng, true, -0.1, 0.1);
    LabelMap labels(1, 2, 2);
    for (auto& l : labels.ids) l = static_cast<int32_t>(rng.below(3));

    std::vector<Tensor<double>> inputs{x, w, b};
    auto forward = [&labels](const std::vector<Tensor<double>>& v) {
        auto c = conv2d(v[0], v[1], std::optional<Tensor<double>>(v[2]), 1, 1);
        auto p = avg_pool2d(relu(c), 2, 2);
        return softmax_cross_entropy(p, labels);
    };
    CHECK(grad_check(forward, inputs, 1e-5) < 1e-4);
}

TEST_CASE("property: random small graphs pass gradient checks") {
    Rng rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        const int c = rng.range(1, 3);
        const int h = 2 * rng.range(1, 2), w = 2 * rng.range(1, 2);
        auto x = random_tensor(Shape{1, c, h, w}, rng, true);
        auto y = random_tensor(Shape{1, c, h, w}, rng, true);
        std::vector<Tensor<double>> inputs{x, y};
        auto forward = [](const std::vector<Tensor<double>>& v) {
            auto m = mul(sigmoid(v[0]), add(v[1], relu(v[0])));
            auto u = avg_pool2d(upsample_nearest(m, 2, 2), 2, 2);
            return sum(u);
        };
        CHECK(grad_check(forward, inputs, 1e-6) < 1e-4);
    }
}

TEST_CASE("determinism: repeated evaluation is bitwise identical") {
    Rng rng(11);
    auto x = random_tensor(Shape{2, 3, 8, 8}, rng);
    auto w = random_tensor(Shape{4, 3, 3, 3}, rng);
    auto a = conv2d(x, w, 1, 1);
    auto b = conv2d(x, w, 1, 1);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK((*a.data)[i] == (*b.data)[i]);
}

TEST_CASE("sgd_step") {
    SUBCASE("lr zero keeps params") {
        ParamStore<double> params;
        params.emplace("w", Tensor<double>(Shape{1, 1, 1, 1}, {1.0}));
        GradMap<double> grads;
        grads.emplace("w", Tensor<double>(Shape{1, 1, 1, 1}, {2.0}));
        SgdState<double> st;
        sgd_step(params, grads, st, 0.0, 0.0, 0.0);
        CHECK(params.at("w").scalar() == 1.0);
    }
    SUBCASE("plain step arithmetic") {
        ParamStore<double> params;
        params.emplace("w", Tensor<double>(Shape{1, 1, 1, 1}, {1.0}));
        GradMap<double> grads;
        grads.emplace("w", Tensor<double>(Shape{1, 1, 1, 1}, {2.0}));
        SgdState<double> st;
        sgd_step(params, grads, st, 0.1, 0.0, 0.0);
        CHECK(params.at("w").scalar() == doctest::Approx(0.8).epsilon(1e-15));
    }
    SUBCASE("missing grad rejected") {
        ParamStore<double> params;
        params.emplace("w", Tensor<double>(Shape{1, 1, 1, 1}, {1.0}));
        GradMap<double> grads;
        SgdState<double> st;
        CHECK_THROWS_AS(sgd_step(params, grads, st, 0.1, 0.0, 0.0), std::invalid_argument);
    }
    SUBCASE("converges on (w-3)^2") {
        ParamStore<double> params;
        params.emplace("w", Tensor<double>(Shape{1, 1, 1, 1}, {0.0}));
        SgdState<double> st;
        for (int i = 0; i < 100; ++i) {
            const double w = params.at("w").scalar();
            GradMap<double> grads;
            grads.emplace("w", Tensor<double>(Shape{1, 1, 1, 1}, {2.0 * (w - 3.0)}));
            sgd_step(params, grads, st, 0.1, 0.0, 0.0);
        }
        CHECK(std::abs(params.at("w").scalar() - 3.0) < 1e-6);
    }
}

TEST_CASE("grad_check on quadratic") {
    auto x = Tensor<double>::leaf(Shape{1, 1, 1, 2}, true);
    (*x.data)[0] = 1.0;
    (*x.data)[1] = 2.0;
    std::vector<Tensor<double>> inputs{x};
    auto err = grad_check(
        [](const std::vector<Tensor<double>>& v) { return sum(mul(v[0], v[0])); }, inputs, 1e-6);
    CHECK(err < 1e-9);
    CHECK(x.node->grad[0] == doctest::Approx(2.0));
    CHECK(x.node->grad[1] == doctest::Approx(4.0));
}
