#include <doctest.h>

#include <cmath>
#include <random>

#include "gradient_suite.hpp"
#include "sits/ops.hpp"

using namespace sits;
using sits::testing::numeric_gradient;
using sits::testing::random_tensor;
using sits::testing::relative_error;

using sits::testing::project;
using sits::testing::T64;
using sits::testing::worst_gradient_error;

TEST_CASE("matmul identity and shape algebra")
{
    auto eye = Tensor<float>::from({2, 2}, {1, 0, 0, 1});
    auto a = Tensor<float>::from({2, 2}, {1.5f, -2, 3, 4.25f});
    auto r = matmul(eye, a);
    CHECK((r.data() == a.data()).all());

    std::mt19937_64 rng(3);
    auto x = random_tensor<float>({2, 3}, rng);
    auto y = random_tensor<float>({3, 4}, rng);
    CHECK(matmul(x, y).shape() == Shape{2, 4});
    CHECK_THROWS_AS(matmul(x, x), ShapeError);
    try {
        matmul(x, x);
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("[2,3]") != std::string::npos);
    }
}

TEST_CASE_TEMPLATE("matmul matches a triple loop", Scalar, float, double)
{
    const double tol = std::is_same_v<Scalar, float> ? 1e-6 : 1e-12;
    std::mt19937_64 rng(11);
    auto a = random_tensor<Scalar>({5, 7}, rng);
    auto b = random_tensor<Scalar>({7, 3}, rng);
    auto c = matmul(a, b);
    for (Index i = 0; i < 5; ++i) {
        for (Index j = 0; j < 3; ++j) {
            double s = 0;
            for (Index k = 0; k < 7; ++k) s += double(a.data()[i * 7 + k]) * double(b.data()[k * 3 + j]);
            CHECK(std::abs(double(c.data()[i * 3 + j]) - s) <= tol * std::max(1.0, std::abs(s)));
        }
    }
}

TEST_CASE("softmax values")
{
    auto s = softmax(Tensor<double>::from({2}, {0, 0}));
    CHECK(s.data()[0] == doctest::Approx(0.5));
    CHECK(s.data()[1] == doctest::Approx(0.5));
    auto t = softmax(Tensor<double>::from({2}, {std::log(2.0), 0}));
    CHECK(t.data()[0] == doctest::Approx(2.0 / 3).epsilon(1e-12));
    CHECK(t.data()[1] == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK_THROWS_AS(softmax(Tensor<double>::from({2}, {NAN, 0})), NumericError);

    std::mt19937_64 rng(5);
    auto x = random_tensor<double>({3, 4, 5}, rng, false, 4.0);
    for (int axis = 0; axis < 3; ++axis) {
        auto y = softmax(x, axis);
        CHECK((y.data() >= 0).all());
        CHECK((y.data() <= 1).all());
        const auto v = detail::axis_view(x.shape(), axis);
        for (Index o = 0; o < v.outer; ++o) {
            for (Index i = 0; i < v.inner; ++i) {
                double total = 0;
                for (Index j = 0; j < v.n; ++j) total += y.data()[o * v.n * v.inner + j * v.inner + i];
                CHECK(std::abs(total - 1) < 1e-6);
            }
        }
    }
}

TEST_CASE("softmax jacobian matches finite differences")
{
    std::mt19937_64 rng(21);
    auto x = random_tensor<double>({6}, rng, true);
    for (Index j = 0; j < 6; ++j) {
        auto xs = std::vector<T64>{x};
        const double err = worst_gradient_error(xs, [j](const std::vector<T64>& in) {
            return slice(softmax(in[0]), 0, j, j + 1);
        });
        CHECK(err < 1e-6);
    }
}

TEST_CASE("layer_norm")
{
    auto gamma = Tensor<double>::full({4}, 1.0);
    auto beta = Tensor<double>::from({4}, {0.5, -1, 2, 0});
    auto constant = Tensor<double>::full({2, 4}, 3.7);
    auto y = layer_norm(constant, gamma, beta);
    for (Index r = 0; r < 2; ++r) {
        for (Index i = 0; i < 4; ++i) CHECK(y.data()[r * 4 + i] == beta.data()[i]);
    }

    std::mt19937_64 rng(8);
    auto x = random_tensor<double>({3, 64}, rng, false, 2.0);
    auto z = layer_norm(x, Tensor<double>::full({64}, 1.0), Tensor<double>::zeros({64}), 1e-6);
    for (Index r = 0; r < 3; ++r) {
        auto seg = z.data().segment(r * 64, 64);
        const double mu = seg.mean();
        CHECK(std::abs(mu) < 1e-5);
        CHECK(std::abs((seg - mu).square().mean() - 1) < 1e-4);
    }
    CHECK_THROWS_AS(layer_norm(x, Tensor<double>::full({3}, 1.0), Tensor<double>::zeros({3})), ShapeError);
}

TEST_CASE("gelu")
{
    auto g = gelu(Tensor<double>::from({2}, {0, 10}));
    CHECK(g.data()[0] == 0);
    CHECK(std::abs(g.data()[1] - 10) < 1e-6);

    for (double v = -6; v <= 6; v += 0.37) {
        const long double ref = 0.5L * v * (1 + sits::testing::erf_series(v / std::sqrt(2.0L)));
        const double got = gelu(Tensor<double>::from({1}, {v})).item();
        CHECK(std::abs(got - static_cast<double>(ref)) < 1e-7);
    }
}

TEST_CASE("cross_entropy")
{
    auto uniform = Tensor<double>::zeros({3, 5});
    std::vector<int> t{0, 4, 2};
    CHECK(cross_entropy(uniform, t).item() == doctest::Approx(std::log(5.0)).epsilon(1e-12));

    double previous = 1e9;
    for (double margin : {1.0, 5.0, 20.0, 50.0}) {
        auto l = Tensor<double>::from({1, 3}, {margin, 0, 0});
        std::vector<int> hot{0};
        const double loss = cross_entropy(l, hot).item();
        CHECK(loss < previous);
        previous = loss;
    }
    CHECK(previous < 1e-20);

    std::mt19937_64 rng(13);
    auto logits = random_tensor<double>({4, 6}, rng, false, 3.0);
    std::vector<int> tg{1, 5, 0, 3};
    double expected = 0;
    for (Index r = 0; r < 4; ++r) {
        double z = 0;
        for (Index k = 0; k < 6; ++k) z += std::exp(logits.data()[r * 6 + k]);
        expected += std::log(z) - logits.data()[r * 6 + tg[static_cast<std::size_t>(r)]];
    }
    CHECK(std::abs(cross_entropy(logits, tg).item() - expected / 4) < 1e-6);

    std::vector<int> some_ignored{1, -1, -1, 3};
    const double two = (cross_entropy(slice(logits, 0, 0, 1), std::vector<int>{1}).item() +
                        cross_entropy(slice(logits, 0, 3, 4), std::vector<int>{3}).item()) / 2;
    CHECK(cross_entropy(logits, some_ignored).item() == doctest::Approx(two).epsilon(1e-12));
    std::vector<int> all_ignored{-1, -1, -1, -1};
    CHECK(cross_entropy(logits, all_ignored).item() == 0);
    std::vector<int> bad{1, 6, 0, 0};
    CHECK_THROWS_AS(cross_entropy(logits, bad), IndexError);
}

TEST_CASE("structural round trips")
{
    std::mt19937_64 rng(2);
    auto a = random_tensor<float>({2, 3, 4}, rng);
    auto b = random_tensor<float>({2, 5, 4}, rng);
    auto c = concat<float>({a, b}, 1);
    CHECK(c.shape() == Shape{2, 8, 4});
    CHECK((slice(c, 1, 0, 3).data() == a.data()).all());
    CHECK((slice(c, 1, 3, 8).data() == b.data()).all());

    auto v = Tensor<float>::from({6}, {1, 2, 3, 4, 5, 6});
    auto back = reshape(reshape(v, {2, 3}), {6});
    CHECK((back.data() == v.data()).all());
    CHECK(reshape(v, {-1, 2}).shape() == Shape{3, 2});
    CHECK_THROWS_AS(reshape(v, {4, 2}), ShapeError);

    auto p = permute(a, {2, 0, 1});
    CHECK(p.shape() == Shape{4, 2, 3});
    CHECK(p.data()[((1 * 2) + 1) * 3 + 2] == a.data()[(1 * 3 + 2) * 4 + 1]);
    CHECK((permute(p, {1, 2, 0}).data() == a.data()).all());
    CHECK((transpose(transpose(a, 0, 2), 0, 2).data() == a.data()).all());

    CHECK_THROWS_AS(add(a, b), ShapeError);
    CHECK_THROWS_AS(concat<float>({a, random_tensor<float>({3, 3, 4}, rng)}, 1), ShapeError);
    CHECK_THROWS_AS(slice(a, 1, 2, 2), ShapeError);
}

TEST_CASE("backward basics")
{
    auto x = Tensor<double>::from({3}, {1, 2, 3}, true);
    backward(sum(x));
    CHECK((x.grad() == 1).all());

    auto m = Tensor<double>::from({5}, {1, 2, 3, 4, 5}, true);
    backward(mean(m));
    CHECK((m.grad() - 0.2).abs().maxCoeff() < 1e-15);

    CHECK_THROWS(backward(m));
    auto vec = scale(m, 2.0);
    CHECK_THROWS_AS(backward(vec), ShapeError);
}

TEST_CASE("two-layer linear chain against the product rule")
{
    // L = sum(W2 (W1 x)); dL/dW1 = (W2^T 1) x^T, dL/dW2 = 1 (W1 x)^T
    std::mt19937_64 rng(4);
    auto x = random_tensor<double>({3, 1}, rng);
    auto w1 = random_tensor<double>({4, 3}, rng, true);
    auto w2 = random_tensor<double>({2, 4}, rng, true);
    backward(sum(matmul(w2, matmul(w1, x))));
    Eigen::MatrixXd X = Eigen::Map<const Eigen::MatrixXd>(x.data().data(), 3, 1);
    Eigen::Matrix<double, 4, 3, Eigen::RowMajor> W1 = Eigen::Map<const Eigen::Matrix<double, 4, 3, Eigen::RowMajor>>(w1.data().data());
    Eigen::Matrix<double, 2, 4, Eigen::RowMajor> W2 = Eigen::Map<const Eigen::Matrix<double, 2, 4, Eigen::RowMajor>>(w2.data().data());
    Eigen::Matrix<double, 4, 3, Eigen::RowMajor> dW1 = (W2.transpose() * Eigen::Vector2d::Ones()) * X.transpose();
    Eigen::Matrix<double, 2, 4, Eigen::RowMajor> dW2 = Eigen::Vector2d::Ones() * (W1 * X).transpose();
    for (Index i = 0; i < 12; ++i) CHECK(std::abs(w1.grad()[i] - dW1.data()[i]) < 1e-6);
    for (Index i = 0; i < 8; ++i) CHECK(std::abs(w2.grad()[i] - dW2.data()[i]) < 1e-6);
}

TEST_CASE("shared subexpressions accumulate like the expanded tree")
{
    std::mt19937_64 rng(9);
    auto xa = random_tensor<double>({4}, rng, true);
    auto xb = xa.detach();
    xb.set_requires_grad(true);
    // DAG: s = x*x reused three times.
    auto s = mul(xa, xa);
    backward(sum(add(mul(s, s), s)));
    // Tree: every use rebuilt from the leaf.
    backward(sum(add(mul(mul(xb, xb), mul(xb, xb)), mul(xb, xb))));
    CHECK((xa.grad() - xb.grad()).abs().maxCoeff() < 1e-12);
}

TEST_CASE("no-grad guard records nothing")
{
    auto x = Tensor<double>::from({2}, {1, 2}, true);
    NoGradGuard guard;
    auto y = sum(mul(x, x));
    CHECK_FALSE(y.requires_grad());
    CHECK(y.node()->parents.empty());
}

TEST_CASE("finite-difference sweep over every op, 20 seeds")
{
    for (const auto& [op, err] : sits::testing::op_gradient_sweep(20)) {
        INFO(op);
        CHECK(err < 1e-4);
    }
}
