#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "sits/error.hpp"
#include "sits/metrics.hpp"

using namespace sits;

namespace {

std::vector<int> random_labels(std::mt19937_64& rng, std::size_t n, int k)
{
    std::vector<int> out(n);
    for (auto& v : out) v = static_cast<int>(rng() % static_cast<std::uint64_t>(k));
    return out;
}

} // namespace

TEST_CASE("confusion counts")
{
    const std::vector<int> ref{0, 1, 1, 0, 1, 0, 0, 1};
    CHECK(confusion(ref, ref, 2).counts() == (ConfusionMatrix::Counts(2, 2) << 4, 0, 0, 4).finished());

    auto pred = ref;
    pred[0] = 1;
    pred[2] = 0;
    pred[5] = 1;
    const auto cm = confusion(pred, ref, 2);
    CHECK(cm.counts()(0, 1) + cm.counts()(1, 0) == 3);
    CHECK(cm.total() == 8);

    std::mt19937_64 rng(1);
    for (int r = 0; r < 20; ++r) {
        const auto a = random_labels(rng, 500, 5), b = random_labels(rng, 500, 5);
        std::vector<std::int64_t> loop(25, 0);
        for (std::size_t i = 0; i < 500; ++i) ++loop[static_cast<std::size_t>(b[i] * 5 + a[i])];
        const auto m = confusion(a, b, 5);
        for (int i = 0; i < 5; ++i) {
            for (int j = 0; j < 5; ++j) CHECK(m.counts()(i, j) == loop[static_cast<std::size_t>(i * 5 + j)]);
        }
        CHECK(confusion(b, a, 5).counts() == m.transposed().counts());
    }

    CHECK_THROWS_AS(confusion(std::vector<int>{3}, std::vector<int>{0}, 3), IndexError);
    CHECK_THROWS(confusion(std::vector<int>{0, 1}, std::vector<int>{0}, 3));
}

TEST_CASE("organic row scores")
{
    // Background, Conventional, Organic; Organic recall 0.69 and precision 0.55
    ConfusionMatrix cm(3);
    cm.add(2, 2, 69 * 55);
    cm.add(2, 1, 55 * 100 - 69 * 55);
    cm.add(1, 2, 69 * 100 - 69 * 55);
    cm.add(1, 1, 40000);
    cm.add(0, 0, 50000);
    const auto s = class_scores(cm);
    CHECK(s[2].recall == doctest::Approx(0.69));
    CHECK(s[2].precision == doctest::Approx(0.55));
    CHECK(s[2].f1 == doctest::Approx(0.612).epsilon(1e-3));
    CHECK(std::round(s[2].f1 * 100) / 100 == doctest::Approx(0.61));
}

TEST_CASE("hand-built three-class scores")
{
    ConfusionMatrix cm(3);
    // rows reference, columns predicted
    const int table[3][3] = {{5, 1, 0}, {2, 7, 1}, {0, 3, 4}};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) cm.add(i, j, table[i][j]);
    }
    const auto s = class_scores(cm);
    const double p[3] = {5.0 / 7, 7.0 / 11, 4.0 / 5};
    const double r[3] = {5.0 / 6, 7.0 / 10, 4.0 / 7};
    for (int k = 0; k < 3; ++k) {
        CHECK(s[static_cast<std::size_t>(k)].precision == doctest::Approx(p[k]).epsilon(1e-14));
        CHECK(s[static_cast<std::size_t>(k)].recall == doctest::Approx(r[k]).epsilon(1e-14));
        CHECK(s[static_cast<std::size_t>(k)].f1 == doctest::Approx(2 * p[k] * r[k] / (p[k] + r[k])).epsilon(1e-14));
    }
    const auto sum = summary(cm);
    double mean = 0;
    for (int k = 0; k < 3; ++k) mean += 2 * p[k] * r[k] / (p[k] + r[k]) / 3;
    CHECK(sum.macro_f1 == doctest::Approx(mean).epsilon(1e-14));
    CHECK(sum.overall_accuracy == doctest::Approx(16.0 / 23).epsilon(1e-14));
}

TEST_CASE("identity and two-class means")
{
    const std::vector<int> ref{0, 1, 2, 2, 1};
    const auto s = summary(confusion(ref, ref, 3));
    CHECK(s.macro_f1 == 1.0);
    CHECK(s.overall_accuracy == 1.0);
    for (const auto& c : class_scores(confusion(ref, ref, 3))) CHECK(c.f1 == 1.0);

    ConfusionMatrix two(2);
    two.add(0, 0, 10);
    two.add(1, 0, 5);
    const auto c = class_scores(two);
    CHECK(c[1].f1 == 0.0);
    CHECK(c[1].recall == 0.0);
    CHECK_FALSE(c[1].precision_defined); // nothing predicted as class 1
    CHECK(c[0].f1 == doctest::Approx(0.8));
    CHECK(summary(two).macro_f1 == doctest::Approx(0.4));

    ConfusionMatrix perfect(2);
    perfect.add(0, 0, 3);
    perfect.add(1, 1, 3);
    CHECK(summary(perfect).macro_f1 == 0.5 * (1.0 + 1.0));
}

TEST_CASE("absent classes are flagged and count as zero")
{
    ConfusionMatrix cm(3);
    cm.add(0, 0, 4);
    cm.add(1, 1, 4);
    const auto s = class_scores(cm);
    CHECK_FALSE(s[2].precision_defined);
    CHECK_FALSE(s[2].recall_defined);
    CHECK_FALSE(s[2].f1_defined);
    CHECK(s[2].f1 == 0.0);
    CHECK(summary(cm).macro_f1 == doctest::Approx(2.0 / 3));
    CHECK_THROWS_AS(summary(ConfusionMatrix(3)), InputError);
}

TEST_CASE("metric identities on random matrices")
{
    std::mt19937_64 rng(2);
    for (int r = 0; r < 30; ++r) {
        const int k = 2 + static_cast<int>(rng() % 5);
        const auto ref = random_labels(rng, 300, k);
        auto pred = ref;
        for (auto& v : pred) {
            if (rng() % 3 == 0) v = static_cast<int>(rng() % static_cast<std::uint64_t>(k));
        }
        const auto cm = confusion(pred, ref, k);
        const auto s = class_scores(cm);
        const auto sum = summary(cm);

        double oa = 0;
        for (int c = 0; c < k; ++c) {
            const double share = static_cast<double>(cm.counts().row(c).sum()) / static_cast<double>(cm.total());
            oa += share * s[static_cast<std::size_t>(c)].recall;
            const auto& sc = s[static_cast<std::size_t>(c)];
            if (sc.precision_defined && sc.recall_defined) {
                CHECK(sc.f1 >= std::min(sc.precision, sc.recall) - 1e-15);
                CHECK(sc.f1 <= std::max(sc.precision, sc.recall) + 1e-15);
            }
        }
        CHECK(sum.overall_accuracy == doctest::Approx(oa).epsilon(1e-12));

        std::vector<int> perm(static_cast<std::size_t>(k));
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<int> pp, rr;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            pp.push_back(perm[static_cast<std::size_t>(pred[i])]);
            rr.push_back(perm[static_cast<std::size_t>(ref[i])]);
        }
        const auto cm2 = confusion(pp, rr, k);
        const auto s2 = class_scores(cm2);
        for (int c = 0; c < k; ++c) CHECK(s2[static_cast<std::size_t>(perm[static_cast<std::size_t>(c)])].f1 == s[static_cast<std::size_t>(c)].f1);
        CHECK(summary(cm2).macro_f1 == doctest::Approx(sum.macro_f1).epsilon(1e-14));
        CHECK(summary(cm2).overall_accuracy == sum.overall_accuracy);
        CHECK(macro_f1(pred, ref, k) == sum.macro_f1);
    }
}

TEST_CASE("reports")
{
    ConfusionMatrix cm(2, {"Background", "Maize"});
    cm.add(0, 0, 3);
    cm.add(1, 1, 1);
    cm.add(1, 0, 1);
    const auto csv = report_csv(cm);
    CHECK(csv.rfind("class,F1,Re.,Pr.\n", 0) == 0);
    CHECK(csv.find("Maize,0.6667,0.5000,1.0000") != std::string::npos);
    CHECK(csv.find("Mean,") != std::string::npos);
    const auto j = report_json(cm);
    CHECK(j.at("overall_accuracy").get<double>() == doctest::Approx(0.8));
    CHECK(j.at("confusion").size() == 2);

    ConfusionMatrix a(2), b(2);
    a.add(0, 1);
    b.add(0, 1, 2);
    a += b;
    CHECK(a.counts()(0, 1) == 3);
}
