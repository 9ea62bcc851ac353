#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "sits/error.hpp"
#include "sits/trainer.hpp"

using namespace sits;
using sits::testing::random_tensor;

namespace {

TsvitConfig tiny()
{
    TsvitConfig c;
    c.patch_px = 4;
    c.embed_dim = 8;
    c.temporal_depth = 1;
    c.spatial_depth = 1;
    c.heads = 2;
    c.head_dim = 4;
    c.mlp_ratio = 2;
    c.T = 4;
    c.B = 2;
    c.tasks = {{"crop", 3}, {"mgmt", 3}};
    return c;
}

std::vector<LabeledPatch> toy_set(int n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> g(0, 1);
    std::vector<LabeledPatch> out;
    for (int k = 0; k < n; ++k) {
        LabeledPatch lp{SitsPatch::zeros(4, 2, 4, 4), LabelRaster::blank(4, 4)};
        for (std::size_t px = 0; px < 16; ++px) {
            const int crop = static_cast<int>(rng() % 3);
            lp.labels.crop[px] = static_cast<std::uint16_t>(crop);
            lp.labels.mgmt[px] = static_cast<std::uint8_t>(crop == 0 ? 0 : 1 + rng() % 2);
            lp.labels.field[px] = crop == 0 ? 0 : static_cast<std::uint32_t>(px + 1);
            for (int t = 0; t < 4; ++t) {
                for (int b = 0; b < 2; ++b) {
                    lp.patch.data[lp.patch.index(t, b, static_cast<int>(px / 4), static_cast<int>(px % 4))] =
                        g(rng) + static_cast<float>(crop) + 0.5f * lp.labels.mgmt[px] * b;
                }
            }
        }
        out.push_back(std::move(lp));
    }
    return out;
}

long double ce_oracle(const Tensor<double>& logits, const std::vector<int>& labels)
{
    const Index k = logits.dim(-1), rows = logits.size() / k;
    long double total = 0;
    for (Index r = 0; r < rows; ++r) {
        long double z = 0;
        for (Index j = 0; j < k; ++j) z += std::exp(static_cast<long double>(logits.data()[r * k + j]));
        total += std::log(z) - logits.data()[r * k + labels[static_cast<std::size_t>(r)]];
    }
    return total / rows;
}

} // namespace

TEST_CASE("learning-rate schedule anchors")
{
    TrainConfig cfg;
    CHECK(lr_at(0, cfg) == 5e-5);
    CHECK(lr_at(2, cfg) == 1e-4);
    CHECK(lr_at(20, cfg) == 1e-5);
    CHECK(lr_at(1, cfg) == doctest::Approx(7.5e-5).epsilon(1e-12));
    CHECK(lr_at(11, cfg) == doctest::Approx(5.5e-5).epsilon(1e-12));
    CHECK(lr_at(30, cfg) == 1e-5);
    CHECK(lr_at(40, cfg) == 1e-5);
    const double e = 7.3;
    const double cosine = 1e-5 + (1e-4 - 1e-5) * (1 + std::cos(std::numbers::pi * (e - 2) / 18)) / 2;
    CHECK(lr_at(e, cfg) == doctest::Approx(cosine).epsilon(1e-12));
}

TEST_CASE("learning-rate schedule is continuous")
{
    TrainConfig cfg;
    double prev = lr_at(0, cfg);
    for (int i = 1; i <= 40000; ++i) {
        const double now = lr_at(i * 1e-3, cfg);
        CHECK(std::abs(now - prev) < 1e-7);
        prev = now;
    }
}

TEST_CASE("training configuration validation")
{
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.lr_start = 2e-4;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.warmup_epochs = 25;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.cosine_end_epoch = 41;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("AdamW step")
{
    TrainConfig cfg;
    auto make = [] {
        NamedTensors<double> p;
        p.emplace_back("w", Tensor<double>::from({3}, {0.5, -1.5, 2.0}, true));
        return p;
    };

    SUBCASE("zero gradient without decay leaves parameters")
    {
        auto p = make();
        p[0].second.grad_mut().setZero();
        AdamWState<double> s;
        cfg.weight_decay = 0;
        adamw_step(p, s, 1e-3, cfg);
        CHECK((p[0].second.data() == make()[0].second.data()).all());
    }
    SUBCASE("zero gradient with decay shrinks parameters")
    {
        auto p = make();
        AdamWState<double> s;
        adamw_step(p, s, 1e-3, cfg); // no gradient counts as zero
        CHECK((p[0].second.data() - make()[0].second.data() * (1 - 1e-3 * 0.01)).abs().maxCoeff() < 1e-15);
    }
    SUBCASE("two steps match the expanded formula")
    {
        NamedTensors<double> p;
        p.emplace_back("x", Tensor<double>::scalar(0.5, true));
        AdamWState<double> s;
        long double x = 0.5L, m = 0, v = 0;
        const long double lr = 1e-3L, wd = 0.01L, b1 = 0.9L, b2 = 0.999L, eps = 1e-8L;
        for (int step = 1; step <= 2; ++step) {
            const double g = step == 1 ? 0.2 : -0.7;
            p[0].second.zero_grad();
            p[0].second.grad_mut()[0] = g;
            adamw_step(p, s, 1e-3, cfg);
            x *= 1 - lr * wd;
            m = b1 * m + (1 - b1) * g;
            v = b2 * v + (1 - b2) * g * g;
            const long double mh = m / (1 - std::pow(b1, step)), vh = v / (1 - std::pow(b2, step));
            x -= lr * mh / (std::sqrt(vh) + eps);
            CHECK(std::abs(p[0].second.data()[0] - static_cast<double>(x)) < 1e-10);
        }
        CHECK(s.step == 2);
    }
    SUBCASE("zero learning rate is the identity")
    {
        auto p = make();
        std::mt19937_64 rng(1);
        p[0].second.grad_mut() = random_tensor<double>({3}, rng).data();
        AdamWState<double> s;
        adamw_step(p, s, 0.0, cfg);
        CHECK((p[0].second.data() == make()[0].second.data()).all());
    }
    SUBCASE("non-finite gradient names the parameter")
    {
        auto p = make();
        p[0].second.grad_mut()[1] = std::nan("");
        AdamWState<double> s;
        try {
            adamw_step(p, s, 1e-3, cfg);
            FAIL("expected NumericError");
        } catch (const NumericError& e) {
            CHECK(std::string(e.what()).find("'w'") != std::string::npos);
        }
    }
}

TEST_CASE("global loss")
{
    std::mt19937_64 rng(2);
    const auto crop = random_tensor<double>({2, 3, 3, 4}, rng);
    const auto mgmt = random_tensor<double>({2, 3, 3, 3}, rng);
    std::vector<int> yc(18), ym(18);
    for (auto& y : yc) y = static_cast<int>(rng() % 4);
    for (auto& y : ym) y = static_cast<int>(rng() % 3);

    const double single = global_loss<double>({crop}, {yc}, {}).item();
    CHECK(std::abs(single - static_cast<double>(ce_oracle(crop, yc))) < 1e-12);

    const std::vector<double> mask{1.0, 0.0};
    CHECK(global_loss<double>({crop, mgmt}, {yc, ym}, mask).item() == doctest::Approx(single).epsilon(1e-14));

    const double both = global_loss<double>({crop, mgmt}, {yc, ym}, {}).item();
    CHECK(std::abs(both - static_cast<double>(ce_oracle(crop, yc) + ce_oracle(mgmt, ym))) < 1e-6);
    CHECK(both >= 0);

    const std::vector<double> w{0.3, 2.0};
    CHECK(global_loss<double>({crop, mgmt}, {yc, ym}, w).item() ==
          doctest::Approx(static_cast<double>(0.3L * ce_oracle(crop, yc) + 2.0L * ce_oracle(mgmt, ym))).epsilon(1e-12));

    // confident correct logits drive the loss towards zero
    auto sure = Tensor<double>::zeros({18, 4});
    for (int r = 0; r < 18; ++r) sure.data_mut()[r * 4 + yc[static_cast<std::size_t>(r)]] = 60;
    CHECK(global_loss<double>({sure}, {yc}, {}).item() < 1e-20);
}

TEST_CASE("task labels")
{
    auto l = LabelRaster::blank(1, 3);
    l.crop = {0, 4, 2};
    l.mgmt = {0, 2, 1};
    const std::vector<LabelRaster> two{l, l};
    CHECK(task_labels(two, "crop") == std::vector<int>{0, 4, 2, 0, 4, 2});
    CHECK(task_labels(two, "mgmt") == std::vector<int>{0, 2, 1, 0, 2, 1});
}

TEST_CASE("best epoch selection")
{
    const std::vector<double> f1{0.5, 0.7, 0.7, 0.6};
    CHECK(select_best_epoch(f1) == 2);
    CHECK(select_best_epoch(std::vector<double>{0.4}) == 1);
    CHECK_THROWS_AS(select_best_epoch(std::vector<double>{}), InputError);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 1);
    for (int r = 0; r < 50; ++r) {
        std::vector<double> m(10);
        for (auto& x : m) x = std::round(u(rng) * 5) / 5;
        const int best = select_best_epoch(m);
        for (double x : m) CHECK(m[static_cast<std::size_t>(best - 1)] >= x);
    }
}

TEST_CASE("training is deterministic and keeps the best epoch")
{
    const auto model = tiny();
    const auto train_set = toy_set(6, 4);
    const auto val_set = toy_set(2, 5);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.warmup_epochs = 1;
    cfg.cosine_end_epoch = 3;
    cfg.batch_patches = 2;
    cfg.lr_start = 1e-3;
    cfg.lr_peak = 5e-3;
    cfg.lr_floor = 1e-3;

    auto run = [&] {
        auto p = TsvitParams<double>::init(model);
        return train<double>(p, model, train_set, val_set, cfg);
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a.log.size() == 3);
    for (std::size_t e = 0; e < 3; ++e) {
        CHECK(a.log[e].loss_total == b.log[e].loss_total);
        CHECK(a.log[e].task_f1 == b.log[e].task_f1);
        CHECK(a.log[e].lr == lr_at(static_cast<double>(e), cfg));
    }
    CHECK(a.log[2].loss_total < a.log[0].loss_total);

    for (std::size_t t = 0; t < 2; ++t) {
        std::vector<double> f1;
        for (const auto& row : a.log) f1.push_back(row.task_f1[t]);
        CHECK(a.best_epoch[t] == select_best_epoch(f1));
        const auto again = validation_f1(a.best[t], model, val_set);
        CHECK(again[t] == f1[static_cast<std::size_t>(a.best_epoch[t] - 1)]);
    }

    cfg.epochs = 1;
    cfg.warmup_epochs = 0.5;
    cfg.cosine_end_epoch = 1;
    auto p = TsvitParams<double>::init(model);
    const auto one = train<double>(p, model, train_set, val_set, cfg);
    CHECK(one.best_epoch == std::vector<int>{1, 1});
}

TEST_CASE("chunked passes give the full-batch gradient")
{
    const auto model = tiny();
    const auto items = toy_set(4, 6);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.warmup_epochs = 0.5;
    cfg.cosine_end_epoch = 1;
    cfg.batch_patches = 4;
    cfg.weight_decay = 0;
    cfg.lr_start = cfg.lr_peak = cfg.lr_floor = 1e-3;

    auto p1 = TsvitParams<double>::init(model);
    auto p4 = TsvitParams<double>::init(model);
    cfg.chunk_patches = 1;
    const auto r1 = train<double>(p1, model, items, items, cfg);
    cfg.chunk_patches = 4;
    const auto r4 = train<double>(p4, model, items, items, cfg);
    CHECK(r1.log[0].loss_total == doctest::Approx(r4.log[0].loss_total).epsilon(1e-12));
    double diff = 0;
    for (std::size_t i = 0; i < p1.entries().size(); ++i) {
        diff = std::max(diff, (p1.entries()[i].second.data() - p4.entries()[i].second.data()).abs().maxCoeff());
    }
    CHECK(diff < 1e-9);
}

TEST_CASE("epoch log rows")
{
    EpochLog row{3, 1e-4, 1.5, {1.0, 0.5}, {0.25, 0.75}};
    CHECK(epoch_log_header() == "epoch,lr,loss_total,loss_crop,loss_mgmt,f1_crop,f1_mgmt");
    CHECK(epoch_log_row(row, tiny()) == "3,0.0001,1.5,1,0.5,0.25,0.75");
    auto single = tiny();
    single.tasks = {{"mgmt", 3}};
    EpochLog m{1, 1e-4, 0.5, {0.5}, {0.5}};
    CHECK(epoch_log_row(m, single) == "1,0.0001,0.5,,0.5,,0.5");
}
