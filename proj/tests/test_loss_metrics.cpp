#include <doctest.h>

#include "r2upp/loss.hpp"
#include "r2upp/metrics.hpp"
#include "test_util.hpp"

using namespace r2upp;
using r2upp::testing::random_tensor;

TEST_CASE("perfect confident prediction drives the loss to its floor") {
    Tensor y(1, 1, 4, 4), p(1, 1, 4, 4);
    Rng rng(5);
    for (size_t i = 0; i < y.data.size(); ++i) {
        y.data[i] = rng.below(2) ? 1.0 : 0.0;
        p.data[i] = y.data[i] == 1.0 ? 1.0 - 1e-9 : 1e-9;
    }
    // cross-entropy term -> 0, dice term -> 2yp/(y^2+p^2) -> 1 for the true class
    CHECK(hybrid_loss_value(y, p) == doctest::Approx(-1.0).epsilon(1e-5));
}

TEST_CASE("uniform half prediction has a closed-form loss") {
    // two-class view, y one-hot, p = 0.5 for both channels:
    // per pixel: [1*log(.5) + 2*.5/1.25] + [0 + 0] = log(.5) + 0.8
    Tensor y(1, 1, 3, 3), p(1, 1, 3, 3);
    for (size_t i = 0; i < 9; ++i) y.data[i] = (i % 2 == 0) ? 1.0 : 0.0;
    p.fill(0.5);
    const double expect = -(std::log(0.5) + 0.8);
    CHECK(hybrid_loss_value(y, p) == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("loss value agrees between the scalar helper and the tape node") {
    Rng rng(17);
    for (int rep = 0; rep < 20; ++rep) {
        Tensor y(2, 1, 5, 5), p = random_tensor(2, 1, 5, 5, rng, 0.02, 0.98);
        for (double& v : y.data) v = rng.below(2) ? 1.0 : 0.0;
        autograd::Var pv = autograd::input(p);
        autograd::Var loss = hybrid_loss(y, pv);
        CHECK(loss->value.data[0] == doctest::Approx(hybrid_loss_value(y, p)).epsilon(1e-12));
    }
}

TEST_CASE("loss gradient matches central differences") {
    Rng rng(23);
    Tensor y(1, 1, 4, 4), p = random_tensor(1, 1, 4, 4, rng, 0.05, 0.95);
    for (double& v : y.data) v = rng.below(2) ? 1.0 : 0.0;

    autograd::Var pv = autograd::input(p, /*need_grad=*/true);
    autograd::Var loss = hybrid_loss(y, pv);
    autograd::backward(loss);

    auto f = [&]() { return hybrid_loss_value(y, pv->value); };
    CHECK(r2upp::testing::max_grad_check_err(f, pv->value, pv->grad) < 1e-4);
}

TEST_CASE("supervision weights: all-but-last zero reduces to the last head loss") {
    Rng rng(31);
    Tensor y(1, 1, 4, 4);
    for (double& v : y.data) v = rng.below(2) ? 1.0 : 0.0;
    std::vector<autograd::Var> heads;
    for (int i = 0; i < 4; ++i)
        heads.push_back(autograd::input(random_tensor(1, 1, 4, 4, rng, 0.1, 0.9)));

    autograd::Var off = total_loss(y, heads, {0, 0, 0, 1});
    CHECK(off->value.data[0] ==
          doctest::Approx(hybrid_loss_value(y, heads[3]->value)).epsilon(1e-12));

    autograd::Var on = total_loss(y, heads, {1, 1, 1, 1});
    double sum = 0.0;
    for (int i = 0; i < 4; ++i) sum += hybrid_loss_value(y, heads[i]->value);
    CHECK(on->value.data[0] == doctest::Approx(sum).epsilon(1e-12));

    autograd::Var scaled = total_loss(y, heads, {0.5, 0, 2.0, 0});
    double expect = 0.5 * hybrid_loss_value(y, heads[0]->value) +
                    2.0 * hybrid_loss_value(y, heads[2]->value);
    CHECK(scaled->value.data[0] == doctest::Approx(expect).epsilon(1e-12));

    CHECK_THROWS_AS(total_loss(y, heads, {1, 1}), ShapeError);
}

namespace {

struct BruteCounts {
    long tp = 0, fp = 0, tn = 0, fn = 0;
};

BruteCounts brute(const std::vector<double>& gt, const std::vector<double>& pred) {
    BruteCounts c;
    for (size_t i = 0; i < pred.size(); ++i) {
        bool p = pred[i] != 0.0, t = gt[i] != 0.0;
        if (p && t) ++c.tp;
        else if (p && !t) ++c.fp;
        else if (!p && t) ++c.fn;
        else ++c.tn;
    }
    return c;
}

}  // namespace

TEST_CASE("metrics agree with a brute-force oracle on 120 random masks") {
    using namespace r2upp::metrics;
    Rng rng(41);
    for (int rep = 0; rep < 120; ++rep) {
        size_t n = 1 + rng.below(36);
        std::vector<double> gt(n), pred(n);
        // bias some cases toward all-zero / all-one to hit degenerate denominators
        int mode = static_cast<int>(rng.below(4));
        for (size_t i = 0; i < n; ++i) {
            pred[i] = (mode == 1) ? 0.0 : (mode == 2) ? 1.0 : (rng.below(2) ? 1.0 : 0.0);
            gt[i] = (mode == 1) ? 0.0 : (rng.below(2) ? 1.0 : 0.0);
        }
        BruteCounts c = brute(gt, pred);
        ConfusionCounts cc = confusion_counts(gt, pred);
        CHECK(cc.tp == c.tp);
        CHECK(cc.fp == c.fp);
        CHECK(cc.tn == c.tn);
        CHECK(cc.fn == c.fn);

        auto safe = [](double num, double den) { return den == 0.0 ? 1.0 : num / den; };
        CHECK(dice(gt, pred) == doctest::Approx(safe(2.0 * c.tp, 2.0 * c.tp + c.fp + c.fn)));
        CHECK(iou(gt, pred) == doctest::Approx(safe(c.tp, c.tp + c.fp + c.fn)));
        CHECK(accuracy(gt, pred) ==
              doctest::Approx(safe(c.tp + c.tn, c.tp + c.tn + c.fp + c.fn)));
        CHECK(sensitivity(gt, pred) == doctest::Approx(safe(c.tp, c.tp + c.fn)));
        CHECK(specificity(gt, pred) == doctest::Approx(safe(c.tn, c.tn + c.fp)));
    }
}

TEST_CASE("iou and dice obey j = d / (2 - d) whenever both are defined") {
    using namespace r2upp::metrics;
    Rng rng(47);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> gt(25), pred(25);
        for (size_t i = 0; i < 25; ++i) {
            pred[i] = rng.below(2) ? 1.0 : 0.0;
            gt[i] = rng.below(2) ? 1.0 : 0.0;
        }
        double d = dice(gt, pred);
        CHECK(std::fabs(iou(gt, pred) - d / (2.0 - d)) < 1e-12);
    }
}

TEST_CASE("both-empty masks score 1.0 on overlap metrics") {
    using namespace r2upp::metrics;
    std::vector<double> z(9, 0.0), o(9, 1.0);
    CHECK(dice(z, z) == 1.0);
    CHECK(iou(z, z) == 1.0);
    CHECK(sensitivity(z, z) == 1.0);
    CHECK(accuracy(z, z) == 1.0);
    CHECK(specificity(o, o) == 1.0);
    CHECK(dice(o, o) == 1.0);
}

TEST_CASE("confusion counting rejects non-binary and mismatched inputs") {
    using namespace r2upp::metrics;
    std::vector<double> a = {0.5, 1.0}, b = {1.0, 0.0}, c = {1.0, 0.0, 1.0};
    CHECK_THROWS_AS(confusion_counts(b, a), std::invalid_argument);
    CHECK_THROWS_AS(confusion_counts(b, c), ShapeError);
}

TEST_CASE("binarize thresholds with >= semantics") {
    using namespace r2upp::metrics;
    std::vector<double> p = {0.49, 0.5, 0.51, 0.0};
    CHECK(binarize(p, 0.5) == std::vector<double>{0.0, 1.0, 1.0, 0.0});
    CHECK(binarize(p, 0.75) == std::vector<double>{0.0, 0.0, 0.0, 0.0});

    Tensor pt(1, 1, 1, 4);
    pt.data = p;
    CHECK(binarize(pt, 0.5).data == std::vector<double>{0.0, 1.0, 1.0, 0.0});
}

TEST_CASE("all_metrics assembles the five scores consistently") {
    using namespace r2upp::metrics;
    std::vector<double> gt = {1, 0, 1, 0}, pred = {1, 1, 0, 0};
    MetricRow row = all_metrics(gt, pred);
    CHECK(row.dice == doctest::Approx(0.5));
    CHECK(row.iou == doctest::Approx(1.0 / 3.0));
    CHECK(row.accuracy == doctest::Approx(0.5));
    CHECK(row.sensitivity == doctest::Approx(0.5));
    CHECK(row.specificity == doctest::Approx(0.5));
}
