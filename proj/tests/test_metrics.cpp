#include <gtest/gtest.h>

#include "abandon/metrics.hpp"
#include "abandon/random.hpp"

using namespace abandon;

namespace {

std::vector<Label> standard_truth() {
    std::vector<Label> t(30, Label::bad);
    t.insert(t.end(), 77, Label::good);
    return t;
}

// Independent recomputation from confusion-matrix counts.
struct Oracle {
    double p = 0, r = 0, f = 0;
};

Oracle brute_force(const std::vector<Label>& pred, const std::vector<Label>& truth) {
    double tp[2] = {0, 0}, fp[2] = {0, 0}, fn[2] = {0, 0}, sup[2] = {0, 0};
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int t = truth[i] == Label::good, q = pred[i] == Label::good;
        sup[t] += 1;
        if (t == q)
            tp[t] += 1;
        else {
            fp[q] += 1;
            fn[t] += 1;
        }
    }
    Oracle o;
    const double n = static_cast<double>(truth.size());
    for (int c = 0; c < 2; ++c) {
        const double p = tp[c] + fp[c] > 0 ? tp[c] / (tp[c] + fp[c]) : 0;
        const double r = tp[c] + fn[c] > 0 ? tp[c] / (tp[c] + fn[c]) : 0;
        const double f = p + r > 0 ? 2 * p * r / (p + r) : 0;
        o.p += sup[c] / n * p;
        o.r += sup[c] / n * r;
        o.f += sup[c] / n * f;
    }
    return o;
}

// Area under the empirical ROC step curve by the trapezoid rule.
double trapezoid_auc(const std::vector<double>& s, const std::vector<Label>& t) {
    std::vector<double> thr(s);
    std::sort(thr.begin(), thr.end(), std::greater<>());
    thr.erase(std::unique(thr.begin(), thr.end()), thr.end());
    double P = 0, N = 0;
    for (auto l : t) (l == Label::good ? P : N) += 1;
    double area = 0, px = 0, py = 0;
    for (double th : thr) {
        double tp = 0, fp = 0;
        for (std::size_t i = 0; i < s.size(); ++i)
            if (s[i] >= th) (t[i] == Label::good ? tp : fp) += 1;
        const double x = fp / N, y = tp / P;
        area += (x - px) * (y + py) / 2;
        px = x;
        py = y;
    }
    return area;
}

double wilson_low(double p, double n, double z) {
    return (p + z * z / (2 * n) - z * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n))) / (1 + z * z / n);
}

} // namespace

TEST(Weighted, PredictAllBad) {
    auto truth = standard_truth();
    std::vector<Label> pred(truth.size(), Label::bad);
    auto m = weighted_metrics(pred, truth);
    // bad: P = 30/107, R = 1; good: undefined P -> 0
    const double p_bad = 30.0 / 107.0;
    const double f_bad = 2 * p_bad / (p_bad + 1);
    EXPECT_NEAR(m.precision, 30.0 / 107 * p_bad, 1e-12);
    EXPECT_NEAR(m.recall, 30.0 / 107, 1e-12);
    EXPECT_NEAR(m.f1, 30.0 / 107 * f_bad, 1e-12);
    EXPECT_NEAR(m.precision, 0.0786, 5e-5);
    EXPECT_NEAR(m.recall, 0.2804, 5e-5);
    EXPECT_NEAR(m.f1, 0.1228, 5e-5);
}

TEST(Weighted, PerfectAndTotalMiss) {
    std::vector<Label> t{Label::bad, Label::good, Label::bad, Label::good};
    auto perfect = weighted_metrics(t, t);
    EXPECT_EQ(perfect.precision, 1);
    EXPECT_EQ(perfect.recall, 1);
    EXPECT_EQ(perfect.f1, 1);
    std::vector<Label> flip{Label::good, Label::bad, Label::good, Label::bad};
    auto miss = weighted_metrics(flip, t);
    EXPECT_EQ(miss.precision, 0);
    EXPECT_EQ(miss.recall, 0);
    EXPECT_EQ(miss.f1, 0);
}

TEST(Weighted, ExhaustiveAgainstBruteForce) {
    for (std::size_t n = 1; n <= 8; ++n) {
        for (unsigned tmask = 0; tmask < (1u << n); ++tmask) {
            std::vector<Label> truth(n);
            for (std::size_t i = 0; i < n; ++i) truth[i] = (tmask >> i) & 1 ? Label::good : Label::bad;
            for (unsigned pmask = 0; pmask < (1u << n); ++pmask) {
                std::vector<Label> pred(n);
                for (std::size_t i = 0; i < n; ++i) pred[i] = (pmask >> i) & 1 ? Label::good : Label::bad;
                const auto m = weighted_metrics(pred, truth);
                const auto o = brute_force(pred, truth);
                ASSERT_NEAR(m.precision, o.p, 1e-12);
                ASSERT_NEAR(m.recall, o.r, 1e-12);
                ASSERT_NEAR(m.f1, o.f, 1e-12);
            }
        }
    }
}

TEST(Threshold, InclusiveAtHalf) {
    std::vector<double> s{0.49, 0.5, 0.51};
    auto p = threshold_scores(s);
    EXPECT_EQ(p[0], Label::bad);
    EXPECT_EQ(p[1], Label::good);
    EXPECT_EQ(p[2], Label::good);
}

TEST(RocAuc, Examples) {
    std::vector<Label> t{Label::good, Label::good, Label::bad, Label::bad};
    EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.9, 0.8, 0.4, 0.3}, t), 1.0);
    EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, t), 0.5);
    EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.9, 0.4, 0.8, 0.3}, t), 0.75);
}

TEST(RocAuc, MatchesTrapezoid) {
    Rng rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        const auto n = static_cast<std::size_t>(rng.uniform_int(2, 40));
        std::vector<double> s(n);
        std::vector<Label> t(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng.uniform_int(0, 6)) / 6.0; // plenty of ties
            t[i] = i == 0 ? Label::good : i == 1 ? Label::bad : (rng.bernoulli(0.6) ? Label::good : Label::bad);
        }
        EXPECT_NEAR(roc_auc(s, t), trapezoid_auc(s, t), 1e-12);
    }
}

TEST(RocAuc, SingleClassThrows) {
    std::vector<Label> t{Label::good, Label::good};
    EXPECT_THROW(roc_auc(std::vector<double>{0.1, 0.2}, t), DegenerateError);
}

TEST(Wilson, Examples) {
    EXPECT_EQ(wilson_interval(0, 10).low, 0);
    auto a = wilson_interval(0.5, 100);
    EXPECT_NEAR(a.low, 0.4038, 5e-5);
    EXPECT_NEAR(a.high, 0.5962, 5e-5);
    auto b = wilson_interval(0.65, 535);
    EXPECT_NEAR(b.low, 0.609, 0.005);
    EXPECT_NEAR(b.high, 0.689, 0.005);
}

TEST(Wilson, ClosedFormAndMonotone) {
    Rng rng(8);
    for (int i = 0; i < 100; ++i) {
        const double p = rng.uniform();
        const auto n = static_cast<std::size_t>(rng.uniform_int(1, 5000));
        EXPECT_NEAR(wilson_interval(p, n).low, wilson_low(p, static_cast<double>(n), 1.96), 1e-10);
        const auto narrow = wilson_interval(p, 2 * n);
        const auto wide = wilson_interval(p, n);
        EXPECT_LE(narrow.high - narrow.low, wide.high - wide.low);
    }
}

TEST(Report, UsesWilsonN) {
    std::vector<double> s{0.9, 0.1, 0.7, 0.2};
    std::vector<Label> t{Label::good, Label::bad, Label::good, Label::bad};
    auto r = make_report(s, t, 20);
    EXPECT_EQ(r.wilson_n, 20u);
    EXPECT_DOUBLE_EQ(r.f1_ci.low, wilson_interval(1.0, 20).low);
    EXPECT_DOUBLE_EQ(r.roc_auc, 1.0);
}
