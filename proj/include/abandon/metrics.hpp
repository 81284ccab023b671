#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "error.hpp"
#include "seqdata.hpp"

namespace abandon {

struct ClassMetrics {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    std::size_t support = 0;
};

/// Per-class precision/recall/F and their support-weighted averages.
struct WeightedMetrics {
    std::array<ClassMetrics, 2> per_class{}; ///< indexed by Label
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    std::size_t n = 0;
};

inline WeightedMetrics weighted_metrics(std::span<const Label> predicted, std::span<const Label> truth) {
    if (predicted.size() != truth.size()) throw ConfigError("prediction and truth sizes differ");
    if (truth.empty()) throw DegenerateError("metrics need at least one item");
    // confusion[true][pred]
    std::array<std::array<std::size_t, 2>, 2> confusion{};
    for (std::size_t i = 0; i < truth.size(); ++i)
        ++confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];

    WeightedMetrics m;
    m.n = truth.size();
    for (std::size_t c = 0; c < 2; ++c) {
        const std::size_t tp = confusion[c][c];
        const std::size_t fp = confusion[1 - c][c];
        const std::size_t fn = confusion[c][1 - c];
        auto& cm = m.per_class[c];
        cm.support = tp + fn;
        cm.precision = tp + fp > 0 ? double(tp) / double(tp + fp) : 0.0;
        cm.recall = tp + fn > 0 ? double(tp) / double(tp + fn) : 0.0;
        cm.f1 = cm.precision + cm.recall > 0 ? 2 * cm.precision * cm.recall / (cm.precision + cm.recall) : 0.0;
        const double w = double(cm.support) / double(m.n);
        m.precision += w * cm.precision;
        m.recall += w * cm.recall;
        m.f1 += w * cm.f1;
    }
    return m;
}

inline std::vector<Label> threshold_scores(std::span<const double> scores, double threshold = 0.5) {
    std::vector<Label> out;
    out.reserve(scores.size());
    for (double s : scores) out.push_back(s >= threshold ? Label::good : Label::bad);
    return out;
}

/// Probability that a random good item outscores a random bad one; ties count
/// one half.
inline double roc_auc(std::span<const double> scores, std::span<const Label> truth) {
    if (scores.size() != truth.size()) throw ConfigError("score and truth sizes differ");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double pos_rank_sum = 0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * double(i + 1 + j); // mean of ranks i+1 .. j
        for (std::size_t k = i; k < j; ++k)
            if (truth[order[k]] == Label::good) {
                pos_rank_sum += avg_rank;
                ++n_pos;
            }
        i = j;
    }
    const std::size_t n_neg = scores.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DegenerateError("ROC AUC undefined for a single class");
    const double u = pos_rank_sum - double(n_pos) * double(n_pos + 1) / 2.0;
    return u / (double(n_pos) * double(n_neg));
}

struct Interval {
    double low = 0;
    double high = 0;
};

/// Wilson score interval for a binomial proportion.
inline Interval wilson_interval(double p, std::size_t n, double z = 1.96) {
    if (n == 0) throw ConfigError("Wilson interval needs n >= 1");
    if (!(p >= 0 && p <= 1)) throw ConfigError("proportion must lie in [0, 1]");
    const double nn = static_cast<double>(n);
    const double z2 = z * z;
    const double denom = 1 + z2 / nn;
    const double center = (p + z2 / (2 * nn)) / denom;
    const double half = z * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn)) / denom;
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

/// Headline numbers for one experiment: weighted P/R/F, AUC, and Wilson
/// intervals computed with `wilson_n` trials.
struct MetricsReport {
    WeightedMetrics weighted;
    double roc_auc = 0.5;
    std::size_t wilson_n = 0;
    Interval precision_ci;
    Interval recall_ci;
    Interval f1_ci;
    Interval auc_ci;
};

inline MetricsReport make_report(std::span<const double> scores, std::span<const Label> truth, std::size_t wilson_n,
                                 double threshold = 0.5) {
    MetricsReport r;
    const auto predicted = threshold_scores(scores, threshold);
    r.weighted = weighted_metrics(predicted, truth);
    r.roc_auc = roc_auc(scores, truth);
    r.wilson_n = wilson_n;
    r.precision_ci = wilson_interval(r.weighted.precision, wilson_n);
    r.recall_ci = wilson_interval(r.weighted.recall, wilson_n);
    r.f1_ci = wilson_interval(r.weighted.f1, wilson_n);
    r.auc_ci = wilson_interval(r.roc_auc, wilson_n);
    return r;
}

} // namespace abandon
