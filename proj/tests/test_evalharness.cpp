#include <gtest/gtest.h>

#include <set>

#include "abandon/evalharness.hpp"
#include "abandon/synthgen.hpp"
#include "support.hpp"

using namespace abandon;

namespace {

std::vector<Label> standard_labels(Rng& rng) {
    std::vector<Label> l(30, Label::bad);
    l.insert(l.end(), 77, Label::good);
    rng.shuffle(l);
    return l;
}

void expect_partition(const std::vector<Fold>& folds, std::size_t n) {
    std::vector<int> seen(n, 0);
    for (const auto& f : folds)
        for (auto i : f) ++seen[i];
    for (auto c : seen) EXPECT_EQ(c, 1);
}

ExperimentConfig tiny_base() {
    ExperimentConfig c;
    c.network.units = 2;
    c.network.num_layers = 1;
    c.training.max_epochs = 2;
    c.training.patience = 1;
    c.balance.k_neighbors = 2;
    c.balance.target_per_class = 16;
    c.forest.n_trees = 5;
    return c;
}

std::vector<MouseSequence> small_synth(std::uint64_t seed) {
    GeneratorParams p;
    p.rng_seed = seed;
    p.n_good = 18;
    p.n_bad = 12;
    return generate_dataset(p);
}

} // namespace

TEST(Stratify, ThirtySeventySevenOverFiftySeeds) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng shuffle_rng(seed + 1000);
        const auto labels = standard_labels(shuffle_rng);
        Rng rng(seed);
        const auto folds = stratified_kfold(labels, 10, rng);
        ASSERT_EQ(folds.size(), 10u);
        expect_partition(folds, labels.size());
        for (const auto& f : folds) {
            const auto bad = std::count_if(f.begin(), f.end(), [&](std::size_t i) { return labels[i] == Label::bad; });
            EXPECT_EQ(bad, 3);
            EXPECT_GE(f.size() - static_cast<std::size_t>(bad), 7u);
            EXPECT_LE(f.size() - static_cast<std::size_t>(bad), 8u);
        }
    }
}

TEST(Stratify, SingletonsAndTooFew) {
    std::vector<Label> l(10, Label::good);
    Rng rng(0);
    auto folds = stratified_kfold(l, 10, rng);
    for (const auto& f : folds) EXPECT_EQ(f.size(), 1u);
    expect_partition(folds, 10);

    std::vector<Label> few{Label::bad, Label::good, Label::good, Label::good};
    EXPECT_THROW(stratified_kfold(few, 2, rng), DegenerateError);
}

TEST(FoldPlan, InnerFoldsPartitionOuterTraining) {
    Rng rng(4);
    const auto labels = standard_labels(rng);
    const auto plan = make_fold_plan(labels, 42);
    for (std::size_t o = 0; o < 10; ++o) {
        const auto train = plan.outer_train(o);
        std::set<std::size_t> test(plan.outer[o].begin(), plan.outer[o].end());
        std::set<std::size_t> inner_union;
        for (const auto& f : plan.inner[o]) {
            for (auto i : f) {
                EXPECT_FALSE(test.contains(i));
                EXPECT_TRUE(inner_union.insert(i).second);
            }
        }
        EXPECT_EQ(inner_union.size(), train.size());
        EXPECT_EQ(plan.inner[o].size(), 5u);
    }
    const auto again = make_fold_plan(labels, 42);
    EXPECT_EQ(again.outer, plan.outer);
    EXPECT_EQ(again.inner, plan.inner);
}

TEST(Experiment, IdsRoundTrip) {
    for (auto id : {"constant_bad", "rf:adasyn", "std-time:distortion_or_trimming", "raw:smote", "speed-km:class_weighted"})
        EXPECT_EQ(experiment_id(parse_experiment(id)), id);
    EXPECT_EQ(experiment_id(parse_experiment("bilstm:std:none")), "std:none");
    EXPECT_THROW(parse_experiment("std"), ConfigError);
    EXPECT_THROW(parse_experiment("std:magic"), ConfigError);
}

TEST(Experiment, GridHasThirtySixCells) {
    const auto cells = grid_cells();
    EXPECT_EQ(cells.size(), 36u);
    std::set<std::string> ids;
    for (const auto& c : cells) ids.insert(experiment_id(c));
    EXPECT_EQ(ids.size(), 36u);
}

TEST(NestedCv, ConstantBaselineMatchesDirectMetrics) {
    auto data = testing_support::standard_dataset();
    const auto r = nested_cv(data, parse_experiment("constant_bad"), 42);
    std::vector<Label> truth, pred;
    for (const auto& s : data) {
        truth.push_back(s.label());
        pred.push_back(Label::bad);
    }
    const auto direct = weighted_metrics(pred, truth);
    EXPECT_DOUBLE_EQ(r.pooled.weighted.precision, direct.precision);
    EXPECT_DOUBLE_EQ(r.pooled.weighted.recall, direct.recall);
    EXPECT_DOUBLE_EQ(r.pooled.weighted.f1, direct.f1);
    EXPECT_DOUBLE_EQ(r.pooled.roc_auc, 0.5);
    EXPECT_EQ(r.n_models, 50u);
    EXPECT_EQ(r.pooled.wilson_n, 535u);

    std::vector<int> scored(data.size(), 0);
    const auto plan = make_fold_plan(truth, 42);
    for (const auto& run : r.runs)
        for (auto i : plan.outer[run.outer]) ++scored[i];
    for (auto c : scored) EXPECT_EQ(c, 5);
}

TEST(NestedCv, RandomForestLeakageCheckedEverywhere) {
    auto data = small_synth(3);
    auto cfg = parse_experiment("rf:adasyn", tiny_base());
    const auto r = nested_cv(data, cfg, 7, {3, 2, 1});
    EXPECT_EQ(r.runs.size(), 6u);
    for (const auto& run : r.runs) {
        EXPECT_GT(run.n_synthetic, 0u);
        EXPECT_EQ(run.leakage_checked, run.n_train);
    }
    const auto again = nested_cv(data, cfg, 7, {3, 2, 1});
    EXPECT_EQ(again.scores, r.scores);
}

TEST(NestedCv, InvalidDataRejected) {
    auto data = small_synth(4);
    data[3].events.resize(1);
    EXPECT_THROW(nested_cv(data, parse_experiment("constant_bad"), 1, {3, 2, 1}), ValidationError);
    auto dup = small_synth(4);
    dup[1].session_id = dup[0].session_id;
    EXPECT_THROW(nested_cv(dup, parse_experiment("constant_bad"), 1, {3, 2, 1}), ValidationError);
}

TEST(NestedCv, ResultsIndependentOfJobsAndCompanions) {
    auto data = small_synth(5);
    const auto base = tiny_base();
    const auto cell = parse_experiment("std-time:smote", base);
    const auto alone = nested_cv(data, cell, 9, {3, 2, 1});
    const auto many = nested_cv_many(data, {parse_experiment("rf:none", base), cell}, 9, {3, 2, 3});
    EXPECT_EQ(many[1].scores, alone.scores);
}

TEST(Grid, BaselinesFirstThenRankedCells) {
    auto data = small_synth(6);
    const auto reports = run_grid(data, 2, {3, 2, 2}, tiny_base());
    ASSERT_EQ(reports.size(), 38u);
    EXPECT_EQ(experiment_id(reports[0].config), "constant_bad");
    EXPECT_EQ(experiment_id(reports[1].config), "rf:adasyn");
    for (std::size_t i = 3; i < reports.size(); ++i)
        EXPECT_GE(reports[i - 1].pooled.weighted.f1, reports[i].pooled.weighted.f1);

    const auto md = render_markdown(reports);
    EXPECT_EQ(std::count(md.begin(), md.end(), '\n'), 40);
    EXPECT_NE(md.find("| All abandoned queries are considered bad abandonments |  |  | "), std::string::npos);
    const auto again = run_grid(data, 2, {3, 2, 1}, tiny_base());
    EXPECT_EQ(render_markdown(again), md);
    EXPECT_EQ(render_csv(again), render_csv(reports));
}

TEST(Render, IntervalFormat) {
    EvalReport r;
    r.config = parse_experiment("constant_bad");
    r.pooled.weighted.precision = 0.0786;
    r.pooled.weighted.recall = 0.2804;
    r.pooled.weighted.f1 = 0.1228;
    r.pooled.roc_auc = 0.5;
    r.pooled.precision_ci = wilson_interval(0.0786, 535);
    r.pooled.recall_ci = wilson_interval(0.2804, 535);
    r.pooled.f1_ci = wilson_interval(0.1228, 535);
    r.pooled.auc_ci = wilson_interval(0.5, 535);
    const auto md = render_markdown({r});
    EXPECT_NE(md.find("0.08 ["), std::string::npos);
    EXPECT_NE(md.find("0.28 ["), std::string::npos);
    EXPECT_NE(md.find("0.12 ["), std::string::npos);
    EXPECT_NE(md.find("0.50 [0.46, 0.54]"), std::string::npos);
    const auto j = report_to_json(r);
    EXPECT_EQ(j["experiment"], "constant_bad");
}
