#pragma once

// Stratified nested cross-validation over the model/representation/balancing
// grid, with pooled weighted metrics and Wilson intervals.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "balance.hpp"
#include "error.hpp"
#include "features.hpp"
#include "forest.hpp"
#include "metrics.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "rnn.hpp"
#include "seqdata.hpp"

namespace abandon {

// -- folds ----------------------------------------------------------------------------

using Fold = std::vector<std::size_t>;

/// Shuffle each class and deal its members round-robin into k folds; the
/// dealing position carries over between classes so fold sizes differ by at
/// most one both overall and per class.
inline std::vector<Fold> stratified_kfold(std::span<const Label> labels, int k, Rng& rng) {
    if (k < 1) throw ConfigError("k must be positive");
    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(i);
    for (const auto& c : by_class)
        if (!c.empty() && c.size() < static_cast<std::size_t>(k))
            throw DegenerateError("stratification needs at least " + std::to_string(k) + " members per class, got " +
                                  std::to_string(c.size()));
    std::vector<Fold> folds(static_cast<std::size_t>(k));
    std::size_t pos = 0;
    for (auto& members : by_class) {
        rng.shuffle(members);
        for (auto i : members) folds[pos++ % folds.size()].push_back(i);
    }
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

struct FoldPlan {
    std::vector<Fold> outer;              ///< test folds
    std::vector<std::vector<Fold>> inner; ///< per outer fold: validation folds over the outer-training indices
    std::uint64_t rng_seed = 0;

    Fold outer_train(std::size_t o) const {
        Fold out;
        for (std::size_t f = 0; f < outer.size(); ++f)
            if (f != o) out.insert(out.end(), outer[f].begin(), outer[f].end());
        std::sort(out.begin(), out.end());
        return out;
    }

    Fold inner_train(std::size_t o, std::size_t i) const {
        Fold out;
        for (std::size_t f = 0; f < inner[o].size(); ++f)
            if (f != i) out.insert(out.end(), inner[o][f].begin(), inner[o][f].end());
        std::sort(out.begin(), out.end());
        return out;
    }
};

inline FoldPlan make_fold_plan(std::span<const Label> labels, std::uint64_t seed, int outer_k = 10, int inner_k = 5) {
    FoldPlan plan;
    plan.rng_seed = seed;
    Rng outer_rng(derive_seed(seed, {0x6f75746572ULL}));
    plan.outer = stratified_kfold(labels, outer_k, outer_rng);
    for (std::size_t o = 0; o < plan.outer.size(); ++o) {
        const Fold train = plan.outer_train(o);
        std::vector<Label> sub;
        sub.reserve(train.size());
        for (auto i : train) sub.push_back(labels[i]);
        Rng inner_rng(derive_seed(seed, {0x696e6e6572ULL, o}));
        auto local = stratified_kfold(sub, inner_k, inner_rng);
        for (auto& f : local) {
            for (auto& i : f) i = train[i];
            std::sort(f.begin(), f.end());
        }
        plan.inner.push_back(std::move(local));
    }
    return plan;
}

// -- experiment configuration ---------------------------------------------------------

enum class ModelKind { bilstm, rf, constant_bad };

struct ExperimentConfig {
    ModelKind model = ModelKind::bilstm;
    RepresentationScheme scheme;
    BalanceStrategy balance;
    ModelConfig network; ///< input_dim and max_len are taken from the scheme
    TrainConfig training;
    ForestConfig forest;
};

/// Stable identifier: "constant_bad", "rf:<strategy>", "<scheme>:<strategy>".
inline std::string experiment_id(const ExperimentConfig& c) {
    switch (c.model) {
    case ModelKind::constant_bad: return "constant_bad";
    case ModelKind::rf: return std::string("rf:") + to_string(c.balance.kind);
    default: return scheme_name(c.scheme) + ":" + to_string(c.balance.kind);
    }
}

/// Inverse of experiment_id; a leading "bilstm:" is accepted and ignored.
inline ExperimentConfig parse_experiment(std::string_view id, const ExperimentConfig& base = {}) {
    ExperimentConfig c = base;
    if (id == "constant_bad") {
        c.model = ModelKind::constant_bad;
        c.balance.kind = BalanceKind::none;
        return c;
    }
    if (id.starts_with("bilstm:")) id.remove_prefix(7);
    const auto colon = id.find(':');
    if (colon == std::string_view::npos) throw ConfigError("experiment id must look like <scheme>:<strategy>, rf:<strategy> or constant_bad");
    const auto head = id.substr(0, colon);
    c.balance.kind = balance_kind_from_string(id.substr(colon + 1));
    if (head == "rf") {
        c.model = ModelKind::rf;
    } else {
        c.model = ModelKind::bilstm;
        c.scheme = scheme_from_name(head);
    }
    return c;
}

/// The nine strategies of the experiment grid (no plain "none").
inline constexpr std::array<BalanceKind, 9> kGridStrategies = {
    BalanceKind::class_weighted,   BalanceKind::random_undersample, BalanceKind::random_oversample,
    BalanceKind::smote,            BalanceKind::adasyn,             BalanceKind::distortion_only,
    BalanceKind::trimming_only,    BalanceKind::distortion_then_trimming, BalanceKind::distortion_or_trimming};

/// {raw, standardized} x {no time, time} x nine strategies = 36 BiLSTM cells.
inline std::vector<ExperimentConfig> grid_cells(const ExperimentConfig& base = {}) {
    std::vector<ExperimentConfig> cells;
    for (Coords coords : {Coords::raw, Coords::standardized})
        for (bool time : {false, true})
            for (BalanceKind k : kGridStrategies) {
                ExperimentConfig c = base;
                c.model = ModelKind::bilstm;
                c.scheme.coords = coords;
                c.scheme.channels = Channels{true, time, false, false};
                c.balance.kind = k;
                cells.push_back(c);
            }
    return cells;
}

// -- nested cross-validation ---------------------------------------------------------------

struct HarnessOptions {
    int outer_folds = 10;
    int inner_folds = 5;
    int jobs = 1;
};

/// One trained model: inner split (outer, inner) of one experiment.
struct ModelRun {
    std::size_t outer = 0;
    std::size_t inner = 0;
    std::size_t n_train = 0;
    std::size_t n_synthetic = 0;
    std::size_t leakage_checked = 0; ///< synthetic items whose provenance was verified
    double val_f1 = 0;
    int best_epoch = 0;
    int epochs_run = 0;
    std::vector<double> test_scores; ///< aligned with plan.outer[outer]
};

struct FoldMetrics {
    WeightedMetrics weighted;
    double roc_auc = 0.5;
};

struct EvalReport {
    ExperimentConfig config;
    MetricsReport pooled;
    std::vector<double> scores; ///< per dataset item, averaged over its inner models
    std::vector<FoldMetrics> folds;
    double f1_mean = 0;
    double f1_sd = 0;
    std::vector<ModelRun> runs;
    std::size_t n_models = 0;
    std::size_t n_predictions = 0;
};

namespace detail {

inline ModelRun run_one(const std::vector<MouseSequence>& data, const ExperimentConfig& cfg, const FoldPlan& plan,
                        std::size_t o, std::size_t i, std::uint64_t seed) {
    ModelRun run;
    run.outer = o;
    run.inner = i;
    const Fold& test = plan.outer[o];
    if (cfg.model == ModelKind::constant_bad) {
        run.test_scores.assign(test.size(), 0.0);
        return run;
    }

    std::vector<MouseSequence> train_seqs, val;
    std::set<std::string> train_ids;
    for (auto k : plan.inner_train(o, i)) {
        train_seqs.push_back(data[k]);
        train_ids.insert(data[k].session_id);
    }
    for (auto k : plan.inner[o][i]) val.push_back(data[k]);

    BalanceStrategy strategy = cfg.balance;
    strategy.rng_seed = derive_seed(seed, {o, i, 1});

    auto check = [&](const auto& balanced) {
        const auto bad = leakage_violations(balanced.items, train_ids);
        if (!bad.empty()) throw Error("leakage: synthetic item derived from '" + bad.front() + "' outside the training partition");
        run.n_train = balanced.items.size();
        run.n_synthetic = balanced.synthetic[0] + balanced.synthetic[1];
        run.leakage_checked = balanced.items.size();
    };

    if (cfg.model == ModelKind::rf) {
        auto balanced = balance_training_set<LabeledFeatures>(train_seqs, strategy, labeled_features);
        check(balanced);
        ForestConfig fc = cfg.forest;
        fc.rng_seed = derive_seed(seed, {o, i, 2});
        const auto forest = train_forest(balanced.items, fc, balanced.class_weights);
        for (auto k : test) run.test_scores.push_back(forest_predict(forest, extract_features(data[k])));
        return run;
    }

    auto represent = [&](const MouseSequence& s) { return to_representation(s, cfg.scheme); };
    auto balanced = balance_training_set<RepresentedSequence>(train_seqs, strategy, represent);
    check(balanced);
    std::vector<RepresentedSequence> val_items, test_items;
    for (const auto& s : val) val_items.push_back(represent(s));
    for (auto k : test) test_items.push_back(represent(data[k]));

    ModelConfig mc = cfg.network;
    mc.input_dim = cfg.scheme.dim();
    mc.max_len = cfg.scheme.max_len;
    mc.rng_seed = derive_seed(seed, {o, i, 2});
    TrainConfig tc = cfg.training;
    tc.rng_seed = derive_seed(seed, {o, i, 3});
    auto result = abandon::train(init_model(mc), balanced.items, val_items, tc, balanced.class_weights);
    run.best_epoch = result.history.best_epoch;
    run.epochs_run = static_cast<int>(result.history.epochs.size());
    run.val_f1 = result.history.epochs[static_cast<std::size_t>(run.best_epoch - 1)].val_f1;
    run.test_scores = predict_batch(result.model, test_items);
    return run;
}

inline EvalReport assemble(const std::vector<MouseSequence>& data, const ExperimentConfig& cfg, const FoldPlan& plan,
                           std::vector<ModelRun> runs) {
    EvalReport rep;
    rep.config = cfg;
    const std::size_t n = data.size();
    std::vector<double> sum(n, 0.0);
    std::vector<std::size_t> count(n, 0);
    for (const auto& r : runs) {
        const auto& test = plan.outer[r.outer];
        for (std::size_t k = 0; k < test.size(); ++k) {
            sum[test[k]] += r.test_scores[k];
            ++count[test[k]];
        }
        rep.n_predictions += test.size();
    }
    std::vector<Label> truth;
    truth.reserve(n);
    rep.scores.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        if (count[k] == 0) throw Error("item " + std::to_string(k) + " was never scored");
        rep.scores[k] = sum[k] / static_cast<double>(count[k]);
        truth.push_back(data[k].label());
    }
    rep.pooled = make_report(rep.scores, truth, rep.n_predictions);

    std::vector<double> f1s;
    for (const auto& fold : plan.outer) {
        std::vector<double> s;
        std::vector<Label> t;
        for (auto k : fold) {
            s.push_back(rep.scores[k]);
            t.push_back(truth[k]);
        }
        FoldMetrics fm;
        fm.weighted = weighted_metrics(threshold_scores(s), t);
        const bool both = std::count(t.begin(), t.end(), Label::good) > 0 && std::count(t.begin(), t.end(), Label::bad) > 0;
        fm.roc_auc = both ? roc_auc(s, t) : 0.5;
        f1s.push_back(fm.weighted.f1);
        rep.folds.push_back(fm);
    }
    const double mean = std::accumulate(f1s.begin(), f1s.end(), 0.0) / static_cast<double>(f1s.size());
    double ss = 0;
    for (double f : f1s) ss += (f - mean) * (f - mean);
    rep.f1_mean = mean;
    rep.f1_sd = f1s.size() > 1 ? std::sqrt(ss / static_cast<double>(f1s.size() - 1)) : 0.0;
    rep.n_models = runs.size();
    rep.runs = std::move(runs);
    return rep;
}

} // namespace detail

/// Nested CV for several experiments sharing one fold plan; every (experiment,
/// outer, inner) model is an independent job. Seeds depend only on (seed,
/// outer, inner), so results do not depend on `jobs` or on which other
/// experiments run alongside.
inline std::vector<EvalReport> nested_cv_many(const std::vector<MouseSequence>& data,
                                              const std::vector<ExperimentConfig>& configs, std::uint64_t seed,
                                              const HarnessOptions& opt = {}) {
    for (const auto& s : data)
        if (auto v = validate_sequence(s); !v) throw ValidationError("invalid sequence '" + s.session_id + "': " + v.summary());
    std::set<std::string> ids;
    for (const auto& s : data)
        if (!ids.insert(s.session_id).second) throw ValidationError("duplicate session_id '" + s.session_id + "'");

    std::vector<Label> labels;
    for (const auto& s : data) labels.push_back(s.label());
    const FoldPlan plan = make_fold_plan(labels, seed, opt.outer_folds, opt.inner_folds);

    const std::size_t per_exp = static_cast<std::size_t>(opt.outer_folds) * static_cast<std::size_t>(opt.inner_folds);
    std::vector<ModelRun> runs(configs.size() * per_exp);
    parallel_for(runs.size(), opt.jobs, [&](std::size_t job) {
        const std::size_t e = job / per_exp;
        const std::size_t o = (job % per_exp) / static_cast<std::size_t>(opt.inner_folds);
        const std::size_t i = job % static_cast<std::size_t>(opt.inner_folds);
        runs[job] = detail::run_one(data, configs[e], plan, o, i, seed);
    });

    std::vector<EvalReport> reports;
    for (std::size_t e = 0; e < configs.size(); ++e) {
        std::vector<ModelRun> mine(std::make_move_iterator(runs.begin() + static_cast<std::ptrdiff_t>(e * per_exp)),
                                   std::make_move_iterator(runs.begin() + static_cast<std::ptrdiff_t>((e + 1) * per_exp)));
        reports.push_back(detail::assemble(data, configs[e], plan, std::move(mine)));
    }
    return reports;
}

inline EvalReport nested_cv(const std::vector<MouseSequence>& data, const ExperimentConfig& config, std::uint64_t seed,
                            const HarnessOptions& opt = {}) {
    return nested_cv_many(data, {config}, seed, opt).front();
}

/// Baselines (constant, RF + ADASYN) followed by the 36 BiLSTM cells ranked by
/// pooled F-measure (ties keep grid order).
inline std::vector<EvalReport> run_grid(const std::vector<MouseSequence>& data, std::uint64_t seed,
                                        const HarnessOptions& opt = {}, const ExperimentConfig& base = {}) {
    std::vector<ExperimentConfig> configs;
    configs.push_back(parse_experiment("constant_bad", base));
    configs.push_back(parse_experiment("rf:adasyn", base));
    for (auto& c : grid_cells(base)) configs.push_back(c);
    auto reports = nested_cv_many(data, configs, seed, opt);
    std::stable_sort(reports.begin() + 2, reports.end(),
                     [](const EvalReport& a, const EvalReport& b) { return a.pooled.weighted.f1 > b.pooled.weighted.f1; });
    return reports;
}

// -- rendering ---------------------------------------------------------------------------------

namespace detail {

inline std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string with_ci(double v, const Interval& ci) {
    return fmt2(v) + " [" + fmt2(ci.low) + ", " + fmt2(ci.high) + "]";
}

inline std::string input_label(const ExperimentConfig& c) {
    if (c.model == ModelKind::constant_bad) return "All abandoned queries are considered bad abandonments";
    if (c.model == ModelKind::rf) return "RF using 10-dim feat vectors";
    const auto& ch = c.scheme.channels;
    if (!ch.xy && ch.speed) return ch.distance_to_km ? "Speed + distance to KM" : "Speed only";
    return c.scheme.coords == Coords::raw ? "Raw coords" : "Standardized coords";
}

inline std::string time_label(const ExperimentConfig& c) {
    if (c.model != ModelKind::bilstm) return "";
    const auto& ch = c.scheme.channels;
    if (!ch.xy && ch.speed) return "implied";
    return ch.time_offset ? "yes" : "no";
}

} // namespace detail

inline std::string render_markdown(const std::vector<EvalReport>& rows) {
    std::string out = "| Input data | Time | Augmentation | Adj. Precision | Adj. Recall | F-measure | ROC AUC |\n"
                      "|---|---|---|---|---|---|---|\n";
    for (const auto& r : rows) {
        const auto& p = r.pooled;
        const std::string aug = r.config.model == ModelKind::constant_bad ? "" : to_string(r.config.balance.kind);
        out += "| " + detail::input_label(r.config) + " | " + detail::time_label(r.config) + " | " + aug + " | " +
               detail::with_ci(p.weighted.precision, p.precision_ci) + " | " +
               detail::with_ci(p.weighted.recall, p.recall_ci) + " | " + detail::with_ci(p.weighted.f1, p.f1_ci) +
               " | " + detail::with_ci(p.roc_auc, p.auc_ci) + " |\n";
    }
    return out;
}

inline std::string render_csv(const std::vector<EvalReport>& rows) {
    std::string out = "experiment,precision,precision_low,precision_high,recall,recall_low,recall_high,f1,f1_low,f1_high,"
                      "roc_auc,roc_auc_low,roc_auc_high,f1_fold_mean,f1_fold_sd,n_models,wilson_n\n";
    char buf[512];
    for (const auto& r : rows) {
        const auto& p = r.pooled;
        std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%zu,%zu\n",
                      experiment_id(r.config).c_str(), p.weighted.precision, p.precision_ci.low, p.precision_ci.high,
                      p.weighted.recall, p.recall_ci.low, p.recall_ci.high, p.weighted.f1, p.f1_ci.low, p.f1_ci.high,
                      p.roc_auc, p.auc_ci.low, p.auc_ci.high, r.f1_mean, r.f1_sd, r.n_models, p.wilson_n);
        out += buf;
    }
    return out;
}

inline nlohmann::json report_to_json(const EvalReport& r) {
    auto metrics = [](const WeightedMetrics& w) {
        return nlohmann::json{{"precision", w.precision}, {"recall", w.recall}, {"f1", w.f1}, {"n", w.n},
                              {"per_class",
                               {{"bad",
                                 {{"precision", w.per_class[0].precision},
                                  {"recall", w.per_class[0].recall},
                                  {"f1", w.per_class[0].f1},
                                  {"support", w.per_class[0].support}}},
                                {"good",
                                 {{"precision", w.per_class[1].precision},
                                  {"recall", w.per_class[1].recall},
                                  {"f1", w.per_class[1].f1},
                                  {"support", w.per_class[1].support}}}}}};
    };
    auto ci = [](const Interval& i) { return nlohmann::json::array({i.low, i.high}); };
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : r.folds) folds.push_back({{"weighted", metrics(f.weighted)}, {"roc_auc", f.roc_auc}});
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& m : r.runs)
        runs.push_back({{"outer", m.outer},
                        {"inner", m.inner},
                        {"n_train", m.n_train},
                        {"n_synthetic", m.n_synthetic},
                        {"val_f1", m.val_f1},
                        {"best_epoch", m.best_epoch},
                        {"epochs_run", m.epochs_run}});
    const auto& p = r.pooled;
    return {{"experiment", experiment_id(r.config)},
            {"pooled",
             {{"weighted", metrics(p.weighted)},
              {"roc_auc", p.roc_auc},
              {"wilson_n", p.wilson_n},
              {"precision_ci", ci(p.precision_ci)},
              {"recall_ci", ci(p.recall_ci)},
              {"f1_ci", ci(p.f1_ci)},
              {"roc_auc_ci", ci(p.auc_ci)}}},
            {"f1_fold_mean", r.f1_mean},
            {"f1_fold_sd", r.f1_sd},
            {"n_models", r.n_models},
            {"folds", std::move(folds)},
            {"models", std::move(runs)},
            {"scores", r.scores}};
}

} // namespace abandon
