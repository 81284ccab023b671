// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "abandon/abandon.hpp"

using namespace abandon;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

std::vector<MouseSequence> default_dataset() {
    GeneratorParams p;
    p.rng_seed = 7;
    return generate_dataset(p);
}

// 1 ---------------------------------------------------------------------------------
Outcome constant_baseline() {
    Outcome o;
    const auto t0 = Clock::now();
    const auto data = default_dataset();
    const auto r = nested_cv(data, parse_experiment("constant_bad"), 42);
    const auto& m = r.pooled;
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    o.require(std::abs(m.weighted.precision - 0.0786) < 5e-5, "precision");
    o.require(std::abs(m.weighted.recall - 0.2804) < 5e-5, "recall");
    o.require(std::abs(m.weighted.f1 - 0.1228) < 5e-5, "F");
    o.require(m.roc_auc == 0.5, "AUC");
    o.require(fmt("%.2f %.2f %.2f %.2f", m.weighted.precision, m.weighted.recall, m.weighted.f1, m.roc_auc) ==
                  "0.08 0.28 0.12 0.50",
              "two-decimal row");
    o.require(secs < 1.0, "runtime");
    o.detail = fmt("P %.4f R %.4f F %.4f AUC %.3f", m.weighted.precision, m.weighted.recall, m.weighted.f1, m.roc_auc) +
               fmt(" (%.2fs)", secs) + (o.detail.empty() ? "" : "; failed: " + o.detail);
    return o;
}

// 2 ---------------------------------------------------------------------------------
Outcome wilson() {
    Outcome o;
    const auto w = wilson_interval(0.65, 535);
    o.require(std::abs(w.low - 0.609) <= 0.005 && std::abs(w.high - 0.689) <= 0.005, "(0.65, 535)");
    Rng rng(2024);
    double worst = 0;
    for (int i = 0; i < 100; ++i) {
        const double p = rng.uniform();
        const auto n = static_cast<std::size_t>(rng.uniform_int(1, 10000));
        const double nn = static_cast<double>(n), z = 1.96;
        const double center = (p + z * z / (2 * nn)) / (1 + z * z / nn);
        const double half = z / (1 + z * z / nn) * std::sqrt(p * (1 - p) / nn + z * z / (4 * nn * nn));
        const auto got = wilson_interval(p, n);
        worst = std::max({worst, std::abs(got.low - (center - half)), std::abs(got.high - (center + half))});
    }
    o.require(worst <= 1e-10, "closed-form agreement");
    o.detail = fmt("[%.4f, %.4f], oracle max diff %.1e", w.low, w.high, worst) +
               (o.detail.empty() ? "" : "; failed: " + o.detail);
    return o;
}

// 3 ---------------------------------------------------------------------------------
Outcome gradients() {
    Outcome o;
    const auto t0 = Clock::now();
    double worst = 0;
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        ModelConfig cfg;
        cfg.num_layers = seed % 3 == 0 ? 1 : 2;
        cfg.units = 2 + static_cast<int>(seed % 3);
        cfg.input_dim = 2 + static_cast<int>(seed % 2);
        cfg.max_len = 6;
        cfg.rng_seed = seed;
        auto model = init_model(cfg);
        Rng rng(seed + 500);
        model.params() += Eigen::VectorXd::NullaryExpr(model.size(), [&] { return rng.uniform(-0.3, 0.3); });
        std::vector<RepresentedSequence> items(3);
        const int lengths[3] = {6, 2, 4};
        for (int i = 0; i < 3; ++i) {
            auto& it = items[static_cast<std::size_t>(i)];
            it.values = Eigen::MatrixXd::Zero(6, cfg.input_dim);
            it.mask.assign(6, false);
            for (int t = 0; t < lengths[i]; ++t) {
                it.mask[static_cast<std::size_t>(t)] = true;
                for (int d = 0; d < cfg.input_dim; ++d) it.values(t, d) = rng.uniform(-1, 1);
            }
        }
        const std::vector<double> labels{1, 0, 1};
        const auto gc = gradient_check(model, Batch{&items[0], &items[1], &items[2]}, labels, seed % 2 == 0, seed);
        worst = std::max(worst, gc.max_relative_error);
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    o.require(worst <= 1e-4, "relative error");
    o.require(secs < 30, "runtime");
    o.detail = fmt("12 seeds, max relative error %.2e (%.1fs)", worst, secs) +
               (o.detail.empty() ? "" : "; failed: " + o.detail);
    return o;
}

// 4 ---------------------------------------------------------------------------------
Outcome separability() {
    Outcome o;
    const auto t0 = Clock::now();
    const auto data = default_dataset();
    const auto reports = nested_cv_many(
        data, {parse_experiment("constant_bad"), parse_experiment("std-time:distortion_or_trimming")}, 42);
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    const auto& base = reports[0].pooled;
    const auto& m = reports[1].pooled;
    o.require(m.weighted.f1 >= 0.85, "F < 0.85");
    o.require(m.roc_auc >= 0.90, "AUC < 0.90");
    o.require(m.weighted.precision > base.weighted.precision && m.weighted.recall > base.weighted.recall &&
                  m.weighted.f1 > base.weighted.f1 && m.roc_auc > base.roc_auc,
              "does not beat the constant baseline");
    o.require(secs <= 600, "runtime");
    o.detail = fmt("std-time + distortion_or_trimming: P %.3f R %.3f F %.3f AUC %.3f", m.weighted.precision,
                   m.weighted.recall, m.weighted.f1, m.roc_auc) +
               fmt(", 50 models in %.0fs", secs) + (o.detail.empty() ? "" : "; failed: " + o.detail);
    return o;
}

// 5 ---------------------------------------------------------------------------------
Outcome balancing() {
    Outcome o;
    const auto data = default_dataset();
    std::vector<Label> labels;
    for (const auto& s : data) labels.push_back(s.label());
    const auto plan = make_fold_plan(labels, 42);
    const auto scheme = scheme_from_name("std-time");
    auto represent = [&](const MouseSequence& s) { return to_representation(s, scheme); };

    double collinear = 0;
    std::size_t pairs = 0, leaks = 0, synthetic = 0;
    std::size_t min_count = ~std::size_t{0}, max_count = 0;
    double max_shift = 0;
    std::size_t max_trim = 0;
    bool adasyn_exact = true, equal_counts = true;

    for (std::size_t oi = 0; oi < plan.outer.size(); ++oi) {
        for (std::size_t ii = 0; ii < plan.inner[oi].size(); ++ii) {
            ++pairs;
            std::vector<MouseSequence> train;
            std::set<std::string> ids;
            std::map<std::string, const MouseSequence*> by_id;
            for (auto k : plan.inner_train(oi, ii)) {
                train.push_back(data[k]);
                ids.insert(data[k].session_id);
            }
            for (const auto& s : train) by_id[s.session_id] = &s;
            std::size_t n_bad = 0;
            for (const auto& s : train) n_bad += s.label() == Label::bad;
            const std::size_t gap = train.size() - 2 * n_bad;

            BalanceStrategy st;
            st.rng_seed = derive_seed(42, {oi, ii});

            st.kind = BalanceKind::smote;
            const auto sm = balance_training_set<RepresentedSequence>(train, st, represent);
            std::map<std::string, RepresentedSequence> originals;
            for (const auto& s : train) originals.emplace(s.session_id, represent(s));
            for (const auto& s : sm.items) {
                if (s.provenance != Origin::resampled) continue;
                const auto& a = originals.at(s.source_id).values;
                const auto& b = originals.at(s.neighbor_id).values;
                collinear = std::max(collinear, (s.values - (a + s.lambda * (b - a))).cwiseAbs().maxCoeff());
            }
            leaks += leakage_violations(sm.items, ids).size();

            std::vector<RepresentedSequence> items;
            for (const auto& s : train) items.push_back(represent(s));
            const auto g = adasyn_allocation(items, 5);
            if (!g.empty() && std::accumulate(g.begin(), g.end(), std::size_t{0}) != gap) adasyn_exact = false;
            st.kind = BalanceKind::adasyn;
            const auto ad = balance_training_set<LabeledFeatures>(train, st, labeled_features);
            if (ad.synthetic[0] + ad.synthetic[1] != gap) adasyn_exact = false;
            leaks += leakage_violations(ad.items, ids).size();

            for (auto kind : {BalanceKind::distortion_only, BalanceKind::trimming_only,
                              BalanceKind::distortion_then_trimming, BalanceKind::distortion_or_trimming}) {
                Rng rng(derive_seed(42, {oi, ii, static_cast<std::uint64_t>(kind)}));
                const auto aug = augment_training_set(train, kind, 128, rng);
                leaks += leakage_violations(aug.items, ids).size();
                equal_counts = equal_counts && aug.count(Label::bad) == aug.count(Label::good);
                min_count = std::min(min_count, aug.count(Label::bad));
                max_count = std::max(max_count, aug.count(Label::bad));
                for (const auto& a : aug.items) {
                    if (a.provenance == Origin::original) continue;
                    ++synthetic;
                    const auto om = by_id.at(a.source_id)->moves();
                    const auto am = a.moves();
                    const std::size_t removed = om.size() - am.size();
                    max_trim = std::max(max_trim, removed);
                    for (std::size_t t = 0; t < am.size(); ++t)
                        max_shift = std::max({max_shift, std::abs(am[t].x - om[t + removed].x),
                                              std::abs(am[t].y - om[t + removed].y)});
                }
            }
        }
    }
    o.require(collinear <= 1e-9, "SMOTE collinearity");
    o.require(adasyn_exact, "ADASYN counts");
    o.require(max_shift <= 2.0 && max_trim <= 5, "augmentation bounds");
    o.require(equal_counts && min_count >= 115 && max_count <= 140, "post-augmentation counts");
    o.require(leaks == 0, "leakage");
    o.require(pairs == 50, "fold pairs");
    o.detail = fmt("%.0f fold pairs, SMOTE residual %.1e, max shift %.2fpx, max trim %.0f", double(pairs), collinear,
                   max_shift, double(max_trim)) +
               fmt(", per-class %.0f..%.0f, %.0f synthetic checked, leaks %.0f", double(min_count), double(max_count),
                   double(synthetic), double(leaks)) +
               (o.detail.empty() ? "" : "; failed: " + o.detail);
    return o;
}

// 6 ---------------------------------------------------------------------------------
Outcome stratification() {
    Outcome o;
    std::vector<Label> labels(30, Label::bad);
    labels.insert(labels.end(), 77, Label::good);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng order(seed + 77);
        auto shuffled = labels;
        order.shuffle(shuffled);
        const auto plan = make_fold_plan(shuffled, seed);
        std::vector<int> seen(shuffled.size(), 0);
        for (const auto& f : plan.outer) {
            std::size_t bad = 0;
            for (auto i : f) {
                ++seen[i];
                bad += shuffled[i] == Label::bad;
            }
            const std::size_t good = f.size() - bad;
            if (bad != 3 || good < 7 || good > 8) o.require(false, fmt("seed %.0f fold composition", double(seed)));
        }
        for (int c : seen)
            if (c != 1) o.require(false, fmt("seed %.0f not a partition", double(seed)));
    }
    o.detail = "50 seeds, every outer fold 3 bad / 7-8 good" + (o.detail.empty() ? "" : "; failed: " + o.detail);
    return o;
}

// 7 ---------------------------------------------------------------------------------
Outcome determinism() {
    Outcome o;
    const auto t0 = Clock::now();
    const auto data = default_dataset();
    ExperimentConfig base;
    base.network.units = 3;
    base.network.num_layers = 1;
    base.training.max_epochs = 2;
    base.training.patience = 1;
    base.forest.n_trees = 10;
    const auto serial = run_grid(data, 42, {10, 5, 1}, base);
    const auto parallel = run_grid(data, 42, {10, 5, 8}, base);
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    const bool same_md = render_markdown(serial) == render_markdown(parallel);
    const bool same_csv = render_csv(serial) == render_csv(parallel);
    bool same_scores = serial.size() == parallel.size();
    for (std::size_t i = 0; same_scores && i < serial.size(); ++i) same_scores = serial[i].scores == parallel[i].scores;
    o.require(serial.size() == 38, "grid size");
    o.require(same_md && same_csv, "tables differ");
    o.require(same_scores, "scores differ");
    o.detail = fmt("%.0f rows x 50 models, jobs 1 vs 8 identical tables and scores (%.0fs, reduced network scale)",
                   double(serial.size()), secs) +
               (o.detail.empty() ? "" : "; failed: " + o.detail);
    return o;
}

} // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"1 constant baseline", constant_baseline},
        {"2 Wilson consistency", wilson},
        {"3 gradient correctness", gradients},
        {"4 end-to-end separability", separability},
        {"5 balancing invariants", balancing},
        {"6 stratification", stratification},
        {"7 determinism (jobs 1 vs 8)", determinism},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        Outcome out;
        try {
            out = run();
        } catch (const std::exception& e) {
            out.pass = false;
            out.detail = std::string("exception: ") + e.what();
        }
        std::printf("%s  %s: %s\n", out.pass ? "PASS" : "FAIL", name, out.detail.c_str());
        std::fflush(stdout);
        failed += !out.pass;
    }
    return failed == 0 ? 0 : 1;
}
