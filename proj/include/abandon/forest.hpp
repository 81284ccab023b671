#pragma once

// Random forest of CART trees (Gini impurity, midpoint thresholds) over the
// 10-dimensional session features.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "features.hpp"
#include "random.hpp"

namespace abandon {

using FeatureRow = std::array<double, kFeatureCount>;

struct ForestConfig {
    int n_trees = 100;
    int max_depth = 0; ///< 0 = unlimited
    int min_samples_leaf = 1;
    int features_per_split = 4; ///< ceil(sqrt(10))
    bool bootstrap = true;
    std::uint64_t rng_seed = 0;
};

inline void validate_config(const ForestConfig& c) {
    if (c.n_trees < 1) throw ConfigError("n_trees must be positive");
    if (c.max_depth < 0) throw ConfigError("max_depth must be >= 0");
    if (c.min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be positive");
    if (c.features_per_split < 1 || c.features_per_split > static_cast<int>(kFeatureCount))
        throw ConfigError("features_per_split must be in [1, 10]");
}

struct TreeNode {
    int feature = -1; ///< -1 for leaves
    double threshold = 0;
    int left = -1;
    int right = -1;
    double p_good = 0;            ///< class-good fraction of the (weighted) training samples at this node
    double impurity_decrease = 0; ///< weighted Gini decrease of the chosen split
    bool is_leaf() const { return feature < 0; }
};

struct DecisionTree {
    std::vector<TreeNode> nodes; ///< nodes[0] is the root

    const TreeNode& leaf_for(const FeatureRow& x) const {
        const TreeNode* n = &nodes.front();
        while (!n->is_leaf()) n = &nodes[static_cast<std::size_t>(x[static_cast<std::size_t>(n->feature)] <= n->threshold ? n->left : n->right)];
        return *n;
    }

    double predict(const FeatureRow& x) const { return leaf_for(x).p_good; }
};

inline double gini(double w_good, double w_total) {
    if (w_total <= 0) return 0;
    const double p = w_good / w_total;
    return 2 * p * (1 - p);
}

struct SplitCandidate {
    int feature = -1;
    double threshold = 0;
    double decrease = -1;
};

/// Best midpoint split of `idx` on feature `f`, respecting min_samples_leaf.
/// Returns decrease < 0 when the feature offers no admissible split.
inline SplitCandidate best_split_on_feature(std::span<const FeatureRow> X, std::span<const Label> y,
                                            std::span<const double> w, std::vector<std::size_t> idx, int f,
                                            int min_samples_leaf) {
    const auto fi = static_cast<std::size_t>(f);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return X[a][fi] < X[b][fi] || (X[a][fi] == X[b][fi] && a < b);
    });
    double w_total = 0, g_total = 0;
    for (auto i : idx) {
        w_total += w[i];
        if (y[i] == Label::good) g_total += w[i];
    }
    const double parent = gini(g_total, w_total);

    SplitCandidate best;
    best.feature = f;
    double w_left = 0, g_left = 0;
    for (std::size_t k = 0; k + 1 < idx.size(); ++k) {
        const auto i = idx[k];
        w_left += w[i];
        if (y[i] == Label::good) g_left += w[i];
        const double v = X[i][fi];
        const double next = X[idx[k + 1]][fi];
        if (!(next > v)) continue;
        const auto n_left = static_cast<int>(k + 1);
        const auto n_right = static_cast<int>(idx.size() - k - 1);
        if (n_left < min_samples_leaf || n_right < min_samples_leaf) continue;
        const double w_right = w_total - w_left;
        const double dec = parent - (w_left / w_total) * gini(g_left, w_left) -
                           (w_right / w_total) * gini(g_total - g_left, w_right);
        if (dec > best.decrease) {
            best.decrease = dec;
            best.threshold = 0.5 * (v + next);
        }
    }
    return best;
}

namespace detail {

struct TreeBuilder {
    std::span<const FeatureRow> X;
    std::span<const Label> y;
    std::span<const double> w;
    const ForestConfig& cfg;
    Rng& rng;
    DecisionTree tree;

    int build(const std::vector<std::size_t>& idx, int depth) {
        double w_total = 0, g_total = 0;
        for (auto i : idx) {
            w_total += w[i];
            if (y[i] == Label::good) g_total += w[i];
        }
        const int id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back({});
        tree.nodes.back().p_good = w_total > 0 ? g_total / w_total : 0.0;

        const bool pure = g_total <= 0 || g_total >= w_total;
        const bool depth_cap = cfg.max_depth > 0 && depth >= cfg.max_depth;
        if (pure || depth_cap || static_cast<int>(idx.size()) < 2 * cfg.min_samples_leaf) return id;

        std::vector<int> features(kFeatureCount);
        std::iota(features.begin(), features.end(), 0);
        rng.shuffle(features);

        // Evaluate features_per_split features; keep drawing beyond that only
        // while none of the evaluated ones admits a split.
        SplitCandidate best;
        for (std::size_t k = 0; k < features.size(); ++k) {
            if (static_cast<int>(k) >= cfg.features_per_split && best.feature >= 0) break;
            const auto cand = best_split_on_feature(X, y, w, idx, features[k], cfg.min_samples_leaf);
            if (cand.decrease >= 0 && cand.decrease > best.decrease) best = cand;
        }
        if (best.feature < 0) return id;

        std::vector<std::size_t> left, right;
        for (auto i : idx) (X[i][static_cast<std::size_t>(best.feature)] <= best.threshold ? left : right).push_back(i);
        const int l = build(left, depth + 1);
        const int r = build(right, depth + 1);
        auto& node = tree.nodes[static_cast<std::size_t>(id)];
        node.feature = best.feature;
        node.threshold = best.threshold;
        node.left = l;
        node.right = r;
        node.impurity_decrease = best.decrease;
        return id;
    }
};

} // namespace detail

/// Grow one CART tree on samples with positive weight.
inline DecisionTree train_tree(std::span<const FeatureRow> X, std::span<const Label> y, std::span<const double> w,
                               const ForestConfig& cfg, Rng& rng) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < X.size(); ++i)
        if (w[i] > 0) idx.push_back(i);
    if (idx.empty()) throw DegenerateError("tree needs at least one weighted sample");
    detail::TreeBuilder b{X, y, w, cfg, rng, {}};
    b.build(idx, 0);
    return std::move(b.tree);
}

struct Forest {
    ForestConfig config;
    std::vector<DecisionTree> trees;
};

inline Forest train_forest(std::span<const FeatureRow> X, std::span<const Label> y, const ForestConfig& cfg,
                           std::span<const double> sample_weights = {}) {
    validate_config(cfg);
    if (X.size() != y.size()) throw ConfigError("feature and label counts differ");
    if (X.size() < 2) throw DegenerateError("forest needs at least two samples");
    if (std::find(y.begin(), y.end(), Label::good) == y.end() || std::find(y.begin(), y.end(), Label::bad) == y.end())
        throw DegenerateError("forest needs both classes present");

    Forest forest{cfg, {}};
    forest.trees.reserve(static_cast<std::size_t>(cfg.n_trees));
    std::vector<double> w(X.size());
    for (int t = 0; t < cfg.n_trees; ++t) {
        Rng rng(derive_seed(cfg.rng_seed, {static_cast<std::uint64_t>(t)}));
        if (cfg.bootstrap) {
            std::fill(w.begin(), w.end(), 0.0);
            for (std::size_t k = 0; k < X.size(); ++k) w[rng.index(X.size())] += 1.0;
        } else {
            std::fill(w.begin(), w.end(), 1.0);
        }
        if (!sample_weights.empty())
            for (std::size_t i = 0; i < w.size(); ++i) w[i] *= sample_weights[i];
        forest.trees.push_back(train_tree(X, y, w, cfg, rng));
    }
    return forest;
}

inline Forest train_forest(const std::vector<LabeledFeatures>& items, const ForestConfig& cfg,
                           const ClassWeights& class_weights = {}) {
    std::vector<FeatureRow> X;
    std::vector<Label> y;
    std::vector<double> w;
    for (const auto& it : items) {
        X.push_back(it.features.as_array());
        y.push_back(it.label);
        w.push_back(class_weights[it.label]);
    }
    return train_forest(X, y, cfg, w);
}

/// Mean over trees of the leaf probability of class good.
inline double forest_predict(const Forest& forest, const FeatureRow& x) {
    double s = 0;
    for (const auto& t : forest.trees) s += t.predict(x);
    return s / static_cast<double>(forest.trees.size());
}

inline double forest_predict(const Forest& forest, const FeatureVector& v) { return forest_predict(forest, v.as_array()); }

inline nlohmann::json forest_to_json(const Forest& f) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : f.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& n : t.nodes) {
            if (n.is_leaf())
                nodes.push_back({{"leaf", true}, {"p_good", n.p_good}});
            else
                nodes.push_back({{"feature", n.feature},
                                 {"threshold", n.threshold},
                                 {"left", n.left},
                                 {"right", n.right},
                                 {"p_good", n.p_good},
                                 {"impurity_decrease", n.impurity_decrease}});
        }
        trees.push_back({{"nodes", std::move(nodes)}});
    }
    const auto& c = f.config;
    return {{"format", "abandon.forest"},
            {"version", 1},
            {"config",
             {{"n_trees", c.n_trees},
              {"max_depth", c.max_depth},
              {"min_samples_leaf", c.min_samples_leaf},
              {"features_per_split", c.features_per_split},
              {"bootstrap", c.bootstrap},
              {"rng_seed", c.rng_seed}}},
            {"feature_order", kFeatureNames},
            {"trees", std::move(trees)}};
}

inline Forest forest_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "abandon.forest") throw ValidationError("not a forest checkpoint");
    if (j.value("version", 0) != 1) throw ValidationError("unsupported checkpoint version");
    Forest f;
    const auto& c = j.at("config");
    f.config.n_trees = c.at("n_trees").get<int>();
    f.config.max_depth = c.at("max_depth").get<int>();
    f.config.min_samples_leaf = c.at("min_samples_leaf").get<int>();
    f.config.features_per_split = c.at("features_per_split").get<int>();
    f.config.bootstrap = c.at("bootstrap").get<bool>();
    f.config.rng_seed = c.at("rng_seed").get<std::uint64_t>();
    for (const auto& tj : j.at("trees")) {
        DecisionTree t;
        for (const auto& nj : tj.at("nodes")) {
            TreeNode n;
            n.p_good = nj.at("p_good").get<double>();
            if (!nj.value("leaf", false)) {
                n.feature = nj.at("feature").get<int>();
                n.threshold = nj.at("threshold").get<double>();
                n.left = nj.at("left").get<int>();
                n.right = nj.at("right").get<int>();
                n.impurity_decrease = nj.value("impurity_decrease", 0.0);
            }
            t.nodes.push_back(n);
        }
        if (t.nodes.empty()) throw ValidationError("empty tree in checkpoint");
        f.trees.push_back(std::move(t));
    }
    return f;
}

} // namespace abandon
