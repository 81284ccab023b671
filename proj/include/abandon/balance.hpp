#pragma once

// Class balancing for small, imbalanced training partitions: class weights,
// random resampling, SMOTE/ADASYN interpolation, and the pixel-space
// augmentation operators (distortion, leading-step trimming).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "features.hpp"
#include "random.hpp"
#include "seqdata.hpp"

namespace abandon {

enum class BalanceKind {
    none,
    class_weighted,
    random_undersample,
    random_oversample,
    smote,
    adasyn,
    distortion_only,
    trimming_only,
    distortion_then_trimming,
    distortion_or_trimming,
};

inline constexpr std::array<BalanceKind, 10> kAllBalanceKinds = {
    BalanceKind::none,           BalanceKind::class_weighted,  BalanceKind::random_undersample,
    BalanceKind::random_oversample, BalanceKind::smote,        BalanceKind::adasyn,
    BalanceKind::distortion_only, BalanceKind::trimming_only,  BalanceKind::distortion_then_trimming,
    BalanceKind::distortion_or_trimming};

inline const char* to_string(BalanceKind k) {
    switch (k) {
    case BalanceKind::none: return "none";
    case BalanceKind::class_weighted: return "class_weighted";
    case BalanceKind::random_undersample: return "random_undersample";
    case BalanceKind::random_oversample: return "random_oversample";
    case BalanceKind::smote: return "smote";
    case BalanceKind::adasyn: return "adasyn";
    case BalanceKind::distortion_only: return "distortion_only";
    case BalanceKind::trimming_only: return "trimming_only";
    case BalanceKind::distortion_then_trimming: return "distortion_then_trimming";
    case BalanceKind::distortion_or_trimming: return "distortion_or_trimming";
    }
    return "none";
}

inline BalanceKind balance_kind_from_string(std::string_view s) {
    for (auto k : kAllBalanceKinds)
        if (s == to_string(k)) return k;
    throw ConfigError("unknown balancing strategy '" + std::string(s) + "'");
}

constexpr bool is_augmentation(BalanceKind k) {
    return k == BalanceKind::distortion_only || k == BalanceKind::trimming_only ||
           k == BalanceKind::distortion_then_trimming || k == BalanceKind::distortion_or_trimming;
}

struct BalanceStrategy {
    BalanceKind kind = BalanceKind::none;
    int k_neighbors = 5;
    std::size_t target_per_class = 128;
    std::uint64_t rng_seed = 0;
};

template <typename Item>
struct BalancedTrainingSet {
    std::vector<Item> items;
    ClassWeights class_weights;
    std::array<std::size_t, 2> originals{0, 0}; ///< indexed by Label
    std::array<std::size_t, 2> synthetic{0, 0};

    std::size_t count(Label l) const {
        const auto i = static_cast<std::size_t>(l);
        return originals[i] + synthetic[i];
    }
};

// -- item access ---------------------------------------------------------------

inline Label label_of(const MouseSequence& s) { return s.label(); }
inline Label label_of(const RepresentedSequence& r) { return r.label; }
inline Label label_of(const LabeledFeatures& f) { return f.label; }

inline Origin provenance_of(const MouseSequence& s) { return s.provenance; }
inline Origin provenance_of(const RepresentedSequence& r) { return r.provenance; }
inline Origin provenance_of(const LabeledFeatures& f) { return f.provenance; }

inline const std::string& source_of(const MouseSequence& s) { return s.origin_id(); }
inline const std::string& source_of(const RepresentedSequence& r) { return r.source_id; }
inline const std::string& source_of(const LabeledFeatures& f) { return f.source_id; }

inline std::string neighbor_of(const MouseSequence&) { return {}; }
inline const std::string& neighbor_of(const RepresentedSequence& r) { return r.neighbor_id; }
inline const std::string& neighbor_of(const LabeledFeatures& f) { return f.neighbor_id; }

inline MouseSequence resampled_copy(const MouseSequence& s, std::size_t serial) {
    MouseSequence c = s;
    c.source_id = s.origin_id();
    c.session_id = c.source_id + "#r" + std::to_string(serial);
    c.provenance = Origin::resampled;
    return c;
}

template <typename Item>
Item resampled_copy(const Item& x, std::size_t) {
    Item c = x;
    c.provenance = Origin::resampled;
    return c;
}

/// Flattened vector SMOTE/ADASYN measure distances on, plus the interpolation
/// rule. Represented sequences interpolate the whole max_len x D block and
/// keep the mask of the first item.
template <typename Item>
struct Interpolation;

template <>
struct Interpolation<RepresentedSequence> {
    static Eigen::VectorXd flatten(const RepresentedSequence& r) {
        Eigen::MatrixXd masked = r.values;
        for (int i = 0; i < masked.rows(); ++i)
            if (!r.mask[static_cast<std::size_t>(i)]) masked.row(i).setZero();
        Eigen::MatrixXd rowmajor = masked.transpose();
        return Eigen::Map<const Eigen::VectorXd>(rowmajor.data(), rowmajor.size());
    }

    static RepresentedSequence interpolate(const RepresentedSequence& a, const RepresentedSequence& b, double lambda) {
        if (a.values.rows() != b.values.rows() || a.values.cols() != b.values.cols())
            throw ConfigError("interpolation needs identically shaped representations");
        RepresentedSequence s = a;
        s.values = a.values + lambda * (b.values - a.values);
        return s;
    }
};

template <>
struct Interpolation<LabeledFeatures> {
    static Eigen::VectorXd flatten(const LabeledFeatures& f) {
        const auto a = f.features.as_array();
        return Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
    }

    static LabeledFeatures interpolate(const LabeledFeatures& a, const LabeledFeatures& b, double lambda) {
        const auto va = a.features.as_array();
        const auto vb = b.features.as_array();
        std::array<double, kFeatureCount> out{};
        for (std::size_t i = 0; i < kFeatureCount; ++i) out[i] = va[i] + lambda * (vb[i] - va[i]);
        LabeledFeatures s = a;
        s.features = FeatureVector::from_array(out);
        return s;
    }
};

// -- class weights and random resampling --------------------------------------

inline ClassWeights compute_class_weights(std::span<const Label> labels) {
    std::array<std::size_t, 2> n{0, 0};
    for (auto l : labels) ++n[static_cast<std::size_t>(l)];
    if (n[0] == 0 || n[1] == 0) throw DegenerateError("class weights need both classes present");
    const double total = static_cast<double>(labels.size());
    ClassWeights w;
    for (std::size_t c = 0; c < 2; ++c) w.w[c] = total / (2.0 * static_cast<double>(n[c]));
    return w;
}

template <typename Item>
std::array<std::size_t, 2> class_counts(const std::vector<Item>& items) {
    std::array<std::size_t, 2> n{0, 0};
    for (const auto& x : items) ++n[static_cast<std::size_t>(label_of(x))];
    return n;
}

template <typename Item>
BalancedTrainingSet<Item> as_balanced_set(std::vector<Item> items) {
    BalancedTrainingSet<Item> out;
    for (const auto& x : items) {
        const auto c = static_cast<std::size_t>(label_of(x));
        if (provenance_of(x) == Origin::original)
            ++out.originals[c];
        else
            ++out.synthetic[c];
    }
    out.items = std::move(items);
    return out;
}

enum class ResampleKind { under, over };

template <typename Item>
BalancedTrainingSet<Item> random_resample(std::vector<Item> train, ResampleKind kind, Rng& rng) {
    const auto n = class_counts(train);
    if (n[0] == 0 || n[1] == 0) throw DegenerateError("resampling needs both classes present");
    if (n[0] == n[1]) return as_balanced_set(std::move(train));
    const Label minority = n[0] < n[1] ? Label::bad : Label::good;

    std::vector<std::size_t> min_idx, maj_idx;
    for (std::size_t i = 0; i < train.size(); ++i)
        (label_of(train[i]) == minority ? min_idx : maj_idx).push_back(i);

    if (kind == ResampleKind::under) {
        std::vector<std::size_t> pick = maj_idx;
        rng.shuffle(pick);
        pick.resize(min_idx.size());
        std::vector<bool> keep(train.size(), false);
        for (auto i : min_idx) keep[i] = true;
        for (auto i : pick) keep[i] = true;
        std::vector<Item> out;
        out.reserve(2 * min_idx.size());
        for (std::size_t i = 0; i < train.size(); ++i)
            if (keep[i]) out.push_back(std::move(train[i]));
        return as_balanced_set(std::move(out));
    }

    const std::size_t extra = maj_idx.size() - min_idx.size();
    std::vector<Item> out = std::move(train);
    out.reserve(out.size() + extra);
    for (std::size_t g = 0; g < extra; ++g) out.push_back(resampled_copy(out[min_idx[rng.index(min_idx.size())]], g));
    return as_balanced_set(std::move(out));
}

// -- SMOTE / ADASYN -------------------------------------------------------------

/// Indices of the k nearest candidates to `query` (Euclidean), ties broken by
/// candidate order. `query` itself is excluded when it appears in candidates.
inline std::vector<std::size_t> nearest_neighbors(const std::vector<Eigen::VectorXd>& points, std::size_t query,
                                                  const std::vector<std::size_t>& candidates, std::size_t k) {
    std::vector<std::pair<double, std::size_t>> d;
    d.reserve(candidates.size());
    for (std::size_t pos = 0; pos < candidates.size(); ++pos) {
        const auto c = candidates[pos];
        if (c == query) continue;
        d.emplace_back((points[c] - points[query]).squaredNorm(), pos);
    }
    const std::size_t take = std::min(k, d.size());
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(take), d.end());
    std::vector<std::size_t> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.push_back(candidates[d[i].second]);
    return out;
}

/// Split `total` into integer parts proportional to `quotas` using the
/// largest-remainder method; ties go to the lower index.
inline std::vector<std::size_t> largest_remainder(std::span<const double> quotas, std::size_t total) {
    const double sum = std::accumulate(quotas.begin(), quotas.end(), 0.0);
    std::vector<std::size_t> out(quotas.size(), 0);
    if (quotas.empty() || sum <= 0) return out;
    std::vector<std::pair<double, std::size_t>> rem;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < quotas.size(); ++i) {
        const double exact = static_cast<double>(total) * quotas[i] / sum;
        out[i] = static_cast<std::size_t>(std::floor(exact));
        assigned += out[i];
        rem.emplace_back(exact - std::floor(exact), i);
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < total; i = (i + 1) % rem.size(), ++assigned) ++out[rem[i].second];
    return out;
}

namespace detail {

template <typename Item>
struct MinorityView {
    Label minority;
    std::vector<std::size_t> min_idx;
    std::size_t gap = 0;
};

template <typename Item>
MinorityView<Item> minority_view(const std::vector<Item>& train, int k) {
    const auto n = class_counts(train);
    if (n[0] == 0 || n[1] == 0) throw DegenerateError("oversampling needs both classes present");
    MinorityView<Item> v;
    v.minority = n[0] <= n[1] ? Label::bad : Label::good;
    for (std::size_t i = 0; i < train.size(); ++i)
        if (label_of(train[i]) == v.minority) v.min_idx.push_back(i);
    v.gap = std::max(n[0], n[1]) - std::min(n[0], n[1]);
    if (k < 1) throw ConfigError("k_neighbors must be at least 1");
    if (v.gap > 0 && v.min_idx.size() <= static_cast<std::size_t>(k))
        throw DegenerateError("insufficient neighbors: minority class has " + std::to_string(v.min_idx.size()) +
                              " items, k_neighbors = " + std::to_string(k));
    return v;
}

template <typename Item>
Item synthesize(const Item& a, const Item& b, double lambda) {
    Item s = Interpolation<Item>::interpolate(a, b, lambda);
    s.provenance = Origin::resampled;
    s.source_id = std::string(source_of(a));
    s.neighbor_id = std::string(source_of(b));
    s.lambda = lambda;
    return s;
}

} // namespace detail

template <typename Item>
BalancedTrainingSet<Item> smote(std::vector<Item> train, int k_neighbors, Rng& rng) {
    const auto view = detail::minority_view(train, k_neighbors);
    if (view.gap == 0) return as_balanced_set(std::move(train));

    std::vector<Eigen::VectorXd> points;
    points.reserve(train.size());
    for (const auto& x : train) points.push_back(Interpolation<Item>::flatten(x));

    std::vector<std::vector<std::size_t>> nn(train.size());
    for (auto i : view.min_idx) nn[i] = nearest_neighbors(points, i, view.min_idx, static_cast<std::size_t>(k_neighbors));

    std::vector<Item> synthetic;
    synthetic.reserve(view.gap);
    for (std::size_t g = 0; g < view.gap; ++g) {
        const auto a = view.min_idx[rng.index(view.min_idx.size())];
        const auto b = nn[a][rng.index(nn[a].size())];
        const double lambda = rng.uniform();
        synthetic.push_back(detail::synthesize(train[a], train[b], lambda));
    }
    for (auto& s : synthetic) train.push_back(std::move(s));
    return as_balanced_set(std::move(train));
}

/// Per-minority-item synthetic counts: majority share among the k nearest
/// neighbours in the whole set, apportioned so the counts sum to the class gap.
/// Returns an empty vector when no minority item borders the majority class.
template <typename Item>
std::vector<std::size_t> adasyn_allocation(const std::vector<Item>& train, int k_neighbors) {
    const auto view = detail::minority_view(train, k_neighbors);
    std::vector<Eigen::VectorXd> points;
    points.reserve(train.size());
    for (const auto& x : train) points.push_back(Interpolation<Item>::flatten(x));
    std::vector<std::size_t> all(train.size());
    std::iota(all.begin(), all.end(), std::size_t{0});

    std::vector<double> r;
    r.reserve(view.min_idx.size());
    for (auto i : view.min_idx) {
        const auto nn = nearest_neighbors(points, i, all, static_cast<std::size_t>(k_neighbors));
        const auto maj = std::count_if(nn.begin(), nn.end(), [&](std::size_t j) { return label_of(train[j]) != view.minority; });
        r.push_back(static_cast<double>(maj) / k_neighbors);
    }
    if (std::accumulate(r.begin(), r.end(), 0.0) <= 0) return {};
    return largest_remainder(r, view.gap);
}

template <typename Item>
BalancedTrainingSet<Item> adasyn(std::vector<Item> train, int k_neighbors, Rng& rng) {
    const auto view = detail::minority_view(train, k_neighbors);
    if (view.gap == 0) return as_balanced_set(std::move(train));
    const auto g = adasyn_allocation(train, k_neighbors);
    if (g.empty()) return smote(std::move(train), k_neighbors, rng);

    std::vector<Eigen::VectorXd> points;
    points.reserve(train.size());
    for (const auto& x : train) points.push_back(Interpolation<Item>::flatten(x));

    std::vector<Item> synthetic;
    synthetic.reserve(view.gap);
    for (std::size_t m = 0; m < view.min_idx.size(); ++m) {
        if (g[m] == 0) continue;
        const auto a = view.min_idx[m];
        const auto nn = nearest_neighbors(points, a, view.min_idx, static_cast<std::size_t>(k_neighbors));
        for (std::size_t j = 0; j < g[m]; ++j) {
            const auto b = nn[rng.index(nn.size())];
            const double lambda = rng.uniform();
            synthetic.push_back(detail::synthesize(train[a], train[b], lambda));
        }
    }
    for (auto& s : synthetic) train.push_back(std::move(s));
    return as_balanced_set(std::move(train));
}

// -- pixel-space augmentation ---------------------------------------------------

/// Shift every move coordinate by an independent Uniform(-max_px, +max_px)
/// draw, clamped to the screen.
inline MouseSequence distort(const MouseSequence& seq, Rng& rng, double max_px = 2.0) {
    MouseSequence out = seq;
    for (auto& e : out.events) {
        if (e.kind != EventKind::move) continue;
        const double dx = rng.uniform(-max_px, max_px);
        const double dy = rng.uniform(-max_px, max_px);
        e.x = std::clamp(e.x + dx, 0.0, seq.screen_width);
        e.y = std::clamp(e.y + dy, 0.0, seq.screen_height);
    }
    out.provenance = Origin::augmented;
    out.source_id = seq.origin_id();
    return out;
}

/// Drop the first n move events (and scroll events interleaved with them),
/// never leaving fewer than two moves.
inline MouseSequence trim_leading(const MouseSequence& seq, std::size_t n) {
    const std::size_t moves = seq.move_count();
    n = std::min(n, moves >= 2 ? moves - 2 : 0);
    MouseSequence out = seq;
    out.events.clear();
    std::size_t dropped = 0;
    for (const auto& e : seq.events) {
        if (dropped < n) {
            if (e.kind == EventKind::move) ++dropped;
            continue;
        }
        out.events.push_back(e);
    }
    out.provenance = Origin::augmented;
    out.source_id = seq.origin_id();
    return out;
}

inline MouseSequence trim(const MouseSequence& seq, Rng& rng, int max_steps = 5) {
    return trim_leading(seq, static_cast<std::size_t>(rng.uniform_int(0, max_steps)));
}

/// Remove augmented items of the larger class at random until both classes
/// have equal counts. Originals are never removed.
inline std::vector<MouseSequence> prune_augmented_to_balance(std::vector<MouseSequence> items, Rng& rng) {
    auto n = class_counts(items);
    if (n[0] == n[1]) return items;
    const Label larger = n[0] > n[1] ? Label::bad : Label::good;
    std::vector<std::size_t> removable;
    for (std::size_t i = 0; i < items.size(); ++i)
        if (items[i].label() == larger && items[i].provenance != Origin::original) removable.push_back(i);
    rng.shuffle(removable);
    const std::size_t excess = std::max(n[0], n[1]) - std::min(n[0], n[1]);
    removable.resize(std::min(excess, removable.size()));
    std::vector<bool> drop(items.size(), false);
    for (auto i : removable) drop[i] = true;
    std::vector<MouseSequence> out;
    out.reserve(items.size() - removable.size());
    for (std::size_t i = 0; i < items.size(); ++i)
        if (!drop[i]) out.push_back(std::move(items[i]));
    return out;
}

/// Grow each class with augmented copies of uniformly chosen originals until
/// it reaches target_per_class (or the larger original class size, if that
/// is bigger), then prune augmented majority items so the classes match.
inline BalancedTrainingSet<MouseSequence> augment_training_set(std::vector<MouseSequence> train,
                                                               BalanceKind kind, std::size_t target_per_class,
                                                               Rng& rng) {
    if (!is_augmentation(kind)) throw ConfigError(std::string("not an augmentation strategy: ") + to_string(kind));
    const auto n = class_counts(train);
    if (n[0] == 0 || n[1] == 0) throw DegenerateError("augmentation needs both classes present");
    const std::size_t goal = std::max({target_per_class, n[0], n[1]});

    std::vector<MouseSequence> out = train;
    std::size_t serial = 0;
    for (Label cls : {Label::bad, Label::good}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < train.size(); ++i)
            if (train[i].label() == cls) idx.push_back(i);
        for (std::size_t have = idx.size(); have < goal; ++have) {
            const auto& src = train[idx[rng.index(idx.size())]];
            MouseSequence aug;
            switch (kind) {
            case BalanceKind::distortion_only: aug = distort(src, rng); break;
            case BalanceKind::trimming_only: aug = trim(src, rng); break;
            case BalanceKind::distortion_then_trimming: aug = trim(distort(src, rng), rng); break;
            default: aug = rng.bernoulli(0.5) ? distort(src, rng) : trim(src, rng); break;
            }
            aug.session_id = src.session_id + "#aug" + std::to_string(serial++);
            out.push_back(std::move(aug));
        }
    }
    return as_balanced_set(prune_augmented_to_balance(std::move(out), rng));
}

// -- strategy dispatch ------------------------------------------------------------

/// Apply `strategy` to a training partition. Augmentation runs in pixel space
/// on the sequences; every other strategy runs on the items produced by
/// `make_item` (representations or feature vectors).
template <typename Item, typename MakeItem>
BalancedTrainingSet<Item> balance_training_set(const std::vector<MouseSequence>& train,
                                               const BalanceStrategy& strategy, MakeItem&& make_item) {
    Rng rng(strategy.rng_seed);
    auto convert = [&](const std::vector<MouseSequence>& seqs) {
        std::vector<Item> items;
        items.reserve(seqs.size());
        for (const auto& s : seqs) items.push_back(make_item(s));
        return items;
    };

    if (is_augmentation(strategy.kind)) {
        auto aug = augment_training_set(train, strategy.kind, strategy.target_per_class, rng);
        BalancedTrainingSet<Item> out;
        out.items = convert(aug.items);
        out.originals = aug.originals;
        out.synthetic = aug.synthetic;
        return out;
    }

    auto items = convert(train);
    switch (strategy.kind) {
    case BalanceKind::none: return as_balanced_set(std::move(items));
    case BalanceKind::class_weighted: {
        std::vector<Label> labels;
        for (const auto& x : items) labels.push_back(label_of(x));
        auto out = as_balanced_set(std::move(items));
        out.class_weights = compute_class_weights(labels);
        return out;
    }
    case BalanceKind::random_undersample: return random_resample(std::move(items), ResampleKind::under, rng);
    case BalanceKind::random_oversample: return random_resample(std::move(items), ResampleKind::over, rng);
    case BalanceKind::smote: return smote(std::move(items), strategy.k_neighbors, rng);
    case BalanceKind::adasyn: return adasyn(std::move(items), strategy.k_neighbors, rng);
    default: break;
    }
    throw ConfigError("unhandled strategy");
}

/// Items whose source (or interpolation partner) lies outside `train_ids`.
template <typename Item>
std::vector<std::string> leakage_violations(const std::vector<Item>& items, const std::set<std::string>& train_ids) {
    std::vector<std::string> bad;
    for (const auto& x : items) {
        const std::string src(source_of(x));
        if (!train_ids.contains(src)) bad.push_back(src);
        const std::string nb(neighbor_of(x));
        if (!nb.empty() && !train_ids.contains(nb)) bad.push_back(nb);
    }
    return bad;
}

} // namespace abandon
