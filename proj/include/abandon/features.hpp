#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "seqdata.hpp"

namespace abandon {

inline constexpr std::size_t kFeatureCount = 10;

/// Hand-crafted session summary used by the baseline classifiers.
struct FeatureVector {
    double dwell_time = 0;      // ms
    double avg_time_offset = 0; // ms
    double n_mousemoves = 0;
    double n_km_hovers = 0;
    double n_scrolls = 0;
    double trajectory_length = 0; // px
    double range_x = 0;
    double range_y = 0;
    double scroll_reach_x = 0;
    double scroll_reach_y = 0;

    std::array<double, kFeatureCount> as_array() const {
        return {dwell_time, avg_time_offset, n_mousemoves, n_km_hovers, n_scrolls,
                trajectory_length, range_x, range_y, scroll_reach_x, scroll_reach_y};
    }

    static FeatureVector from_array(const std::array<double, kFeatureCount>& a) {
        return {a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8], a[9]};
    }

    bool operator==(const FeatureVector&) const = default;
};

inline constexpr std::array<const char*, kFeatureCount> kFeatureNames = {
    "dwell_time",        "avg_time_offset", "n_mousemoves", "n_km_hovers",    "n_scrolls",
    "trajectory_length", "range_x",         "range_y",      "scroll_reach_x", "scroll_reach_y"};

inline FeatureVector extract_features(const MouseSequence& seq) {
    FeatureVector f;
    if (seq.events.empty()) return f;

    double t_min = std::numeric_limits<double>::infinity();
    double t_max = -t_min;
    double min_x = t_min, max_x = t_max, min_y = t_min, max_y = t_max;
    const CursorEvent* prev = nullptr;
    bool prev_inside = false;
    double offset_sum = 0;

    for (const auto& e : seq.events) {
        t_min = std::min(t_min, e.t);
        t_max = std::max(t_max, e.t);
        if (e.kind == EventKind::scroll) {
            f.n_scrolls += 1;
            f.scroll_reach_x = std::max(f.scroll_reach_x, e.scroll_x.value_or(0.0));
            f.scroll_reach_y = std::max(f.scroll_reach_y, e.scroll_y.value_or(0.0));
            continue;
        }
        f.n_mousemoves += 1;
        min_x = std::min(min_x, e.x);
        max_x = std::max(max_x, e.x);
        min_y = std::min(min_y, e.y);
        max_y = std::max(max_y, e.y);
        const bool inside = seq.km_bbox.contains(e.x, e.y);
        if (prev) {
            offset_sum += e.t - prev->t;
            f.trajectory_length += std::hypot(e.x - prev->x, e.y - prev->y);
            // entry transitions only; starting inside is not a hover episode
            if (inside && !prev_inside) f.n_km_hovers += 1;
        }
        prev_inside = inside;
        prev = &e;
    }

    f.dwell_time = t_max - t_min;
    if (f.n_mousemoves > 1) f.avg_time_offset = offset_sum / (f.n_mousemoves - 1);
    if (f.n_mousemoves > 0) {
        f.range_x = max_x - min_x;
        f.range_y = max_y - min_y;
    }
    return f;
}

/// Feature vector tagged with the bookkeeping the balancing module needs.
struct LabeledFeatures {
    FeatureVector features;
    Label label = Label::bad;
    std::string source_id;
    Origin provenance = Origin::original;
    std::string neighbor_id;
    double lambda = 0;
};

inline LabeledFeatures labeled_features(const MouseSequence& seq) {
    return {extract_features(seq), seq.label(), seq.origin_id(), seq.provenance, {}, 0.0};
}

} // namespace abandon
