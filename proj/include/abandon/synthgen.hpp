#pragma once

// Synthetic abandoned-query sessions for desk-scale testing. Paths are
// bounded random walks on a SERP skeleton (search bar on top, knowledge
// module on the right). Good sessions drift into the KM and read slowly;
// bad sessions wander the results column with short time offsets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "random.hpp"
#include "seqdata.hpp"

namespace abandon {

/// Page skeleton as fractions of the screen (the layout scales with width).
struct SerpLayout {
    Rect search_bar{0.08, 0.03, 0.52, 0.08};
    Rect knowledge_module{0.60, 0.16, 0.93, 0.62};
    double results_left = 0.08;
    double results_right = 0.50;

    static Rect scaled(const Rect& r, double w, double h) {
        return {r.left * w, r.top * h, r.right * w, r.bottom * h};
    }
    Rect search_bar_px(double w, double h) const { return scaled(search_bar, w, h); }
    Rect km_px(double w, double h) const { return scaled(knowledge_module, w, h); }
};

struct GeneratorParams {
    std::size_t n_good = 77;
    std::size_t n_bad = 30;
    std::uint64_t rng_seed = 0;

    // move-event count: log-normal, median 19
    double event_count_median = 19;
    double event_count_sigma = 0.70;
    std::size_t max_events = 300;

    // time offsets between moves (ms)
    double min_offset = 150; // polling resolution
    double good_offset_median = 1100;
    double good_offset_sigma = 0.6;
    double bad_short_fraction = 0.6;
    double bad_short_max = 450;
    double bad_offset_median = 700;
    double bad_offset_sigma = 0.6;

    // dwell (ms), log-normal per class
    double good_dwell_median = 25000;
    double bad_dwell_median = 22000;
    double dwell_sigma = 0.5;

    double step_sd = 45; // px
    int max_scrolls = 4;

    SerpLayout layout;
    std::vector<std::pair<double, double>> screens = {
        {1280, 720}, {1366, 768}, {1440, 900}, {1536, 864}, {1600, 900}, {1920, 1080}};
};

namespace detail {

inline double draw_offset(Label label, const GeneratorParams& p, Rng& rng) {
    double dt;
    if (label == Label::good)
        dt = rng.lognormal(p.good_offset_median, p.good_offset_sigma);
    else if (rng.bernoulli(p.bad_short_fraction))
        dt = rng.uniform(p.min_offset, p.bad_short_max);
    else
        dt = rng.lognormal(p.bad_offset_median, p.bad_offset_sigma);
    return std::round(std::max(dt, p.min_offset));
}

} // namespace detail

inline MouseSequence generate_sequence(Label label, std::size_t index, const GeneratorParams& p) {
    Rng rng(derive_seed(p.rng_seed, {static_cast<std::uint64_t>(index)}));
    const auto [w, h] = p.screens[rng.index(p.screens.size())];
    const Rect km = p.layout.km_px(w, h);
    const double col_l = p.layout.results_left * w;
    const double col_r = p.layout.results_right * w;

    MouseSequence s;
    s.session_id = "syn-" + std::to_string(p.rng_seed) + "-" + std::to_string(index);
    s.screen_width = w;
    s.screen_height = h;
    s.km_bbox = km;
    if (label == Label::good) {
        s.noticed_km = true;
        s.usefulness = static_cast<int>(rng.uniform_int(4, 5));
    } else if (rng.bernoulli(0.5)) {
        s.noticed_km = false;
        s.usefulness = static_cast<int>(rng.uniform_int(1, 5));
    } else {
        s.noticed_km = true;
        s.usefulness = static_cast<int>(rng.uniform_int(1, 3));
    }

    const auto n_moves = static_cast<std::size_t>(
        std::clamp(std::round(rng.lognormal(p.event_count_median, p.event_count_sigma)), 2.0,
                   static_cast<double>(p.max_events)));
    const std::size_t notice_at =
        label == Label::good ? static_cast<std::size_t>(std::floor(static_cast<double>(n_moves) * rng.uniform(0.3, 0.6)))
                             : n_moves;

    double x = rng.uniform(0.10 * w, 0.45 * w);
    double y = rng.uniform(0.06 * h, 0.30 * h);
    double tx = rng.uniform(col_l, col_r);
    double ty = rng.uniform(0.1 * h, 0.9 * h);
    const double kx = rng.uniform(km.left + 0.2 * km.width(), km.right - 0.2 * km.width());
    const double ky = rng.uniform(km.top + 0.2 * km.height(), km.bottom - 0.2 * km.height());
    double t = std::round(rng.uniform(200, 1500));

    std::vector<CursorEvent> moves;
    moves.reserve(n_moves);
    for (std::size_t i = 0; i < n_moves; ++i) {
        if (i > 0) {
            double alpha, sd;
            if (i >= notice_at) {
                tx = kx;
                ty = ky;
                alpha = 0.35;
                sd = 0.5 * p.step_sd;
            } else {
                if (rng.bernoulli(0.15)) {
                    tx = rng.uniform(col_l, col_r);
                    ty = rng.uniform(0.1 * h, 0.9 * h);
                }
                alpha = 0.2;
                sd = p.step_sd;
            }
            x = std::clamp(x + alpha * (tx - x) + rng.normal(0, sd), 0.0, w);
            y = std::clamp(y + alpha * (ty - y) + rng.normal(0, sd), 0.0, h);
            t += detail::draw_offset(label, p, rng);
        }
        moves.push_back({std::round(x), std::round(y), t, EventKind::move, {}, {}});
    }

    const double dwell = std::round(rng.lognormal(label == Label::good ? p.good_dwell_median : p.bad_dwell_median,
                                                  p.dwell_sigma));
    const double t_first = moves.front().t;
    const double t_end = std::max(moves.back().t, t_first + dwell);
    const auto n_scrolls = static_cast<std::size_t>(rng.uniform_int(0, p.max_scrolls));
    std::vector<double> scroll_times;
    for (std::size_t k = 0; k < n_scrolls; ++k) scroll_times.push_back(std::round(rng.uniform(t_first, t_end)));
    std::sort(scroll_times.begin(), scroll_times.end());
    if (!scroll_times.empty()) scroll_times.back() = t_end;

    double reach = 0;
    std::size_t m = 0;
    for (double st : scroll_times) {
        while (m < moves.size() && moves[m].t <= st) s.events.push_back(moves[m++]);
        reach += std::round(rng.uniform(40, 400));
        const auto& at = s.events.empty() ? moves.front() : s.events.back();
        s.events.push_back({at.x, at.y, st, EventKind::scroll, 0.0, reach});
    }
    while (m < moves.size()) s.events.push_back(moves[m++]);
    return s;
}

/// Deterministic dataset of n_good + n_bad sessions in shuffled class order.
inline std::vector<MouseSequence> generate_dataset(const GeneratorParams& p) {
    std::vector<Label> labels(p.n_good, Label::good);
    labels.insert(labels.end(), p.n_bad, Label::bad);
    Rng order(derive_seed(p.rng_seed, {~std::uint64_t{0}}));
    order.shuffle(labels);
    std::vector<MouseSequence> out;
    out.reserve(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) out.push_back(generate_sequence(labels[i], i, p));
    return out;
}

} // namespace abandon
