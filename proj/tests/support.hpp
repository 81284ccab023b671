#pragma once

#include <initializer_list>
#include <string>
#include <tuple>
#include <vector>

#include "abandon/seqdata.hpp"

namespace testing_support {

using abandon::CursorEvent;
using abandon::EventKind;
using abandon::MouseSequence;

/// Moves given as (x, y, t) on a 1280x720 screen with a KM on the right.
inline MouseSequence make_seq(std::initializer_list<std::tuple<double, double, double>> moves, bool good = true,
                              std::string id = "s") {
    MouseSequence s;
    s.session_id = std::move(id);
    s.screen_width = 1280;
    s.screen_height = 720;
    s.km_bbox = {800, 100, 1200, 500};
    s.noticed_km = good;
    s.usefulness = good ? 5 : 2;
    for (auto [x, y, t] : moves) s.events.push_back({x, y, t, EventKind::move, {}, {}});
    return s;
}

/// n moves along a line, 150 ms apart.
inline MouseSequence line_seq(std::size_t n, bool good, std::string id, double x0 = 10, double dx = 7) {
    MouseSequence s = make_seq({}, good, std::move(id));
    for (std::size_t i = 0; i < n; ++i)
        s.events.push_back({x0 + dx * static_cast<double>(i), 50 + 3 * static_cast<double>(i), 150.0 * static_cast<double>(i),
                            EventKind::move, {}, {}});
    return s;
}

/// 30 bad / 77 good line sequences with distinct shapes.
inline std::vector<MouseSequence> standard_dataset() {
    std::vector<MouseSequence> out;
    for (int i = 0; i < 107; ++i) {
        const bool good = i >= 30;
        out.push_back(line_seq(static_cast<std::size_t>(3 + i % 17), good, "d" + std::to_string(i), 5.0 + i,
                               good ? 9.0 : 2.0 + 0.01 * i));
    }
    return out;
}

} // namespace testing_support
