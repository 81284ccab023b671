#pragma once

// Mouse-cursor session model, wire-format ingestion, and the fixed-length
// representations fed to the sequence classifier.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "error.hpp"

namespace abandon {

inline constexpr int kMaxTimesteps = 50;
inline constexpr double kCommonScreenWidth = 1280.0;
inline constexpr double kBoundsTolerancePx = 5.0;

enum class EventKind { move, scroll };
enum class Label { bad = 0, good = 1 };
enum class Origin { original, resampled, augmented };

inline const char* to_string(Label l) { return l == Label::good ? "good" : "bad"; }

inline const char* to_string(Origin o) {
    switch (o) {
    case Origin::resampled: return "resampled";
    case Origin::augmented: return "augmented";
    default: return "original";
    }
}

inline Origin origin_from_string(std::string_view s) {
    if (s == "original") return Origin::original;
    if (s == "resampled") return Origin::resampled;
    if (s == "augmented") return Origin::augmented;
    throw ValidationError("unknown provenance '" + std::string(s) + "'");
}

/// Per-class loss weights, indexed by Label.
struct ClassWeights {
    std::array<double, 2> w{1.0, 1.0};

    double operator[](Label l) const { return w[static_cast<std::size_t>(l)]; }
    double& operator[](Label l) { return w[static_cast<std::size_t>(l)]; }
};

/// Good abandonment iff the KM was noticed and rated useful (4 or 5).
constexpr Label label_for(bool noticed_km, int usefulness) {
    return (noticed_km && usefulness >= 4) ? Label::good : Label::bad;
}

struct CursorEvent {
    double x = 0;
    double y = 0;
    double t = 0; ///< ms since session start
    EventKind kind = EventKind::move;
    std::optional<double> scroll_x; ///< present iff kind == scroll
    std::optional<double> scroll_y;

    bool operator==(const CursorEvent&) const = default;
};

struct Rect {
    double left = 0;
    double top = 0;
    double right = 0;
    double bottom = 0;

    double width() const { return right - left; }
    double height() const { return bottom - top; }
    bool contains(double x, double y) const { return x >= left && x <= right && y >= top && y <= bottom; }

    /// Euclidean distance to the nearest point of the rectangle; 0 inside.
    double distance(double x, double y) const {
        const double dx = x - std::clamp(x, left, right);
        const double dy = y - std::clamp(y, top, bottom);
        return std::hypot(dx, dy);
    }

    bool operator==(const Rect&) const = default;
};

struct MouseSequence {
    std::string session_id;
    std::vector<CursorEvent> events;
    double screen_width = 0;
    double screen_height = 0;
    Rect km_bbox;
    bool noticed_km = false;
    int usefulness = 1;
    Origin provenance = Origin::original;
    std::string source_id; ///< originating session for synthetic copies, empty for originals

    Label label() const { return label_for(noticed_km, usefulness); }

    /// Session this item derives from (itself, for originals).
    const std::string& origin_id() const { return source_id.empty() ? session_id : source_id; }

    std::size_t move_count() const {
        return static_cast<std::size_t>(std::count_if(events.begin(), events.end(),
                                                      [](const CursorEvent& e) { return e.kind == EventKind::move; }));
    }

    std::vector<CursorEvent> moves() const {
        std::vector<CursorEvent> out;
        out.reserve(events.size());
        for (const auto& e : events)
            if (e.kind == EventKind::move) out.push_back(e);
        return out;
    }

    bool operator==(const MouseSequence&) const = default;
};

// -- validation --------------------------------------------------------------

struct Verdict {
    std::vector<std::string> reasons;

    bool valid() const { return reasons.empty(); }
    explicit operator bool() const { return valid(); }

    std::string summary() const {
        std::string s;
        for (const auto& r : reasons) {
            if (!s.empty()) s += "; ";
            s += r;
        }
        return s;
    }
};

inline Verdict validate_sequence(const MouseSequence& seq) {
    Verdict v;
    auto add = [&](std::string r) {
        if (std::find(v.reasons.begin(), v.reasons.end(), r) == v.reasons.end()) v.reasons.push_back(std::move(r));
    };

    const bool screen_ok = std::isfinite(seq.screen_width) && std::isfinite(seq.screen_height) &&
                           seq.screen_width > 0 && seq.screen_height > 0;
    if (!screen_ok) add("degenerate screen");
    if (seq.move_count() < 2) add("too few events");
    if (seq.usefulness < 1 || seq.usefulness > 5) add("usefulness out of range");

    double prev_t = -1;
    for (const auto& e : seq.events) {
        if (!std::isfinite(e.x) || !std::isfinite(e.y) || !std::isfinite(e.t)) {
            add("non-finite value");
            continue;
        }
        if (e.t < 0) add("negative timestamp");
        if (e.t < prev_t) add("non-monotone timestamps");
        prev_t = std::max(prev_t, e.t);
        if (screen_ok && (e.x < -kBoundsTolerancePx || e.y < -kBoundsTolerancePx ||
                          e.x > seq.screen_width + kBoundsTolerancePx || e.y > seq.screen_height + kBoundsTolerancePx))
            add("coordinate out of bounds");
        const bool has_scroll = e.scroll_x.has_value() || e.scroll_y.has_value();
        if ((e.kind == EventKind::scroll) != has_scroll || (has_scroll && !(e.scroll_x && e.scroll_y)))
            add("scroll offsets inconsistent with event kind");
    }

    const auto& b = seq.km_bbox;
    const bool bbox_finite = std::isfinite(b.left) && std::isfinite(b.top) && std::isfinite(b.right) && std::isfinite(b.bottom);
    if (!bbox_finite || b.left > b.right || b.top > b.bottom || b.left < 0 || b.top < 0 ||
        (screen_ok && (b.right > seq.screen_width || b.bottom > seq.screen_height)))
        add("malformed km_bbox");
    return v;
}

// -- wire format -------------------------------------------------------------

namespace detail {

inline double require_number(const nlohmann::json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ValidationError(std::string("missing key '") + key + "'");
    if (!it->is_number()) throw ValidationError(std::string("key '") + key + "' is not a number");
    return it->get<double>();
}

inline const nlohmann::json& require_object(const nlohmann::json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_object()) throw ValidationError(std::string("missing object '") + key + "'");
    return *it;
}

} // namespace detail

inline MouseSequence sequence_from_json(const nlohmann::json& j) {
    using detail::require_number;
    using detail::require_object;
    if (!j.is_object()) throw ValidationError("record is not a JSON object");

    MouseSequence s;
    auto sid = j.find("session_id");
    if (sid == j.end() || !sid->is_string()) throw ValidationError("missing key 'session_id'");
    s.session_id = sid->get<std::string>();

    const auto& screen = require_object(j, "screen");
    s.screen_width = require_number(screen, "width");
    s.screen_height = require_number(screen, "height");

    const auto& bbox = require_object(j, "km_bbox");
    s.km_bbox = {require_number(bbox, "left"), require_number(bbox, "top"), require_number(bbox, "right"),
                 require_number(bbox, "bottom")};

    auto noticed = j.find("noticed_km");
    if (noticed == j.end() || !noticed->is_boolean()) throw ValidationError("missing key 'noticed_km'");
    s.noticed_km = noticed->get<bool>();

    auto useful = j.find("usefulness");
    if (useful == j.end() || !useful->is_number_integer()) throw ValidationError("missing integer 'usefulness'");
    s.usefulness = useful->get<int>();

    auto events = j.find("events");
    if (events == j.end() || !events->is_array()) throw ValidationError("missing array 'events'");
    s.events.reserve(events->size());
    for (const auto& ej : *events) {
        if (!ej.is_object()) throw ValidationError("event is not an object");
        CursorEvent e;
        e.x = require_number(ej, "x");
        e.y = require_number(ej, "y");
        e.t = require_number(ej, "t");
        auto kind = ej.find("kind");
        if (kind == ej.end() || !kind->is_string()) throw ValidationError("event missing 'kind'");
        const auto k = kind->get<std::string>();
        if (k == "move")
            e.kind = EventKind::move;
        else if (k == "scroll")
            e.kind = EventKind::scroll;
        else
            throw ValidationError("unknown event kind '" + k + "'");
        if (ej.contains("scroll_x")) e.scroll_x = require_number(ej, "scroll_x");
        if (ej.contains("scroll_y")) e.scroll_y = require_number(ej, "scroll_y");
        s.events.push_back(e);
    }

    if (auto p = j.find("provenance"); p != j.end() && p->is_string()) s.provenance = origin_from_string(p->get<std::string>());
    if (auto src = j.find("source_id"); src != j.end() && src->is_string()) s.source_id = src->get<std::string>();
    return s;
}

inline nlohmann::json sequence_to_json(const MouseSequence& s) {
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : s.events) {
        nlohmann::json ej = {{"x", e.x}, {"y", e.y}, {"t", e.t}, {"kind", e.kind == EventKind::move ? "move" : "scroll"}};
        if (e.scroll_x) ej["scroll_x"] = *e.scroll_x;
        if (e.scroll_y) ej["scroll_y"] = *e.scroll_y;
        events.push_back(std::move(ej));
    }
    nlohmann::json j = {
        {"session_id", s.session_id},
        {"screen", {{"width", s.screen_width}, {"height", s.screen_height}}},
        {"km_bbox", {{"left", s.km_bbox.left}, {"top", s.km_bbox.top}, {"right", s.km_bbox.right}, {"bottom", s.km_bbox.bottom}}},
        {"noticed_km", s.noticed_km},
        {"usefulness", s.usefulness},
        {"events", std::move(events)},
    };
    if (s.provenance != Origin::original) j["provenance"] = to_string(s.provenance);
    if (!s.source_id.empty()) j["source_id"] = s.source_id;
    return j;
}

inline std::string serialize_sequence(const MouseSequence& s) { return sequence_to_json(s).dump(); }

inline std::string serialize_dataset(const std::vector<MouseSequence>& seqs) {
    std::string out;
    for (const auto& s : seqs) {
        out += serialize_sequence(s);
        out += '\n';
    }
    return out;
}

struct LineError {
    std::size_t line = 0; ///< 1-based
    std::string message;
};

struct ParsedDataset {
    std::vector<MouseSequence> sequences;
    std::vector<LineError> errors;

    std::size_t count(Label l) const {
        return static_cast<std::size_t>(
            std::count_if(sequences.begin(), sequences.end(), [l](const MouseSequence& s) { return s.label() == l; }));
    }
};

/// Parse line-delimited JSON records. Invalid lines are reported and skipped;
/// throws EmptyDatasetError when nothing valid remains.
inline ParsedDataset parse_dataset(std::string_view content) {
    ParsedDataset out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= content.size()) {
        const auto nl = content.find('\n', pos);
        const auto end = nl == std::string_view::npos ? content.size() : nl;
        auto line = content.substr(pos, end - pos);
        ++line_no;
        pos = end + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) {
            if (nl == std::string_view::npos) break;
            continue;
        }
        try {
            auto seq = sequence_from_json(nlohmann::json::parse(line));
            if (auto v = validate_sequence(seq); !v)
                out.errors.push_back({line_no, v.summary()});
            else
                out.sequences.push_back(std::move(seq));
        } catch (const nlohmann::json::exception& e) {
            out.errors.push_back({line_no, std::string("malformed JSON: ") + e.what()});
        } catch (const ValidationError& e) {
            out.errors.push_back({line_no, e.what()});
        }
        if (nl == std::string_view::npos) break;
    }
    if (out.sequences.empty()) throw EmptyDatasetError();
    return out;
}

inline ParsedDataset parse_dataset(std::istream& in) {
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_dataset(std::string_view(ss.str()));
}

// -- transforms --------------------------------------------------------------

/// Rescale horizontal geometry to a common screen width. With scale_y the
/// vertical axis is scaled by the same factor (aspect-preserving).
inline MouseSequence standardize_width(const MouseSequence& seq, double target_width = kCommonScreenWidth,
                                       bool scale_y = false) {
    if (!(seq.screen_width > 0)) throw ValidationError("degenerate screen: width must be positive");
    if (!(target_width > 0)) throw ConfigError("target width must be positive");
    const double f = target_width / seq.screen_width;
    const double fy = scale_y ? f : 1.0;
    MouseSequence out = seq;
    for (auto& e : out.events) {
        e.x *= f;
        e.y *= fy;
        if (e.scroll_x) *e.scroll_x *= f;
        if (e.scroll_y) *e.scroll_y *= fy;
    }
    out.km_bbox.left *= f;
    out.km_bbox.right *= f;
    out.km_bbox.top *= fy;
    out.km_bbox.bottom *= fy;
    out.screen_width = target_width;
    out.screen_height *= fy;
    return out;
}

enum class Coords { raw, standardized };

struct Channels {
    bool xy = true;
    bool time_offset = false;
    bool speed = false;
    bool distance_to_km = false;

    int dim() const { return (xy ? 2 : 0) + int(time_offset) + int(speed) + int(distance_to_km); }
    bool operator==(const Channels&) const = default;
};

struct RepresentationScheme {
    Coords coords = Coords::standardized;
    Channels channels;
    double target_width = kCommonScreenWidth;
    double coord_scale = kCommonScreenWidth; ///< xy and distance channels are divided by this; 1 keeps pixels
    double time_scale = 1000.0;              ///< time offsets are divided by this (ms -> s)
    bool scale_y = false;
    int max_len = kMaxTimesteps;

    int dim() const { return channels.dim(); }
    bool operator==(const RepresentationScheme&) const = default;
};

inline void validate_scheme(const RepresentationScheme& s) {
    if (s.dim() < 1) throw ConfigError("representation needs at least one channel");
    if (s.max_len < 1) throw ConfigError("max_len must be positive");
    if (!(s.target_width > 0) || !(s.coord_scale > 0) || !(s.time_scale > 0)) throw ConfigError("scales must be positive");
}

/// Short names: raw, std, raw-time, std-time, speed, speed-km.
inline RepresentationScheme scheme_from_name(std::string_view name) {
    RepresentationScheme s;
    if (name == "raw" || name == "raw-time") {
        s.coords = Coords::raw;
        s.channels.time_offset = name == "raw-time";
    } else if (name == "std" || name == "std-time") {
        s.coords = Coords::standardized;
        s.channels.time_offset = name == "std-time";
    } else if (name == "speed" || name == "speed-km") {
        s.coords = Coords::standardized;
        s.channels = Channels{false, false, true, name == "speed-km"};
    } else {
        throw ConfigError("unknown representation '" + std::string(name) + "'");
    }
    return s;
}

inline std::string scheme_name(const RepresentationScheme& s) {
    const auto& c = s.channels;
    if (!c.xy && c.speed && !c.time_offset) return c.distance_to_km ? "speed-km" : "speed";
    std::string n = s.coords == Coords::raw ? "raw" : "std";
    if (c.time_offset) n += "-time";
    if (c.speed) n += "+speed";
    if (c.distance_to_km) n += "+km";
    return n;
}

inline nlohmann::json scheme_to_json(const RepresentationScheme& s) {
    return {{"coords", s.coords == Coords::raw ? "raw" : "standardized"},
            {"xy", s.channels.xy},
            {"time_offset", s.channels.time_offset},
            {"speed", s.channels.speed},
            {"distance_to_km", s.channels.distance_to_km},
            {"target_width", s.target_width},
            {"coord_scale", s.coord_scale},
            {"time_scale", s.time_scale},
            {"scale_y", s.scale_y},
            {"max_len", s.max_len}};
}

inline RepresentationScheme scheme_from_json(const nlohmann::json& j) {
    RepresentationScheme s;
    s.coords = j.at("coords").get<std::string>() == "raw" ? Coords::raw : Coords::standardized;
    s.channels = {j.at("xy").get<bool>(), j.at("time_offset").get<bool>(), j.at("speed").get<bool>(),
                  j.at("distance_to_km").get<bool>()};
    s.target_width = j.at("target_width").get<double>();
    s.coord_scale = j.at("coord_scale").get<double>();
    s.time_scale = j.at("time_scale").get<double>();
    s.scale_y = j.at("scale_y").get<bool>();
    s.max_len = j.at("max_len").get<int>();
    validate_scheme(s);
    return s;
}

struct Padded {
    Eigen::MatrixXd values; ///< max_len x D
    std::vector<bool> mask;
};

/// Keep the final max_len rows, or post-pad with zeros. Mask marks real rows.
inline Padded pad_truncate(const Eigen::MatrixXd& values, int max_len = kMaxTimesteps) {
    const auto rows = static_cast<int>(values.rows());
    if (rows == 0) throw ValidationError("empty sequence");
    if (max_len < 1) throw ConfigError("max_len must be positive");
    Padded p;
    p.values = Eigen::MatrixXd::Zero(max_len, values.cols());
    p.mask.assign(static_cast<std::size_t>(max_len), false);
    const int keep = std::min(rows, max_len);
    p.values.topRows(keep) = values.bottomRows(keep);
    std::fill_n(p.mask.begin(), keep, true);
    return p;
}

struct RepresentedSequence {
    Eigen::MatrixXd values; ///< max_len x D, row = timestep
    std::vector<bool> mask;
    Label label = Label::bad;
    std::string source_id;
    Origin provenance = Origin::original;
    std::string neighbor_id; ///< interpolation partner for resampled items
    double lambda = 0;       ///< interpolation weight for resampled items

    int length() const { return static_cast<int>(std::count(mask.begin(), mask.end(), true)); }
    int max_len() const { return static_cast<int>(values.rows()); }
    int dim() const { return static_cast<int>(values.cols()); }
};

/// Per-move-event channel matrix (T x D) before padding.
inline Eigen::MatrixXd channel_matrix(const MouseSequence& input, const RepresentationScheme& scheme) {
    validate_scheme(scheme);
    const MouseSequence seq = scheme.coords == Coords::standardized
                                  ? standardize_width(input, scheme.target_width, scheme.scale_y)
                                  : input;
    const auto moves = seq.moves();
    if (moves.empty()) throw ValidationError("empty sequence");
    const auto T = static_cast<Eigen::Index>(moves.size());
    Eigen::MatrixXd m(T, scheme.dim());
    for (Eigen::Index i = 0; i < T; ++i) {
        const auto& e = moves[static_cast<std::size_t>(i)];
        Eigen::Index c = 0;
        double dt = 0;
        double dist = 0;
        if (i > 0) {
            const auto& p = moves[static_cast<std::size_t>(i - 1)];
            dt = e.t - p.t;
            dist = std::hypot(e.x - p.x, e.y - p.y);
        }
        if (scheme.channels.xy) {
            m(i, c++) = e.x / scheme.coord_scale;
            m(i, c++) = e.y / scheme.coord_scale;
        }
        if (scheme.channels.time_offset) m(i, c++) = dt / scheme.time_scale;
        if (scheme.channels.speed) m(i, c++) = dt > 0 ? dist / dt : 0.0;
        if (scheme.channels.distance_to_km) m(i, c++) = seq.km_bbox.distance(e.x, e.y) / scheme.coord_scale;
    }
    return m;
}

inline RepresentedSequence to_representation(const MouseSequence& seq, const RepresentationScheme& scheme) {
    auto padded = pad_truncate(channel_matrix(seq, scheme), scheme.max_len);
    RepresentedSequence r;
    r.values = std::move(padded.values);
    r.mask = std::move(padded.mask);
    r.label = seq.label();
    r.source_id = seq.origin_id();
    r.provenance = seq.provenance;
    return r;
}

} // namespace abandon
