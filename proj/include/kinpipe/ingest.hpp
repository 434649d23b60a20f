#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinpipe/common.hpp"
#include "kinpipe/types.hpp"

namespace kinpipe::ingest {

namespace detail {

inline std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

inline double parse_double(const std::string& s, const std::string& what, std::size_t line_no) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " value '" + s +
                         "'");
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Trial CSV: header "t,marker_id,x,y,z,valid", one row per (timestamp, marker)
// ---------------------------------------------------------------------------

inline std::vector<MarkerTrack> parse_trial_csv(std::istream& is, double sample_rate = 100.0) {
    std::string line;
    if (!std::getline(is, line)) throw ParseError("empty trial");
    std::map<MarkerId, MarkerTrack> tracks;
    std::size_t line_no = 1;
    std::size_t data_rows = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = detail::split_csv_row(line);
        if (fields.size() != 6)
            throw ParseError("line " + std::to_string(line_no) + ": expected 6 fields, got " +
                             std::to_string(fields.size()));
        MarkerSample s;
        s.t = detail::parse_double(fields[0], "timestamp", line_no);
        const MarkerId marker = marker_from_string(fields[1]);
        s.x = detail::parse_double(fields[2], "x", line_no);
        s.y = detail::parse_double(fields[3], "y", line_no);
        s.z = detail::parse_double(fields[4], "z", line_no);
        if (fields[5] == "1")
            s.valid = true;
        else if (fields[5] == "0")
            s.valid = false;
        else
            throw ParseError("line " + std::to_string(line_no) + ": valid flag must be 0 or 1");
        auto& track = tracks[marker];
        track.marker = marker;
        track.sample_rate = sample_rate;
        if (!track.samples.empty() && s.t <= track.samples.back().t)
            throw ParseError("line " + std::to_string(line_no) +
                             ": timestamps must be strictly increasing per marker");
        track.samples.push_back(s);
        ++data_rows;
    }
    if (data_rows == 0) throw ParseError("empty trial");
    std::vector<MarkerTrack> out;
    out.reserve(tracks.size());
    for (auto& [id, track] : tracks) out.push_back(std::move(track));
    return out;
}

inline void write_trial_csv(std::ostream& os, const std::vector<MarkerTrack>& tracks) {
    os << "t,marker_id,x,y,z,valid\n";
    // Rows interleaved by timestamp so the file reads chronologically.
    std::size_t max_len = 0;
    for (const auto& t : tracks) max_len = std::max(max_len, t.samples.size());
    char buf[256];
    for (std::size_t i = 0; i < max_len; ++i) {
        for (const auto& t : tracks) {
            if (i >= t.samples.size()) continue;
            const auto& s = t.samples[i];
            std::snprintf(buf, sizeof(buf), "%.17g,%s,%.17g,%.17g,%.17g,%d\n", s.t,
                          to_string(t.marker).c_str(), s.x, s.y, s.z, s.valid ? 1 : 0);
            os << buf;
        }
    }
}

// ---------------------------------------------------------------------------
// Manifest: JSON array of {path, subject_id, trial_index, glass_code, route,
// shelf_slot} entries, with optional flow stream declarations.
// ---------------------------------------------------------------------------

inline nlohmann::json manifest_to_json(const std::vector<ManifestEntry>& entries) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : entries) {
        nlohmann::json j;
        j["path"] = e.path;
        j["subject_id"] = e.subject_id;
        j["trial_index"] = e.trial_index;
        j["glass_code"] = to_string(e.glass_code);
        j["route"] = to_string(e.route);
        j["shelf_slot"] = std::string(1, e.slot);
        if (!e.flow_path.empty()) {
            j["flow_path"] = e.flow_path;
            j["flow_rate"] = e.flow_rate;
        }
        arr.push_back(std::move(j));
    }
    return arr;
}

inline std::vector<ManifestEntry> manifest_from_json(const nlohmann::json& arr) {
    if (!arr.is_array()) throw SchemaError("manifest must be a JSON array");
    std::vector<ManifestEntry> entries;
    entries.reserve(arr.size());
    for (const auto& j : arr) {
        ManifestEntry e;
        e.path = j.at("path").get<std::string>();
        e.subject_id = j.at("subject_id").get<int>();
        e.trial_index = j.at("trial_index").get<int>();
        e.glass_code = glass_code_from_string(j.at("glass_code").get<std::string>());
        e.route = route_from_string(j.at("route").get<std::string>());
        const std::string slot = j.at("shelf_slot").get<std::string>();
        if (slot.size() != 1 || slot[0] < 'A' || slot[0] > 'H')
            throw SchemaError("shelf_slot must be a letter A..H");
        e.slot = slot[0];
        if (j.contains("flow_path")) e.flow_path = j.at("flow_path").get<std::string>();
        if (j.contains("flow_rate")) e.flow_rate = j.at("flow_rate").get<double>();
        if (e.subject_id < 1) throw SchemaError("subject_id must be >= 1");
        entries.push_back(std::move(e));
    }
    return entries;
}

inline void write_manifest(const std::filesystem::path& path,
                           const std::vector<ManifestEntry>& entries) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write manifest " + path.string());
    os << manifest_to_json(entries).dump(2) << "\n";
}

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read manifest " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("manifest " + path.string() + ": " + e.what());
    }
    return manifest_from_json(j);
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

inline TrialRecord make_trial_record(const ManifestEntry& entry,
                                     std::vector<MarkerTrack> tracks) {
    TrialRecord rec;
    rec.meta.subject_id = entry.subject_id;
    rec.meta.trial_index = entry.trial_index;
    rec.meta.weight = weight_of(entry.glass_code);
    rec.meta.carefulness = carefulness_of(entry.glass_code);
    rec.meta.route = entry.route;
    rec.meta.slot = entry.slot;
    rec.tracks = std::move(tracks);
    return rec;
}

// Loads one trial from disk. Invalid samples are flagged, never dropped.
inline TrialRecord load_trial(const std::filesystem::path& path, const ManifestEntry& entry) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open trial file " + path.string());
    try {
        return make_trial_record(entry, parse_trial_csv(is));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

// The most visible marker represents the whole hand. Ties go to a fixed
// priority order so reruns pick the same track.
inline const MarkerTrack& select_marker(const std::vector<MarkerTrack>& tracks) {
    if (tracks.empty()) throw UnusableTrialError("trial has no marker tracks");
    auto priority = [](MarkerId id) {
        switch (id) {
            case MarkerId::IndexMCP: return 0;
            case MarkerId::LittleMCP: return 1;
            case MarkerId::MetacarpalDiaphysis: return 2;
            case MarkerId::RadialStyloid: return 3;
        }
        return 4;
    };
    const MarkerTrack* best = nullptr;
    std::size_t best_count = 0;
    for (const auto& t : tracks) {
        const std::size_t n = t.valid_count();
        if (!best || n > best_count ||
            (n == best_count && priority(t.marker) < priority(best->marker))) {
            best = &t;
            best_count = n;
        }
    }
    if (best_count < 2)
        throw UnusableTrialError("all marker tracks are occluded beyond use");
    return *best;
}

namespace detail {

// Polynomial through up to four support samples, evaluated at time t
// (Lagrange form). With two supports this degenerates to linear.
inline double lagrange_eval(const std::vector<std::pair<double, double>>& pts, double t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        double term = pts[i].second;
        for (std::size_t j = 0; j < pts.size(); ++j) {
            if (i == j) continue;
            term *= (t - pts[j].first) / (pts[i].first - pts[j].first);
        }
        acc += term;
    }
    return acc;
}

}  // namespace detail

// Reconstructs occluded samples. Interior gaps: piecewise cubic through the
// two nearest valid samples on each side (degenerating gracefully when fewer
// exist). Leading/trailing gaps: hold the nearest valid value. Samples that
// were valid on input are returned bit-for-bit unchanged.
inline MarkerTrack fill_gaps(const MarkerTrack& track) {
    const std::size_t n = track.samples.size();
    std::vector<std::size_t> valid_idx;
    for (std::size_t i = 0; i < n; ++i)
        if (track.samples[i].valid) valid_idx.push_back(i);
    if (valid_idx.size() < 2)
        throw UnusableTrialError("fill_gaps needs at least 2 valid samples");
    if (valid_idx.size() == n) return track;

    MarkerTrack out = track;
    auto coord = [&](std::size_t i, int axis) -> double {
        const auto& s = track.samples[i];
        return axis == 0 ? s.x : axis == 1 ? s.y : s.z;
    };
    auto set_coord = [&](std::size_t i, int axis, double v) {
        auto& s = out.samples[i];
        (axis == 0 ? s.x : axis == 1 ? s.y : s.z) = v;
    };

    const std::size_t first_valid = valid_idx.front();
    const std::size_t last_valid = valid_idx.back();
    for (std::size_t i = 0; i < n; ++i) {
        if (track.samples[i].valid) continue;
        if (i < first_valid) {
            for (int a = 0; a < 3; ++a) set_coord(i, a, coord(first_valid, a));
            out.samples[i].valid = true;
            continue;
        }
        if (i > last_valid) {
            for (int a = 0; a < 3; ++a) set_coord(i, a, coord(last_valid, a));
            out.samples[i].valid = true;
            continue;
        }
        // Interior gap: locate the neighbours among the valid indices.
        const auto it = std::lower_bound(valid_idx.begin(), valid_idx.end(), i);
        std::vector<std::size_t> support;
        const std::size_t right = static_cast<std::size_t>(it - valid_idx.begin());
        if (right >= 2) support.push_back(valid_idx[right - 2]);
        support.push_back(valid_idx[right - 1]);
        support.push_back(valid_idx[right]);
        if (right + 1 < valid_idx.size()) support.push_back(valid_idx[right + 1]);
        for (int a = 0; a < 3; ++a) {
            std::vector<std::pair<double, double>> pts;
            pts.reserve(support.size());
            for (std::size_t s : support)
                pts.emplace_back(track.samples[s].t, coord(s, a));
            set_coord(i, a, detail::lagrange_eval(pts, track.samples[i].t));
        }
        out.samples[i].valid = true;
    }
    return out;
}

}  // namespace kinpipe::ingest
