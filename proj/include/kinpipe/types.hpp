#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kinpipe/common.hpp"

namespace kinpipe {

// ---------------------------------------------------------------------------
// Label domain
// ---------------------------------------------------------------------------

enum class WeightClass { W1, W2 };              // light (167 g) / heavy (667 g)
enum class CarefulnessClass { C1, C2 };         // low (empty) / high (full of water)
enum class GlassCode { W1C1, W2C1, W1C2, W2C2 };
enum class Route { ShelfToScale, ScaleToShelf };
enum class Source { MoCap, OpticalFlow };
enum class Task { Carefulness, Weight };
enum class Layout { Resampled32, Padded132 };
enum class Subset { None, ScaleToShelfOnly, LowCarefulnessOnly, HighCarefulnessOnly };

// Eight labelled shelf positions: two shelves x two levels x two columns.
using ShelfSlot = char;  // 'A'..'H'

struct GlassSpec {
    GlassCode code;
    int weight_grams;
    CarefulnessClass carefulness;
};

inline GlassSpec glass_spec(GlassCode code) {
    switch (code) {
        case GlassCode::W1C1: return {code, 167, CarefulnessClass::C1};
        case GlassCode::W2C1: return {code, 667, CarefulnessClass::C1};
        case GlassCode::W1C2: return {code, 167, CarefulnessClass::C2};
        case GlassCode::W2C2: return {code, 667, CarefulnessClass::C2};
    }
    throw SchemaError("unknown glass code");
}

inline WeightClass weight_of(GlassCode code) {
    return (code == GlassCode::W1C1 || code == GlassCode::W1C2) ? WeightClass::W1
                                                                : WeightClass::W2;
}

inline CarefulnessClass carefulness_of(GlassCode code) {
    return glass_spec(code).carefulness;
}

inline std::string to_string(GlassCode code) {
    switch (code) {
        case GlassCode::W1C1: return "W1C1";
        case GlassCode::W2C1: return "W2C1";
        case GlassCode::W1C2: return "W1C2";
        case GlassCode::W2C2: return "W2C2";
    }
    return "?";
}

inline GlassCode glass_code_from_string(const std::string& s) {
    if (s == "W1C1") return GlassCode::W1C1;
    if (s == "W2C1") return GlassCode::W2C1;
    if (s == "W1C2") return GlassCode::W1C2;
    if (s == "W2C2") return GlassCode::W2C2;
    throw SchemaError("glass code '" + s + "' is not one of W1C1/W2C1/W1C2/W2C2");
}

inline std::string to_string(Route r) {
    return r == Route::ShelfToScale ? "shelf_to_scale" : "scale_to_shelf";
}

inline Route route_from_string(const std::string& s) {
    if (s == "shelf_to_scale") return Route::ShelfToScale;
    if (s == "scale_to_shelf") return Route::ScaleToShelf;
    throw SchemaError("route '" + s + "' is not shelf_to_scale or scale_to_shelf");
}

inline std::string to_string(Source s) { return s == Source::MoCap ? "mocap" : "flow"; }

inline Source source_from_string(const std::string& s) {
    if (s == "mocap") return Source::MoCap;
    if (s == "flow") return Source::OpticalFlow;
    throw SchemaError("source '" + s + "' is not mocap or flow");
}

inline std::string to_string(Task t) { return t == Task::Carefulness ? "carefulness" : "weight"; }

inline Task task_from_string(const std::string& s) {
    if (s == "carefulness") return Task::Carefulness;
    if (s == "weight") return Task::Weight;
    throw SchemaError("task '" + s + "' is not carefulness or weight");
}

inline std::string to_string(Layout l) {
    return l == Layout::Resampled32 ? "resampled32" : "padded132";
}

inline Layout layout_from_string(const std::string& s) {
    if (s == "resampled32") return Layout::Resampled32;
    if (s == "padded132") return Layout::Padded132;
    throw SchemaError("layout '" + s + "' is not resampled32 or padded132");
}

inline std::string to_string(Subset s) {
    switch (s) {
        case Subset::None: return "none";
        case Subset::ScaleToShelfOnly: return "scale-to-shelf";
        case Subset::LowCarefulnessOnly: return "low-care";
        case Subset::HighCarefulnessOnly: return "high-care";
    }
    return "?";
}

inline Subset subset_from_string(const std::string& s) {
    if (s == "none") return Subset::None;
    if (s == "scale-to-shelf") return Subset::ScaleToShelfOnly;
    if (s == "low-care") return Subset::LowCarefulnessOnly;
    if (s == "high-care") return Subset::HighCarefulnessOnly;
    throw SchemaError("subset '" + s + "' unknown");
}

// ---------------------------------------------------------------------------
// Motion-capture records
// ---------------------------------------------------------------------------

enum class MarkerId { IndexMCP, LittleMCP, MetacarpalDiaphysis, RadialStyloid };

constexpr std::array<MarkerId, 4> kAllMarkers = {
    MarkerId::IndexMCP, MarkerId::LittleMCP, MarkerId::MetacarpalDiaphysis,
    MarkerId::RadialStyloid};

inline std::string to_string(MarkerId m) {
    switch (m) {
        case MarkerId::IndexMCP: return "IndexMCP";
        case MarkerId::LittleMCP: return "LittleMCP";
        case MarkerId::MetacarpalDiaphysis: return "MetacarpalDiaphysis";
        case MarkerId::RadialStyloid: return "RadialStyloid";
    }
    return "?";
}

inline MarkerId marker_from_string(const std::string& s) {
    if (s == "IndexMCP") return MarkerId::IndexMCP;
    if (s == "LittleMCP") return MarkerId::LittleMCP;
    if (s == "MetacarpalDiaphysis") return MarkerId::MetacarpalDiaphysis;
    if (s == "RadialStyloid") return MarkerId::RadialStyloid;
    throw SchemaError("unknown marker id '" + s + "'");
}

struct MarkerSample {
    double t;        // seconds
    double x, y, z;  // millimeters
    bool valid;      // false while occluded
};

struct MarkerTrack {
    MarkerId marker = MarkerId::IndexMCP;
    double sample_rate = 100.0;  // Hz
    std::vector<MarkerSample> samples;

    std::size_t valid_count() const {
        std::size_t n = 0;
        for (const auto& s : samples)
            if (s.valid) ++n;
        return n;
    }

    double gap_fraction() const {
        if (samples.empty()) return 0.0;
        return 1.0 - static_cast<double>(valid_count()) / static_cast<double>(samples.size());
    }
};

// Per-frame optical-flow descriptor stream: one (u_mean, v_mean) sample per
// consecutive frame pair, pixels/frame.
struct FlowSeries {
    double rate = 22.0;  // Hz
    std::vector<std::array<double, 2>> samples;
};

struct TrialMeta {
    int subject_id = 0;
    int trial_index = 0;
    WeightClass weight = WeightClass::W1;
    CarefulnessClass carefulness = CarefulnessClass::C1;
    Route route = Route::ShelfToScale;
    ShelfSlot slot = 'A';

    GlassCode glass_code() const {
        if (weight == WeightClass::W1)
            return carefulness == CarefulnessClass::C1 ? GlassCode::W1C1 : GlassCode::W1C2;
        return carefulness == CarefulnessClass::C1 ? GlassCode::W2C1 : GlassCode::W2C2;
    }
};

// One transport movement. Depending on the processing path either the marker
// tracks (MoCap) or the flow descriptor stream (camera) is consumed.
struct TrialRecord {
    TrialMeta meta;
    std::vector<MarkerTrack> tracks;
    std::optional<FlowSeries> flow_descriptors;
    bool gap_warning = false;    // set when occlusions exceed the audit threshold
    double gap_fraction = 0.0;   // of the selected marker, for auditing
};

struct ManifestEntry {
    std::string path;  // trial CSV, relative to the manifest
    int subject_id = 0;
    int trial_index = 0;
    GlassCode glass_code = GlassCode::W1C1;
    Route route = Route::ShelfToScale;
    ShelfSlot slot = 'A';
    std::string flow_path;    // optional: descriptor CSV or frame directory
    double flow_rate = 22.0;  // camera rate declaration
};

}  // namespace kinpipe
