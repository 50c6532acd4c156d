#pragma once

#include "core/types.h"
#include "pipeline/pipeline.h"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace trapkit::exporter {

enum class GpsMode { remove, grid };

std::string_view to_string(GpsMode mode);
GpsMode gps_mode_from_string(std::string_view text);

struct ScrubPolicy {
    GpsMode gps_mode = GpsMode::remove;
    double grid_degrees = 0.1;
    bool exclude_person_images = true;

    void validate() const;
};

inline constexpr std::string_view kReasonPerson = "person-detected";
inline constexpr std::string_view kReasonUnsupported = "unsupported-format";

// Nearest multiple of `grid`, kept inside [-limit, limit].
double snap_to_grid(double value, double grid, double limit);
GeoPoint generalize(const GeoPoint& point, double grid_degrees);

struct ScrubInput {
    std::filesystem::path path;
    bool contains_person = false;
};

struct ScrubEntry {
    std::string source;
    std::optional<std::string> output;  // absent when excluded
    std::optional<std::string> excluded_reason;
    std::size_t gps_tags_removed = 0;
    std::optional<GeoPoint> gps_written;
};

struct ScrubReport {
    ScrubPolicy policy;
    std::vector<ScrubEntry> entries;

    std::size_t output_count() const;
    nlohmann::ordered_json to_json() const;
};

// Applies the policy to an in-memory file. Returns nullopt for formats whose metadata
// cannot be edited safely.
std::optional<std::string> scrub_bytes(const std::string& bytes, const ScrubPolicy& policy,
                                       ScrubEntry& entry);

// Writes scrubbed copies into out_dir, keeping file names. Throws IoError.
ScrubReport scrub_metadata(const std::vector<ScrubInput>& inputs, const std::filesystem::path& out_dir,
                           const ScrubPolicy& policy);

// Person images are those with at least one person detection.
ScrubReport scrub_results(const std::vector<pipeline::PipelineResult>& results,
                          const std::filesystem::path& out_dir, const ScrubPolicy& policy);

}  // namespace trapkit::exporter
