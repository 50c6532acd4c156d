#include "export/scrub.h"

#include "core/error.h"
#include "core/image.h"
#include "export/annotate.h"
#include "export/exif.h"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <set>

namespace trapkit::exporter {

std::string_view to_string(GpsMode mode) {
    return mode == GpsMode::remove ? "remove" : "grid";
}

GpsMode gps_mode_from_string(std::string_view text) {
    if (text == "remove") {
        return GpsMode::remove;
    }
    if (text == "grid") {
        return GpsMode::grid;
    }
    throw Error(ErrorCode::InvalidArgument, fmt::format("unknown gps mode '{}'", text));
}

void ScrubPolicy::validate() const {
    if (gps_mode == GpsMode::grid && !(grid_degrees > 0.0 && std::isfinite(grid_degrees))) {
        throw Error(ErrorCode::InvalidArgument, "grid_degrees must be positive in grid mode");
    }
}

double snap_to_grid(double value, double grid, double limit) {
    double k = std::round(value / grid);
    // For grids of the form 1/n the quotient k/n is the correctly rounded multiple;
    // k * grid would carry the representation error of grid.
    const double inverse = 1.0 / grid;
    const double n = std::round(inverse);
    const bool reciprocal = n >= 1.0 && std::abs(inverse - n) <= 1e-9 * n;
    auto multiple = [&](double m) { return reciprocal ? m / n : m * grid; };
    double snapped = multiple(k);
    while (std::abs(snapped) > limit + 1e-12 && k != 0.0) {
        k -= k > 0 ? 1.0 : -1.0;
        snapped = multiple(k);
    }
    return snapped == 0.0 ? 0.0 : snapped;  // drops negative zero
}

GeoPoint generalize(const GeoPoint& point, double grid_degrees) {
    return GeoPoint(snap_to_grid(point.latitude(), grid_degrees, 90.0),
                    snap_to_grid(point.longitude(), grid_degrees, 180.0));
}

std::optional<std::string> scrub_bytes(const std::string& bytes, const ScrubPolicy& policy,
                                       ScrubEntry& entry) {
    if (detect_format(bytes) == ImageFormat::other) {
        return std::nullopt;
    }
    std::string out = bytes;
    const MetadataScan before = scan_metadata(out);
    if (policy.gps_mode == GpsMode::grid && before.gps) {
        const GeoPoint coarse = generalize(*before.gps, policy.grid_degrees);
        if (replace_gps(out, coarse)) {
            entry.gps_written = coarse;
            entry.gps_tags_removed = before.gps_tag_count - scan_metadata(out).gps_tag_count;
            return out;
        }
    }
    // Remove mode, or grid mode on files whose GPS block holds no usable position.
    entry.gps_tags_removed = strip_gps(out);
    return out;
}

std::size_t ScrubReport::output_count() const {
    return static_cast<std::size_t>(
            std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.output.has_value(); }));
}

nlohmann::ordered_json ScrubReport::to_json() const {
    nlohmann::ordered_json out;
    out["policy"] = {{"gps_mode", to_string(policy.gps_mode)},
                     {"grid_degrees", policy.grid_degrees},
                     {"exclude_person_images", policy.exclude_person_images}};
    out["input_count"] = entries.size();
    out["output_count"] = output_count();
    auto excluded = nlohmann::ordered_json::array();
    auto outputs = nlohmann::ordered_json::array();
    for (const auto& entry : entries) {
        if (!entry.output) {
            excluded.push_back({{"file", entry.source}, {"reason", entry.excluded_reason.value_or("")}});
            continue;
        }
        nlohmann::ordered_json row;
        row["source"] = entry.source;
        row["output"] = *entry.output;
        row["gps_tags_removed"] = entry.gps_tags_removed;
        if (entry.gps_written) {
            row["gps"] = {entry.gps_written->latitude(), entry.gps_written->longitude()};
        } else {
            row["gps"] = nullptr;
        }
        outputs.push_back(std::move(row));
    }
    out["excluded"] = std::move(excluded);
    out["outputs"] = std::move(outputs);
    return out;
}

ScrubReport scrub_metadata(const std::vector<ScrubInput>& inputs, const std::filesystem::path& out_dir,
                           const ScrubPolicy& policy) {
    policy.validate();
    ScrubReport report;
    report.policy = policy;
    std::set<std::string> taken;
    for (const auto& input : inputs) {
        ScrubEntry entry;
        entry.source = input.path.string();
        if (policy.exclude_person_images && input.contains_person) {
            entry.excluded_reason = std::string(kReasonPerson);
            report.entries.push_back(std::move(entry));
            continue;
        }
        const std::string bytes = read_file(input.path);
        auto scrubbed = scrub_bytes(bytes, policy, entry);
        if (!scrubbed) {
            entry.excluded_reason = std::string(kReasonUnsupported);
            report.entries.push_back(std::move(entry));
            continue;
        }
        const auto destination = unique_destination(out_dir, input.path.filename(), taken);
        write_file(destination, *scrubbed);
        entry.output = destination.string();
        report.entries.push_back(std::move(entry));
    }
    return report;
}

ScrubReport scrub_results(const std::vector<pipeline::PipelineResult>& results,
                          const std::filesystem::path& out_dir, const ScrubPolicy& policy) {
    std::vector<ScrubInput> inputs;
    inputs.reserve(results.size());
    for (const auto& result : results) {
        const bool person = std::any_of(result.detections.begin(), result.detections.end(), [](const auto& d) {
            return d.detection.category() == DetectionCategory::person;
        });
        inputs.push_back({result.image.path, person});
    }
    return scrub_metadata(inputs, out_dir, policy);
}

}  // namespace trapkit::exporter
