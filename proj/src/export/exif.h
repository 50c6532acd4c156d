#pragma once

// Minimal EXIF access for JPEG (APP1 "Exif") and PNG (eXIf chunk) files: enough to
// read capture time and GPS position, and to remove or coarsen GPS data in place
// without disturbing the rest of the file.

#include "core/types.h"

#include <cstddef>
#include <optional>
#include <string>

namespace trapkit::exporter {

enum class ImageFormat { jpeg, png, other };

ImageFormat detect_format(const std::string& bytes);

struct MetadataScan {
    bool has_exif = false;
    // Entries found in GPS IFDs, plus XMP packets carrying GPS properties.
    std::size_t gps_tag_count = 0;
    std::optional<GeoPoint> gps;
    std::optional<Timestamp> capture_time;
};

// Malformed metadata is reported as absent rather than thrown.
MetadataScan scan_metadata(const std::string& bytes);

// Returns a copy with a fresh EXIF block holding `position` (and a camera make tag),
// replacing any existing EXIF block. Throws InvalidArgument for non-JPEG/PNG input.
std::string embed_gps(const std::string& bytes, const GeoPoint& position,
                      std::optional<Timestamp> capture_time = std::nullopt);

// Drops the GPS IFD pointer from IFD0 and zeroes the GPS IFD and its data; XMP
// packets carrying GPS properties are removed. Returns the number of GPS tags removed.
std::size_t strip_gps(std::string& bytes);

// Rewrites latitude/longitude in place and drops every other GPS tag except the
// version and the hemisphere references. Returns false if the file has no GPS position.
bool replace_gps(std::string& bytes, const GeoPoint& position);

}  // namespace trapkit::exporter
