#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace trapkit {

// Slack allowed on the right/bottom edge of a normalized box.
inline constexpr double kBoxEdgeEpsilon = 1e-6;
inline constexpr double kScoreSumTolerance = 1e-6;

// Axis-aligned box in normalized image coordinates: [x_min, y_min, width, height].
class BBox {
public:
    BBox(double x_min, double y_min, double width, double height);

    double x_min() const noexcept { return m_x_min; }
    double y_min() const noexcept { return m_y_min; }
    double width() const noexcept { return m_width; }
    double height() const noexcept { return m_height; }
    double x_max() const noexcept { return m_x_min + m_width; }
    double y_max() const noexcept { return m_y_min + m_height; }
    double area() const noexcept { return m_width * m_height; }

    bool operator==(const BBox&) const = default;

private:
    double m_x_min;
    double m_y_min;
    double m_width;
    double m_height;
};

// Detector class ids are fixed: 1=animal, 2=person, 3=vehicle.
enum class DetectionCategory { animal = 1, person = 2, vehicle = 3 };

inline constexpr DetectionCategory kAllCategories[] = {
        DetectionCategory::animal, DetectionCategory::person, DetectionCategory::vehicle};

std::string_view to_string(DetectionCategory category);
int category_id(DetectionCategory category);
DetectionCategory category_from_string(std::string_view name);
DetectionCategory category_from_id(int id);

class Detection {
public:
    Detection(BBox bbox, DetectionCategory category, double confidence);

    const BBox& bbox() const noexcept { return m_bbox; }
    DetectionCategory category() const noexcept { return m_category; }
    double confidence() const noexcept { return m_confidence; }

    bool operator==(const Detection&) const = default;

private:
    BBox m_bbox;
    DetectionCategory m_category;
    double m_confidence;
};

struct TopClass {
    std::string label;
    double probability;
    std::size_t index;
};

// Ordered label -> probability distribution produced by a classifier.
class ClassScores {
public:
    using Entry = std::pair<std::string, double>;

    // Requires probabilities in [0,1] summing to 1 within kScoreSumTolerance.
    explicit ClassScores(std::vector<Entry> entries);

    // For distributions read back from rounded text, where each entry may be off by
    // up to half a unit in the last rendered decimal.
    static ClassScores from_rendered(std::vector<Entry> entries, int decimals);

    const std::vector<Entry>& entries() const noexcept { return m_entries; }
    std::size_t size() const noexcept { return m_entries.size(); }
    std::vector<std::string> labels() const;
    std::optional<double> probability(std::string_view label) const;

    // First maximal entry in label order.
    TopClass top() const;

    bool operator==(const ClassScores&) const = default;

private:
    ClassScores(std::vector<Entry> entries, double tolerance);

    std::vector<Entry> m_entries;
};

class GeoPoint {
public:
    GeoPoint(double latitude, double longitude);

    double latitude() const noexcept { return m_latitude; }
    double longitude() const noexcept { return m_longitude; }

    bool operator==(const GeoPoint&) const = default;

private:
    double m_latitude;
    double m_longitude;
};

using Timestamp = std::chrono::sys_seconds;

// Accepts "YYYY-MM-DDTHH:MM:SS" (optional trailing Z), "YYYY-MM-DD HH:MM:SS" and the
// EXIF form "YYYY:MM:DD HH:MM:SS".
Timestamp parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp ts);
unsigned month_of(Timestamp ts);

struct ImageRef {
    std::string path;
    std::optional<int> width_px;
    std::optional<int> height_px;
    std::optional<Timestamp> capture_time;
    std::optional<std::string> location_id;
    std::optional<GeoPoint> gps;

    bool has_dimensions() const noexcept { return width_px && height_px; }
};

}  // namespace trapkit
