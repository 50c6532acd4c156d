#include "core/types.h"

#include "core/error.h"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>

namespace trapkit {

BBox::BBox(double x_min, double y_min, double width, double height)
        : m_x_min(x_min), m_y_min(y_min), m_width(width), m_height(height) {
    if (!std::isfinite(x_min) || !std::isfinite(y_min) || !std::isfinite(width) ||
        !std::isfinite(height)) {
        throw Error(ErrorCode::InvalidBox, "bounding box has non-finite coordinates");
    }
    if (width <= 0.0 || height <= 0.0) {
        throw Error(ErrorCode::DegenerateBox,
                    fmt::format("bounding box has non-positive size ({} x {})", width, height));
    }
    if (x_min < 0.0 || y_min < 0.0 || x_min + width > 1.0 + kBoxEdgeEpsilon ||
        y_min + height > 1.0 + kBoxEdgeEpsilon) {
        throw Error(ErrorCode::InvalidBox,
                    fmt::format("bounding box [{}, {}, {}, {}] lies outside the unit square", x_min,
                                y_min, width, height));
    }
}

std::string_view to_string(DetectionCategory category) {
    switch (category) {
    case DetectionCategory::animal:
        return "animal";
    case DetectionCategory::person:
        return "person";
    case DetectionCategory::vehicle:
        return "vehicle";
    }
    return "unknown";
}

int category_id(DetectionCategory category) { return static_cast<int>(category); }

DetectionCategory category_from_string(std::string_view name) {
    for (auto category : kAllCategories) {
        if (to_string(category) == name) {
            return category;
        }
    }
    // MegaDetector files use the numeric id as a string.
    int id = 0;
    auto [ptr, ec] = std::from_chars(name.data(), name.data() + name.size(), id);
    if (ec == std::errc() && ptr == name.data() + name.size()) {
        return category_from_id(id);
    }
    throw Error(ErrorCode::InvalidArgument, fmt::format("unknown detection category '{}'", name));
}

DetectionCategory category_from_id(int id) {
    if (id < 1 || id > 3) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("unknown detection category id {}", id));
    }
    return static_cast<DetectionCategory>(id);
}

Detection::Detection(BBox bbox, DetectionCategory category, double confidence)
        : m_bbox(bbox), m_category(category), m_confidence(confidence) {
    if (!(confidence >= 0.0 && confidence <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument,
                    fmt::format("detection confidence {} outside [0,1]", confidence));
    }
}

ClassScores::ClassScores(std::vector<Entry> entries)
        : ClassScores(std::move(entries), kScoreSumTolerance) {}

ClassScores::ClassScores(std::vector<Entry> entries, double tolerance)
        : m_entries(std::move(entries)) {
    if (m_entries.empty()) {
        throw Error(ErrorCode::InvalidArgument, "class scores must not be empty");
    }
    double sum = 0.0;
    for (const auto& [label, p] : m_entries) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw Error(ErrorCode::InvalidArgument,
                        fmt::format("class probability {} for '{}' outside [0,1]", p, label));
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > tolerance) {
        throw Error(ErrorCode::InvalidArgument,
                    fmt::format("class probabilities sum to {} (tolerance {})", sum, tolerance));
    }
}

ClassScores ClassScores::from_rendered(std::vector<Entry> entries, int decimals) {
    const double half_unit = 0.5 * std::pow(10.0, -decimals);
    const double tolerance = half_unit * static_cast<double>(entries.size()) + kScoreSumTolerance;
    return ClassScores(std::move(entries), tolerance);
}

std::vector<std::string> ClassScores::labels() const {
    std::vector<std::string> out;
    out.reserve(m_entries.size());
    for (const auto& entry : m_entries) {
        out.push_back(entry.first);
    }
    return out;
}

std::optional<double> ClassScores::probability(std::string_view label) const {
    for (const auto& [name, p] : m_entries) {
        if (name == label) {
            return p;
        }
    }
    return std::nullopt;
}

TopClass ClassScores::top() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < m_entries.size(); ++i) {
        if (m_entries[i].second > m_entries[best].second) {
            best = i;
        }
    }
    return {m_entries[best].first, m_entries[best].second, best};
}

GeoPoint::GeoPoint(double latitude, double longitude)
        : m_latitude(latitude), m_longitude(longitude) {
    if (!(latitude >= -90.0 && latitude <= 90.0) || !(longitude >= -180.0 && longitude <= 180.0)) {
        throw Error(ErrorCode::InvalidArgument,
                    fmt::format("coordinates ({}, {}) out of range", latitude, longitude));
    }
}

namespace {

bool parse_fixed(std::string_view text, std::size_t pos, std::size_t len, int& out) {
    if (pos + len > text.size()) {
        return false;
    }
    auto first = text.data() + pos;
    auto [ptr, ec] = std::from_chars(first, first + len, out);
    return ec == std::errc() && ptr == first + len;
}

}  // namespace

Timestamp parse_timestamp(std::string_view text) {
    // 0123456789012345678
    // YYYY-MM-DDTHH:MM:SS
    int year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0;
    const bool date_ok = text.size() >= 10 && parse_fixed(text, 0, 4, year) &&
                         (text[4] == '-' || text[4] == ':') && parse_fixed(text, 5, 2, month) &&
                         text[7] == text[4] && parse_fixed(text, 8, 2, day);
    bool time_ok = true;
    if (date_ok && text.size() > 10) {
        time_ok = text.size() >= 19 && (text[10] == 'T' || text[10] == ' ') &&
                  parse_fixed(text, 11, 2, hour) && text[13] == ':' &&
                  parse_fixed(text, 14, 2, minute) && text[16] == ':' &&
                  parse_fixed(text, 17, 2, second) &&
                  (text.size() == 19 || (text.size() == 20 && text[19] == 'Z'));
    }
    using namespace std::chrono;
    const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                             std::chrono::day{static_cast<unsigned>(day)}};
    if (!date_ok || !time_ok || !ymd.ok() || hour > 23 || minute > 59 || second > 60) {
        throw Error(ErrorCode::ParseError, fmt::format("unparseable timestamp '{}'", text));
    }
    return sys_days{ymd} + hours{hour} + minutes{minute} + seconds{second};
}

std::string format_timestamp(Timestamp ts) {
    using namespace std::chrono;
    const auto day_point = floor<days>(ts);
    const year_month_day ymd{day_point};
    const hh_mm_ss hms{ts - day_point};
    return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}", static_cast<int>(ymd.year()),
                       static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                       hms.hours().count(), hms.minutes().count(), hms.seconds().count());
}

unsigned month_of(Timestamp ts) {
    using namespace std::chrono;
    return static_cast<unsigned>(year_month_day{floor<days>(ts)}.month());
}

}  // namespace trapkit
