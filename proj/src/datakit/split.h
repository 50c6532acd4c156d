#pragma once

#include "core/types.h"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace trapkit::datakit {

enum class SplitStrategy { random, location, time, season };

std::string_view to_string(SplitStrategy strategy);
SplitStrategy split_strategy_from_string(std::string_view name);

// Month (1-12) to season label. Defaults to meteorological quarters.
struct SeasonTable {
    std::array<std::string, 12> by_month{"DJF", "DJF", "MAM", "MAM", "MAM", "JJA",
                                         "JJA", "JJA", "SON", "SON", "SON", "DJF"};

    const std::string& season_of(Timestamp ts) const;
    // {"1": "wet", ..., "12": "dry"}; all twelve months required.
    static SeasonTable from_json(const nlohmann::json& doc);
};

struct SplitSpec {
    SplitStrategy strategy = SplitStrategy::random;
    std::vector<double> fractions{0.8, 0.2};  // train, val[, test]
    std::uint64_t seed = 0;
    SeasonTable seasons;

    // 2 or 3 fractions, each in (0, 1), summing to 1 within 1e-9.
    void validate() const;
};

inline constexpr double kFractionSumTolerance = 1e-9;

struct SplitAssignment {
    std::vector<std::string> names;   // "train", "val"[, "test"]
    std::vector<std::size_t> split_of;  // per input record

    std::vector<std::size_t> counts() const;
    std::vector<std::size_t> members(std::size_t split) const;
};

// Partitions `records`. random: seeded shuffle cut at round(n * cumulative fraction).
// time: stable order by capture_time, same cut. location/season: whole groups are
// placed largest first (seed-shuffled before a stable size sort) into the split
// furthest below its target count. Errors: MissingFieldError, SingleGroupError.
SplitAssignment split_dataset(const std::vector<ImageRef>& records, const SplitSpec& spec);

// Group key used by the location and season strategies.
std::string group_key(const ImageRef& record, const SplitSpec& spec);

nlohmann::ordered_json split_to_json(const std::vector<ImageRef>& records, const SplitAssignment& assignment,
                                     const SplitSpec& spec);

}  // namespace trapkit::datakit
