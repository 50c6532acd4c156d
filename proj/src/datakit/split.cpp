#include "datakit/split.h"

#include "core/error.h"
#include "core/rng.h"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace trapkit::datakit {

namespace {

const std::array<std::string, 3> kSplitNames{"train", "val", "test"};

// Record count at the end of each split for a cut of n ordered records.
std::vector<std::size_t> cut_points(std::size_t n, const std::vector<double>& fractions) {
    std::vector<std::size_t> cuts;
    double cumulative = 0.0;
    for (std::size_t i = 0; i + 1 < fractions.size(); ++i) {
        cumulative += fractions[i];
        cuts.push_back(std::min(n, static_cast<std::size_t>(std::llround(cumulative * static_cast<double>(n)))));
    }
    cuts.push_back(n);
    return cuts;
}

void assign_ordered(const std::vector<std::size_t>& order, const std::vector<double>& fractions,
                    SplitAssignment& out) {
    const auto cuts = cut_points(order.size(), fractions);
    std::size_t split = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        while (k >= cuts[split]) {
            ++split;
        }
        out.split_of[order[k]] = split;
    }
}

void require_field(const std::vector<ImageRef>& records, bool (*has)(const ImageRef&), const char* field) {
    std::vector<std::string> missing;
    for (const auto& r : records) {
        if (!has(r)) {
            missing.push_back(r.path);
        }
    }
    if (!missing.empty()) {
        const std::size_t shown = std::min<std::size_t>(missing.size(), 20);
        std::string list = fmt::format("{}", fmt::join(missing.begin(), missing.begin() + static_cast<long>(shown), ", "));
        if (shown < missing.size()) {
            list += fmt::format(", ... ({} more)", missing.size() - shown);
        }
        throw Error(ErrorCode::MissingFieldError,
                    fmt::format("{} record(s) lack {}: {}", missing.size(), field, list));
    }
}

void assign_groups(const std::vector<ImageRef>& records, const SplitSpec& spec, SplitAssignment& out) {
    std::map<std::string, std::vector<std::size_t>> by_key;
    for (std::size_t i = 0; i < records.size(); ++i) {
        by_key[group_key(records[i], spec)].push_back(i);
    }
    std::vector<const std::vector<std::size_t>*> groups;
    for (const auto& [key, members] : by_key) {
        groups.push_back(&members);
    }
    if (groups.size() < 2) {
        throw Error(ErrorCode::SingleGroupError,
                    fmt::format("{} split needs at least 2 groups, found {}", to_string(spec.strategy), groups.size()));
    }
    Rng rng(spec.seed);
    rng.shuffle(groups);
    std::stable_sort(groups.begin(), groups.end(), [](auto* a, auto* b) { return a->size() > b->size(); });

    const std::size_t k = spec.fractions.size();
    std::vector<double> deficit(k);
    for (std::size_t s = 0; s < k; ++s) {
        deficit[s] = spec.fractions[s] * static_cast<double>(records.size());
    }
    std::vector<bool> used(k, false);
    auto best_of = [&](bool empty_only) {
        std::size_t best = k;
        for (std::size_t s = 0; s < k; ++s) {
            if ((!empty_only || !used[s]) && (best == k || deficit[s] > deficit[best])) {
                best = s;
            }
        }
        return best;
    };
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const std::size_t remaining = groups.size() - g;
        const std::size_t empty = static_cast<std::size_t>(std::count(used.begin(), used.end(), false));
        // Keep enough groups back so that every split can still receive one.
        const std::size_t s = remaining <= empty ? best_of(true) : best_of(false);
        for (std::size_t i : *groups[g]) {
            out.split_of[i] = s;
        }
        deficit[s] -= static_cast<double>(groups[g]->size());
        used[s] = true;
    }
}

}  // namespace

std::string_view to_string(SplitStrategy strategy) {
    switch (strategy) {
    case SplitStrategy::random: return "random";
    case SplitStrategy::location: return "location";
    case SplitStrategy::time: return "time";
    case SplitStrategy::season: return "season";
    }
    return "unknown";
}

SplitStrategy split_strategy_from_string(std::string_view name) {
    for (auto s : {SplitStrategy::random, SplitStrategy::location, SplitStrategy::time, SplitStrategy::season}) {
        if (to_string(s) == name) {
            return s;
        }
    }
    throw Error(ErrorCode::InvalidArgument, fmt::format("unknown split strategy '{}'", name));
}

const std::string& SeasonTable::season_of(Timestamp ts) const {
    return by_month[month_of(ts) - 1];
}

SeasonTable SeasonTable::from_json(const nlohmann::json& doc) {
    SeasonTable table;
    try {
        for (int m = 1; m <= 12; ++m) {
            table.by_month[m - 1] = doc.at(std::to_string(m)).get<std::string>();
            if (table.by_month[m - 1].empty()) {
                throw Error(ErrorCode::InvalidArgument, fmt::format("empty season for month {}", m));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, fmt::format("season table needs months 1-12: {}", e.what()));
    }
    return table;
}

void SplitSpec::validate() const {
    if (fractions.size() != 2 && fractions.size() != 3) {
        throw Error(ErrorCode::InvalidArgument, "a split needs 2 or 3 fractions");
    }
    double sum = 0.0;
    for (double f : fractions) {
        if (!(f > 0.0 && f < 1.0)) {
            throw Error(ErrorCode::InvalidArgument, fmt::format("split fraction {} is outside (0, 1)", f));
        }
        sum += f;
    }
    if (std::abs(sum - 1.0) > kFractionSumTolerance) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("split fractions sum to {}, not 1", sum));
    }
}

std::vector<std::size_t> SplitAssignment::counts() const {
    std::vector<std::size_t> c(names.size(), 0);
    for (std::size_t s : split_of) {
        ++c[s];
    }
    return c;
}

std::vector<std::size_t> SplitAssignment::members(std::size_t split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split_of.size(); ++i) {
        if (split_of[i] == split) {
            out.push_back(i);
        }
    }
    return out;
}

std::string group_key(const ImageRef& record, const SplitSpec& spec) {
    switch (spec.strategy) {
    case SplitStrategy::location:
        if (!record.location_id) {
            throw Error(ErrorCode::MissingFieldError, fmt::format("'{}' has no location_id", record.path));
        }
        return *record.location_id;
    case SplitStrategy::season:
        if (!record.capture_time) {
            throw Error(ErrorCode::MissingFieldError, fmt::format("'{}' has no capture_time", record.path));
        }
        return spec.seasons.season_of(*record.capture_time);
    default:
        throw Error(ErrorCode::InvalidArgument,
                    fmt::format("{} split has no group key", to_string(spec.strategy)));
    }
}

SplitAssignment split_dataset(const std::vector<ImageRef>& records, const SplitSpec& spec) {
    spec.validate();
    if (records.empty()) {
        throw Error(ErrorCode::EmptyDataset, "nothing to split");
    }
    SplitAssignment out;
    out.names.assign(kSplitNames.begin(), kSplitNames.begin() + static_cast<long>(spec.fractions.size()));
    out.split_of.assign(records.size(), 0);

    switch (spec.strategy) {
    case SplitStrategy::random: {
        std::vector<std::size_t> order(records.size());
        std::iota(order.begin(), order.end(), 0);
        Rng rng(spec.seed);
        rng.shuffle(order);
        assign_ordered(order, spec.fractions, out);
        break;
    }
    case SplitStrategy::time: {
        require_field(records, [](const ImageRef& r) { return r.capture_time.has_value(); }, "capture_time");
        std::vector<std::size_t> order(records.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return *records[a].capture_time < *records[b].capture_time; });
        assign_ordered(order, spec.fractions, out);
        break;
    }
    case SplitStrategy::location:
        require_field(records, [](const ImageRef& r) { return r.location_id.has_value(); }, "location_id");
        assign_groups(records, spec, out);
        break;
    case SplitStrategy::season:
        require_field(records, [](const ImageRef& r) { return r.capture_time.has_value(); }, "capture_time");
        assign_groups(records, spec, out);
        break;
    }
    return out;
}

nlohmann::ordered_json split_to_json(const std::vector<ImageRef>& records, const SplitAssignment& assignment,
                                     const SplitSpec& spec) {
    nlohmann::ordered_json doc;
    doc["strategy"] = to_string(spec.strategy);
    doc["fractions"] = spec.fractions;
    doc["seed"] = spec.seed;
    nlohmann::ordered_json splits = nlohmann::ordered_json::object();
    for (std::size_t s = 0; s < assignment.names.size(); ++s) {
        auto& list = splits[assignment.names[s]] = nlohmann::ordered_json::array();
        for (std::size_t i : assignment.members(s)) {
            list.push_back(records[i].path);
        }
    }
    doc["splits"] = std::move(splits);
    return doc;
}

}  // namespace trapkit::datakit
