#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace relrec {

using ItemId = std::int32_t;
using UserId = std::int32_t;

// Item id 0 is reserved for left padding of model contexts.
inline constexpr ItemId kPaddingItem = 0;

struct Interaction {
    std::string user_raw;
    std::string item_raw;
    std::int64_t timestamp = 0;
    std::optional<double> weight;  // rating/category value; not used for training
};

enum class TimestampFormat {
    epoch_seconds,
    // "Tue Apr 03 18:00:09 +0000 2012", as in the Foursquare TSMC2014 dumps.
    utc_text,
};

// Column map for one delimited log layout. Column indices are zero-based.
struct LogFormat {
    std::string delimiter = "\t";
    int user_col = 0;
    int item_col = 1;
    int timestamp_col = 3;
    int rating_col = -1;
    TimestampFormat timestamp_format = TimestampFormat::epoch_seconds;
    int skip_lines = 0;
    bool strict = false;

    // Known layouts: "ml-100k", "ml-1m", "foursquare".
    static LogFormat preset(std::string_view name);
};

struct ParseResult {
    std::vector<Interaction> events;
    std::size_t malformed_lines = 0;
};

ParseResult parse_log(const std::filesystem::path& path, const LogFormat& format);
ParseResult parse_log(std::istream& in, const LogFormat& format);

// Seconds since the epoch for "Www Mmm dd hh:mm:ss +hhmm yyyy".
std::optional<std::int64_t> parse_utc_text(std::string_view text);

struct Dataset {
    // sequences[u - 1] holds user u's items in temporal order.
    std::vector<std::vector<ItemId>> sequences;
    std::size_t num_items = 0;
    // user_raw[u - 1], item_raw[i - 1] map dense ids back to the log ids.
    std::vector<std::string> user_raw;
    std::vector<std::string> item_raw;
    std::size_t min_count = 1;
    std::size_t filtered_events = 0;
    std::string source;

    std::size_t num_users() const noexcept { return sequences.size(); }
    const std::vector<ItemId>& sequence(UserId user) const;
    std::size_t num_interactions() const noexcept;

    bool operator==(const Dataset&) const = default;
};

// Sort per user by timestamp (stable w.r.t. input order), drop users and
// items with fewer than min_count events until a fixed point, then assign
// dense ids: users by first appearance in the input, items by first
// appearance when walking users in id order along their sequences.
Dataset build_dataset(std::span<const Interaction> events, std::size_t min_count,
                      std::string source = {});

// Re-serializes a dataset into events (timestamps become sequence positions).
std::vector<Interaction> to_interactions(const Dataset& dataset);

// Cached dataset files; layout documented in docs/formats.md.
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);
bool is_dataset_cache(const std::filesystem::path& path);

// Loads either a cache file or a raw log (parsed with `format`, then built).
Dataset load_any(const std::filesystem::path& path, const LogFormat& format,
                 std::size_t min_count);

}  // namespace relrec
