#include "relrec/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "relrec/binary_io.hpp"
#include "relrec/error.hpp"

namespace relrec {

namespace {

constexpr char kDatasetMagic[8] = {'R', 'L', 'R', 'D', 'S', 'E', 'T', '\0'};
constexpr std::uint32_t kDatasetVersion = 1;

std::vector<std::string_view> split_fields(std::string_view line, std::string_view delimiter) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(delimiter, start);
        if (pos == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + delimiter.size();
    }
    return fields;
}

template <typename T>
std::optional<T> parse_number(std::string_view text) {
    T value{};
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
        return std::nullopt;
    }
    return value;
}

// Days since 1970-01-01 for a proleptic Gregorian date (Hinnant's algorithm).
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) noexcept {
    y -= m <= 2 ? 1 : 0;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

std::optional<Interaction> parse_line(std::string_view line, const LogFormat& format) {
    const auto fields = split_fields(line, format.delimiter);
    const auto field = [&](int col) -> std::optional<std::string_view> {
        if (col < 0 || static_cast<std::size_t>(col) >= fields.size() || fields[col].empty()) {
            return std::nullopt;
        }
        return fields[col];
    };

    const auto user = field(format.user_col);
    const auto item = field(format.item_col);
    const auto ts_text = field(format.timestamp_col);
    if (!user || !item || !ts_text) {
        return std::nullopt;
    }

    std::optional<std::int64_t> ts;
    if (format.timestamp_format == TimestampFormat::epoch_seconds) {
        ts = parse_number<std::int64_t>(*ts_text);
    } else {
        ts = parse_utc_text(*ts_text);
    }
    if (!ts || *ts < 0) {
        return std::nullopt;
    }

    Interaction event;
    event.user_raw = std::string(*user);
    event.item_raw = std::string(*item);
    event.timestamp = *ts;
    if (format.rating_col >= 0) {
        const auto rating_text = field(format.rating_col);
        if (!rating_text) {
            return std::nullopt;
        }
        // Non-numeric values (e.g. venue category ids) are kept as absent.
        event.weight = parse_number<double>(*rating_text);
    }
    return event;
}

}  // namespace

LogFormat LogFormat::preset(std::string_view name) {
    LogFormat format;
    if (name == "ml-100k") {
        format.delimiter = "\t";
        format.user_col = 0;
        format.item_col = 1;
        format.rating_col = 2;
        format.timestamp_col = 3;
    } else if (name == "ml-1m") {
        format.delimiter = "::";
        format.user_col = 0;
        format.item_col = 1;
        format.rating_col = 2;
        format.timestamp_col = 3;
    } else if (name == "foursquare") {
        // userID venueID venueCategoryID venueCategory lat lon tzOffset utcTime
        format.delimiter = "\t";
        format.user_col = 0;
        format.item_col = 1;
        format.rating_col = -1;
        format.timestamp_col = 7;
        format.timestamp_format = TimestampFormat::utc_text;
    } else {
        throw Error(ErrorCode::invalid_argument, "unknown log format preset: " + std::string(name));
    }
    return format;
}

std::optional<std::int64_t> parse_utc_text(std::string_view text) {
    static constexpr std::array<std::string_view, 12> kMonths = {
        "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};

    const auto parts = split_fields(text, " ");
    if (parts.size() != 6) {
        return std::nullopt;
    }
    const auto month_it = std::find(kMonths.begin(), kMonths.end(), parts[1]);
    if (month_it == kMonths.end()) {
        return std::nullopt;
    }
    const auto month = static_cast<unsigned>(month_it - kMonths.begin() + 1);
    const auto day = parse_number<unsigned>(parts[2]);
    const auto year = parse_number<std::int64_t>(parts[5]);
    const auto hms = split_fields(parts[3], ":");
    if (!day || !year || hms.size() != 3 || *day < 1 || *day > 31) {
        return std::nullopt;
    }
    const auto h = parse_number<int>(hms[0]);
    const auto m = parse_number<int>(hms[1]);
    const auto s = parse_number<int>(hms[2]);
    const auto& offset = parts[4];
    if (!h || !m || !s || offset.size() != 5 || (offset[0] != '+' && offset[0] != '-')) {
        return std::nullopt;
    }
    const auto off_h = parse_number<int>(offset.substr(1, 2));
    const auto off_m = parse_number<int>(offset.substr(3, 2));
    if (!off_h || !off_m) {
        return std::nullopt;
    }
    const int sign = offset[0] == '-' ? -1 : 1;
    const std::int64_t local = days_from_civil(*year, month, *day) * 86400 + *h * 3600 + *m * 60 + *s;
    return local - sign * (*off_h * 3600 + *off_m * 60);
}

ParseResult parse_log(std::istream& in, const LogFormat& format) {
    if (format.delimiter.empty()) {
        throw Error(ErrorCode::invalid_argument, "log format delimiter is empty");
    }
    ParseResult result;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (static_cast<int>(line_no) <= format.skip_lines) {
            continue;
        }
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        auto event = parse_line(line, format);
        if (!event) {
            if (format.strict) {
                throw Error(ErrorCode::parse, "malformed line " + std::to_string(line_no));
            }
            ++result.malformed_lines;
            continue;
        }
        result.events.push_back(std::move(*event));
    }
    return result;
}

ParseResult parse_log(const std::filesystem::path& path, const LogFormat& format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open log file: " + path.string());
    }
    return parse_log(in, format);
}

const std::vector<ItemId>& Dataset::sequence(UserId user) const {
    if (user < 1 || static_cast<std::size_t>(user) > sequences.size()) {
        throw Error(ErrorCode::out_of_range, "user id out of range: " + std::to_string(user));
    }
    return sequences[static_cast<std::size_t>(user) - 1];
}

std::size_t Dataset::num_interactions() const noexcept {
    return std::accumulate(sequences.begin(), sequences.end(), std::size_t{0},
                           [](std::size_t acc, const auto& s) { return acc + s.size(); });
}

Dataset build_dataset(std::span<const Interaction> events, std::size_t min_count, std::string source) {
    if (min_count < 1) {
        throw Error(ErrorCode::invalid_argument, "min_count must be >= 1");
    }

    // Intern raw ids in first-appearance order.
    std::unordered_map<std::string_view, std::uint32_t> user_index;
    std::unordered_map<std::string_view, std::uint32_t> item_index;
    std::vector<std::string_view> users;
    std::vector<std::string_view> items;
    std::vector<std::uint32_t> event_user(events.size());
    std::vector<std::uint32_t> event_item(events.size());
    for (std::size_t e = 0; e < events.size(); ++e) {
        const auto& ev = events[e];
        auto [uit, unew] = user_index.try_emplace(ev.user_raw, static_cast<std::uint32_t>(users.size()));
        if (unew) {
            users.push_back(ev.user_raw);
        }
        auto [iit, inew] = item_index.try_emplace(ev.item_raw, static_cast<std::uint32_t>(items.size()));
        if (inew) {
            items.push_back(ev.item_raw);
        }
        event_user[e] = uit->second;
        event_item[e] = iit->second;
    }

    // Per-user event lists in input order, then stable sort by timestamp.
    std::vector<std::vector<std::uint32_t>> by_user(users.size());
    for (std::size_t e = 0; e < events.size(); ++e) {
        by_user[event_user[e]].push_back(static_cast<std::uint32_t>(e));
    }
    for (auto& list : by_user) {
        std::stable_sort(list.begin(), list.end(), [&](std::uint32_t a, std::uint32_t b) {
            return events[a].timestamp < events[b].timestamp;
        });
    }

    // Joint user/item filtering until nothing changes.
    std::vector<char> keep(events.size(), 1);
    std::vector<std::size_t> user_count(users.size());
    std::vector<std::size_t> item_count(items.size());
    bool changed = true;
    while (changed) {
        changed = false;
        std::fill(user_count.begin(), user_count.end(), 0);
        std::fill(item_count.begin(), item_count.end(), 0);
        for (std::size_t e = 0; e < events.size(); ++e) {
            if (keep[e]) {
                ++user_count[event_user[e]];
                ++item_count[event_item[e]];
            }
        }
        for (std::size_t e = 0; e < events.size(); ++e) {
            if (keep[e] && (user_count[event_user[e]] < min_count || item_count[event_item[e]] < min_count)) {
                keep[e] = 0;
                changed = true;
            }
        }
    }

    Dataset ds;
    ds.min_count = min_count;
    ds.source = std::move(source);
    std::vector<ItemId> item_dense(items.size(), kPaddingItem);
    for (std::size_t u = 0; u < users.size(); ++u) {
        std::vector<ItemId> seq;
        for (const auto e : by_user[u]) {
            if (!keep[e]) {
                continue;
            }
            auto& dense = item_dense[event_item[e]];
            if (dense == kPaddingItem) {
                ds.item_raw.emplace_back(items[event_item[e]]);
                dense = static_cast<ItemId>(ds.item_raw.size());
            }
            seq.push_back(dense);
        }
        if (!seq.empty()) {
            ds.user_raw.emplace_back(users[u]);
            ds.sequences.push_back(std::move(seq));
        }
    }
    ds.num_items = ds.item_raw.size();
    if (ds.sequences.empty()) {
        throw Error(ErrorCode::empty_dataset,
                    "empty dataset: all " + std::to_string(events.size()) +
                        " events filtered out at min_count=" + std::to_string(min_count));
    }
    ds.filtered_events = events.size() - ds.num_interactions();
    return ds;
}

std::vector<Interaction> to_interactions(const Dataset& dataset) {
    std::vector<Interaction> events;
    events.reserve(dataset.num_interactions());
    for (std::size_t u = 0; u < dataset.sequences.size(); ++u) {
        const auto& seq = dataset.sequences[u];
        for (std::size_t t = 0; t < seq.size(); ++t) {
            events.push_back({dataset.user_raw[u], dataset.item_raw[static_cast<std::size_t>(seq[t]) - 1],
                              static_cast<std::int64_t>(t), std::nullopt});
        }
    }
    return events;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::io, "cannot write dataset cache: " + path.string());
    }
    out.write(kDatasetMagic, sizeof(kDatasetMagic));
    bin::write_pod<std::uint32_t>(out, kDatasetVersion);
    bin::write_pod<std::uint64_t>(out, dataset.num_users());
    bin::write_pod<std::uint64_t>(out, dataset.num_items);
    bin::write_pod<std::uint64_t>(out, dataset.min_count);
    bin::write_pod<std::uint64_t>(out, dataset.filtered_events);
    bin::write_string(out, dataset.source);
    for (const auto& raw : dataset.user_raw) {
        bin::write_string(out, raw);
    }
    for (const auto& raw : dataset.item_raw) {
        bin::write_string(out, raw);
    }
    for (const auto& seq : dataset.sequences) {
        bin::write_varint(out, seq.size());
        ItemId prev = 0;
        for (const auto item : seq) {
            bin::write_varint(out, bin::zigzag(static_cast<std::int64_t>(item) - prev));
            prev = item;
        }
    }
    if (!out) {
        throw Error(ErrorCode::io, "failed writing dataset cache: " + path.string());
    }
}

bool is_dataset_cache(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    char magic[sizeof(kDatasetMagic)] = {};
    in.read(magic, sizeof(magic));
    return in && std::equal(std::begin(magic), std::end(magic), std::begin(kDatasetMagic));
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open dataset cache: " + path.string());
    }
    char magic[sizeof(kDatasetMagic)] = {};
    in.read(magic, sizeof(magic));
    if (!in || !std::equal(std::begin(magic), std::end(magic), std::begin(kDatasetMagic))) {
        throw Error(ErrorCode::parse, "not a dataset cache file: " + path.string());
    }
    const auto version = bin::read_pod<std::uint32_t>(in);
    if (version != kDatasetVersion) {
        throw Error(ErrorCode::parse, "unsupported dataset cache version " + std::to_string(version));
    }
    Dataset ds;
    const auto num_users = bin::read_pod<std::uint64_t>(in);
    ds.num_items = bin::read_pod<std::uint64_t>(in);
    ds.min_count = bin::read_pod<std::uint64_t>(in);
    ds.filtered_events = bin::read_pod<std::uint64_t>(in);
    ds.source = bin::read_string(in);
    ds.user_raw.reserve(num_users);
    for (std::uint64_t u = 0; u < num_users; ++u) {
        ds.user_raw.push_back(bin::read_string(in));
    }
    ds.item_raw.reserve(ds.num_items);
    for (std::uint64_t i = 0; i < ds.num_items; ++i) {
        ds.item_raw.push_back(bin::read_string(in));
    }
    ds.sequences.resize(num_users);
    for (auto& seq : ds.sequences) {
        const auto length = bin::read_varint(in);
        seq.reserve(length);
        std::int64_t prev = 0;
        for (std::uint64_t t = 0; t < length; ++t) {
            prev += bin::unzigzag(bin::read_varint(in));
            if (prev < 1 || static_cast<std::uint64_t>(prev) > ds.num_items) {
                throw Error(ErrorCode::parse, "item id out of range in dataset cache");
            }
            seq.push_back(static_cast<ItemId>(prev));
        }
    }
    return ds;
}

Dataset load_any(const std::filesystem::path& path, const LogFormat& format, std::size_t min_count) {
    if (is_dataset_cache(path)) {
        return load_dataset(path);
    }
    const auto parsed = parse_log(path, format);
    return build_dataset(parsed.events, min_count, path.filename().string());
}

}  // namespace relrec
