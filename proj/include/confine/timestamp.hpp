#pragma once

#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace confine {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

namespace detail {

inline bool read_digits(std::string_view s, std::size_t& pos, std::size_t count, int& out) {
    if (pos + count > s.size()) {
        return false;
    }
    int value = 0;
    for (std::size_t i = 0; i < count; ++i) {
        char c = s[pos + i];
        if (c < '0' || c > '9') {
            return false;
        }
        value = value * 10 + (c - '0');
    }
    out = value;
    pos += count;
    return true;
}

inline bool expect_char(std::string_view s, std::size_t& pos, char c) {
    if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
    }
    return false;
}

}  // namespace detail

/// Parses ISO-8601 date-times of the form YYYY-MM-DDTHH:MM[:SS[.fff...]][Z|+hh:mm|-hh:mm].
/// Times without an offset are taken as UTC. Sub-millisecond digits are truncated.
inline std::optional<Timestamp> parse_timestamp(std::string_view s) {
    using namespace std::chrono;
    std::size_t pos = 0;
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0, ms = 0;
    if (!detail::read_digits(s, pos, 4, y) || !detail::expect_char(s, pos, '-') ||
        !detail::read_digits(s, pos, 2, mo) || !detail::expect_char(s, pos, '-') ||
        !detail::read_digits(s, pos, 2, d)) {
        return std::nullopt;
    }
    if (pos >= s.size() || (s[pos] != 'T' && s[pos] != ' ')) {
        return std::nullopt;
    }
    ++pos;
    if (!detail::read_digits(s, pos, 2, h) || !detail::expect_char(s, pos, ':') ||
        !detail::read_digits(s, pos, 2, mi)) {
        return std::nullopt;
    }
    if (detail::expect_char(s, pos, ':')) {
        if (!detail::read_digits(s, pos, 2, sec)) {
            return std::nullopt;
        }
        if (detail::expect_char(s, pos, '.')) {
            int scale = 100;
            std::size_t digits = 0;
            while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
                if (digits < 3) {
                    ms += (s[pos] - '0') * scale;
                    scale /= 10;
                }
                ++digits;
                ++pos;
            }
            if (digits == 0) {
                return std::nullopt;
            }
        }
    }
    int offset_minutes = 0;
    if (pos < s.size()) {
        char c = s[pos];
        if (c == 'Z') {
            ++pos;
        } else if (c == '+' || c == '-') {
            ++pos;
            int oh = 0, om = 0;
            if (!detail::read_digits(s, pos, 2, oh)) {
                return std::nullopt;
            }
            detail::expect_char(s, pos, ':');
            if (!detail::read_digits(s, pos, 2, om)) {
                return std::nullopt;
            }
            offset_minutes = (oh * 60 + om) * (c == '-' ? -1 : 1);
        }
    }
    if (pos != s.size()) {
        return std::nullopt;
    }
    year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || sec > 60) {
        return std::nullopt;
    }
    auto tp = sys_days{ymd} + hours{h} + minutes{mi} + seconds{sec} + milliseconds{ms} -
              minutes{offset_minutes};
    return time_point_cast<milliseconds>(tp);
}

/// Canonical UTC rendering, always with milliseconds: 2022-07-14T10:36:00.000Z
inline std::string format_timestamp(Timestamp t) {
    using namespace std::chrono;
    auto day_point = floor<days>(t);
    year_month_day ymd{day_point};
    auto rem = t - day_point;
    auto h = duration_cast<hours>(rem);
    rem -= h;
    auto mi = duration_cast<minutes>(rem);
    rem -= mi;
    auto s = duration_cast<seconds>(rem);
    rem -= s;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d.%03dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(h.count()), static_cast<int>(mi.count()),
                  static_cast<int>(s.count()), static_cast<int>(rem.count()));
    return buf;
}

}  // namespace confine
