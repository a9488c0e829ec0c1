// Copyright (C) 2026 The matchpred authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <chrono>
#include <compare>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>

namespace matchpred {

/// Calendar date (no time component). Day arithmetic uses whole days.
class Date {
  public:
    Date() = default;
    Date(int year, unsigned month, unsigned day)
        : ymd_(std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}) {
        if (!ymd_.ok())
            throw std::invalid_argument("invalid calendar date: " + to_string());
    }

    /// Parses strict ISO-8601 YYYY-MM-DD.
    static std::optional<Date> parse(const std::string& s) {
        int y = 0;
        unsigned m = 0, d = 0;
        char trail = 0;
        if (std::sscanf(s.c_str(), "%d-%u-%u%c", &y, &m, &d, &trail) != 3)
            return std::nullopt;
        std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                        std::chrono::day{d}};
        if (!ymd.ok())
            return std::nullopt;
        Date out;
        out.ymd_ = ymd;
        return out;
    }

    int year() const { return int(ymd_.year()); }
    unsigned month() const { return unsigned(ymd_.month()); }
    unsigned day() const { return unsigned(ymd_.day()); }

    /// Calendar-year quarter 1..4.
    int quarter() const { return int((month() - 1) / 3 + 1); }

    long serial_day() const {
        return std::chrono::sys_days{ymd_}.time_since_epoch().count();
    }

    Date plus_days(long n) const {
        Date out;
        out.ymd_ = std::chrono::year_month_day{
            std::chrono::sys_days{ymd_} + std::chrono::days{n}};
        return out;
    }

    /// Whole days from `other` to this date.
    long days_since(const Date& other) const { return serial_day() - other.serial_day(); }

    std::string to_string() const {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", year(), month(), day());
        return buf;
    }

    friend auto operator<=>(const Date& a, const Date& b) {
        return a.serial_day() <=> b.serial_day();
    }
    friend bool operator==(const Date& a, const Date& b) {
        return a.serial_day() == b.serial_day();
    }

  private:
    std::chrono::year_month_day ymd_{std::chrono::year{1970}, std::chrono::month{1},
                                     std::chrono::day{1}};
};

inline const char* month_name(unsigned m) {
    static const char* names[] = {"January", "February", "March",     "April",   "May",
                                  "June",    "July",     "August",    "September",
                                  "October", "November", "December"};
    return names[(m - 1) % 12];
}

}  // namespace matchpred
