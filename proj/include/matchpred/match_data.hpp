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

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "matchpred/csv.hpp"
#include "matchpred/date.hpp"

namespace matchpred {

struct MatchRecord {
    std::string league;
    std::string season;
    Date date;
    std::string home_team;
    std::string away_team;
    int home_goals = 0;
    int away_goals = 0;

    friend bool record_less(const MatchRecord& a, const MatchRecord& b) {
        if (a.date.serial_day() != b.date.serial_day())
            return a.date.serial_day() < b.date.serial_day();
        if (a.league != b.league)
            return a.league < b.league;
        if (a.home_team != b.home_team)
            return a.home_team < b.home_team;
        if (a.away_team != b.away_team)
            return a.away_team < b.away_team;
        if (a.season != b.season)
            return a.season < b.season;
        if (a.home_goals != b.home_goals)
            return a.home_goals < b.home_goals;
        return a.away_goals < b.away_goals;
    }
    bool operator==(const MatchRecord& o) const {
        return league == o.league && season == o.season && date == o.date &&
               home_team == o.home_team && away_team == o.away_team &&
               home_goals == o.home_goals && away_goals == o.away_goals;
    }
};

/// Ordered outcome coding: home loss 0, draw 1, home win 2.
enum class Outcome : int { home_loss = 0, draw = 1, home_win = 2 };

inline Outcome outcome(const MatchRecord& m) {
    if (m.home_goals > m.away_goals)
        return Outcome::home_win;
    if (m.home_goals == m.away_goals)
        return Outcome::draw;
    return Outcome::home_loss;
}

/// One-hot (win, draw, loss) indicator for an outcome.
inline std::array<double, 3> outcome_onehot(Outcome o) {
    switch (o) {
        case Outcome::home_win: return {1.0, 0.0, 0.0};
        case Outcome::draw: return {0.0, 1.0, 0.0};
        default: return {0.0, 0.0, 1.0};
    }
}

/// Matches sorted ascending by date, ties broken by league then home team.
struct Dataset {
    std::vector<MatchRecord> records;

    void sort() {
        std::stable_sort(records.begin(), records.end(),
                         [](const MatchRecord& a, const MatchRecord& b) {
                             return record_less(a, b);
                         });
    }
    size_t size() const { return records.size(); }
};

struct ParseError : std::runtime_error {
    size_t row;         // 1-based data row index (header excluded)
    std::string column;
    ParseError(size_t r, std::string col, const std::string& what)
        : std::runtime_error("row " + std::to_string(r) + ", column '" + col + "': " + what),
          row(r),
          column(std::move(col)) {}
};

namespace detail {

inline const std::vector<std::string>& csv_header() {
    static const std::vector<std::string> h = {"league",    "season",     "date",
                                              "home_team", "away_team",  "home_goals",
                                              "away_goals"};
    return h;
}

inline int parse_goals(const std::string& cell, size_t row, const std::string& col) {
    if (cell.empty())
        throw ParseError(row, col, "empty goal count");
    size_t pos = 0;
    int v = 0;
    try {
        v = std::stoi(cell, &pos);
    } catch (const std::exception&) {
        throw ParseError(row, col, "not an integer: '" + cell + "'");
    }
    if (pos != cell.size() || v < 0)
        throw ParseError(row, col, "not a non-negative integer: '" + cell + "'");
    return v;
}

}  // namespace detail

/// Parses the season label into a calendar-year range, e.g. "2013-2014",
/// "2013/14", "13-14" or "2013". Returns nullopt when unrecognizable.
inline std::optional<std::pair<int, int>> parse_season_years(const std::string& label) {
    int a = 0, b = 0;
    char trail = 0;
    auto fix = [](int y) { return y < 100 ? (y >= 70 ? 1900 + y : 2000 + y) : y; };
    if (std::sscanf(label.c_str(), "%d-%d%c", &a, &b, &trail) == 2 ||
        std::sscanf(label.c_str(), "%d/%d%c", &a, &b, &trail) == 2) {
        a = fix(a);
        b = fix(b);
        if (b < a)
            return std::nullopt;
        return std::pair{a, b};
    }
    if (std::sscanf(label.c_str(), "%d%c", &a, &trail) == 1 && a > 0)
        return std::pair{fix(a), fix(a)};
    return std::nullopt;
}

struct AnomalyReport {
    /// Exact-duplicate groups: representative record and how many copies were seen.
    struct DuplicateGroup {
        MatchRecord record;
        size_t count = 0;
    };
    /// Matches whose date falls more than 12 months outside the season's year range.
    struct DateAnomaly {
        MatchRecord record;
        std::string reason;
    };
    std::vector<DuplicateGroup> duplicate_groups;
    std::vector<DateAnomaly> date_anomalies;

    bool empty() const { return duplicate_groups.empty() && date_anomalies.empty(); }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["duplicate_groups"] = nlohmann::json::array();
        for (const auto& g : duplicate_groups) {
            j["duplicate_groups"].push_back(
                {{"league", g.record.league},
                 {"season", g.record.season},
                 {"date", g.record.date.to_string()},
                 {"home_team", g.record.home_team},
                 {"away_team", g.record.away_team},
                 {"copies", g.count}});
        }
        j["date_anomalies"] = nlohmann::json::array();
        for (const auto& a : date_anomalies) {
            j["date_anomalies"].push_back({{"league", a.record.league},
                                           {"season", a.record.season},
                                           {"date", a.record.date.to_string()},
                                           {"home_team", a.record.home_team},
                                           {"away_team", a.record.away_team},
                                           {"reason", a.reason}});
        }
        return j;
    }
};

/// Loads a match CSV with header
/// league,season,date,home_team,away_team,home_goals,away_goals.
/// Returns all rows sorted ascending by date (league, home team tie-break).
inline Dataset load_csv(const std::string& path) {
    auto rows = csv::read_file(path);
    if (rows.empty())
        throw std::runtime_error(path + ": missing header row");
    const auto& header = detail::csv_header();
    std::vector<int> col(header.size(), -1);
    for (size_t k = 0; k < header.size(); ++k) {
        for (size_t c = 0; c < rows[0].size(); ++c)
            if (rows[0][c] == header[k])
                col[k] = int(c);
        if (col[k] < 0)
            throw std::runtime_error(path + ": header missing column '" + header[k] + "'");
    }
    Dataset out;
    for (size_t r = 1; r < rows.size(); ++r) {
        const auto& cells = rows[r];
        if (cells.size() < rows[0].size())
            throw ParseError(r, "*", "expected " + std::to_string(rows[0].size()) +
                                         " cells, got " + std::to_string(cells.size()));
        MatchRecord m;
        m.league = cells[col[0]];
        m.season = cells[col[1]];
        auto d = Date::parse(cells[col[2]]);
        if (!d)
            throw ParseError(r, "date", "unparseable date '" + cells[col[2]] + "'");
        m.date = *d;
        m.home_team = cells[col[3]];
        m.away_team = cells[col[4]];
        if (m.home_team == m.away_team)
            throw ParseError(r, "away_team", "home and away team are identical");
        m.home_goals = detail::parse_goals(cells[col[5]], r, "home_goals");
        m.away_goals = detail::parse_goals(cells[col[6]], r, "away_goals");
        out.records.push_back(std::move(m));
    }
    out.sort();
    return out;
}

inline void save_csv(const Dataset& d, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write file: " + path);
    out << "league,season,date,home_team,away_team,home_goals,away_goals\n";
    for (const auto& m : d.records) {
        out << csv::quote_if_needed(m.league) << ',' << csv::quote_if_needed(m.season) << ','
            << m.date.to_string() << ',' << csv::quote_if_needed(m.home_team) << ','
            << csv::quote_if_needed(m.away_team) << ',' << m.home_goals << ',' << m.away_goals
            << '\n';
    }
}

/// Collapses exact duplicates to a single instance and reports matches dated
/// more than 12 months outside their season's year range. Anomalies are
/// reported, never altered.
inline std::pair<Dataset, AnomalyReport> clean(const Dataset& d) {
    Dataset out;
    AnomalyReport report;
    std::map<std::tuple<std::string, std::string, long, std::string, std::string, int, int>,
             size_t>
        seen;
    for (const auto& m : d.records) {
        auto key = std::tuple(m.league, m.season, m.date.serial_day(), m.home_team,
                              m.away_team, m.home_goals, m.away_goals);
        auto [it, inserted] = seen.emplace(key, 1);
        if (inserted) {
            out.records.push_back(m);
        } else {
            ++it->second;
        }
    }
    for (const auto& m : out.records) {
        auto key = std::tuple(m.league, m.season, m.date.serial_day(), m.home_team,
                              m.away_team, m.home_goals, m.away_goals);
        if (seen[key] > 1)
            report.duplicate_groups.push_back({m, seen[key]});
    }
    for (const auto& m : out.records) {
        auto years = parse_season_years(m.season);
        if (!years)
            continue;
        Date lo(years->first, 1, 1);
        Date hi(years->second, 12, 31);
        if (m.date < lo.plus_days(-365) || m.date > hi.plus_days(365)) {
            report.date_anomalies.push_back(
                {m, "date " + m.date.to_string() + " more than 12 months outside season '" +
                        m.season + "'"});
        }
    }
    out.sort();
    return {out, report};
}

}  // namespace matchpred
