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

#include <cstdint>
#include <deque>
#include <limits>
#include <string_view>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "matchpred/match_data.hpp"

namespace matchpred {

struct FeatureConfig {
    int default_gap_days = 30;  // days-since-previous for a first-ever match
    int rank_window = 400;      // per-league match window for the least-squares rating
    bool rank_home_offset = true;
    int promoted_prev_points = 15;
    int promoted_prev_goal_diff = -35;
    int relegated_prev_points = 65;
    int relegated_prev_goal_diff = 35;
};

/// Per-team per-match values of features 1-16. Numeric features are
/// addressable by their table number via value().
struct FeatureVector {
    double home = 0;              // 1
    double newly_promoted = 0;    // 2
    double days_since_prev = 0;   // 3
    double form = 0;              // 4
    double matches_played = 0;    // 5
    double points_tally = 0;      // 6
    double goal_diff = 0;         // 7
    double goals_scored_pm = 0;   // 8
    double goals_conceded_pm = 0; // 9
    double points_pm = 0;         // 10
    double prev_points = 0;       // 11
    double prev_goal_diff = 0;    // 12
    double ls_rank = 0;           // 13
    std::string season;           // 14
    std::string season_window;    // 15
    int quarter = 1;              // 16

    double value(int feature_id) const {
        switch (feature_id) {
            case 1: return home;
            case 2: return newly_promoted;
            case 3: return days_since_prev;
            case 4: return form;
            case 5: return matches_played;
            case 6: return points_tally;
            case 7: return goal_diff;
            case 8: return goals_scored_pm;
            case 9: return goals_conceded_pm;
            case 10: return points_pm;
            case 11: return prev_points;
            case 12: return prev_goal_diff;
            case 13: return ls_rank;
            default: throw std::out_of_range("no numeric feature " + std::to_string(feature_id));
        }
    }
};

struct MatchFeatures {
    FeatureVector home;
    FeatureVector away;
};

/// Feature vectors aligned with the records of the dataset they came from.
using FeatureTable = std::vector<MatchFeatures>;

inline const std::vector<std::string>& feature_column_names() {
    static const std::vector<std::string> names = {
        "home",
        "newly_promoted",
        "days_since_previous_match",
        "form",
        "matches_played",
        "points_tally",
        "goal_difference",
        "goals_scored_per_match",
        "goals_conceded_per_match",
        "points_per_match",
        "previous_season_points_tally",
        "previous_season_goal_difference",
        "team_rankings",
        "season",
        "season_window",
        "quarter"};
    return names;
}

/// Centered least-squares rating fitted over a window of matches.
struct RatingVector {
    std::map<std::string, double> rating;  // sums to zero over teams in the window
    double home_offset = 0.0;

    double at(const std::string& team) const {
        auto it = rating.find(team);
        return it == rating.end() ? 0.0 : it->second;
    }
};

/// Fits ratings r minimizing sum((r_home - r_away + h - s)^2) over the window,
/// s = +1/0/-1 for home win/draw/loss, with ridge 1e-8 on the ratings and a
/// home offset h when flagged. Ratings are centered to sum to zero.
inline RatingVector ls_rank(std::span<const MatchRecord> window, bool home_adv) {
    if (window.empty())
        throw std::invalid_argument("ls_rank: empty window");
    std::map<std::string, int> index;
    for (const auto& m : window) {
        index.emplace(m.home_team, 0);
        index.emplace(m.away_team, 0);
    }
    int t = 0;
    for (auto& [_, idx] : index)
        idx = t++;
    const int n = t + (home_adv ? 1 : 0);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    for (const auto& m : window) {
        int i = index[m.home_team], j = index[m.away_team];
        double s = m.home_goals > m.away_goals ? 1.0 : (m.home_goals < m.away_goals ? -1.0 : 0.0);
        Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
        w[i] = 1.0;
        w[j] = -1.0;
        if (home_adv)
            w[t] = 1.0;
        A += w * w.transpose();
        b += s * w;
    }
    for (int k = 0; k < t; ++k)
        A(k, k) += 1e-8;  // ridge on ratings only; the offset stays free
    if (home_adv)
        A(t, t) += 1e-12;
    Eigen::VectorXd r = A.ldlt().solve(b);
    double mean = r.head(t).mean();
    RatingVector out;
    for (const auto& [team, idx] : index)
        out.rating[team] = r[idx] - mean;
    if (home_adv)
        out.home_offset = r[t];
    return out;
}

namespace detail {

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 14695981039346656037ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline uint64_t mix64(uint64_t x) {
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdull;
    x ^= x >> 33;
    x *= 0xc4ceb9fe1a85ec53ull;
    x ^= x >> 33;
    return x;
}

/// Deterministic Uniform(0,1] draw keyed by (seed, league, team, season).
inline double seeded_uniform(uint64_t seed, const std::string& league,
                             const std::string& team, const std::string& season) {
    uint64_t h = fnv1a64(league, seed ^ 14695981039346656037ull);
    h = fnv1a64("|", h);
    h = fnv1a64(team, h);
    h = fnv1a64("|", h);
    h = fnv1a64(season, h);
    double u = double(mix64(h) >> 11) * (1.0 / 9007199254740992.0);
    return u > 0.0 ? u : 1e-12;
}

struct TeamSeasonState {
    std::string current_season;
    int matches_played = 0;
    int points_tally = 0;
    int goals_for = 0;
    int goals_against = 0;
    std::deque<int> last3_points;
    std::optional<Date> last_match_date;  // persists across seasons
    int prev_season_points = 0;
    int prev_season_goal_diff = 0;
    bool newly_promoted = false;
    double form_first_draw = 0.0;

    int goal_diff() const { return goals_for - goals_against; }

    double form() const {
        if (matches_played == 0)
            return form_first_draw;
        if (matches_played == 1)
            return points_tally / 3.0;
        if (matches_played == 2)
            return points_tally / 6.0;
        int sum = 0;
        for (int p : last3_points)
            sum += p;
        return sum / 9.0;
    }

    void record(int gf, int ga, const Date& date) {
        int pts = gf > ga ? 3 : (gf == ga ? 1 : 0);
        ++matches_played;
        points_tally += pts;
        goals_for += gf;
        goals_against += ga;
        last3_points.push_back(pts);
        if (last3_points.size() > 3)
            last3_points.pop_front();
        last_match_date = date;
    }
};

struct LeagueState {
    std::vector<std::string> season_order;             // by first appearance
    std::map<std::string, int> season_index;
    // season -> team -> (points, goal diff) accumulated so far
    std::map<std::string, std::map<std::string, std::pair<int, int>>> history;
    std::map<std::string, TeamSeasonState> team;       // keyed by team id
    std::vector<MatchRecord> past;                     // chronological, for ratings
    // season -> (first month, latest month, latest date) for the window label
    struct SeasonSpan {
        unsigned first_month = 1;
        unsigned last_month = 1;
        bool started = false;
    };
    std::map<std::string, SeasonSpan> season_span;
    RatingVector rating_cache;
    long rating_cache_day = std::numeric_limits<long>::min();
};

}  // namespace detail

/// Computes per-match (home, away) feature vectors in one chronological pass.
/// Each match's features use strictly earlier matches only; the match itself
/// is folded into the running state after its features are emitted.
inline FeatureTable extract(const Dataset& d, const FeatureConfig& cfg, uint64_t rng_seed) {
    FeatureTable out;
    out.reserve(d.size());
    std::map<std::string, detail::LeagueState> leagues;
    std::set<std::string> ever_seen;  // team ids seen in any league so far

    for (const auto& m : d.records) {
        auto& L = leagues[m.league];

        if (!L.season_index.count(m.season)) {
            L.season_index[m.season] = int(L.season_order.size());
            L.season_order.push_back(m.season);
        }

        // refresh the league rating once per (league, date)
        if (m.date.serial_day() != L.rating_cache_day) {
            size_t n = L.past.size();
            size_t take = std::min<size_t>(n, size_t(cfg.rank_window));
            if (take > 0) {
                L.rating_cache = ls_rank(
                    std::span<const MatchRecord>(L.past.data() + (n - take), take),
                    cfg.rank_home_offset);
            } else {
                L.rating_cache = RatingVector{};
            }
            L.rating_cache_day = m.date.serial_day();
        }

        auto start_season_if_needed = [&](const std::string& team) {
            auto& st = L.team[team];
            if (st.current_season == m.season)
                return;
            int sidx = L.season_index[m.season];
            st.current_season = m.season;
            st.matches_played = 0;
            st.points_tally = 0;
            st.goals_for = 0;
            st.goals_against = 0;
            st.last3_points.clear();
            st.newly_promoted = false;
            bool carried = false;
            if (sidx > 0) {
                const std::string& prev = L.season_order[sidx - 1];
                auto hit = L.history.find(prev);
                if (hit != L.history.end()) {
                    auto tit = hit->second.find(team);
                    if (tit != hit->second.end()) {
                        st.prev_season_points = tit->second.first;
                        st.prev_season_goal_diff = tit->second.second;
                        carried = true;
                    }
                }
            }
            if (!carried) {
                if (ever_seen.count(team)) {
                    // seen before but not in this league's previous season
                    st.prev_season_points = cfg.relegated_prev_points;
                    st.prev_season_goal_diff = cfg.relegated_prev_goal_diff;
                } else {
                    st.newly_promoted = true;
                    st.prev_season_points = cfg.promoted_prev_points;
                    st.prev_season_goal_diff = cfg.promoted_prev_goal_diff;
                }
            }
            st.form_first_draw =
                detail::seeded_uniform(rng_seed, m.league, team, m.season);
        };
        start_season_if_needed(m.home_team);
        start_season_if_needed(m.away_team);

        auto& span = L.season_span[m.season];
        if (!span.started) {
            span.first_month = m.date.month();
            span.started = true;
        }
        span.last_month = m.date.month();
        std::string window_label = std::string(month_name(span.first_month)) + "-" +
                                   std::string(month_name(span.last_month));

        auto fill = [&](const std::string& team, bool is_home) {
            const auto& st = L.team[team];
            FeatureVector f;
            f.home = is_home ? 1.0 : 0.0;
            f.newly_promoted = st.newly_promoted ? 1.0 : 0.0;
            f.days_since_prev = st.last_match_date
                                    ? double(m.date.days_since(*st.last_match_date))
                                    : double(cfg.default_gap_days);
            f.form = st.form();
            f.matches_played = st.matches_played;
            f.points_tally = st.points_tally;
            f.goal_diff = st.goal_diff();
            f.goals_scored_pm =
                st.matches_played ? double(st.goals_for) / st.matches_played : 0.0;
            f.goals_conceded_pm =
                st.matches_played ? double(st.goals_against) / st.matches_played : 0.0;
            f.points_pm = st.matches_played ? double(st.points_tally) / st.matches_played : 0.0;
            f.prev_points = st.prev_season_points;
            f.prev_goal_diff = st.prev_season_goal_diff;
            f.ls_rank = L.rating_cache.at(team);
            f.season = m.season;
            f.season_window = window_label;
            f.quarter = m.date.quarter();
            return f;
        };
        MatchFeatures mf;
        mf.home = fill(m.home_team, true);
        mf.away = fill(m.away_team, false);
        out.push_back(std::move(mf));

        // fold the match into the state
        L.team[m.home_team].record(m.home_goals, m.away_goals, m.date);
        L.team[m.away_team].record(m.away_goals, m.home_goals, m.date);
        auto& hist = L.history[m.season];
        hist[m.home_team] = {L.team[m.home_team].points_tally,
                             L.team[m.home_team].goal_diff()};
        hist[m.away_team] = {L.team[m.away_team].points_tally,
                             L.team[m.away_team].goal_diff()};
        L.past.push_back(m);
        ever_seen.insert(m.home_team);
        ever_seen.insert(m.away_team);
    }
    return out;
}

/// Writes the feature matrix as CSV, one row per (match, side).
inline void save_feature_csv(const Dataset& d, const FeatureTable& ft,
                             const std::string& path) {
    if (d.size() != ft.size())
        throw std::invalid_argument("dataset / feature table size mismatch");
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write file: " + path);
    out << "match_index,side";
    for (const auto& name : feature_column_names())
        out << ',' << name;
    out << '\n';
    auto emit = [&](size_t g, const char* side, const FeatureVector& f) {
        out << g << ',' << side;
        for (int id = 1; id <= 13; ++id)
            out << ',' << f.value(id);
        out << ',' << csv::quote_if_needed(f.season) << ','
            << csv::quote_if_needed(f.season_window) << ',' << f.quarter << '\n';
    };
    for (size_t g = 0; g < ft.size(); ++g) {
        emit(g, "home", ft[g].home);
        emit(g, "away", ft[g].away);
    }
}

}  // namespace matchpred
