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
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "matchpred/csv.hpp"
#include "matchpred/date.hpp"
#include "matchpred/match_data.hpp"
#include "matchpred/optim.hpp"

namespace matchpred::validate {

/// Rolling temporal validation: train strictly before a cutoff, score a short
/// window after it, jackknife each window, pool windows by random-effects
/// meta-analysis.

namespace detail {

inline void check_probs(const std::array<double, 3>& p, const std::array<double, 3>& a) {
    double s = 0;
    for (double v : p) {
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("probability components must lie in [0,1]");
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-9)
        throw std::invalid_argument("probabilities must sum to 1");
    int ones = 0;
    for (double v : a) {
        if (v != 0.0 && v != 1.0)
            throw std::invalid_argument("outcome vector must be one-hot");
        ones += v == 1.0;
    }
    if (ones != 1)
        throw std::invalid_argument("outcome vector must be one-hot");
}

}  // namespace detail

/// Ranked probability score over the ordered categories (win, draw, loss):
/// mean squared difference of the first r-1 cumulative sums. In [0, 1].
inline double rps(const std::array<double, 3>& p, const std::array<double, 3>& a) {
    detail::check_probs(p, a);
    double cp = 0, ca = 0, out = 0;
    for (int i = 0; i < 2; ++i) {
        cp += p[i];
        ca += a[i];
        out += (cp - ca) * (cp - ca);
    }
    return out / 2.0;
}

/// 1 iff the modal predicted category occurred; argmax ties break in the
/// fixed order win > draw > loss.
inline int accuracy(const std::array<double, 3>& p, const std::array<double, 3>& a) {
    detail::check_probs(p, a);
    int best = 0;
    for (int i = 1; i < 3; ++i)
        if (p[i] > p[best])
            best = i;
    return a[best] == 1.0 ? 1 : 0;
}

/// Leave-one-match-out jackknife variance of the mean of v:
/// (n/(n-1)) * sum_g (mean of v without g - mean of v)^2. Needs n >= 2.
inline double jackknife_var(const std::vector<double>& v) {
    size_t n = v.size();
    if (n < 2)
        throw std::invalid_argument("jackknife needs at least two values");
    double total = 0;
    for (double x : v)
        total += x;
    double mean = total / double(n);
    double acc = 0;
    for (double x : v) {
        double loo = (total - x) / double(n - 1);
        acc += (loo - mean) * (loo - mean);
    }
    return double(n) / double(n - 1) * acc;
}

struct ExperimentPlan {
    std::vector<Date> cutoffs;
    int horizon = 10;  // days

    void validate() const {
        if (horizon < 1)
            throw std::invalid_argument("horizon must be at least one day");
        for (size_t i = 1; i < cutoffs.size(); ++i)
            if (!(cutoffs[i - 1].serial_day() < cutoffs[i].serial_day()))
                throw std::invalid_argument("cutoffs must be strictly increasing");
    }

    /// 1st April of every calendar year spanned by the data, optionally with
    /// the extra mid-March 2017 cutoff.
    static ExperimentPlan yearly(const Dataset& data, int horizon = 10,
                                 bool special_2017 = false) {
        ExperimentPlan plan;
        plan.horizon = horizon;
        std::set<int> years;
        for (const auto& m : data.records)
            years.insert(m.date.year());
        for (int y : years)
            plan.cutoffs.emplace_back(y, 4, 1);
        if (special_2017 && years.count(2017))
            plan.cutoffs.emplace_back(2017, 3, 14);
        std::sort(plan.cutoffs.begin(), plan.cutoffs.end(),
                  [](const Date& a, const Date& b) { return a.serial_day() < b.serial_day(); });
        plan.validate();
        return plan;
    }
};

struct MatchPrediction {
    size_t index = 0;  // position in the full dataset
    std::array<double, 3> probs = {0, 0, 0};
    Outcome observed = Outcome::draw;
    double rps = 0;
    int correct = 0;
    bool flagged = false;
};

struct ExperimentSummary {
    Date cutoff;
    int n_B = 0;
    bool usable = false;
    std::string skip_reason;
    double s_rps = 0, var_rps = 0;
    double s_acc = 0, var_acc = 0;
    std::vector<MatchPrediction> predictions;
};

/// Indices of the training set A (dates <= cutoff) and the prediction set B
/// (cutoff < date <= cutoff + horizon).
inline std::pair<std::vector<size_t>, std::vector<size_t>> split_at(const Dataset& data,
                                                                    Date cutoff, int horizon) {
    std::vector<size_t> A, B;
    long c = cutoff.serial_day();
    for (size_t g = 0; g < data.size(); ++g) {
        long d = data.records[g].date.serial_day();
        if (d <= c)
            A.push_back(g);
        else if (d <= c + horizon)
            B.push_back(g);
    }
    return {A, B};
}

/// One rolling experiment. `train` maps the training index set to a model
/// object; `predict` maps (model, match index) to a (win, draw, loss) triple
/// plus an out-of-support flag. Experiments with fewer than two scored
/// matches are marked unusable (the jackknife is undefined).
template <typename Trainer, typename Predictor>
ExperimentSummary run_experiment(const Dataset& data, Date cutoff, int horizon,
                                 Trainer&& train, Predictor&& predict) {
    ExperimentSummary out;
    out.cutoff = cutoff;
    auto [A, B] = split_at(data, cutoff, horizon);
    if (A.empty()) {
        out.skip_reason = "empty training set";
        return out;
    }
    if (B.empty()) {
        out.skip_reason = "empty prediction set";
        return out;
    }
    auto model = train(A);
    std::vector<double> v_rps, v_acc;
    for (size_t g : B) {
        MatchPrediction mp;
        mp.index = g;
        auto [probs, flagged] = predict(model, g);
        mp.probs = probs;
        mp.flagged = flagged;
        mp.observed = outcome(data.records[g]);
        auto onehot = outcome_onehot(mp.observed);
        mp.rps = rps(mp.probs, onehot);
        mp.correct = accuracy(mp.probs, onehot);
        v_rps.push_back(mp.rps);
        v_acc.push_back(double(mp.correct));
        out.predictions.push_back(mp);
    }
    out.n_B = int(B.size());
    double sr = 0, sa = 0;
    for (size_t i = 0; i < v_rps.size(); ++i) {
        sr += v_rps[i];
        sa += v_acc[i];
    }
    out.s_rps = sr / double(out.n_B);
    out.s_acc = sa / double(out.n_B);
    if (out.n_B < 2) {
        out.skip_reason = "prediction set too small for the jackknife";
        return out;
    }
    out.var_rps = jackknife_var(v_rps);
    out.var_acc = jackknife_var(v_acc);
    out.usable = true;
    return out;
}

struct MetaResult {
    double alpha_hat = 0;
    double tau2_hat = 0;
    double se = 0;
    std::vector<double> weights;
};

/// Random-effects pooling of (s_i, sigma2_i) pairs. tau^2 maximizes the
/// profile log-likelihood on [0, inf); alpha_hat is the weighted mean with
/// weights (sigma2_i + tau2)^-1 and SE = (sum of weights)^-1/2.
inline MetaResult meta_analyze(const std::vector<std::pair<double, double>>& summaries) {
    size_t K = summaries.size();
    if (K < 2)
        throw std::invalid_argument("meta-analysis needs at least two experiments");
    for (const auto& [s, v] : summaries)
        if (!(v > 0))
            throw std::invalid_argument("meta-analysis needs positive variances");

    auto alpha_at = [&](double tau2) {
        double num = 0, den = 0;
        for (const auto& [s, v] : summaries) {
            double w = 1.0 / (v + tau2);
            num += w * s;
            den += w;
        }
        return std::pair<double, double>(num / den, den);
    };
    auto neg_profile = [&](double tau2) {
        auto [a, den] = alpha_at(tau2);
        double ll = 0;
        for (const auto& [s, v] : summaries)
            ll += -0.5 * (std::log(v + tau2) + (s - a) * (s - a) / (v + tau2));
        return -ll;
    };

    // bracket: tau^2 cannot exceed the raw spread of the s_i
    double smin = summaries[0].first, smax = summaries[0].first, vmax = summaries[0].second;
    for (const auto& [s, v] : summaries) {
        smin = std::min(smin, s);
        smax = std::max(smax, s);
        vmax = std::max(vmax, v);
    }
    double hi = (smax - smin) * (smax - smin) + vmax + 1e-6;
    double tau2 = optim::minimize_scalar(neg_profile, 0.0, hi, 1e-10);
    if (neg_profile(0.0) <= neg_profile(tau2))
        tau2 = 0.0;

    MetaResult out;
    out.tau2_hat = tau2;
    auto [a, den] = alpha_at(tau2);
    out.alpha_hat = a;
    out.se = 1.0 / std::sqrt(den);
    for (const auto& [s, v] : summaries)
        out.weights.push_back(1.0 / (v + tau2));
    return out;
}

/// Constant benchmark for score prediction: the training means of home and
/// away goals.
inline std::pair<double, double> baseline_goal_predictor(const Dataset& training) {
    if (training.records.empty())
        throw std::invalid_argument("baseline needs non-empty training data");
    double h = 0, a = 0;
    for (const auto& m : training.records) {
        h += m.home_goals;
        a += m.away_goals;
    }
    double n = double(training.size());
    return {h / n, a / n};
}

// ---------------------------------------------------------------------------
// Report assembly
// ---------------------------------------------------------------------------

struct ModelValidation {
    std::string model;
    std::vector<ExperimentSummary> experiments;
    bool pooled_rps = false, pooled_acc = false;
    MetaResult rps_pooled, acc_pooled;
    std::vector<std::string> skipped;  // "<cutoff>: <reason>"

    /// Pools all usable experiments; records skip reasons for the rest.
    /// Summaries with zero jackknife variance (constant criterion within the
    /// window) carry no usable weight and are dropped per criterion.
    void pool() {
        std::vector<std::pair<double, double>> r, a;
        skipped.clear();
        for (const auto& e : experiments) {
            if (!e.usable) {
                skipped.push_back(e.cutoff.to_string() + ": " +
                                  (e.skip_reason.empty() ? "unusable" : e.skip_reason));
                continue;
            }
            if (e.var_rps > 0)
                r.emplace_back(e.s_rps, e.var_rps);
            else
                skipped.push_back(e.cutoff.to_string() + ": zero rps variance");
            if (e.var_acc > 0)
                a.emplace_back(e.s_acc, e.var_acc);
            else
                skipped.push_back(e.cutoff.to_string() + ": zero accuracy variance");
        }
        pooled_rps = r.size() >= 2;
        pooled_acc = a.size() >= 2;
        if (pooled_rps)
            rps_pooled = meta_analyze(r);
        if (pooled_acc)
            acc_pooled = meta_analyze(a);
    }
};

inline nlohmann::json meta_json(const MetaResult& m) {
    return {{"alpha_hat", m.alpha_hat}, {"tau2_hat", m.tau2_hat}, {"se", m.se},
            {"weights", m.weights}};
}

inline nlohmann::json report_json(const std::vector<ModelValidation>& models,
                                  const nlohmann::json& run_config) {
    nlohmann::json j;
    j["run_config"] = run_config;
    j["models"] = nlohmann::json::array();
    for (const auto& mv : models) {
        nlohmann::json m;
        m["model"] = mv.model;
        m["experiments"] = nlohmann::json::array();
        for (const auto& e : mv.experiments) {
            m["experiments"].push_back({{"cutoff", e.cutoff.to_string()},
                                        {"n_B", e.n_B},
                                        {"usable", e.usable},
                                        {"skip_reason", e.skip_reason},
                                        {"rps", {{"s", e.s_rps}, {"sigma2", e.var_rps}}},
                                        {"accuracy", {{"s", e.s_acc}, {"sigma2", e.var_acc}}}});
        }
        m["skipped"] = mv.skipped;
        if (mv.pooled_rps || mv.pooled_acc) {
            m["pooled"] = nlohmann::json::object();
            if (mv.pooled_rps)
                m["pooled"]["rps"] = meta_json(mv.rps_pooled);
            if (mv.pooled_acc)
                m["pooled"]["accuracy"] = meta_json(mv.acc_pooled);
        }
        j["models"].push_back(std::move(m));
    }
    return j;
}

/// Per-match prediction CSV across all experiments of one model.
inline void save_prediction_csv(std::ostream& out, const Dataset& data,
                                const ModelValidation& mv) {
    auto num = [](double x) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.12g", x);
        return std::string(buf);
    };
    out << "cutoff,league,season,date,home_team,away_team,p_win,p_draw,p_loss,"
           "outcome,rps,correct,flagged\n";
    for (const auto& e : mv.experiments) {
        for (const auto& p : e.predictions) {
            const auto& m = data.records[p.index];
            const char* oc = p.observed == Outcome::home_win
                                 ? "win"
                                 : (p.observed == Outcome::draw ? "draw" : "loss");
            out << e.cutoff.to_string() << ',' << csv::quote_if_needed(m.league) << ','
                << csv::quote_if_needed(m.season) << ',' << m.date.to_string() << ','
                << csv::quote_if_needed(m.home_team) << ','
                << csv::quote_if_needed(m.away_team) << ',' << num(p.probs[0]) << ','
                << num(p.probs[1]) << ',' << num(p.probs[2]) << ',' << oc << ','
                << num(p.rps) << ',' << p.correct << ',' << (p.flagged ? 1 : 0) << '\n';
        }
    }
}

}  // namespace matchpred::validate
