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

// matchpred: ingest, fit, predict, validate, report.
//
// Exit codes: 0 success, 1 numerical failure (e.g. non-convergence),
// 2 usage or parse errors.

#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "matchpred/bt_family.hpp"
#include "matchpred/csv.hpp"
#include "matchpred/features.hpp"
#include "matchpred/match_data.hpp"
#include "matchpred/score_model.hpp"
#include "matchpred/smooth_afd.hpp"
#include "matchpred/validate.hpp"

namespace mp = matchpred;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNumerical = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<int> parse_id_list(const std::string& s) {
    std::vector<int> out;
    if (s.empty())
        return out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            size_t pos = 0;
            int v = std::stoi(tok, &pos);
            if (pos != tok.size())
                throw std::invalid_argument(tok);
            out.push_back(v);
        } catch (const std::exception&) {
            throw UsageError("not a feature id: '" + tok + "'");
        }
    }
    return out;
}

/// "1e-4:1e4:17" -> 17 log-spaced smoothing values.
std::vector<double> parse_k_grid(const std::string& s) {
    double lo = 0, hi = 0;
    int n = 0;
    if (std::sscanf(s.c_str(), "%lf:%lf:%d", &lo, &hi, &n) != 3 || !(lo > 0) || !(hi >= lo) ||
        n < 1)
        throw UsageError("bad k-grid '" + s + "' (expected lo:hi:count with 0 < lo <= hi)");
    std::vector<double> grid;
    if (n == 1) {
        grid.push_back(lo);
        return grid;
    }
    double llo = std::log10(lo), lhi = std::log10(hi);
    for (int i = 0; i < n; ++i)
        grid.push_back(std::pow(10.0, llo + (lhi - llo) * i / (n - 1)));
    return grid;
}

mp::Date parse_date_flag(const std::string& s, const char* flag) {
    auto d = mp::Date::parse(s);
    if (!d)
        throw UsageError(std::string(flag) + ": not a date: '" + s + "'");
    return *d;
}

/// load_csv raises plain runtime_errors for structural problems (missing file
/// or header); at the CLI boundary those are usage errors, not numerical ones.
mp::Dataset load_csv_checked(const std::string& path) {
    try {
        return mp::load_csv(path);
    } catch (const mp::ParseError&) {
        throw;
    } catch (const std::runtime_error& e) {
        throw UsageError(e.what());
    }
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write file: " + path);
    out << text;
}

std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

/// Fixture CSV: the match columns without the goals.
mp::Dataset load_fixtures_csv(const std::string& path) {
    auto rows = mp::csv::read_file(path);
    if (rows.empty())
        throw mp::ParseError(0, "header", "missing header row");
    const std::vector<std::string> want = {"league", "season", "date", "home_team",
                                           "away_team"};
    std::vector<int> col(want.size(), -1);
    for (size_t k = 0; k < want.size(); ++k) {
        for (size_t c = 0; c < rows[0].size(); ++c)
            if (rows[0][c] == want[k])
                col[k] = int(c);
        if (col[k] < 0)
            throw mp::ParseError(0, want[k], "missing fixture column");
    }
    mp::Dataset out;
    for (size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() < want.size())
            throw mp::ParseError(r, "row", "too few cells");
        mp::MatchRecord m;
        m.league = rows[r][col[0]];
        m.season = rows[r][col[1]];
        auto date = mp::Date::parse(rows[r][col[2]]);
        if (!date)
            throw mp::ParseError(r, "date", "not a date: '" + rows[r][col[2]] + "'");
        m.date = *date;
        m.home_team = rows[r][col[3]];
        m.away_team = rows[r][col[4]];
        out.records.push_back(std::move(m));
    }
    return out;
}

/// Feature rows for fixtures, computed against the full history (the
/// extractor only ever looks at matches strictly before each row's date).
mp::FeatureTable fixture_features(const mp::Dataset& history, const mp::Dataset& fixtures,
                                  uint64_t seed) {
    mp::Dataset combined = history;
    for (const auto& m : fixtures.records)
        combined.records.push_back(m);
    combined.sort();
    auto feats = mp::extract(combined, mp::FeatureConfig{}, seed);

    auto key = [](const mp::MatchRecord& m) {
        return m.league + '\x1f' + m.season + '\x1f' + m.date.to_string() + '\x1f' +
               m.home_team + '\x1f' + m.away_team;
    };
    std::map<std::string, std::vector<size_t>> where;
    for (size_t g = 0; g < combined.size(); ++g)
        where[key(combined.records[g])].push_back(g);

    mp::FeatureTable out;
    std::map<std::string, size_t> used;
    for (const auto& m : fixtures.records) {
        auto& slots = where.at(key(m));
        out.push_back(feats[slots[used[key(m)]++ % slots.size()]]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Model-spec descriptors: "bl", "lf:1,11", "tvc:1,6,7,12,13:6,7,12", "afd:6,11",
// "hpl"
// ---------------------------------------------------------------------------

struct ModelDesc {
    std::string label;
    std::string kind;
    std::vector<int> features, varying;
};

ModelDesc parse_model_desc(const std::string& s) {
    ModelDesc d;
    d.label = s;
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ':'))
        parts.push_back(tok);
    if (parts.empty())
        throw UsageError("empty model descriptor");
    d.kind = parts[0];
    if (parts.size() > 1)
        d.features = parse_id_list(parts[1]);
    if (parts.size() > 2)
        d.varying = parse_id_list(parts[2]);
    const std::set<std::string> known = {"bl", "cs", "lf", "tvc", "afd", "hpl"};
    if (!known.count(d.kind))
        throw UsageError("unknown model spec '" + d.kind + "'");
    if (d.kind == "afd" && d.features.empty())
        throw UsageError("afd needs a feature list, e.g. afd:6,11");
    if (d.kind == "tvc" && d.features.empty())
        throw UsageError("tvc needs a feature list, e.g. tvc:1,6,7,12,13:6,7,12");
    return d;
}

mp::bt::StrengthSpec bt_spec_for(const ModelDesc& d) {
    if (d.kind == "bl")
        return mp::bt::StrengthSpec::bl();
    if (d.kind == "cs")
        return mp::bt::StrengthSpec::cs();
    if (d.kind == "lf")
        return mp::bt::StrengthSpec::lf(d.features.empty() ? std::vector<int>{1}
                                                           : d.features);
    return mp::bt::StrengthSpec::tvc(d.features, d.varying);
}

// ---------------------------------------------------------------------------
// Shared flag bundles
// ---------------------------------------------------------------------------

struct CommonOpts {
    uint64_t seed = 1;
    std::string input, output;
};

struct FitOpts {
    std::string spec = "bl";
    std::string features, varying, interact;
    std::string draws = "ordinal";
    std::string ordinal_param = "fix";
    std::string as_of;
    int window = 20000;
    int cs_window_days = 365;
    std::string k_grid = "1e-4:1e4:17";
    int n_x = 10, n_m = 5;
    std::string league;  // hpl: restrict to one league
    int samples = 1000;
    std::string empirical_bayes = "off";
};

json run_config_json(const std::string& command, const CommonOpts& c, const json& extra) {
    json j = extra;
    j["command"] = command;
    j["seed"] = c.seed;
    j["input"] = c.input;
    j["output"] = c.output;
    return j;
}

mp::bt::FitOptions bt_fit_options(const FitOpts& f) {
    mp::bt::FitOptions o;
    o.window = f.window;
    o.cs_window_days = f.cs_window_days;
    if (f.ordinal_param == "fix")
        o.ordinal_param = mp::bt::OrdinalParam::FixDelta0;
    else if (f.ordinal_param == "free")
        o.ordinal_param = mp::bt::OrdinalParam::FreeThresholds;
    else
        throw UsageError("--ordinal-param must be fix or free");
    return o;
}

mp::bt::DrawKind draw_kind(const std::string& s) {
    if (s == "ordinal")
        return mp::bt::DrawKind::Ordinal;
    if (s == "davidson")
        return mp::bt::DrawKind::Davidson;
    throw UsageError("--draws must be ordinal or davidson");
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

int cmd_ingest(const CommonOpts& c, const std::string& report_path) {
    mp::Dataset raw = load_csv_checked(c.input);
    auto [cleaned, anomalies] = mp::clean(raw);
    json cfg = run_config_json("ingest", c, {{"report", report_path}});
    if (!c.output.empty()) {
        std::ofstream out(c.output);
        if (!out)
            throw std::runtime_error("cannot write file: " + c.output);
        out << "# run_config: " << cfg.dump() << "\n";
        out << "league,season,date,home_team,away_team,home_goals,away_goals\n";
        for (const auto& m : cleaned.records) {
            out << mp::csv::quote_if_needed(m.league) << ','
                << mp::csv::quote_if_needed(m.season) << ',' << m.date.to_string() << ','
                << mp::csv::quote_if_needed(m.home_team) << ','
                << mp::csv::quote_if_needed(m.away_team) << ',' << m.home_goals << ','
                << m.away_goals << '\n';
        }
    }
    if (!report_path.empty()) {
        json rep;
        rep["run_config"] = cfg;
        rep["records_in"] = raw.size();
        rep["records_out"] = cleaned.size();
        rep["anomalies"] = anomalies.to_json();
        write_text(report_path, rep.dump(2) + "\n");
    }
    std::cout << "ingested " << raw.size() << " rows, kept " << cleaned.size() << " ("
              << anomalies.duplicate_groups.size() << " duplicate groups, "
              << anomalies.date_anomalies.size() << " date anomalies)\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

int cmd_fit(const CommonOpts& c, const FitOpts& f) {
    mp::Dataset data = load_csv_checked(c.input);
    if (data.records.empty())
        throw UsageError("no training matches in " + c.input);
    auto feats = mp::extract(data, mp::FeatureConfig{}, c.seed);
    mp::Date as_of = f.as_of.empty() ? data.records.back().date.plus_days(1)
                                     : parse_date_flag(f.as_of, "--as-of");

    json cfg = run_config_json(
        "fit", c,
        {{"spec", f.spec},
         {"features", f.features},
         {"varying", f.varying},
         {"interact", f.interact},
         {"draws", f.draws},
         {"ordinal_param", f.ordinal_param},
         {"as_of", as_of.to_string()},
         {"window", f.window},
         {"cs_window_days", f.cs_window_days},
         {"k_grid", f.k_grid},
         {"n_x", f.n_x},
         {"n_m", f.n_m},
         {"league", f.league},
         {"samples", f.samples},
         {"empirical_bayes", f.empirical_bayes}});
    json out;
    out["run_config"] = cfg;
    bool converged = true;

    if (f.spec == "bl" || f.spec == "cs" || f.spec == "lf" || f.spec == "tvc") {
        ModelDesc d;
        d.kind = f.spec;
        d.features = parse_id_list(f.features);
        d.varying = parse_id_list(f.varying);
        if (f.spec == "tvc" && d.features.empty())
            throw UsageError("--spec tvc needs --features and --varying");
        auto spec = bt_spec_for(d);
        auto fit = mp::bt::fit_ml(spec, draw_kind(f.draws), data, feats, as_of,
                                  bt_fit_options(f));
        out["kind"] = "bt";
        out["model"] = fit.model.to_json();
        out["diagnostics"] = {{"loglik", fit.loglik},
                              {"iterations", fit.iterations},
                              {"converged", fit.converged},
                              {"n_train", fit.n_train}};
        converged = fit.converged;
        std::cout << "spec=" << f.spec << " loglik=" << format_double(fit.loglik)
                  << " iterations=" << fit.iterations
                  << " converged=" << (fit.converged ? "yes" : "no") << "\n";
    } else if (f.spec == "afd") {
        auto ids = parse_id_list(f.features);
        if (ids.empty())
            throw UsageError("--spec afd needs --features");
        std::set<int> inter(parse_id_list(f.interact).begin(),
                            parse_id_list(f.interact).end());
        std::vector<mp::afd::TermRequest> requests;
        for (int id : ids)
            requests.push_back({id, inter.count(id) > 0});
        mp::afd::FitPenalizedOptions opt;
        opt.k_grid = parse_k_grid(f.k_grid);
        opt.build.n_x = f.n_x;
        opt.build.n_m = f.n_m;
        auto fit = mp::afd::fit_penalized(data, feats, requests, opt);
        out["kind"] = "afd";
        out["model"] = fit.model.to_json();
        out["diagnostics"] = {{"loglik", fit.loglik},
                              {"gcv", fit.gcv},
                              {"edf", fit.edf},
                              {"k", fit.model.k},
                              {"iterations", fit.iterations},
                              {"converged", fit.converged}};
        converged = fit.converged;
        std::cout << "spec=afd loglik=" << format_double(fit.loglik)
                  << " k=" << format_double(fit.model.k) << " edf=" << format_double(fit.edf)
                  << " converged=" << (fit.converged ? "yes" : "no") << "\n";
    } else if (f.spec == "hpl") {
        std::set<std::string> leagues;
        for (const auto& m : data.records)
            if (f.league.empty() || m.league == f.league)
                leagues.insert(m.league);
        if (leagues.empty())
            throw UsageError("no matches for league '" + f.league + "'");
        mp::hpl::FitOptions opt;
        if (f.empirical_bayes == "on")
            opt.empirical_bayes = true;
        else if (f.empirical_bayes != "off")
            throw UsageError("--empirical-bayes must be on or off");
        out["kind"] = "hpl";
        out["leagues"] = json::object();
        for (const auto& lg : leagues) {
            auto fit = mp::hpl::fit_map(data, feats, lg, {}, opt);
            std::string prec = c.output.empty()
                                   ? lg + ".precision.bin"
                                   : c.output + "." + lg + ".precision.bin";
            fit.save_precision(prec);
            json jl = fit.to_json();
            jl["precision_file"] = prec;
            out["leagues"][lg] = jl;
            converged = converged && fit.converged;
            std::cout << "spec=hpl league=" << lg
                      << " neg_log_post=" << format_double(fit.neg_log_post)
                      << " iterations=" << fit.iterations
                      << " converged=" << (fit.converged ? "yes" : "no") << "\n";
        }
    } else {
        throw UsageError("unknown spec '" + f.spec + "'");
    }

    if (!c.output.empty())
        write_text(c.output, out.dump(2) + "\n");
    return converged ? kExitOk : kExitNumerical;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

int cmd_predict(const CommonOpts& c, const std::string& model_path,
                const std::string& history_path, int samples) {
    std::ifstream in(model_path);
    if (!in)
        throw UsageError("cannot open model file: " + model_path);
    json jm = json::parse(in);
    mp::Dataset history = load_csv_checked(history_path);
    mp::Dataset fixtures = load_fixtures_csv(c.input);
    if (fixtures.records.empty())
        throw UsageError("no fixtures in " + c.input);
    auto feats = fixture_features(history, fixtures, c.seed);

    std::string kind = jm.at("kind").get<std::string>();
    struct Row {
        std::array<double, 3> p;
        bool flagged;
    };
    std::vector<Row> rows;

    if (kind == "bt") {
        auto model = mp::bt::BTModel::from_json(jm.at("model"));
        auto preds = mp::bt::predict(model, fixtures, feats);
        for (const auto& p : preds)
            rows.push_back({{p.probs.win, p.probs.draw, p.probs.loss}, p.flagged});
    } else if (kind == "afd") {
        auto model = mp::afd::AFDModel::from_json(jm.at("model"));
        auto preds = mp::afd::predict_afd(model, feats);
        for (const auto& p : preds)
            rows.push_back({{p.win, p.draw, p.loss}, false});
    } else if (kind == "hpl") {
        std::map<std::string, mp::hpl::LaplaceFit> fits;
        for (auto& [lg, jl] : jm.at("leagues").items()) {
            auto fit = mp::hpl::LaplaceFit::from_json(jl);
            fit.load_precision(jl.at("precision_file").get<std::string>());
            fits.emplace(lg, std::move(fit));
        }
        for (size_t g = 0; g < fixtures.size(); ++g) {
            const auto& m = fixtures.records[g];
            auto it = fits.find(m.league);
            if (it == fits.end()) {
                rows.push_back({{1.0 / 3, 1.0 / 3, 1.0 / 3}, true});
                continue;
            }
            auto s = mp::hpl::sample_scores(it->second, m, feats[g], samples,
                                            c.seed + uint64_t(g));
            auto p = mp::hpl::outcome_probs(s);
            rows.push_back({p, s.flagged});
        }
    } else {
        throw UsageError("unknown model kind '" + kind + "'");
    }

    json cfg = run_config_json("predict", c,
                               {{"model", model_path},
                                {"history", history_path},
                                {"samples", samples},
                                {"model_kind", kind}});
    std::ostringstream body;
    body << "# run_config: " << cfg.dump() << "\n";
    body << "league,season,date,home_team,away_team,p_win,p_draw,p_loss,flagged\n";
    for (size_t g = 0; g < fixtures.size(); ++g) {
        const auto& m = fixtures.records[g];
        body << mp::csv::quote_if_needed(m.league) << ',' << mp::csv::quote_if_needed(m.season)
             << ',' << m.date.to_string() << ',' << mp::csv::quote_if_needed(m.home_team)
             << ',' << mp::csv::quote_if_needed(m.away_team) << ','
             << format_double(rows[g].p[0]) << ',' << format_double(rows[g].p[1]) << ','
             << format_double(rows[g].p[2]) << ',' << (rows[g].flagged ? 1 : 0) << '\n';
    }
    if (c.output.empty())
        std::cout << body.str();
    else
        write_text(c.output, body.str());
    return kExitOk;
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

mp::Dataset subset(const mp::Dataset& data, const std::vector<size_t>& idx) {
    mp::Dataset out;
    out.records.reserve(idx.size());
    for (size_t g : idx)
        out.records.push_back(data.records[g]);
    return out;
}

mp::FeatureTable subset(const mp::FeatureTable& ft, const std::vector<size_t>& idx) {
    mp::FeatureTable out;
    out.reserve(idx.size());
    for (size_t g : idx)
        out.push_back(ft[g]);
    return out;
}

mp::validate::ExperimentSummary run_one_experiment(const ModelDesc& d, const mp::Dataset& data,
                                                   const mp::FeatureTable& feats,
                                                   mp::Date cutoff, int horizon,
                                                   const FitOpts& f, uint64_t seed) {
    namespace val = mp::validate;
    try {
        if (d.kind == "afd") {
            std::vector<mp::afd::TermRequest> requests;
            for (int id : d.features)
                requests.push_back({id, false});
            return val::run_experiment(
                data, cutoff, horizon,
                [&](const std::vector<size_t>& A) {
                    mp::afd::FitPenalizedOptions opt;
                    opt.k_grid = parse_k_grid(f.k_grid);
                    opt.build.n_x = f.n_x;
                    opt.build.n_m = f.n_m;
                    auto fit = mp::afd::fit_penalized(subset(data, A), subset(feats, A),
                                                      requests, opt);
                    if (!fit.converged)
                        throw std::runtime_error("afd fit did not converge");
                    return fit.model;
                },
                [&](const mp::afd::AFDModel& model, size_t g) {
                    auto t = mp::afd::predict_afd(model, {feats[g]})[0];
                    return std::pair(std::array<double, 3>{t.win, t.draw, t.loss}, false);
                });
        }
        if (d.kind == "hpl") {
            return val::run_experiment(
                data, cutoff, horizon,
                [&](const std::vector<size_t>& A) {
                    mp::Dataset train = subset(data, A);
                    mp::FeatureTable tf = subset(feats, A);
                    std::map<std::string, mp::hpl::LaplaceFit> fits;
                    std::set<std::string> leagues;
                    for (const auto& m : train.records)
                        leagues.insert(m.league);
                    for (const auto& lg : leagues)
                        fits.emplace(lg, mp::hpl::fit_map(train, tf, lg));
                    return fits;
                },
                [&](const std::map<std::string, mp::hpl::LaplaceFit>& fits, size_t g) {
                    const auto& m = data.records[g];
                    auto it = fits.find(m.league);
                    if (it == fits.end())
                        return std::pair(std::array<double, 3>{1.0 / 3, 1.0 / 3, 1.0 / 3},
                                         true);
                    auto s = mp::hpl::sample_scores(it->second, m, feats[g], f.samples,
                                                    seed + uint64_t(g));
                    return std::pair(mp::hpl::outcome_probs(s), s.flagged);
                });
        }
        auto spec = bt_spec_for(d);
        auto draw = draw_kind(f.draws);
        auto fopt = bt_fit_options(f);
        return val::run_experiment(
            data, cutoff, horizon,
            [&](const std::vector<size_t>&) {
                auto fit = mp::bt::fit_ml(spec, draw, data, feats, cutoff.plus_days(1), fopt);
                if (!fit.converged)
                    throw std::runtime_error("bt fit did not converge");
                return fit.model;
            },
            [&](const mp::bt::BTModel& model, size_t g) {
                auto p = mp::bt::predict_one(model, data.records[g], feats[g]);
                return std::pair(std::array<double, 3>{p.probs.win, p.probs.draw,
                                                       p.probs.loss},
                                 p.flagged);
            });
    } catch (const std::exception& e) {
        mp::validate::ExperimentSummary out;
        out.cutoff = cutoff;
        out.skip_reason = e.what();
        return out;
    }
}

int cmd_validate(const CommonOpts& c, const FitOpts& f, const std::string& models_flag,
                 int horizon, bool special_2017, const std::string& cutoffs_flag,
                 const std::string& predictions_prefix, int jobs) {
    namespace val = mp::validate;
    mp::Dataset data = load_csv_checked(c.input);
    if (data.records.empty())
        throw UsageError("no matches in " + c.input);
    auto feats = mp::extract(data, mp::FeatureConfig{}, c.seed);

    std::vector<ModelDesc> models;
    {
        std::stringstream ss(models_flag);
        std::string tok;
        while (std::getline(ss, tok, ';'))
            if (!tok.empty())
                models.push_back(parse_model_desc(tok));
    }
    if (models.empty())
        throw UsageError("--models needs at least one model descriptor");

    val::ExperimentPlan plan;
    if (cutoffs_flag.empty()) {
        plan = val::ExperimentPlan::yearly(data, horizon, special_2017);
    } else {
        plan.horizon = horizon;
        std::stringstream ss(cutoffs_flag);
        std::string tok;
        while (std::getline(ss, tok, ','))
            plan.cutoffs.push_back(parse_date_flag(tok, "--cutoffs"));
        plan.validate();
    }
    if (plan.cutoffs.empty())
        throw UsageError("experiment plan has no cutoffs");

    json cfg = run_config_json("validate", c,
                               {{"models", models_flag},
                                {"horizon", horizon},
                                {"special_2017", special_2017},
                                {"cutoffs", cutoffs_flag},
                                {"draws", f.draws},
                                {"window", f.window},
                                {"cs_window_days", f.cs_window_days},
                                {"samples", f.samples},
                                {"k_grid", f.k_grid},
                                {"jobs", jobs}});

    // (model, cutoff) experiments are independent; run them on a small pool
    struct Task {
        size_t model;
        size_t cutoff;
    };
    std::vector<Task> tasks;
    for (size_t m = 0; m < models.size(); ++m)
        for (size_t t = 0; t < plan.cutoffs.size(); ++t)
            tasks.push_back({m, t});
    std::vector<val::ExperimentSummary> results(tasks.size());
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (size_t i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1)) {
            const auto& t = tasks[i];
            results[i] = run_one_experiment(models[t.model], data, feats,
                                            plan.cutoffs[t.cutoff], plan.horizon, f, c.seed);
        }
    };
    int nthreads = std::max(1, std::min<int>(jobs, int(tasks.size())));
    std::vector<std::thread> pool;
    for (int i = 1; i < nthreads; ++i)
        pool.emplace_back(worker);
    worker();
    for (auto& th : pool)
        th.join();

    std::vector<val::ModelValidation> validations(models.size());
    for (size_t m = 0; m < models.size(); ++m)
        validations[m].model = models[m].label;
    for (size_t i = 0; i < tasks.size(); ++i)
        validations[tasks[i].model].experiments.push_back(std::move(results[i]));
    bool any_usable = false;
    for (auto& v : validations) {
        v.pool();
        for (const auto& e : v.experiments)
            any_usable = any_usable || e.usable;
    }

    json report = val::report_json(validations, cfg);
    if (c.output.empty())
        std::cout << report.dump(2) << "\n";
    else
        write_text(c.output, report.dump(2) + "\n");

    if (!predictions_prefix.empty()) {
        for (const auto& v : validations) {
            std::string label = v.model;
            for (auto& ch : label)
                if (ch == ':' || ch == ',')
                    ch = '_';
            std::ofstream out(predictions_prefix + label + ".csv");
            if (!out)
                throw std::runtime_error("cannot write predictions for " + v.model);
            out << "# run_config: " << cfg.dump() << "\n";
            val::save_prediction_csv(out, data, v);
        }
    }
    for (const auto& v : validations) {
        std::cout << v.model << ": ";
        if (v.pooled_rps)
            std::cout << "pooled rps " << format_double(v.rps_pooled.alpha_hat) << " (se "
                      << format_double(v.rps_pooled.se) << ")";
        else
            std::cout << "not pooled";
        std::cout << "\n";
    }
    return any_usable ? kExitOk : kExitNumerical;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

int cmd_report(const CommonOpts& c) {
    std::ifstream in(c.input);
    if (!in)
        throw UsageError("cannot open report: " + c.input);
    json j = json::parse(in);
    std::cout << "run_config: " << j.at("run_config").dump() << "\n";
    for (const auto& m : j.at("models")) {
        std::cout << "\nmodel " << m.at("model").get<std::string>() << "\n";
        std::printf("  %-12s %6s %10s %10s %10s %10s\n", "cutoff", "n_B", "rps", "rps_var",
                    "acc", "acc_var");
        for (const auto& e : m.at("experiments")) {
            if (!e.at("usable").get<bool>()) {
                std::printf("  %-12s skipped: %s\n", e.at("cutoff").get<std::string>().c_str(),
                            e.at("skip_reason").get<std::string>().c_str());
                continue;
            }
            std::printf("  %-12s %6d %10.4f %10.6f %10.4f %10.6f\n",
                        e.at("cutoff").get<std::string>().c_str(), e.at("n_B").get<int>(),
                        e.at("rps").at("s").get<double>(),
                        e.at("rps").at("sigma2").get<double>(),
                        e.at("accuracy").at("s").get<double>(),
                        e.at("accuracy").at("sigma2").get<double>());
        }
        if (m.contains("pooled")) {
            const auto& p = m.at("pooled");
            if (p.contains("rps"))
                std::printf("  pooled rps      %.4f (se %.4f, tau2 %.6f)\n",
                            p.at("rps").at("alpha_hat").get<double>(),
                            p.at("rps").at("se").get<double>(),
                            p.at("rps").at("tau2_hat").get<double>());
            if (p.contains("accuracy"))
                std::printf("  pooled accuracy %.4f (se %.4f, tau2 %.6f)\n",
                            p.at("accuracy").at("alpha_hat").get<double>(),
                            p.at("accuracy").at("se").get<double>(),
                            p.at("accuracy").at("tau2_hat").get<double>());
        }
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"soccer match outcome modeling"};
    app.require_subcommand(1);
    app.set_config("--config")->configurable(false);

    CommonOpts c;
    FitOpts f;
    std::string report_path, model_path, history_path, models_flag, cutoffs_flag;
    std::string predictions_prefix;
    int horizon = 10, jobs = 1;
    bool special_2017 = false;

    auto add_common = [&](CLI::App* sub, bool need_input) {
        auto* in = sub->add_option("--input,-i", c.input, "input file");
        if (need_input)
            in->required();
        sub->add_option("--output,-o", c.output, "output file");
        sub->add_option("--seed", c.seed, "random seed recorded in all outputs");
    };

    auto* ingest = app.add_subcommand("ingest", "load, clean and re-emit a match CSV");
    add_common(ingest, true);
    ingest->add_option("--report", report_path, "anomaly report JSON");

    auto* fit = app.add_subcommand("fit", "fit one model and serialize it");
    add_common(fit, true);
    fit->add_option("--spec", f.spec, "bl|cs|lf|tvc|afd|hpl")->required();
    fit->add_option("--features", f.features, "feature ids, e.g. 1,6,7,12,13");
    fit->add_option("--varying", f.varying, "tvc: ids whose effect varies with m");
    fit->add_option("--interact", f.interact, "afd: ids interacting with matches played");
    fit->add_option("--draws", f.draws, "ordinal|davidson");
    fit->add_option("--ordinal-param", f.ordinal_param, "fix|free");
    fit->add_option("--as-of", f.as_of, "training cutoff date (default: after last match)");
    fit->add_option("--window", f.window, "pooled recent-match window");
    fit->add_option("--cs-window-days", f.cs_window_days, "CS per-league calendar window");
    fit->add_option("--k-grid", f.k_grid, "afd smoothing grid lo:hi:count");
    fit->add_option("--nx", f.n_x, "afd basis size in the feature difference");
    fit->add_option("--nm", f.n_m, "afd basis size in matches played");
    fit->add_option("--league", f.league, "hpl: fit only this league");
    fit->add_option("--samples", f.samples, "hpl predictive sample count");
    fit->add_option("--empirical-bayes", f.empirical_bayes, "hpl hyperparameters: on|off");

    auto* predict = app.add_subcommand("predict", "probability triples for fixtures");
    add_common(predict, true);
    predict->add_option("--model", model_path, "serialized model JSON")->required();
    predict->add_option("--history", history_path, "match CSV for feature computation")
        ->required();
    predict->add_option("--samples", f.samples, "hpl predictive sample count");

    auto* validate = app.add_subcommand("validate", "rolling temporal validation");
    add_common(validate, true);
    validate->add_option("--models", models_flag,
                         "semicolon-separated descriptors, e.g. bl;lf:1,11;afd:11")
        ->required();
    validate->add_option("--horizon", horizon, "days after each cutoff");
    validate->add_flag("--special-2017", special_2017, "add the 2017-03-14 cutoff");
    validate->add_option("--cutoffs", cutoffs_flag, "explicit cutoff dates (comma separated)");
    validate->add_option("--draws", f.draws, "ordinal|davidson");
    validate->add_option("--window", f.window, "pooled recent-match window");
    validate->add_option("--cs-window-days", f.cs_window_days, "CS per-league window");
    validate->add_option("--k-grid", f.k_grid, "afd smoothing grid lo:hi:count");
    validate->add_option("--samples", f.samples, "hpl predictive sample count");
    validate->add_option("--predictions", predictions_prefix,
                         "prefix for per-model prediction CSVs");
    validate->add_option("--jobs", jobs, "parallel experiments")->check(CLI::PositiveNumber);

    auto* report = app.add_subcommand("report", "pretty-print a validation report");
    add_common(report, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (ingest->parsed())
            return cmd_ingest(c, report_path);
        if (fit->parsed())
            return cmd_fit(c, f);
        if (predict->parsed())
            return cmd_predict(c, model_path, history_path, f.samples);
        if (validate->parsed())
            return cmd_validate(c, f, models_flag, horizon, special_2017, cutoffs_flag,
                                predictions_prefix, jobs);
        if (report->parsed())
            return cmd_report(c);
        return kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const mp::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    }
}
