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

#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "matchpred/features.hpp"
#include "matchpred/match_data.hpp"
#include "matchpred/optim.hpp"

namespace matchpred::bt {

enum class SpecKind { BL, CS, LF, TVC };
enum class DrawKind { Ordinal, Davidson };

inline std::string to_string(SpecKind k) {
    switch (k) {
        case SpecKind::BL: return "bl";
        case SpecKind::CS: return "cs";
        case SpecKind::LF: return "lf";
        default: return "tvc";
    }
}
inline std::string to_string(DrawKind k) {
    return k == DrawKind::Ordinal ? "ordinal" : "davidson";
}
inline SpecKind spec_kind_from(const std::string& s) {
    if (s == "bl") return SpecKind::BL;
    if (s == "cs") return SpecKind::CS;
    if (s == "lf") return SpecKind::LF;
    if (s == "tvc") return SpecKind::TVC;
    throw std::invalid_argument("unknown spec kind: " + s);
}
inline DrawKind draw_kind_from(const std::string& s) {
    if (s == "ordinal") return DrawKind::Ordinal;
    if (s == "davidson") return DrawKind::Davidson;
    throw std::invalid_argument("unknown draw rule: " + s);
}

struct StrengthSpec {
    SpecKind kind = SpecKind::BL;
    std::vector<int> feature_ids;  // Table-1 numbers; BL/CS use {1}
    std::vector<int> varying_ids;  // TVC: coefficients varying with matches played

    static StrengthSpec bl() { return {SpecKind::BL, {1}, {}}; }
    static StrengthSpec cs() { return {SpecKind::CS, {1}, {}}; }
    static StrengthSpec lf(std::vector<int> ids) { return {SpecKind::LF, std::move(ids), {}}; }
    static StrengthSpec tvc(std::vector<int> ids, std::vector<int> varying) {
        return {SpecKind::TVC, std::move(ids), std::move(varying)};
    }

    void validate() const {
        if ((kind == SpecKind::BL || kind == SpecKind::CS) &&
            !(feature_ids == std::vector<int>{1}))
            throw std::invalid_argument("BL/CS use only feature 1");
        if (kind != SpecKind::TVC && !varying_ids.empty())
            throw std::invalid_argument("varying coefficients require the TVC spec");
        for (int v : varying_ids) {
            bool found = false;
            for (int k : feature_ids)
                found = found || k == v;
            if (!found)
                throw std::invalid_argument("varying id not among feature ids");
        }
    }
};

/// (p_win, p_draw, p_loss) from the home perspective.
struct Triple {
    double win = 0, draw = 0, loss = 0;
    double sum() const { return win + draw + loss; }
    double operator[](Outcome o) const {
        return o == Outcome::home_win ? win : (o == Outcome::draw ? draw : loss);
    }
};

inline double logistic(double x) {
    if (x >= 0)
        return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

/// logistic(b) - logistic(a) for b >= a, stable in both tails.
inline double logistic_diff(double b, double a) {
    return logistic(b) * logistic(-a) * -std::expm1(a - b);
}

/// Cumulative-link triple: larger lambda_i - lambda_j increases p_win.
inline Triple probs_ordinal(double lambda_i, double lambda_j, double delta0, double delta1) {
    if (delta0 > delta1)
        throw std::invalid_argument("ordinal thresholds must satisfy delta0 <= delta1");
    double d = lambda_i - lambda_j;
    Triple t;
    t.loss = logistic(delta0 - d);
    t.draw = logistic_diff(delta1 - d, delta0 - d);
    t.win = logistic(d - delta1);
    return t;
}

/// Davidson triple: draw mass proportional to delta * sqrt(pi_i * pi_j).
inline Triple probs_davidson(double lambda_i, double lambda_j, double delta) {
    if (delta < 0)
        throw std::invalid_argument("davidson delta must be non-negative");
    double half = 0.5 * (lambda_i - lambda_j);
    double c = std::exp(half) + std::exp(-half) + delta;
    Triple t;
    t.win = std::exp(half) / c;
    t.draw = delta / c;
    t.loss = std::exp(-half) / c;
    return t;
}

/// Strength for the linear specifications (Eqs. BL/CS-free form/LF/TVC).
/// theta is laid out as [beta per feature id..., beta per varying m*x column...].
inline double strength(const StrengthSpec& spec, const Eigen::VectorXd& theta,
                       const FeatureVector& x, double matches_played) {
    spec.validate();
    size_t expect = spec.feature_ids.size() + spec.varying_ids.size();
    if (size_t(theta.size()) != expect)
        throw std::invalid_argument("theta length does not match spec");
    double lam = 0;
    size_t p = 0;
    for (int id : spec.feature_ids)
        lam += theta[p++] * x.value(id);
    for (int id : spec.varying_ids)
        lam += theta[p++] * matches_played * x.value(id);
    return lam;
}

/// CS strength: alpha_i + beta * home.
inline double strength_cs(double alpha_team, double home_beta, const FeatureVector& x) {
    return alpha_team + home_beta * x.home;
}

// ---------------------------------------------------------------------------
// Likelihood machinery
// ---------------------------------------------------------------------------

/// How ordinal thresholds are parameterized during fitting. The predicted
/// probabilities are invariant to the choice.
enum class OrdinalParam {
    FixDelta0,       // delta0 = 0, delta1 = exp(s); strength carries the location
    FreeThresholds,  // delta0 free, delta1 = delta0 + exp(s)
};

/// A fitting problem reduced to design-difference rows: Delta_g = diff.row(g) * beta.
struct LinearProblem {
    Eigen::MatrixXd diff;        // n x P rows of (home design - away design)
    std::vector<Outcome> y;
    DrawKind draw = DrawKind::Ordinal;
    OrdinalParam ordinal_param = OrdinalParam::FixDelta0;
    double ridge = 0.0;          // quadratic penalty on the first ridge_dim coefficients
    int ridge_dim = 0;

    int n() const { return int(diff.rows()); }
    int p_strength() const { return int(diff.cols()); }
    int n_draw_params() const {
        if (draw == DrawKind::Davidson)
            return 1;
        return ordinal_param == OrdinalParam::FixDelta0 ? 1 : 2;
    }
    int n_params() const { return p_strength() + n_draw_params(); }

    void draw_params(const Eigen::VectorXd& theta, double& d0, double& d1,
                     double& davidson_delta) const {
        int p = p_strength();
        if (draw == DrawKind::Davidson) {
            davidson_delta = std::exp(theta[p]);
            d0 = d1 = 0;
        } else if (ordinal_param == OrdinalParam::FixDelta0) {
            d0 = 0;
            d1 = std::exp(theta[p]);
        } else {
            d0 = theta[p];
            d1 = d0 + std::exp(theta[p + 1]);
        }
    }
};

struct LoglikInfo {
    double value = 0;
    bool floored = false;   // some probability hit the 1e-300 floor
    int bad_index = -1;     // first match whose probability was floored
};

namespace detail {

constexpr double kProbFloor = 1e-300;

// Per-match log-probability and its derivatives with respect to
// (Delta, delta0, delta1) for ordinal, or (Delta, phi) for Davidson.
struct MatchGrad {
    double logp = 0;
    double d_delta = 0;   // d logp / d Delta
    double d_a = 0;       // ordinal: d/d delta0; davidson: d/d phi
    double d_b = 0;       // ordinal: d/d delta1
};

inline MatchGrad ordinal_match(double delta_g, double d0, double d1, Outcome y,
                               bool* floored) {
    double u0 = d0 - delta_g, u1 = d1 - delta_g;
    MatchGrad out;
    if (y == Outcome::home_loss) {
        double p = logistic(u0);
        if (p < kProbFloor) {
            p = kProbFloor;
            if (floored) *floored = true;
        }
        out.logp = std::log(p);
        double d = logistic(-u0);  // derivative of log sigma(u0) wrt u0
        out.d_a = d;
        out.d_delta = -d;
    } else if (y == Outcome::home_win) {
        double p = logistic(-u1);
        if (p < kProbFloor) {
            p = kProbFloor;
            if (floored) *floored = true;
        }
        out.logp = std::log(p);
        double d = logistic(u1);
        out.d_b = -d;
        out.d_delta = d;
    } else {
        double p = logistic_diff(u1, u0);
        if (p < kProbFloor) {
            p = kProbFloor;
            if (floored) *floored = true;
        }
        out.logp = std::log(p);
        double s0 = logistic(u0), s1 = logistic(u1);
        double g0 = s0 * (1 - s0), g1 = s1 * (1 - s1);
        out.d_a = -g0 / p;
        out.d_b = g1 / p;
        out.d_delta = (g0 - g1) / p;
    }
    return out;
}

inline MatchGrad davidson_match(double delta_g, double davidson_delta, Outcome y,
                                bool* floored) {
    double half = 0.5 * delta_g;
    double eh = std::exp(half), emh = std::exp(-half);
    double c = eh + emh + davidson_delta;
    double dc_ddelta = 0.5 * (eh - emh) / c;  // d log C / d Delta
    MatchGrad out;
    double p;
    // d_a holds d logp / d delta (the draw parameter itself)
    if (y == Outcome::home_win) {
        p = eh / c;
        out.d_delta = 0.5 - dc_ddelta;
        out.d_a = -1.0 / c;
    } else if (y == Outcome::draw) {
        p = davidson_delta / c;
        out.d_delta = -dc_ddelta;
        out.d_a = 1.0 / std::max(davidson_delta, kProbFloor) - 1.0 / c;
    } else {
        p = emh / c;
        out.d_delta = -0.5 - dc_ddelta;
        out.d_a = -1.0 / c;
    }
    if (p < kProbFloor) {
        p = kProbFloor;
        if (floored) *floored = true;
    }
    out.logp = std::log(p);
    return out;
}

}  // namespace detail

/// Log-likelihood of the observed outcomes; probabilities floored at 1e-300.
inline LoglikInfo loglik(const LinearProblem& prob, const Eigen::VectorXd& theta) {
    double d0, d1, dd;
    prob.draw_params(theta, d0, d1, dd);
    LoglikInfo out;
    for (int g = 0; g < prob.n(); ++g) {
        double delta_g = prob.diff.row(g).dot(theta.head(prob.p_strength()));
        bool fl = false;
        auto mg = prob.draw == DrawKind::Ordinal
                      ? detail::ordinal_match(delta_g, d0, d1, prob.y[g], &fl)
                      : detail::davidson_match(delta_g, dd, prob.y[g], &fl);
        out.value += mg.logp;
        if (fl && !out.floored) {
            out.floored = true;
            out.bad_index = g;
        }
    }
    return out;
}

/// Analytic gradient of loglik in theta.
inline Eigen::VectorXd grad_loglik(const LinearProblem& prob, const Eigen::VectorXd& theta) {
    double d0, d1, dd;
    prob.draw_params(theta, d0, d1, dd);
    int P = prob.p_strength();
    Eigen::VectorXd g = Eigen::VectorXd::Zero(prob.n_params());
    for (int i = 0; i < prob.n(); ++i) {
        double delta_g = prob.diff.row(i).dot(theta.head(P));
        auto mg = prob.draw == DrawKind::Ordinal
                      ? detail::ordinal_match(delta_g, d0, d1, prob.y[i], nullptr)
                      : detail::davidson_match(delta_g, dd, prob.y[i], nullptr);
        g.head(P) += mg.d_delta * prob.diff.row(i).transpose();
        if (prob.draw == DrawKind::Davidson) {
            g[P] += mg.d_a * dd;  // chain through delta = exp(phi)
        } else if (prob.ordinal_param == OrdinalParam::FixDelta0) {
            g[P] += mg.d_b * d1;  // delta1 = exp(s)
        } else {
            g[P] += mg.d_a + mg.d_b;          // delta0 moves both thresholds
            g[P + 1] += mg.d_b * (d1 - d0);   // s moves delta1 by exp(s)
        }
    }
    return g;
}

/// Penalized negative log-likelihood objective for the optimizer.
inline double neg_loglik_obj(const LinearProblem& prob, const Eigen::VectorXd& theta,
                             Eigen::VectorXd& grad) {
    auto ll = loglik(prob, theta);
    grad = -grad_loglik(prob, theta);
    double value = -ll.value;
    for (int k = 0; k < prob.ridge_dim; ++k) {
        value += prob.ridge * theta[k] * theta[k];
        grad[k] += 2.0 * prob.ridge * theta[k];
    }
    return value;
}

/// Observed information (Hessian of -loglik) by central differences of the
/// analytic gradient.
inline Eigen::MatrixXd observed_information(const LinearProblem& prob,
                                            const Eigen::VectorXd& theta, double h = 1e-5) {
    int P = prob.n_params();
    Eigen::MatrixXd H(P, P);
    for (int k = 0; k < P; ++k) {
        Eigen::VectorXd tp = theta, tm = theta;
        tp[k] += h;
        tm[k] -= h;
        H.col(k) = -(grad_loglik(prob, tp) - grad_loglik(prob, tm)) / (2 * h);
    }
    return 0.5 * (H + H.transpose());
}

// ---------------------------------------------------------------------------
// Model assembly, fitting, prediction
// ---------------------------------------------------------------------------

/// Design row for the linear specifications (home/feature/varying columns).
inline Eigen::VectorXd design_row(const StrengthSpec& spec, const FeatureVector& f) {
    int P = int(spec.feature_ids.size() + spec.varying_ids.size());
    Eigen::VectorXd row(P);
    int p = 0;
    for (int id : spec.feature_ids)
        row[p++] = f.value(id);
    for (int id : spec.varying_ids)
        row[p++] = f.matches_played * f.value(id);
    return row;
}

inline std::vector<std::string> design_names(const StrengthSpec& spec) {
    std::vector<std::string> names;
    for (int id : spec.feature_ids)
        names.push_back("f" + std::to_string(id));
    for (int id : spec.varying_ids)
        names.push_back("f" + std::to_string(id) + "_x_m");
    return names;
}

struct FitOptions {
    int window = 20000;          // pooled recent-match window for BL/LF/TVC
    int cs_window_days = 365;    // per-league calendar window for CS
    double grad_tol = 1e-6;
    int max_iter = 500;
    OrdinalParam ordinal_param = OrdinalParam::FixDelta0;
    bool standardize = true;     // LF/TVC feature standardization
    bool add_intercept = false;  // explicit intercept column in Delta
};

/// Per-league strengths for the CS specification.
struct LeagueStrengths {
    std::map<std::string, double> alpha;  // reference team present at exactly 0
    std::string reference_team;
    double home_beta = 0;
    double delta0 = 0, delta1 = 1;        // ordinal
    double davidson_delta = 1;
    bool converged = false;
    bool well_identified = true;
};

struct BTModel {
    StrengthSpec spec;
    DrawKind draw = DrawKind::Ordinal;

    // linear kinds
    Eigen::VectorXd beta;              // coefficients on (standardized) design columns
    Eigen::VectorXd feat_mean, feat_sd;
    bool has_intercept = false;        // last beta entry is an intercept in Delta
    double delta0 = 0, delta1 = 1;
    double davidson_delta = 1;

    // CS
    std::map<std::string, LeagueStrengths> leagues;

    nlohmann::json to_json() const;
    static BTModel from_json(const nlohmann::json& j);
};

struct FitResult {
    BTModel model;
    double loglik = 0;
    bool converged = false;
    int iterations = 0;
    double gradient_norm = 0;
    int n_train = 0;
    // per-fit problem and solution, kept for standard-error computation
    LinearProblem problem;
    Eigen::VectorXd theta;
};

namespace detail {

inline void finish_draw_params(const LinearProblem& prob, const Eigen::VectorXd& theta,
                               double& d0, double& d1, double& dd) {
    prob.draw_params(theta, d0, d1, dd);
}

inline optim::Result run_fit(const LinearProblem& prob, const FitOptions& opt) {
    auto obj = [&prob](const optim::Vector& th, optim::Vector& g) {
        return neg_loglik_obj(prob, th, g);
    };
    optim::Options oo;
    oo.grad_tol = opt.grad_tol;
    oo.max_iter = opt.max_iter;
    return optim::minimize_bfgs(obj, optim::Vector::Zero(prob.n_params()), oo);
}

}  // namespace detail

/// Maximum-likelihood fit. BL/LF/TVC pool the most recent `window` matches
/// before as_of across leagues; CS fits league-by-league on the past calendar
/// year with the alphabetically first team as the zero reference.
inline FitResult fit_ml(const StrengthSpec& spec, DrawKind draw, const Dataset& data,
                        const FeatureTable& features, const Date& as_of,
                        const FitOptions& opt = {}) {
    spec.validate();
    if (data.size() != features.size())
        throw std::invalid_argument("dataset / feature table size mismatch");

    FitResult out;
    out.model.spec = spec;
    out.model.draw = draw;

    if (spec.kind == SpecKind::CS) {
        // group training matches per league within the calendar-year window
        Date lo = as_of.plus_days(-opt.cs_window_days);
        std::map<std::string, std::vector<size_t>> per_league;
        for (size_t g = 0; g < data.size(); ++g) {
            const auto& m = data.records[g];
            if (m.date < as_of && !(m.date < lo))
                per_league[m.league].push_back(g);
        }
        if (per_league.empty())
            throw std::invalid_argument("fit_ml: empty training window");
        out.converged = true;
        for (auto& [league, idx] : per_league) {
            std::set<std::string> teams;
            for (size_t g : idx) {
                teams.insert(data.records[g].home_team);
                teams.insert(data.records[g].away_team);
            }
            std::vector<std::string> team_list(teams.begin(), teams.end());
            const std::string& ref = team_list.front();
            std::map<std::string, int> slot;  // non-reference strength slots
            int s = 0;
            for (const auto& t : team_list)
                if (t != ref)
                    slot[t] = s++;
            int P = s + 1;  // alphas + home coefficient
            LinearProblem prob;
            prob.draw = draw;
            prob.ordinal_param = opt.ordinal_param;
            prob.ridge = 1e-6;  // perfect-separation guard on the strengths
            prob.ridge_dim = s;
            prob.diff = Eigen::MatrixXd::Zero(int(idx.size()), P);
            prob.y.reserve(idx.size());
            for (size_t r = 0; r < idx.size(); ++r) {
                const auto& m = data.records[idx[r]];
                if (m.home_team != ref)
                    prob.diff(int(r), slot[m.home_team]) += 1.0;
                if (m.away_team != ref)
                    prob.diff(int(r), slot[m.away_team]) -= 1.0;
                prob.diff(int(r), s) = 1.0;  // home advantage enters every Delta
                prob.y.push_back(outcome(m));
            }
            auto res = detail::run_fit(prob, opt);
            LeagueStrengths ls;
            ls.reference_team = ref;
            for (const auto& t : team_list)
                ls.alpha[t] = t == ref ? 0.0 : res.x[slot[t]];
            ls.home_beta = res.x[s];
            double dd;
            prob.draw_params(res.x, ls.delta0, ls.delta1, dd);
            ls.davidson_delta = dd;
            ls.converged = res.converged;
            ls.well_identified = int(idx.size()) >= prob.n_params();
            out.model.leagues[league] = std::move(ls);
            // res.value is -loglik + ridge; report the plain log-likelihood
            out.loglik += -res.value + prob.ridge * res.x.head(s).squaredNorm();
            out.converged = out.converged && res.converged;
            out.iterations += res.iterations;
            out.gradient_norm = std::max(out.gradient_norm,
                                         res.grad.lpNorm<Eigen::Infinity>());
            out.n_train += int(idx.size());
            // keep the last league's problem for diagnostics
            out.problem = std::move(prob);
            out.theta = res.x;
        }
        return out;
    }

    // pooled linear fit
    std::vector<size_t> idx;
    for (size_t g = 0; g < data.size(); ++g)
        if (data.records[g].date < as_of)
            idx.push_back(g);
    if (idx.empty())
        throw std::invalid_argument("fit_ml: empty training window");
    if (int(idx.size()) > opt.window)
        idx.erase(idx.begin(), idx.end() - opt.window);

    int base = int(spec.feature_ids.size() + spec.varying_ids.size());
    bool standardize = opt.standardize && spec.kind != SpecKind::BL;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(base);
    Eigen::VectorXd sd = Eigen::VectorXd::Ones(base);
    if (standardize) {
        Eigen::MatrixXd rows(2 * idx.size(), base);
        for (size_t r = 0; r < idx.size(); ++r) {
            rows.row(2 * r) = design_row(spec, features[idx[r]].home);
            rows.row(2 * r + 1) = design_row(spec, features[idx[r]].away);
        }
        mean = rows.colwise().mean();
        for (int k = 0; k < base; ++k) {
            double v = (rows.col(k).array() - mean[k]).square().sum() / rows.rows();
            sd[k] = v > 1e-24 ? std::sqrt(v) : 1.0;
        }
    }

    int P = base + (opt.add_intercept ? 1 : 0);
    LinearProblem prob;
    prob.draw = draw;
    prob.ordinal_param = opt.ordinal_param;
    prob.diff.resize(int(idx.size()), P);
    prob.y.reserve(idx.size());
    for (size_t r = 0; r < idx.size(); ++r) {
        Eigen::VectorXd dh = design_row(spec, features[idx[r]].home);
        Eigen::VectorXd da = design_row(spec, features[idx[r]].away);
        Eigen::VectorXd d = ((dh - mean).array() / sd.array()) -
                            ((da - mean).array() / sd.array());
        prob.diff.row(int(r)).head(base) = d;
        if (opt.add_intercept)
            prob.diff(int(r), base) = 1.0;
        prob.y.push_back(outcome(data.records[idx[r]]));
    }
    auto res = detail::run_fit(prob, opt);
    out.model.beta = res.x.head(P);
    out.model.feat_mean = mean;
    out.model.feat_sd = sd;
    out.model.has_intercept = opt.add_intercept;
    double dd;
    prob.draw_params(res.x, out.model.delta0, out.model.delta1, dd);
    out.model.davidson_delta = dd;
    out.loglik = -res.value;
    out.converged = res.converged;
    out.iterations = res.iterations;
    out.gradient_norm = res.grad.lpNorm<Eigen::Infinity>();
    out.n_train = int(idx.size());
    out.problem = std::move(prob);
    out.theta = res.x;
    return out;
}

struct Prediction {
    Triple probs;
    bool flagged = false;  // e.g. unseen team under CS
};

/// Strength difference Delta for one fixture under a fitted linear-kind model.
inline double fitted_delta(const BTModel& model, const MatchFeatures& f) {
    Eigen::VectorXd dh = design_row(model.spec, f.home);
    Eigen::VectorXd da = design_row(model.spec, f.away);
    int base = int(dh.size());
    Eigen::VectorXd mean = model.feat_mean.size() == base ? model.feat_mean
                                                          : Eigen::VectorXd::Zero(base);
    Eigen::VectorXd sd = model.feat_sd.size() == base ? model.feat_sd
                                                      : Eigen::VectorXd::Ones(base);
    Eigen::VectorXd d = ((dh - mean).array() / sd.array()) -
                        ((da - mean).array() / sd.array());
    double delta = d.dot(model.beta.head(base));
    if (model.has_intercept)
        delta += model.beta[base];
    return delta;
}

inline double fitted_delta_cs(const BTModel& model, const std::string& league,
                              const std::string& home_team, const std::string& away_team,
                              const MatchFeatures& f, bool* flagged) {
    auto it = model.leagues.find(league);
    double a_home = 0, a_away = 0, hb = 0;
    if (it == model.leagues.end()) {
        if (flagged) *flagged = true;
    } else {
        const auto& ls = it->second;
        hb = ls.home_beta;
        auto ah = ls.alpha.find(home_team);
        auto aa = ls.alpha.find(away_team);
        if (ah == ls.alpha.end() || aa == ls.alpha.end()) {
            if (flagged) *flagged = true;
        }
        a_home = ah == ls.alpha.end() ? 0.0 : ah->second;
        a_away = aa == ls.alpha.end() ? 0.0 : aa->second;
    }
    return strength_cs(a_home, hb, f.home) - strength_cs(a_away, hb, f.away);
}

/// Predicted outcome triple for one fixture.
inline Prediction predict_one(const BTModel& model, const MatchRecord& fixture,
                              const MatchFeatures& f) {
    Prediction out;
    double delta;
    double d0 = model.delta0, d1 = model.delta1, dd = model.davidson_delta;
    if (model.spec.kind == SpecKind::CS) {
        delta = fitted_delta_cs(model, fixture.league, fixture.home_team, fixture.away_team,
                                f, &out.flagged);
        auto it = model.leagues.find(fixture.league);
        if (it != model.leagues.end()) {
            d0 = it->second.delta0;
            d1 = it->second.delta1;
            dd = it->second.davidson_delta;
        }
    } else {
        delta = fitted_delta(model, f);
    }
    out.probs = model.draw == DrawKind::Ordinal ? probs_ordinal(delta, 0.0, d0, d1)
                                                : probs_davidson(delta, 0.0, dd);
    return out;
}

inline std::vector<Prediction> predict(const BTModel& model, const Dataset& fixtures,
                                       const FeatureTable& features) {
    if (fixtures.size() != features.size())
        throw std::invalid_argument("fixtures / feature table size mismatch");
    std::vector<Prediction> out;
    out.reserve(fixtures.size());
    for (size_t g = 0; g < fixtures.size(); ++g)
        out.push_back(predict_one(model, fixtures.records[g], features[g]));
    return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::json BTModel::to_json() const {
    nlohmann::json j;
    j["spec"] = to_string(spec.kind);
    j["features"] = spec.feature_ids;
    j["varying"] = spec.varying_ids;
    j["draws"] = matchpred::bt::to_string(draw);
    if (spec.kind == SpecKind::CS) {
        nlohmann::json jl = nlohmann::json::object();
        for (const auto& [league, ls] : leagues) {
            nlohmann::json e;
            e["reference_team"] = ls.reference_team;
            e["home_beta"] = ls.home_beta;
            e["delta0"] = ls.delta0;
            e["delta1"] = ls.delta1;
            e["davidson_delta"] = ls.davidson_delta;
            e["converged"] = ls.converged;
            e["well_identified"] = ls.well_identified;
            e["alpha"] = nlohmann::json::object();
            for (const auto& [team, a] : ls.alpha)
                e["alpha"][team] = a;
            jl[league] = std::move(e);
        }
        j["leagues"] = std::move(jl);
    } else {
        j["beta"] = std::vector<double>(beta.data(), beta.data() + beta.size());
        j["feat_mean"] =
            std::vector<double>(feat_mean.data(), feat_mean.data() + feat_mean.size());
        j["feat_sd"] = std::vector<double>(feat_sd.data(), feat_sd.data() + feat_sd.size());
        j["has_intercept"] = has_intercept;
        j["delta0"] = delta0;
        j["delta1"] = delta1;
        j["davidson_delta"] = davidson_delta;
    }
    return j;
}

inline BTModel BTModel::from_json(const nlohmann::json& j) {
    BTModel m;
    m.spec.kind = spec_kind_from(j.at("spec").get<std::string>());
    m.spec.feature_ids = j.at("features").get<std::vector<int>>();
    m.spec.varying_ids = j.at("varying").get<std::vector<int>>();
    m.draw = draw_kind_from(j.at("draws").get<std::string>());
    if (m.spec.kind == SpecKind::CS) {
        for (const auto& [league, e] : j.at("leagues").items()) {
            LeagueStrengths ls;
            ls.reference_team = e.at("reference_team").get<std::string>();
            ls.home_beta = e.at("home_beta").get<double>();
            ls.delta0 = e.at("delta0").get<double>();
            ls.delta1 = e.at("delta1").get<double>();
            ls.davidson_delta = e.at("davidson_delta").get<double>();
            ls.converged = e.at("converged").get<bool>();
            ls.well_identified = e.at("well_identified").get<bool>();
            for (const auto& [team, a] : e.at("alpha").items())
                ls.alpha[team] = a.get<double>();
            m.leagues[league] = std::move(ls);
        }
    } else {
        auto toVec = [](const nlohmann::json& a) {
            auto v = a.get<std::vector<double>>();
            return Eigen::Map<const Eigen::VectorXd>(v.data(), long(v.size())).eval();
        };
        m.beta = toVec(j.at("beta"));
        m.feat_mean = toVec(j.at("feat_mean"));
        m.feat_sd = toVec(j.at("feat_sd"));
        m.has_intercept = j.at("has_intercept").get<bool>();
        m.delta0 = j.at("delta0").get<double>();
        m.delta1 = j.at("delta1").get<double>();
        m.davidson_delta = j.at("davidson_delta").get<double>();
    }
    return m;
}

}  // namespace matchpred::bt
