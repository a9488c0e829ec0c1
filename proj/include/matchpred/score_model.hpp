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
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <json.hpp>

#include "matchpred/features.hpp"
#include "matchpred/match_data.hpp"
#include "matchpred/optim.hpp"

namespace matchpred::hpl {

/// Hierarchical Poisson model: goals ~ Poisson(exp(eta)) with
/// eta = covariates + attack + opponent defense + seasonal AR(1) interactions.

struct Hyperparams {
    double sigma_alpha = 0.5;
    double sigma_xi = 0.5;
    double sigma_eps = 0.5;
    double rho_gamma = 0.5;
    double rho_delta = 0.5;

    void validate() const {
        if (!(sigma_alpha > 0 && sigma_xi > 0 && sigma_eps > 0))
            throw std::invalid_argument("hpl: standard deviations must be positive");
        if (!(std::abs(rho_gamma) < 1 && std::abs(rho_delta) < 1))
            throw std::invalid_argument("hpl: AR coefficients must lie in (-1, 1)");
    }
};

/// Covariates z per (match, side). Ids 1 and 2 enter as the side's own value;
/// other numeric features as own-minus-opponent differences; 14/15/16 as
/// one-hot categoricals with the first observed level dropped.
struct CovariateSpec {
    std::vector<int> feature_ids = {1, 2, 4, 6, 15, 16};
    std::vector<std::string> season_levels;   // feature 14
    std::vector<std::string> window_levels;   // feature 15
    std::vector<int> quarter_levels;          // feature 16

    int p() const {
        int n = 0;
        for (int id : feature_ids) {
            if (id == 14)
                n += std::max<int>(0, int(season_levels.size()) - 1);
            else if (id == 15)
                n += std::max<int>(0, int(window_levels.size()) - 1);
            else if (id == 16)
                n += std::max<int>(0, int(quarter_levels.size()) - 1);
            else
                n += 1;
        }
        return n;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (int id : feature_ids) {
            if (id == 14) {
                for (size_t l = 1; l < season_levels.size(); ++l)
                    out.push_back("season=" + season_levels[l]);
            } else if (id == 15) {
                for (size_t l = 1; l < window_levels.size(); ++l)
                    out.push_back("season_window=" + window_levels[l]);
            } else if (id == 16) {
                for (size_t l = 1; l < quarter_levels.size(); ++l)
                    out.push_back("quarter=" + std::to_string(quarter_levels[l]));
            } else if (id == 1 || id == 2) {
                out.push_back("z" + std::to_string(id));
            } else {
                out.push_back("z" + std::to_string(id) + "_diff");
            }
        }
        return out;
    }

    Eigen::VectorXd row(const MatchRecord& m, const MatchFeatures& f, bool home_side) const {
        const FeatureVector& own = home_side ? f.home : f.away;
        const FeatureVector& opp = home_side ? f.away : f.home;
        Eigen::VectorXd z = Eigen::VectorXd::Zero(p());
        int c = 0;
        for (int id : feature_ids) {
            if (id == 14) {
                for (size_t l = 1; l < season_levels.size(); ++l, ++c)
                    if (m.season == season_levels[l])
                        z[c] = 1;
            } else if (id == 15) {
                for (size_t l = 1; l < window_levels.size(); ++l, ++c)
                    if (own.season_window == window_levels[l])
                        z[c] = 1;
            } else if (id == 16) {
                for (size_t l = 1; l < quarter_levels.size(); ++l, ++c)
                    if (own.quarter == quarter_levels[l])
                        z[c] = 1;
            } else if (id == 1 || id == 2) {
                z[c++] = own.value(id);
            } else {
                z[c++] = own.value(id) - opp.value(id);
            }
        }
        return z;
    }
};

/// Latent-vector layout: [beta(p), alpha(T), xi(T), gamma(T*S), delta(T*S)].
struct Dims {
    int p = 0, T = 0, S = 0;
    int size() const { return p + 2 * T + 2 * T * S; }
    int beta(int k) const { return k; }
    int alpha(int t) const { return p + t; }
    int xi(int t) const { return p + T + t; }
    int gamma(int t, int s) const { return p + 2 * T + t * S + s; }
    int del(int t, int s) const { return p + 2 * T + T * S + t * S + s; }
};

/// One league's matches compiled to indices and covariate rows.
struct LeagueData {
    std::string league;
    std::vector<std::string> teams;    // sorted
    std::vector<std::string> seasons;  // in chronological (first-appearance) order
    CovariateSpec cov;
    std::vector<int> home_team, away_team, season;
    std::vector<int> y_home, y_away;
    std::vector<Eigen::VectorXd> z_home, z_away;

    int n() const { return int(home_team.size()); }
    Dims dims() const {
        return {cov.p(), int(teams.size()), std::max<int>(1, int(seasons.size()))};
    }
};

inline LeagueData build_league_data(const Dataset& data, const FeatureTable& features,
                                    const std::string& league, CovariateSpec cov = {},
                                    const std::vector<std::string>& extra_teams = {}) {
    if (data.size() != features.size())
        throw std::invalid_argument("dataset / feature table size mismatch");
    LeagueData ld;
    ld.league = league;
    std::set<std::string> teams(extra_teams.begin(), extra_teams.end());
    std::set<std::string> seen_season;
    std::set<int> quarters;
    std::set<std::string> windows;
    for (size_t g = 0; g < data.size(); ++g) {
        const auto& m = data.records[g];
        if (m.league != league)
            continue;
        teams.insert(m.home_team);
        teams.insert(m.away_team);
        if (!seen_season.count(m.season)) {
            seen_season.insert(m.season);
            ld.seasons.push_back(m.season);
        }
        quarters.insert(features[g].home.quarter);
        windows.insert(features[g].home.season_window);
        windows.insert(features[g].away.season_window);
    }
    if (teams.empty())
        throw std::invalid_argument("hpl: no matches for league " + league);
    ld.teams.assign(teams.begin(), teams.end());
    cov.season_levels = ld.seasons;
    cov.window_levels.assign(windows.begin(), windows.end());
    cov.quarter_levels.assign(quarters.begin(), quarters.end());
    ld.cov = std::move(cov);

    std::map<std::string, int> team_idx, season_idx;
    for (size_t i = 0; i < ld.teams.size(); ++i)
        team_idx[ld.teams[i]] = int(i);
    for (size_t i = 0; i < ld.seasons.size(); ++i)
        season_idx[ld.seasons[i]] = int(i);

    for (size_t g = 0; g < data.size(); ++g) {
        const auto& m = data.records[g];
        if (m.league != league)
            continue;
        ld.home_team.push_back(team_idx[m.home_team]);
        ld.away_team.push_back(team_idx[m.away_team]);
        ld.season.push_back(season_idx[m.season]);
        ld.y_home.push_back(m.home_goals);
        ld.y_away.push_back(m.away_goals);
        ld.z_home.push_back(ld.cov.row(m, features[g], true));
        ld.z_away.push_back(ld.cov.row(m, features[g], false));
    }
    return ld;
}

constexpr double kBetaVariance = 100.0;  // vague Normal(0, 10^2) on covariate effects

/// Linear predictor eta for one side of one compiled match.
inline double linear_predictor(const LeagueData& ld, const Eigen::VectorXd& phi, int g,
                               bool home_side) {
    Dims d = ld.dims();
    int own = home_side ? ld.home_team[g] : ld.away_team[g];
    int opp = home_side ? ld.away_team[g] : ld.home_team[g];
    int s = ld.season[g];
    const Eigen::VectorXd& z = home_side ? ld.z_home[g] : ld.z_away[g];
    double eta = phi.head(d.p).dot(z);
    eta += phi[d.alpha(own)] + phi[d.xi(opp)];
    eta += phi[d.gamma(own, s)] + phi[d.del(opp, s)];
    return eta;
}

namespace detail {

/// Adds the tridiagonal AR(1) precision of one length-S row at `off` and
/// returns the 0.5*sum(log variance) normalizing contribution. The initial
/// state has variance sigma_eps^2 (1 - rho^2).
inline double ar1_precision(std::vector<Eigen::Triplet<double>>& trip, int off, int S,
                            double rho, double sigma_eps) {
    double s2 = sigma_eps * sigma_eps;
    double v1 = s2 * (1.0 - rho * rho);
    trip.emplace_back(off, off, 1.0 / v1);
    for (int s = 1; s < S; ++s) {
        trip.emplace_back(off + s, off + s, 1.0 / s2);
        trip.emplace_back(off + s - 1, off + s - 1, rho * rho / s2);
        trip.emplace_back(off + s - 1, off + s, -rho / s2);
        trip.emplace_back(off + s, off + s - 1, -rho / s2);
    }
    return 0.5 * (std::log(v1) + (S - 1) * std::log(s2));
}

struct PriorBlock {
    Eigen::SparseMatrix<double> Q;
    double log_norm = 0;  // 0.5 * sum log prior variances (2*pi dropped)
};

inline PriorBlock prior_precision(const Dims& d, const Hyperparams& h) {
    h.validate();
    std::vector<Eigen::Triplet<double>> trip;
    PriorBlock out;
    for (int k = 0; k < d.p; ++k) {
        trip.emplace_back(d.beta(k), d.beta(k), 1.0 / kBetaVariance);
        out.log_norm += 0.5 * std::log(kBetaVariance);
    }
    double va = h.sigma_alpha * h.sigma_alpha, vx = h.sigma_xi * h.sigma_xi;
    for (int t = 0; t < d.T; ++t) {
        trip.emplace_back(d.alpha(t), d.alpha(t), 1.0 / va);
        trip.emplace_back(d.xi(t), d.xi(t), 1.0 / vx);
        out.log_norm += 0.5 * (std::log(va) + std::log(vx));
        out.log_norm += ar1_precision(trip, d.gamma(t, 0), d.S, h.rho_gamma, h.sigma_eps);
        out.log_norm += ar1_precision(trip, d.del(t, 0), d.S, h.rho_delta, h.sigma_eps);
    }
    out.Q.resize(d.size(), d.size());
    out.Q.setFromTriplets(trip.begin(), trip.end());
    return out;
}

/// Scatters d(eta) contributions of one (match, side) row.
template <typename F>
inline void for_each_eta_entry(const LeagueData& ld, int g, bool home_side, F&& f) {
    Dims d = ld.dims();
    int own = home_side ? ld.home_team[g] : ld.away_team[g];
    int opp = home_side ? ld.away_team[g] : ld.home_team[g];
    int s = ld.season[g];
    const Eigen::VectorXd& z = home_side ? ld.z_home[g] : ld.z_away[g];
    for (int k = 0; k < d.p; ++k)
        if (z[k] != 0)
            f(d.beta(k), z[k]);
    f(d.alpha(own), 1.0);
    f(d.xi(opp), 1.0);
    f(d.gamma(own, s), 1.0);
    f(d.del(opp, s), 1.0);
}

}  // namespace detail

/// Negative log joint density of (data, latents) given hyperparameters,
/// up to hyperparameter-independent constants.
inline double neg_log_posterior(const LeagueData& ld, const Hyperparams& hyper,
                                const Eigen::VectorXd& phi) {
    Dims d = ld.dims();
    if (phi.size() != d.size())
        throw std::invalid_argument("hpl: parameter vector has wrong length");
    auto prior = detail::prior_precision(d, hyper);
    double v = 0.5 * phi.dot(prior.Q * phi) + prior.log_norm;
    for (int g = 0; g < ld.n(); ++g) {
        for (bool home : {true, false}) {
            double eta = linear_predictor(ld, phi, g, home);
            double y = home ? ld.y_home[g] : ld.y_away[g];
            v += std::exp(eta) - y * eta;
        }
    }
    if (!std::isfinite(v))
        throw std::runtime_error("hpl: non-finite posterior density");
    return v;
}

inline Eigen::VectorXd grad_neg_log_posterior(const LeagueData& ld, const Hyperparams& hyper,
                                              const Eigen::VectorXd& phi) {
    Dims d = ld.dims();
    auto prior = detail::prior_precision(d, hyper);
    Eigen::VectorXd g = prior.Q * phi;
    for (int m = 0; m < ld.n(); ++m) {
        for (bool home : {true, false}) {
            double eta = linear_predictor(ld, phi, m, home);
            double r = std::exp(eta) - double(home ? ld.y_home[m] : ld.y_away[m]);
            detail::for_each_eta_entry(ld, m, home,
                                       [&](int idx, double w) { g[idx] += r * w; });
        }
    }
    return g;
}

/// Sparse Hessian of neg_log_posterior (the Laplace precision candidate).
inline Eigen::SparseMatrix<double> hessian_neg_log_posterior(const LeagueData& ld,
                                                             const Hyperparams& hyper,
                                                             const Eigen::VectorXd& phi) {
    Dims d = ld.dims();
    auto prior = detail::prior_precision(d, hyper);
    std::vector<Eigen::Triplet<double>> trip;
    for (int m = 0; m < ld.n(); ++m) {
        for (bool home : {true, false}) {
            double theta = std::exp(linear_predictor(ld, phi, m, home));
            std::vector<std::pair<int, double>> row;
            detail::for_each_eta_entry(ld, m, home,
                                       [&](int idx, double w) { row.emplace_back(idx, w); });
            for (const auto& [i, wi] : row)
                for (const auto& [j, wj] : row)
                    trip.emplace_back(i, j, theta * wi * wj);
        }
    }
    Eigen::SparseMatrix<double> H(d.size(), d.size());
    H.setFromTriplets(trip.begin(), trip.end());
    H += prior.Q;
    return H;
}

struct LaplaceFit {
    std::string league;
    std::vector<std::string> teams;
    std::vector<std::string> seasons;
    CovariateSpec cov;
    Hyperparams hyper;
    Eigen::VectorXd mode;
    Eigen::SparseMatrix<double> precision;
    bool converged = false;
    int iterations = 0;
    double grad_norm = 0;
    double neg_log_post = 0;
    double log_marginal = 0;  // Laplace approximation, up to a constant

    Dims dims() const {
        return {cov.p(), int(teams.size()), std::max<int>(1, int(seasons.size()))};
    }
    int team_index(const std::string& t) const {
        auto it = std::lower_bound(teams.begin(), teams.end(), t);
        return it != teams.end() && *it == t ? int(it - teams.begin()) : -1;
    }
    int season_index(const std::string& s) const {
        for (size_t i = 0; i < seasons.size(); ++i)
            if (seasons[i] == s)
                return int(i);
        return -1;
    }

    nlohmann::json to_json() const;
    static LaplaceFit from_json(const nlohmann::json& j);
    void save_precision(const std::string& path) const;
    void load_precision(const std::string& path);
};

struct FitOptions {
    double grad_tol = 1e-6;
    int max_iter = 100;
    bool empirical_bayes = false;
    int eb_sweeps = 2;
};

namespace detail {

inline double log_det_from_llt(const Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>& llt) {
    double ld = 0;
    auto L = llt.matrixL();
    for (int k = 0; k < L.rows(); ++k)
        ld += 2.0 * std::log(Eigen::SparseMatrix<double>(L).coeff(k, k));
    return ld;
}

struct MapResult {
    Eigen::VectorXd mode;
    Eigen::SparseMatrix<double> precision;
    bool converged = false;
    int iterations = 0;
    double grad_norm = 0;
    double value = 0;
    double log_det_precision = 0;
};

inline MapResult newton_map(const LeagueData& ld, const Hyperparams& hyper,
                            const FitOptions& opt, const Eigen::VectorXd& start) {
    MapResult out;
    Eigen::VectorXd phi = start;
    double f = neg_log_posterior(ld, hyper, phi);
    Eigen::VectorXd g = grad_neg_log_posterior(ld, hyper, phi);
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt;
    Eigen::SparseMatrix<double> H;
    int it = 0;
    for (; it < opt.max_iter; ++it) {
        if (g.lpNorm<Eigen::Infinity>() < opt.grad_tol) {
            out.converged = true;
            break;
        }
        H = hessian_neg_log_posterior(ld, hyper, phi);
        llt.compute(H);
        if (llt.info() != Eigen::Success) {
            // Poisson weights can underflow; regularize and retry
            Eigen::SparseMatrix<double> I(H.rows(), H.cols());
            I.setIdentity();
            llt.compute(Eigen::SparseMatrix<double>(H + 1e-8 * I));
            if (llt.info() != Eigen::Success)
                throw std::runtime_error("hpl: singular precision during Newton step");
        }
        Eigen::VectorXd step = llt.solve(-g);
        double alpha = 1.0, slope = step.dot(g);
        bool moved = false;
        for (int b = 0; b < 60; ++b) {
            Eigen::VectorXd cand = phi + alpha * step;
            double fc;
            try {
                fc = neg_log_posterior(ld, hyper, cand);
            } catch (const std::runtime_error&) {
                alpha *= 0.5;
                continue;
            }
            if (fc <= f + 1e-4 * alpha * slope) {
                phi = cand;
                f = fc;
                g = grad_neg_log_posterior(ld, hyper, phi);
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!moved) {
            out.converged =
                g.lpNorm<Eigen::Infinity>() < opt.grad_tol * std::max(1.0, std::abs(f));
            break;
        }
    }
    if (it == opt.max_iter)
        out.converged = g.lpNorm<Eigen::Infinity>() < opt.grad_tol;
    out.mode = phi;
    out.iterations = it;
    out.grad_norm = g.lpNorm<Eigen::Infinity>();
    out.value = f;
    out.precision = hessian_neg_log_posterior(ld, hyper, phi);
    llt.compute(out.precision);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("hpl: precision not positive definite at the mode");
    out.log_det_precision = log_det_from_llt(llt);
    return out;
}

/// Log hyperparameter prior on the optimizer scale: log-Gamma(1, 5e-5) on the
/// three precisions (with the log-transform Jacobian) and a vague Normal on
/// atanh(rho).
inline double log_hyper_prior(const Hyperparams& h) {
    auto lp_prec = [](double sigma) {
        double tau = 1.0 / (sigma * sigma);
        return -5e-5 * tau + std::log(tau);  // Gamma(1, 5e-5) density + d tau/d log-tau
    };
    auto lp_rho = [](double rho) {
        double r = std::atanh(rho);
        return -0.5 * r * r / 100.0;
    };
    return lp_prec(h.sigma_alpha) + lp_prec(h.sigma_xi) + lp_prec(h.sigma_eps) +
           lp_rho(h.rho_gamma) + lp_rho(h.rho_delta);
}

}  // namespace detail

/// Laplace-approximate log marginal likelihood of the hyperparameters
/// (up to constants), including the hyperprior when `with_prior`.
inline double log_marginal(const LeagueData& ld, const Hyperparams& hyper,
                           const FitOptions& opt = {}, bool with_prior = true) {
    Dims d = ld.dims();
    auto map = detail::newton_map(ld, hyper, opt, Eigen::VectorXd::Zero(d.size()));
    double lm = -map.value - 0.5 * map.log_det_precision;
    if (with_prior)
        lm += detail::log_hyper_prior(hyper);
    return lm;
}

/// MAP fit with a Laplace approximation at the mode. With empirical Bayes the
/// hyperparameters first maximize the Laplace marginal by coordinate descent
/// on transformed scales.
inline LaplaceFit fit_map(const Dataset& data, const FeatureTable& features,
                          const std::string& league, const Hyperparams& hyper0 = {},
                          const FitOptions& opt = {}, const CovariateSpec& cov = {},
                          const std::vector<std::string>& extra_teams = {}) {
    LeagueData ld = build_league_data(data, features, league, cov, extra_teams);
    Hyperparams hyper = hyper0;
    hyper.validate();

    if (opt.empirical_bayes) {
        // coordinate descent over (log sigma_alpha, log sigma_xi, log sigma_eps,
        // atanh rho_gamma, atanh rho_delta)
        auto apply = [](Hyperparams h, int coord, double x) {
            switch (coord) {
                case 0: h.sigma_alpha = std::exp(x); break;
                case 1: h.sigma_xi = std::exp(x); break;
                case 2: h.sigma_eps = std::exp(x); break;
                case 3: h.rho_gamma = std::tanh(x); break;
                default: h.rho_delta = std::tanh(x); break;
            }
            return h;
        };
        auto current = [](const Hyperparams& h, int coord) {
            switch (coord) {
                case 0: return std::log(h.sigma_alpha);
                case 1: return std::log(h.sigma_xi);
                case 2: return std::log(h.sigma_eps);
                case 3: return std::atanh(h.rho_gamma);
                default: return std::atanh(h.rho_delta);
            }
        };
        for (int sweep = 0; sweep < opt.eb_sweeps; ++sweep) {
            for (int coord = 0; coord < 5; ++coord) {
                double x0 = current(hyper, coord);
                double best = optim::minimize_scalar(
                    [&](double x) { return -log_marginal(ld, apply(hyper, coord, x), opt); },
                    x0 - 2.0, x0 + 2.0, 1e-4);
                hyper = apply(hyper, coord, best);
            }
        }
    }

    Dims d = ld.dims();
    auto map = detail::newton_map(ld, hyper, opt, Eigen::VectorXd::Zero(d.size()));
    LaplaceFit out;
    out.league = ld.league;
    out.teams = ld.teams;
    out.seasons = ld.seasons;
    out.cov = ld.cov;
    out.hyper = hyper;
    out.mode = map.mode;
    out.precision = map.precision;
    out.converged = map.converged;
    out.iterations = map.iterations;
    out.grad_norm = map.grad_norm;
    out.neg_log_post = map.value;
    out.log_marginal =
        -map.value - 0.5 * map.log_det_precision + detail::log_hyper_prior(hyper);
    return out;
}

struct ScoreSamples {
    std::vector<std::pair<int, int>> goals;  // (home, away)
    bool flagged = false;                    // unknown team or season
    uint64_t seed = 0;
};

/// Simulates goal-count pairs from the Laplace predictive distribution.
inline ScoreSamples sample_scores(const LaplaceFit& fit, const MatchRecord& fixture,
                                  const MatchFeatures& f, int n = 1000, uint64_t seed = 1) {
    if (n < 1)
        throw std::invalid_argument("hpl: need at least one sample");
    Dims d = fit.dims();
    ScoreSamples out;
    out.seed = seed;

    int h = fit.team_index(fixture.home_team);
    int a = fit.team_index(fixture.away_team);
    int s = fit.season_index(fixture.season);
    if (h < 0 || a < 0)
        out.flagged = true;
    if (s < 0) {
        s = d.S - 1;  // carry the latest season's interactions forward
        if (!fit.seasons.empty() && fixture.season != fit.seasons.back())
            out.flagged = true;
    }

    // entries of the latent vector the fixture's predictors touch
    std::vector<int> need;
    for (int k = 0; k < d.p; ++k)
        need.push_back(d.beta(k));
    for (int t : {h, a}) {
        if (t < 0)
            continue;
        need.push_back(d.alpha(t));
        need.push_back(d.xi(t));
        need.push_back(d.gamma(t, s));
        need.push_back(d.del(t, s));
    }
    int q = int(need.size());

    Eigen::MatrixXd cov_sel(q, q);
    Eigen::VectorXd mean_sel(q);
    if (q > 0) {
        Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(fit.precision);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("hpl: precision not positive definite");
        Eigen::MatrixXd cols(d.size(), q);
        for (int c = 0; c < q; ++c) {
            Eigen::VectorXd e = Eigen::VectorXd::Zero(d.size());
            e[need[c]] = 1.0;
            cols.col(c) = llt.solve(e);
        }
        for (int r = 0; r < q; ++r)
            for (int c = 0; c < q; ++c)
                cov_sel(r, c) = cols(need[r], c);
        cov_sel = 0.5 * (cov_sel + cov_sel.transpose());
        for (int c = 0; c < q; ++c)
            mean_sel[c] = fit.mode[need[c]];
    }
    Eigen::MatrixXd chol = Eigen::MatrixXd::Zero(q, q);
    if (q > 0) {
        Eigen::LLT<Eigen::MatrixXd> cl(cov_sel);
        if (cl.info() != Eigen::Success) {
            Eigen::LLT<Eigen::MatrixXd> cl2(
                cov_sel + 1e-12 * Eigen::MatrixXd::Identity(q, q));
            if (cl2.info() != Eigen::Success)
                throw std::runtime_error("hpl: predictive covariance not positive definite");
            chol = cl2.matrixL();
        } else {
            chol = cl.matrixL();
        }
    }

    Eigen::VectorXd zrow_h = fit.cov.row(fixture, f, true);
    Eigen::VectorXd zrow_a = fit.cov.row(fixture, f, false);
    std::map<int, int> pos;  // latent index -> position in the selected block
    for (int c = 0; c < q; ++c)
        pos[need[c]] = c;
    auto eta_of = [&](const Eigen::VectorXd& draw, bool home_side) {
        double eta = 0;
        for (int k = 0; k < d.p; ++k)
            eta += draw[pos.at(d.beta(k))] * (home_side ? zrow_h[k] : zrow_a[k]);
        int own = home_side ? h : a;
        int opp = home_side ? a : h;
        if (own >= 0)
            eta += draw[pos.at(d.alpha(own))] + draw[pos.at(d.gamma(own, s))];
        if (opp >= 0)
            eta += draw[pos.at(d.xi(opp))] + draw[pos.at(d.del(opp, s))];
        return eta;
    };

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> stdnorm(0.0, 1.0);
    out.goals.reserve(n);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd z(q);
        for (int c = 0; c < q; ++c)
            z[c] = stdnorm(rng);
        Eigen::VectorXd draw = mean_sel + chol * z;
        double th1 = std::exp(eta_of(draw, true));
        double th2 = std::exp(eta_of(draw, false));
        std::poisson_distribution<int> p1(th1), p2(th2);
        out.goals.emplace_back(p1(rng), p2(rng));
    }
    return out;
}

/// Empirical (win, draw, loss) frequencies from sampled scores.
inline std::array<double, 3> outcome_probs(const ScoreSamples& samples) {
    if (samples.goals.empty())
        throw std::invalid_argument("hpl: no samples");
    double n = double(samples.goals.size());
    std::array<double, 3> out = {0, 0, 0};
    for (const auto& [y1, y2] : samples.goals) {
        if (y1 > y2)
            out[0] += 1;
        else if (y1 == y2)
            out[1] += 1;
        else
            out[2] += 1;
    }
    out[0] /= n;
    out[1] /= n;
    out[2] /= n;
    return out;
}

/// Root mean squared error over aligned predicted/actual goal sequences.
inline double rmse_scores(const std::vector<double>& predicted,
                          const std::vector<double>& actual) {
    if (predicted.size() != actual.size())
        throw std::invalid_argument("rmse_scores: length mismatch");
    if (predicted.empty())
        throw std::invalid_argument("rmse_scores: empty input");
    double s = 0;
    for (size_t i = 0; i < predicted.size(); ++i) {
        double d = predicted[i] - actual[i];
        s += d * d;
    }
    return std::sqrt(s / double(predicted.size()));
}

/// Mean sampled goals (home, away) for a fixture's samples.
inline std::pair<double, double> mean_goals(const ScoreSamples& samples) {
    if (samples.goals.empty())
        throw std::invalid_argument("hpl: no samples");
    double h = 0, a = 0;
    for (const auto& [y1, y2] : samples.goals) {
        h += y1;
        a += y2;
    }
    double n = double(samples.goals.size());
    return {h / n, a / n};
}

// ---------------------------------------------------------------------------
// Serialization: JSON for everything dense, triplet binary for the precision.
// ---------------------------------------------------------------------------

inline nlohmann::json LaplaceFit::to_json() const {
    nlohmann::json j;
    j["league"] = league;
    j["teams"] = teams;
    j["seasons"] = seasons;
    j["covariates"] = {{"feature_ids", cov.feature_ids},
                       {"season_levels", cov.season_levels},
                       {"window_levels", cov.window_levels},
                       {"quarter_levels", cov.quarter_levels}};
    j["hyper"] = {{"sigma_alpha", hyper.sigma_alpha},
                  {"sigma_xi", hyper.sigma_xi},
                  {"sigma_eps", hyper.sigma_eps},
                  {"rho_gamma", hyper.rho_gamma},
                  {"rho_delta", hyper.rho_delta}};
    j["mode"] = std::vector<double>(mode.data(), mode.data() + mode.size());
    j["converged"] = converged;
    j["iterations"] = iterations;
    j["grad_norm"] = grad_norm;
    j["neg_log_post"] = neg_log_post;
    j["log_marginal"] = log_marginal;
    return j;
}

inline LaplaceFit LaplaceFit::from_json(const nlohmann::json& j) {
    LaplaceFit f;
    f.league = j.at("league").get<std::string>();
    f.teams = j.at("teams").get<std::vector<std::string>>();
    f.seasons = j.at("seasons").get<std::vector<std::string>>();
    const auto& c = j.at("covariates");
    f.cov.feature_ids = c.at("feature_ids").get<std::vector<int>>();
    f.cov.season_levels = c.at("season_levels").get<std::vector<std::string>>();
    f.cov.window_levels = c.at("window_levels").get<std::vector<std::string>>();
    f.cov.quarter_levels = c.at("quarter_levels").get<std::vector<int>>();
    const auto& h = j.at("hyper");
    f.hyper.sigma_alpha = h.at("sigma_alpha").get<double>();
    f.hyper.sigma_xi = h.at("sigma_xi").get<double>();
    f.hyper.sigma_eps = h.at("sigma_eps").get<double>();
    f.hyper.rho_gamma = h.at("rho_gamma").get<double>();
    f.hyper.rho_delta = h.at("rho_delta").get<double>();
    auto m = j.at("mode").get<std::vector<double>>();
    f.mode = Eigen::Map<const Eigen::VectorXd>(m.data(), long(m.size()));
    f.converged = j.at("converged").get<bool>();
    f.iterations = j.at("iterations").get<int>();
    f.grad_norm = j.at("grad_norm").get<double>();
    f.neg_log_post = j.at("neg_log_post").get<double>();
    f.log_marginal = j.at("log_marginal").get<double>();
    return f;
}

inline void LaplaceFit::save_precision(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write file: " + path);
    int64_t dim = precision.rows(), nnz = precision.nonZeros();
    out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
    out.write(reinterpret_cast<const char*>(&nnz), sizeof(nnz));
    for (int k = 0; k < precision.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(precision, k); it; ++it) {
            int64_t r = it.row(), c = it.col();
            double v = it.value();
            out.write(reinterpret_cast<const char*>(&r), sizeof(r));
            out.write(reinterpret_cast<const char*>(&c), sizeof(c));
            out.write(reinterpret_cast<const char*>(&v), sizeof(v));
        }
    }
}

inline void LaplaceFit::load_precision(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot read file: " + path);
    int64_t dim = 0, nnz = 0;
    in.read(reinterpret_cast<char*>(&dim), sizeof(dim));
    in.read(reinterpret_cast<char*>(&nnz), sizeof(nnz));
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(size_t(nnz));
    for (int64_t k = 0; k < nnz; ++k) {
        int64_t r = 0, c = 0;
        double v = 0;
        in.read(reinterpret_cast<char*>(&r), sizeof(r));
        in.read(reinterpret_cast<char*>(&c), sizeof(c));
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        trip.emplace_back(int(r), int(c), v);
    }
    if (!in)
        throw std::runtime_error("truncated precision file: " + path);
    precision.resize(int(dim), int(dim));
    precision.setFromTriplets(trip.begin(), trip.end());
}

}  // namespace matchpred::hpl
