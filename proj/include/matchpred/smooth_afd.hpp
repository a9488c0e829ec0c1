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
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "matchpred/bspline.hpp"
#include "matchpred/bt_family.hpp"
#include "matchpred/features.hpp"
#include "matchpred/match_data.hpp"
#include "matchpred/optim.hpp"

namespace matchpred::afd {

/// Request for one additive term: a smooth in the home-away difference of a
/// Table-1 feature, optionally interacting with the home team's matches played.
struct TermRequest {
    int feature_id = 0;
    bool interacts_with_m = false;
};

/// One fitted/buildable smooth term. Univariate terms use an n_x B-spline
/// basis in the feature difference; interacting terms use the tensor product
/// with an n_m basis in matches played.
struct SmoothTerm {
    int feature_id = 0;
    bool interacts_with_m = false;
    int degree = 3;
    std::vector<double> knots_x;
    double x_lo = 0, x_hi = 0;
    std::vector<double> knots_m;  // empty unless interacting
    double m_lo = 0, m_hi = 0;

    int n_x() const { return int(knots_x.size()) - degree - 1; }
    int n_m() const {
        return knots_m.empty() ? 1 : int(knots_m.size()) - degree - 1;
    }
    int n_coef() const { return n_x() * n_m(); }

    /// Design row: B_x(d) for univariate terms, B_x(d) (x) B_m(m) for tensors.
    Eigen::VectorXd row(double d, double m) const {
        Eigen::VectorXd bx = spline::basis_row(knots_x, degree, x_lo, x_hi, d);
        if (knots_m.empty())
            return bx;
        Eigen::VectorXd bm = spline::basis_row(knots_m, degree, m_lo, m_hi, m);
        Eigen::VectorXd out(bx.size() * bm.size());
        for (int i = 0; i < bx.size(); ++i)
            for (int j = 0; j < bm.size(); ++j)
                out[i * int(bm.size()) + j] = bx[i] * bm[j];
        return out;
    }

    /// Second-difference penalty; tensors penalize both margins:
    /// P_x (x) I + I (x) P_m.
    Eigen::MatrixXd penalty() const {
        Eigen::MatrixXd px = spline::second_difference_penalty(n_x());
        if (knots_m.empty())
            return px;
        Eigen::MatrixXd pm = spline::second_difference_penalty(n_m());
        int nx = n_x(), nm = n_m();
        Eigen::MatrixXd P = Eigen::MatrixXd::Zero(nx * nm, nx * nm);
        for (int i = 0; i < nx; ++i)
            for (int k = 0; k < nx; ++k)
                for (int j = 0; j < nm; ++j)
                    P(i * nm + j, k * nm + j) += px(i, k);
        for (int j = 0; j < nm; ++j)
            for (int l = 0; l < nm; ++l)
                for (int i = 0; i < nx; ++i)
                    P(i * nm + j, i * nm + l) += pm(j, l);
        return P;
    }
};

struct BuildOptions {
    int n_x = 10;  // basis size in the feature difference
    int n_m = 5;   // basis size in matches played (tensor terms)
    int degree = 3;
};

struct AFDDesign {
    std::vector<SmoothTerm> terms;
    std::vector<int> offsets;          // first column of each term
    Eigen::MatrixXd A;                 // n x P design
    Eigen::MatrixXd P;                 // P x P block-diagonal penalty
    std::vector<int> dropped_features; // zero-variance differences
    std::vector<std::string> warnings;

    int p() const { return int(A.cols()); }
};

namespace detail {

inline double feature_diff(const MatchFeatures& f, int id) {
    return f.home.value(id) - f.away.value(id);
}

}  // namespace detail

/// Builds the additive design over feature differences. Zero-variance
/// differences drop their term; sparse differences shrink the basis.
inline AFDDesign build_design(const Dataset& data, const FeatureTable& features,
                              const std::vector<TermRequest>& requests,
                              const BuildOptions& opt = {}) {
    if (data.size() != features.size())
        throw std::invalid_argument("dataset / feature table size mismatch");
    if (data.size() == 0)
        throw std::invalid_argument("build_design: no matches");
    AFDDesign out;
    int n = int(data.size());

    double m_lo = 0, m_hi = 1;
    for (const auto& f : features)
        m_hi = std::max(m_hi, f.home.matches_played);

    for (const auto& req : requests) {
        std::set<double> distinct;
        double lo = 0, hi = 0;
        bool first = true;
        for (const auto& f : features) {
            double d = detail::feature_diff(f, req.feature_id);
            distinct.insert(d);
            lo = first ? d : std::min(lo, d);
            hi = first ? d : std::max(hi, d);
            first = false;
        }
        if (distinct.size() < 2) {
            out.dropped_features.push_back(req.feature_id);
            out.warnings.push_back("feature " + std::to_string(req.feature_id) +
                                   ": constant difference, term dropped");
            continue;
        }
        SmoothTerm term;
        term.feature_id = req.feature_id;
        term.interacts_with_m = req.interacts_with_m;
        term.degree = opt.degree;
        int nx = opt.n_x;
        if (int(distinct.size()) < nx) {
            nx = std::max(opt.degree + 1, int(distinct.size()));
            out.warnings.push_back("feature " + std::to_string(req.feature_id) + ": only " +
                                   std::to_string(distinct.size()) +
                                   " distinct differences, basis reduced to " +
                                   std::to_string(nx));
        }
        term.x_lo = lo;
        term.x_hi = hi;
        term.knots_x = spline::uniform_knots(lo, hi, nx, opt.degree);
        if (req.interacts_with_m) {
            term.m_lo = m_lo;
            term.m_hi = m_hi;
            term.knots_m = spline::uniform_knots(m_lo, m_hi, opt.n_m, opt.degree);
        }
        out.terms.push_back(std::move(term));
    }
    if (out.terms.empty())
        throw std::invalid_argument("build_design: all terms dropped");

    int P = 0;
    for (const auto& t : out.terms) {
        out.offsets.push_back(P);
        P += t.n_coef();
    }
    out.A.resize(n, P);
    out.P = Eigen::MatrixXd::Zero(P, P);
    for (size_t k = 0; k < out.terms.size(); ++k) {
        const auto& t = out.terms[k];
        int off = out.offsets[k];
        for (int g = 0; g < n; ++g) {
            double d = detail::feature_diff(features[g], t.feature_id);
            out.A.row(g).segment(off, t.n_coef()) =
                t.row(d, features[g].home.matches_played);
        }
        out.P.block(off, off, t.n_coef(), t.n_coef()) = t.penalty();
    }
    return out;
}

/// Fitted additive-smooth model. Each smooth is centered (coefficients
/// orthogonal to the constant); the removed levels live in the intercept.
struct AFDModel {
    std::vector<SmoothTerm> terms;
    std::vector<Eigen::VectorXd> coefs;  // per term, centered
    double intercept = 0;
    double delta0 = 0, delta1 = 1;       // ordinal thresholds
    double k = 0;                        // selected smoothing parameter
    std::vector<std::pair<double, double>> gcv_trace;  // (k, GCV)
    std::vector<int> dropped_features;

    /// Strength difference for one fixture.
    double delta(const MatchFeatures& f) const {
        double d = intercept;
        for (size_t t = 0; t < terms.size(); ++t)
            d += terms[t]
                     .row(detail::feature_diff(f, terms[t].feature_id),
                          f.home.matches_played)
                     .dot(coefs[t]);
        return d;
    }

    nlohmann::json to_json() const;
    static AFDModel from_json(const nlohmann::json& j);
};

struct FitPenalizedOptions {
    std::vector<double> k_grid;  // empty: default 17-point log grid 1e-4..1e4
    BuildOptions build;
    double grad_tol = 1e-6;
    int max_iter = 500;
    double ridge = 1e-8;  // resolves inter-term constant confounding
};

inline std::vector<double> default_k_grid() {
    std::vector<double> grid;
    for (int i = 0; i < 17; ++i)
        grid.push_back(std::pow(10.0, -4.0 + 8.0 * i / 16.0));
    return grid;
}

struct AFDFitResult {
    AFDModel model;
    double loglik = 0;
    double gcv = 0;
    double edf = 0;                 // total, spline coefficients only
    std::vector<double> term_edf;
    bool converged = false;
    int iterations = 0;
    // at the selected k, for diagnostics and pointwise bands
    AFDDesign design;
    Eigen::VectorXd theta;          // uncentered spline coefs + draw parameter
    Eigen::MatrixXd posterior_cov;  // (H + 2kP + ridge)^-1 over all parameters
};

namespace detail {

/// Penalized fit at one smoothing value: minimizes -loglik + k th'P th + ridge.
struct SingleFit {
    Eigen::VectorXd theta;
    double loglik = 0;
    double gcv = 0;
    double edf_total = 0;           // all parameters, enters GCV
    std::vector<double> term_edf;
    bool converged = false;
    int iterations = 0;
    Eigen::MatrixXd penalized_info;  // H + 2kP + ridge
    Eigen::MatrixXd info;            // H alone
};

inline SingleFit fit_at_k(const AFDDesign& design, const bt::LinearProblem& prob, double k,
                          const FitPenalizedOptions& opt, const Eigen::VectorXd& start) {
    int P = design.p();
    auto value_grad = [&](const Eigen::VectorXd& th, Eigen::VectorXd& g) {
        double v = -bt::loglik(prob, th).value;
        g = -bt::grad_loglik(prob, th);
        Eigen::VectorXd s = th.head(P);
        Eigen::VectorXd Ps = design.P * s;
        v += k * s.dot(Ps) + opt.ridge * s.squaredNorm();
        g.head(P) += 2.0 * k * Ps + 2.0 * opt.ridge * s;
        return v;
    };
    auto penalized_hessian = [&](const Eigen::VectorXd& th) {
        Eigen::MatrixXd M = bt::observed_information(prob, th);
        M.topLeftCorner(P, P) += 2.0 * k * design.P;
        M.topLeftCorner(P, P) += 2.0 * opt.ridge * Eigen::MatrixXd::Identity(P, P);
        return M;
    };

    // damped Newton: the penalty can make the objective arbitrarily
    // ill-conditioned (large k), which quasi-Newton handles poorly
    SingleFit out;
    Eigen::VectorXd th = start;
    Eigen::VectorXd g(th.size());
    double f = value_grad(th, g);
    Eigen::MatrixXd M;
    bool have_m = false;
    int it = 0;
    for (; it < opt.max_iter; ++it) {
        double gnorm = g.lpNorm<Eigen::Infinity>();
        if (gnorm < opt.grad_tol * std::max(1.0, std::abs(f))) {
            out.converged = true;
            break;
        }
        M = penalized_hessian(th);
        have_m = true;
        Eigen::VectorXd step;
        double mu = 0.0;
        for (int d = 0; d < 30; ++d) {
            Eigen::MatrixXd Md = M;
            if (mu > 0)
                Md += mu * Eigen::MatrixXd::Identity(M.rows(), M.cols());
            Eigen::LDLT<Eigen::MatrixXd> ldlt(Md);
            step = ldlt.solve(-g);
            if (ldlt.info() == Eigen::Success && step.dot(g) < 0)
                break;
            mu = mu == 0 ? 1e-6 * std::max(1.0, M.diagonal().maxCoeff()) : 10 * mu;
        }
        // backtracking Armijo
        double alpha = 1.0;
        double slope = step.dot(g);
        bool moved = false;
        Eigen::VectorXd g_new(th.size());
        for (int b = 0; b < 60; ++b) {
            Eigen::VectorXd cand = th + alpha * step;
            double fc = value_grad(cand, g_new);
            if (std::isfinite(fc) && fc <= f + 1e-4 * alpha * slope) {
                th = cand;
                f = fc;
                g = g_new;
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
        have_m = false;
    }
    if (it == opt.max_iter)
        out.converged =
            g.lpNorm<Eigen::Infinity>() < opt.grad_tol * std::max(1.0, std::abs(f));

    out.theta = th;
    out.iterations = it;
    out.loglik = bt::loglik(prob, th).value;

    Eigen::MatrixXd H = bt::observed_information(prob, th);
    if (!have_m) {
        M = H;
        M.topLeftCorner(P, P) += 2.0 * k * design.P;
        M.topLeftCorner(P, P) += 2.0 * opt.ridge * Eigen::MatrixXd::Identity(P, P);
    }
    Eigen::MatrixXd F = M.ldlt().solve(H);  // edf matrix
    out.edf_total = F.trace();
    out.term_edf.resize(design.terms.size());
    for (size_t t = 0; t < design.terms.size(); ++t) {
        double e = 0;
        for (int c = 0; c < design.terms[t].n_coef(); ++c)
            e += F(design.offsets[t] + c, design.offsets[t] + c);
        out.term_edf[t] = e;
    }
    double n = double(prob.n());
    double deviance = -2.0 * out.loglik;
    double denom = n - out.edf_total;
    out.gcv = denom > 0 ? n * deviance / (denom * denom)
                        : std::numeric_limits<double>::infinity();
    out.penalized_info = std::move(M);
    out.info = std::move(H);
    return out;
}

}  // namespace detail

/// Penalized ML over a shared smoothing parameter chosen by GCV. Ordinal draw
/// rule only; the threshold delta0 is fixed at 0 and the smooths carry the
/// location, re-expressed after the fit as centered smooths plus an intercept.
inline AFDFitResult fit_penalized(const Dataset& data, const FeatureTable& features,
                                  const std::vector<TermRequest>& requests,
                                  const FitPenalizedOptions& opt = {}) {
    auto design = build_design(data, features, requests, opt.build);
    std::vector<double> grid = opt.k_grid.empty() ? default_k_grid() : opt.k_grid;
    for (double k : grid)
        if (!(k > 0))
            throw std::invalid_argument("k_grid entries must be positive");
    std::sort(grid.begin(), grid.end(), std::greater<>());  // smoothest first

    bt::LinearProblem prob;
    prob.draw = bt::DrawKind::Ordinal;
    prob.ordinal_param = bt::OrdinalParam::FixDelta0;
    prob.diff = design.A;
    prob.y.reserve(data.size());
    for (const auto& m : data.records)
        prob.y.push_back(outcome(m));

    Eigen::VectorXd start = Eigen::VectorXd::Zero(prob.n_params());
    std::vector<std::pair<double, double>> trace;
    bool have_best = false;
    detail::SingleFit best;
    double best_k = grid.front();
    bool any_converged = false;
    int total_iters = 0;
    for (double k : grid) {
        auto fit = detail::fit_at_k(design, prob, k, opt, start);
        total_iters += fit.iterations;
        if (fit.converged)
            start = fit.theta;  // warm start the next (rougher) fit
        any_converged = any_converged || fit.converged;
        trace.emplace_back(k, fit.gcv);
        if (fit.converged && (!have_best || fit.gcv < best.gcv)) {
            best = fit;
            best_k = k;
            have_best = true;
        }
    }
    if (!any_converged) {
        std::string diag = "fit_penalized: no smoothing value converged; GCV trace:";
        for (auto& [k, g] : trace)
            diag += " (" + std::to_string(k) + ", " + std::to_string(g) + ")";
        throw std::runtime_error(diag);
    }
    std::sort(trace.begin(), trace.end());

    AFDFitResult out;
    out.loglik = best.loglik;
    out.gcv = best.gcv;
    out.term_edf = best.term_edf;
    out.edf = 0;
    for (double e : out.term_edf)
        out.edf += e;
    out.converged = true;
    out.iterations = total_iters;
    out.theta = best.theta;
    out.posterior_cov =
        best.penalized_info.ldlt().solve(Eigen::MatrixXd::Identity(
            best.penalized_info.rows(), best.penalized_info.cols()));

    AFDModel model;
    model.terms = design.terms;
    model.dropped_features = design.dropped_features;
    model.k = best_k;
    model.gcv_trace = trace;
    double d0, d1, dd;
    prob.draw_params(best.theta, d0, d1, dd);
    model.delta0 = d0;
    model.delta1 = d1;
    // center each smooth: the bases sum to one pointwise, so subtracting the
    // coefficient mean moves a pure constant into the intercept
    for (size_t t = 0; t < design.terms.size(); ++t) {
        Eigen::VectorXd c =
            best.theta.segment(design.offsets[t], design.terms[t].n_coef());
        double mean = c.mean();
        model.intercept += mean;
        model.coefs.push_back(c.array() - mean);
    }
    out.model = std::move(model);
    out.design = std::move(design);
    return out;
}

/// Predicted outcome triples for fixtures under a fitted AFD model.
inline std::vector<bt::Triple> predict_afd(const AFDModel& model, const FeatureTable& features) {
    std::vector<bt::Triple> out;
    out.reserve(features.size());
    for (const auto& f : features)
        out.push_back(bt::probs_ordinal(model.delta(f), 0.0, model.delta0, model.delta1));
    return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::json AFDModel::to_json() const {
    nlohmann::json jt = nlohmann::json::array();
    for (size_t t = 0; t < terms.size(); ++t) {
        const auto& s = terms[t];
        nlohmann::json e;
        e["feature_id"] = s.feature_id;
        e["interacts_with_m"] = s.interacts_with_m;
        e["degree"] = s.degree;
        e["knots_x"] = s.knots_x;
        e["x_lo"] = s.x_lo;
        e["x_hi"] = s.x_hi;
        e["knots_m"] = s.knots_m;
        e["m_lo"] = s.m_lo;
        e["m_hi"] = s.m_hi;
        e["coefs"] = std::vector<double>(coefs[t].data(), coefs[t].data() + coefs[t].size());
        jt.push_back(std::move(e));
    }
    nlohmann::json j;
    j["terms"] = std::move(jt);
    j["intercept"] = intercept;
    j["delta0"] = delta0;
    j["delta1"] = delta1;
    j["k"] = k;
    j["dropped_features"] = dropped_features;
    nlohmann::json tr = nlohmann::json::array();
    for (auto& [kk, g] : gcv_trace)
        tr.push_back({{"k", kk}, {"gcv", g}});
    j["gcv_trace"] = std::move(tr);
    return j;
}

inline AFDModel AFDModel::from_json(const nlohmann::json& j) {
    AFDModel m;
    for (const auto& e : j.at("terms")) {
        SmoothTerm s;
        s.feature_id = e.at("feature_id").get<int>();
        s.interacts_with_m = e.at("interacts_with_m").get<bool>();
        s.degree = e.at("degree").get<int>();
        s.knots_x = e.at("knots_x").get<std::vector<double>>();
        s.x_lo = e.at("x_lo").get<double>();
        s.x_hi = e.at("x_hi").get<double>();
        s.knots_m = e.at("knots_m").get<std::vector<double>>();
        s.m_lo = e.at("m_lo").get<double>();
        s.m_hi = e.at("m_hi").get<double>();
        auto c = e.at("coefs").get<std::vector<double>>();
        m.coefs.push_back(Eigen::Map<const Eigen::VectorXd>(c.data(), long(c.size())));
        m.terms.push_back(std::move(s));
    }
    m.intercept = j.at("intercept").get<double>();
    m.delta0 = j.at("delta0").get<double>();
    m.delta1 = j.at("delta1").get<double>();
    m.k = j.at("k").get<double>();
    m.dropped_features = j.at("dropped_features").get<std::vector<int>>();
    for (const auto& e : j.at("gcv_trace"))
        m.gcv_trace.emplace_back(e.at("k").get<double>(), e.at("gcv").get<double>());
    return m;
}

}  // namespace matchpred::afd
