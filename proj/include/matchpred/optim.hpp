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
#include <functional>
#include <limits>

#include <Eigen/Dense>

namespace matchpred::optim {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Objective: value and gradient at x.
using Objective = std::function<double(const Vector& x, Vector& grad)>;

struct Options {
    double grad_tol = 1e-6;   // convergence on max-norm of the gradient
    int max_iter = 500;
    double c1 = 1e-4;         // Armijo constant
    double c2 = 0.9;          // curvature constant
    int max_ls = 60;
};

struct Result {
    Vector x;
    double value = std::numeric_limits<double>::quiet_NaN();
    Vector grad;
    bool converged = false;
    int iterations = 0;
};

namespace detail {

// Strong-Wolfe line search (Nocedal & Wright, alg. 3.5/3.6) along direction p.
// Returns the accepted step; on failure returns a plain Armijo backtracking step.
inline double line_search(const Objective& f, const Vector& x, double f0, const Vector& g0,
                          const Vector& p, double& f_out, Vector& g_out,
                          const Options& opt) {
    const double dphi0 = g0.dot(p);
    Vector g(x.size());
    auto phi = [&](double a, double& dphi) {
        double v = f(x + a * p, g);
        dphi = g.dot(p);
        return v;
    };

    auto zoom = [&](double lo, double hi, double flo, double dlo) {
        for (int i = 0; i < opt.max_ls; ++i) {
            double a = 0.5 * (lo + hi);
            double da;
            double fa = phi(a, da);
            if (fa > f0 + opt.c1 * a * dphi0 || fa >= flo) {
                hi = a;
            } else {
                if (std::abs(da) <= -opt.c2 * dphi0) {
                    f_out = fa;
                    g_out = g;
                    return a;
                }
                if (da * (hi - lo) >= 0)
                    hi = lo;
                lo = a;
                flo = fa;
                dlo = da;
            }
            if (std::abs(hi - lo) < 1e-16 * (1.0 + std::abs(lo)))
                break;
        }
        double da;
        f_out = phi(lo, da);
        g_out = g;
        return lo;
    };

    double a_prev = 0.0, f_prev = f0, d_prev = dphi0;
    double a = 1.0;
    for (int i = 0; i < opt.max_ls; ++i) {
        double da;
        double fa = phi(a, da);
        if (fa > f0 + opt.c1 * a * dphi0 || (i > 0 && fa >= f_prev))
            return zoom(a_prev, a, f_prev, d_prev);
        if (std::abs(da) <= -opt.c2 * dphi0) {
            f_out = fa;
            g_out = g;
            return a;
        }
        if (da >= 0)
            return zoom(a, a_prev, fa, da);
        a_prev = a;
        f_prev = fa;
        d_prev = da;
        a *= 2.0;
        if (!std::isfinite(fa) || a > 1e10)
            break;
    }
    // fallback: backtracking to a finite Armijo point
    a = 1.0;
    for (int i = 0; i < opt.max_ls; ++i) {
        double da;
        double fa = phi(a, da);
        if (std::isfinite(fa) && fa <= f0 + opt.c1 * a * dphi0) {
            f_out = fa;
            g_out = g;
            return a;
        }
        a *= 0.5;
    }
    f_out = f0;
    g_out = g0;
    return 0.0;
}

}  // namespace detail

/// Dense BFGS minimization from x0. Stops when the gradient max-norm drops
/// below opt.grad_tol or after opt.max_iter iterations.
inline Result minimize_bfgs(const Objective& f, const Vector& x0, Options opt = {}) {
    const int n = int(x0.size());
    Result res;
    res.x = x0;
    res.grad.resize(n);
    res.value = f(res.x, res.grad);

    Matrix H = Matrix::Identity(n, n);  // inverse-Hessian approximation
    bool reset_done = false;

    for (res.iterations = 0; res.iterations < opt.max_iter; ++res.iterations) {
        if (res.grad.lpNorm<Eigen::Infinity>() < opt.grad_tol) {
            res.converged = true;
            return res;
        }
        Vector p = -(H * res.grad);
        if (p.dot(res.grad) >= 0) {  // not a descent direction: reset
            H.setIdentity();
            p = -res.grad;
        }
        double f_new;
        Vector g_new(n);
        double step = detail::line_search(f, res.x, res.value, res.grad, p, f_new, g_new, opt);
        if (step == 0.0) {
            if (reset_done) {
                // no progress possible even along steepest descent; the floor
                // on attainable gradient norm scales with the objective value
                res.converged = res.grad.lpNorm<Eigen::Infinity>() <
                                opt.grad_tol * std::max(1.0, std::abs(res.value));
                return res;
            }
            H.setIdentity();
            reset_done = true;
            continue;
        }
        reset_done = false;
        Vector s = step * p;
        Vector y = g_new - res.grad;
        double sy = s.dot(y);
        res.x += s;
        res.value = f_new;
        res.grad = g_new;
        if (sy > 1e-12 * s.norm() * y.norm()) {
            // BFGS inverse update
            double rho = 1.0 / sy;
            Matrix I = Matrix::Identity(n, n);
            H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) +
                rho * s * s.transpose();
        }
    }
    res.converged = res.grad.lpNorm<Eigen::Infinity>() < opt.grad_tol;
    return res;
}

/// Golden-section minimization of a unimodal function on [lo, hi].
inline double minimize_scalar(const std::function<double(double)>& f, double lo, double hi,
                              double tol = 1e-10) {
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - gr * (b - a);
    double d = a + gr * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol * (1.0 + std::abs(a) + std::abs(b))) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = f(d);
        }
    }
    double xm = 0.5 * (a + b);
    // endpoints may beat the interior when the minimum sits on the boundary
    double fm = f(xm), flo = f(lo), fhi = f(hi);
    if (flo <= fm && flo <= fhi)
        return lo;
    if (fhi <= fm)
        return hi;
    return xm;
}

}  // namespace matchpred::optim
