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
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace matchpred::spline {

/// Uniform (unclamped) knot vector for n_basis functions of the given degree
/// over [lo, hi]. With uniform spacing a coefficient sequence linear in the
/// basis index represents a linear function, so difference penalties have the
/// usual polynomial null space.
inline std::vector<double> uniform_knots(double lo, double hi, int n_basis, int degree) {
    if (n_basis < degree + 1)
        throw std::invalid_argument("n_basis must be at least degree+1");
    if (!(hi > lo))
        throw std::invalid_argument("knot range must be non-degenerate");
    double h = (hi - lo) / (n_basis - degree);
    std::vector<double> t(n_basis + degree + 1);
    for (size_t i = 0; i < t.size(); ++i)
        t[i] = lo + (double(i) - degree) * h;
    return t;
}

namespace detail {

// de Boor basis-function evaluation: the degree+1 values that are non-zero
// at x, written into B at their global positions.
inline void bspline_span(const std::vector<double>& t, int deg, double x, Eigen::VectorXd& B) {
    int nb = int(t.size()) - deg - 1;
    // knot span mu with t[mu] <= x < t[mu+1], clamped to the basis support
    int mu = int(std::upper_bound(t.begin(), t.end(), x) - t.begin()) - 1;
    mu = std::clamp(mu, deg, nb - 1);
    std::vector<double> N(deg + 1, 0.0);
    N[0] = 1.0;
    for (int j = 1; j <= deg; ++j) {
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            double tr = t[mu + r + 1], tl = t[mu + r + 1 - j];
            double a = N[r] / (tr - tl);
            N[r] = saved + (tr - x) * a;
            saved = (x - tl) * a;
        }
        N[j] = saved;
    }
    B.setZero();
    for (int r = 0; r <= deg; ++r)
        B[mu - deg + r] = N[r];
}

}  // namespace detail

/// All basis-function values at x (x inside the support [t[degree], t[n_basis]]).
inline Eigen::VectorXd bspline_all(const std::vector<double>& t, int degree, double x) {
    Eigen::VectorXd B(int(t.size()) - degree - 1);
    detail::bspline_span(t, degree, x, B);
    return B;
}

/// All basis-function first derivatives at x.
inline Eigen::VectorXd bspline_deriv_all(const std::vector<double>& t, int degree, double x) {
    int nb = int(t.size()) - degree - 1;
    // degree-1 basis on the same knots has nb+1 functions; combine adjacent ones
    Eigen::VectorXd low(nb + 1);
    {
        std::vector<double> tt(t.begin(), t.end());
        detail::bspline_span(tt, degree - 1, x, low);
    }
    Eigen::VectorXd D = Eigen::VectorXd::Zero(nb);
    for (int i = 0; i < nb; ++i) {
        double a = t[i + degree] - t[i];
        double b = t[i + degree + 1] - t[i + 1];
        double v = 0;
        if (a > 0)
            v += low[i] / a;
        if (b > 0)
            v -= low[i + 1] / b;
        D[i] = degree * v;
    }
    return D;
}

/// Design row for f(x) = sum_i theta_i B_i(x), linearly extrapolated outside
/// [lo, hi]; the extrapolated row stays linear in the coefficients.
inline Eigen::VectorXd basis_row(const std::vector<double>& t, int degree, double lo,
                                 double hi, double x) {
    if (x < lo)
        return (bspline_all(t, degree, lo) + (x - lo) * bspline_deriv_all(t, degree, lo))
            .eval();
    if (x > hi)
        return (bspline_all(t, degree, hi) + (x - hi) * bspline_deriv_all(t, degree, hi))
            .eval();
    return bspline_all(t, degree, x);
}

/// P = D2' D2 with D2 the (n-2) x n second-difference operator. Null space:
/// coefficient sequences linear in the index (dimension 2 for n >= 2).
inline Eigen::MatrixXd second_difference_penalty(int n) {
    if (n < 3)
        return Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n - 2, n);
    for (int r = 0; r < n - 2; ++r) {
        D(r, r) = 1;
        D(r, r + 1) = -2;
        D(r, r + 2) = 1;
    }
    return D.transpose() * D;
}

}  // namespace matchpred::spline
