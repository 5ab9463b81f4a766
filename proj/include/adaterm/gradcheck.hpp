#pragma once

// Finite-difference verification of the Student's t gradients and the
// surrogate dof-gradient upper bounds.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "adaterm/numerics.hpp"
#include "adaterm/tdist.hpp"

namespace adaterm {

/// Richardson-extrapolated central difference of f at x with step h.
inline double central_difference(const std::function<double(double)>& f, double x, double h) {
    const double d1 = (f(x + h) - f(x - h)) / (2.0 * h);
    const double d2 = (f(x + 0.5 * h) - f(x - 0.5 * h)) / h;
    return (4.0 * d2 - d1) / 3.0;
}

/// |a - b| / max(|a|, |b|, floor)
inline double relative_error(double a, double b, double floor = 1e-3) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct GradientCheckReport {
    std::size_t points = 0;
    double max_err_m = 0.0;
    double max_err_v = 0.0;
    double max_err_nu = 0.0;

    double worst() const { return std::max({max_err_m, max_err_v, max_err_nu}); }
    bool passes(double tol = 1e-5) const { return worst() < tol; }
};

/// Random (g, m, v, nu) with g drawn near m so both inlier and outlier regimes
/// appear. Compares grad_m, grad_v and grad_nu_exact against differences of
/// log_density.
inline GradientCheckReport verify_gradients(std::size_t points_per_dim, const std::vector<std::size_t>& dims,
                                            Rng rng) {
    GradientCheckReport rep;
    for (std::size_t d : dims) {
        if (d == 0) throw ParameterError("verify_gradients: dimension must be positive");
        for (std::size_t p = 0; p < points_per_dim; ++p) {
            std::vector<double> g(d), m(d), v(d);
            for (std::size_t i = 0; i < d; ++i) {
                m[i] = rng.normal();
                v[i] = std::exp(rng.uniform(-1.0, 1.0));
                g[i] = m[i] + std::sqrt(v[i]) * 3.0 * rng.normal();
            }
            const double nu = std::exp(rng.uniform(std::log(0.5), std::log(50.0)));
            const double nu_tilde = nu / static_cast<double>(d);

            const auto gm = grad_m(g, m, v, nu_tilde);
            const auto gv = grad_v(g, m, v, nu_tilde);
            for (std::size_t i = 0; i < d; ++i) {
                auto fm = [&](double x) {
                    auto mm = m;
                    mm[i] = x;
                    return log_density(g, mm, v, nu);
                };
                auto fv = [&](double x) {
                    auto vv = v;
                    vv[i] = x;
                    return log_density(g, m, vv, nu);
                };
                const double hm = 1e-3 * std::max(1.0, std::abs(m[i]));
                const double hv = 1e-3 * v[i];
                rep.max_err_m = std::max(rep.max_err_m, relative_error(gm[i], central_difference(fm, m[i], hm)));
                rep.max_err_v = std::max(rep.max_err_v, relative_error(gv[i], central_difference(fv, v[i], hv)));
            }
            auto fnu = [&](double x) { return log_density(g, m, v, x); };
            const double gnu = grad_nu_exact(g, m, v, nu);
            rep.max_err_nu = std::max(rep.max_err_nu, relative_error(gnu, central_difference(fnu, nu, 1e-3 * nu)));
            ++rep.points;
        }
    }
    return rep;
}

struct DominanceReport {
    std::size_t evaluated = 0;
    std::size_t violations_pre = 0;    // surrogate_pre < exact - slack
    std::size_t violations_tilde = 0;  // g_nu_tilde < d * exact - slack
    double worst_gap = 0.0;            // most negative (surrogate - exact), clipped at 0
};

/// Surrogates versus the exact dof gradient over a (nu_tilde, D, d) grid.
inline DominanceReport check_surrogate_dominance(const std::vector<double>& nu_tildes,
                                                 const std::vector<double>& devs,
                                                 const std::vector<std::size_t>& dims, double slack = 1e-12) {
    DominanceReport rep;
    for (std::size_t d : dims) {
        const double dd = static_cast<double>(d);
        for (double nt : nu_tildes) {
            const double nu = nt * dd;
            for (double dev : devs) {
                const double exact = grad_nu_exact_from_deviation(nu, d, dev);
                const double w = robust_weight(nt, dev);
                const double pre = grad_nu_surrogate_pre(nu, d, w);
                const double tilde = grad_nu_tilde_surrogate(nt, d, w);
                if (pre < exact - slack) ++rep.violations_pre;
                if (tilde < dd * exact - slack) ++rep.violations_tilde;
                rep.worst_gap = std::min({rep.worst_gap, pre - exact, tilde - dd * exact});
                ++rep.evaluated;
            }
        }
    }
    return rep;
}

}  // namespace adaterm
