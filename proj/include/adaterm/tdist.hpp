#pragma once

// Diagonal multivariate Student's t: log-density, its exact gradients, the
// surrogate degrees-of-freedom gradients, and the online maximum-likelihood
// estimator (location m, scale v, robustness nu_tilde = nu / d) that drives
// AdaTerm.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "adaterm/framing.hpp"
#include "adaterm/numerics.hpp"

namespace adaterm {

/// Smallest positive normal float32. Pinned rather than taken from the
/// runtime so the dof-weight ceiling is the same on every build.
inline constexpr double kEpsFloat = 1.17549435e-38;

/// w_nu evaluated at w_mv = kEpsFloat, i.e. eps - ln(eps) ~= 87.3365.
inline double eps_float_weight_ceiling() { return kEpsFloat - std::log(kEpsFloat); }

namespace detail {

inline void check_same_length(std::span<const double> a, std::span<const double> b,
                              const char* what) {
    if (a.size() != b.size()) throw ParameterError(std::string(what) + ": dimension mismatch");
}

inline void check_tdist_args(std::span<const double> g, std::span<const double> m,
                             std::span<const double> v, double nu, const char* what) {
    if (g.empty()) throw ParameterError(std::string(what) + ": empty input");
    check_same_length(g, m, what);
    check_same_length(g, v, what);
    for (double x : v) {
        if (!(x > 0.0)) throw ParameterError(std::string(what) + ": scale must be positive");
    }
    if (!(nu > 0.0)) throw ParameterError(std::string(what) + ": dof must be positive");
}

/// sum_i (g_i - m_i)^2 / v_i, i.e. d * D.
inline double scaled_sq_dist(std::span<const double> g, std::span<const double> m,
                             std::span<const double> v) {
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double r = g[i] - m[i];
        acc += r * r / v[i];
    }
    return acc;
}

/// lgamma(a + h) - lgamma(a) without the cancellation that plain lgamma
/// differences suffer for large a.
inline double lgamma_ratio(double a, double h) {
    if (a < 10.0) return std::lgamma(a + h) - std::lgamma(a);
    auto stirling_tail = [](double x) {
        const double inv = 1.0 / x;
        const double inv2 = inv * inv;
        return inv * (1.0 / 12.0 -
                      inv2 * (1.0 / 360.0 -
                              inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 / 1188.0))));
    };
    const double b = a + h;
    return (a - 0.5) * std::log1p(h / a) + h * std::log(b) - h + stirling_tail(b) -
           stirling_tail(a);
}

}  // namespace detail

/// Deviation D = d^{-1} sum_i (g_i - m_i)^2 / v_i.
inline double deviation(std::span<const double> g, std::span<const double> m,
                        std::span<const double> v) {
    return detail::scaled_sq_dist(g, m, v) / static_cast<double>(g.size());
}

/// Robustness weight w_mv = (nu_tilde + 1) / (nu_tilde + D).
inline double robust_weight(double nu_tilde, double dev) { return (nu_tilde + 1.0) / (nu_tilde + dev); }

/// w_nu = w_mv - ln(w_mv); convex with minimum 1 at w_mv = 1.
inline double dof_weight(double w_mv) { return w_mv - std::log(w_mv); }

/// ln T(g | m, v, nu) for the diagonal Student's t.
inline double log_density(std::span<const double> g, std::span<const double> m,
                          std::span<const double> v, double nu) {
    detail::check_tdist_args(g, m, v, nu, "log_density");
    const double d = static_cast<double>(g.size());
    double log_det = 0.0;
    for (double x : v) log_det += std::log(x);
    const double q = detail::scaled_sq_dist(g, m, v);
    return detail::lgamma_ratio(0.5 * nu, 0.5 * d) - 0.5 * d * std::log(nu * M_PI) -
           0.5 * log_det - 0.5 * (nu + d) * std::log1p(q / nu);
}

/// d/dm ln T = w_mv (g - m) / v.
inline std::vector<double> grad_m(std::span<const double> g, std::span<const double> m,
                                  std::span<const double> v, double nu_tilde) {
    detail::check_tdist_args(g, m, v, nu_tilde, "grad_m");
    const double w = robust_weight(nu_tilde, deviation(g, m, v));
    std::vector<double> out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = w * (g[i] - m[i]) / v[i];
    return out;
}

/// d/dv ln T = w_mv nu_tilde / (2 v^2 (nu_tilde + 1)) {(s - v) + (s - D v) / nu_tilde}.
inline std::vector<double> grad_v(std::span<const double> g, std::span<const double> m,
                                  std::span<const double> v, double nu_tilde) {
    detail::check_tdist_args(g, m, v, nu_tilde, "grad_v");
    const double dev = deviation(g, m, v);
    const double w = robust_weight(nu_tilde, dev);
    std::vector<double> out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double r = g[i] - m[i];
        const double s = r * r;
        out[i] = w * nu_tilde / (2.0 * v[i] * v[i] * (nu_tilde + 1.0)) *
                 ((s - v[i]) + (s - dev * v[i]) / nu_tilde);
    }
    return out;
}

/// Exact d/dnu ln T (digamma form).
inline double grad_nu_exact(std::span<const double> g, std::span<const double> m,
                            std::span<const double> v, double nu) {
    detail::check_tdist_args(g, m, v, nu, "grad_nu_exact");
    const double d = static_cast<double>(g.size());
    const double q = detail::scaled_sq_dist(g, m, v);  // d * D
    return 0.5 * digamma(0.5 * (nu + d)) - 0.5 * digamma(0.5 * nu) - d / (2.0 * nu) -
           0.5 * std::log1p(q / nu) + 0.5 * (nu + d) * q / (nu * (nu + q));
}

/// Same as grad_nu_exact but parameterised by (nu, d, D) directly.
inline double grad_nu_exact_from_deviation(double nu, std::size_t dim, double dev) {
    if (!(nu > 0.0) || dim == 0 || !(dev >= 0.0)) {
        throw ParameterError("grad_nu_exact_from_deviation: invalid arguments");
    }
    const double d = static_cast<double>(dim);
    const double q = d * dev;
    return 0.5 * digamma(0.5 * (nu + d)) - 0.5 * digamma(0.5 * nu) - d / (2.0 * nu) -
           0.5 * std::log1p(q / nu) + 0.5 * (nu + d) * q / (nu * (nu + q));
}

/// Upper bound on d/dnu ln T obtained from the digamma sandwich:
/// 1/2 { -w_nu + 1 + (nu_tilde + 2) / (nu_tilde + 1) / nu }, nu_tilde = nu / d.
inline double grad_nu_surrogate_pre(double nu, std::size_t dim, double w_mv) {
    if (!(nu > 0.0) || dim == 0 || !(w_mv > 0.0)) {
        throw ParameterError("grad_nu_surrogate_pre: arguments must be positive");
    }
    const double nu_tilde = nu / static_cast<double>(dim);
    return 0.5 * (-dof_weight(w_mv) + 1.0 + (nu_tilde + 2.0) / (nu_tilde + 1.0) / nu);
}

/// Dimension-fixed surrogate gradient w.r.t. nu_tilde:
/// w_nu (d/2) { -1 + ((nu_tilde + 2)/(nu_tilde + 1) + nu_tilde) / (nu_tilde w_nu) }.
inline double grad_nu_tilde_surrogate(double nu_tilde, std::size_t dim, double w_mv) {
    if (!(nu_tilde > 0.0) || dim == 0 || !(w_mv > 0.0)) {
        throw ParameterError("grad_nu_tilde_surrogate: arguments must be positive");
    }
    const double w_nu = dof_weight(w_mv);
    const double target = (nu_tilde + 2.0) / (nu_tilde + 1.0) + nu_tilde;
    return w_nu * 0.5 * static_cast<double>(dim) * (-1.0 + target / (nu_tilde * w_nu));
}

// ---------------------------------------------------------------------------
// Online estimator
// ---------------------------------------------------------------------------

/// Running (m, v, nu_tilde) estimate for one parameter group plus the
/// hyperparameters that define its update. Invariants: v_i >= eps^2,
/// nu_tilde > nu_tilde_min.
struct TDistState {
    std::vector<double> m;
    std::vector<double> v;
    double nu_tilde = 0.0;
    std::uint64_t t = 0;
    double beta = 0.9;
    double eps = 1e-5;
    double nu_tilde_min = 1.0;

    std::size_t dim() const noexcept { return m.size(); }

    /// Fresh state: m = 0, v = eps^2, nu_tilde = nu_tilde_min + eps unless
    /// an explicit initial value is given.
    static TDistState initial(std::size_t d, double beta = 0.9, double eps = 1e-5,
                              double nu_tilde_min = 1.0, double nu_tilde_init = -1.0) {
        if (d == 0) throw ParameterError("TDistState: dimension must be positive");
        if (!(beta > 0.0 && beta < 1.0)) throw ParameterError("TDistState: beta must lie in (0, 1)");
        if (!(eps > 0.0)) throw ParameterError("TDistState: eps must be positive");
        if (!(nu_tilde_min > 0.0)) throw ParameterError("TDistState: nu_tilde_min must be positive");
        TDistState s;
        s.m.assign(d, 0.0);
        s.v.assign(d, eps * eps);
        s.nu_tilde = nu_tilde_init > 0.0 ? nu_tilde_init : nu_tilde_min + eps;
        if (!(s.nu_tilde > nu_tilde_min)) {
            throw ParameterError("TDistState: initial nu_tilde must exceed nu_tilde_min");
        }
        s.beta = beta;
        s.eps = eps;
        s.nu_tilde_min = nu_tilde_min;
        return s;
    }

    friend bool operator==(const TDistState&, const TDistState&) = default;
};

/// Every intermediate of one estimator step.
struct StepDiagnostics {
    std::vector<double> s;        // (g - m_{t-1})^2
    double dev = 0.0;             // D = d^{-1} s^T v_{t-1}^{-1}
    double w_mv = 0.0;
    double w_mv_bar = 0.0;        // (nu_tilde + 1) / nu_tilde
    double w_nu = 0.0;            // w_mv - ln w_mv
    double w_nu_bar = 0.0;        // max(w_mv_bar - ln w_mv_bar, eps_float ceiling)
    double tau_mv = 0.0;
    double tau_v = 0.0;           // equals tau_mv except under the weighted-square scale rule
    double tau_nu = 0.0;
    std::vector<double> delta_s;  // max(eps^2, (s - D v) / nu_tilde)
    double lambda = 0.0;          // interpolation target for nu_tilde
    std::vector<double> kappa_m;  // step size for grad_m: v (1 - beta) / w_mv_bar
    std::vector<double> kappa_v;
    double kappa_dnu = 0.0;
};

/// How the scale estimate is refreshed.
enum class ScaleRule {
    Clipped,         // v <- (1 - tau_mv) v + tau_mv (s + max(eps^2, (s - D v) / nu_tilde))
    WeightedSquare,  // v <- (1 - tau_v) v + tau_v (w_mv s + eps^2), tau_v = (1 - beta) / w_mv_bar
};

struct EstimatorOptions {
    /// false: Gaussian limit (w_mv = w_mv_bar = 1, delta_s = eps^2, nu frozen).
    bool robust = true;
    /// false: nu_tilde is frozen at its current value.
    bool adapt_dof = true;
    ScaleRule scale_rule = ScaleRule::Clipped;
};

inline StepDiagnostics compute_diagnostics(const TDistState& state, std::span<const double> g,
                                           const EstimatorOptions& opts = {}) {
    const std::size_t d = state.dim();
    if (g.size() != d) throw ParameterError("compute_diagnostics: gradient dimension mismatch");
    if (!all_finite(g)) throw NumericalError("compute_diagnostics: non-finite gradient rejected");

    const double one_minus_beta = 1.0 - state.beta;
    const double eps2 = state.eps * state.eps;
    const double nu = state.nu_tilde;

    StepDiagnostics diag;
    diag.s.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        const double r = g[i] - state.m[i];
        diag.s[i] = r * r;
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) acc += diag.s[i] / state.v[i];
    diag.dev = acc / static_cast<double>(d);

    if (opts.robust) {
        diag.w_mv = robust_weight(nu, diag.dev);
        diag.w_mv_bar = (nu + 1.0) / nu;
    } else {
        diag.w_mv = 1.0;
        diag.w_mv_bar = 1.0;
    }
    diag.w_nu = dof_weight(diag.w_mv);
    diag.w_nu_bar = std::max(dof_weight(diag.w_mv_bar), eps_float_weight_ceiling());
    diag.tau_mv = one_minus_beta * diag.w_mv / diag.w_mv_bar;
    diag.tau_v = opts.scale_rule == ScaleRule::WeightedSquare ? one_minus_beta / diag.w_mv_bar
                                                              : diag.tau_mv;
    const bool dof_moves = opts.robust && opts.adapt_dof;
    diag.tau_nu = dof_moves ? one_minus_beta * diag.w_nu / diag.w_nu_bar : 0.0;

    diag.delta_s.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        diag.delta_s[i] =
            opts.robust ? std::max(eps2, (diag.s[i] - diag.dev * state.v[i]) / nu) : eps2;
    }

    const double dnu = nu - state.nu_tilde_min;
    diag.lambda = ((nu + 2.0) / (nu + 1.0) + nu) * dnu / (nu * diag.w_nu) +
                  state.nu_tilde_min + state.eps;

    diag.kappa_m.resize(d);
    diag.kappa_v.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        diag.kappa_m[i] = state.v[i] * one_minus_beta / diag.w_mv_bar;
        diag.kappa_v[i] = 2.0 * state.v[i] * state.v[i] * one_minus_beta;
    }
    diag.kappa_dnu = 2.0 * dnu * one_minus_beta / (static_cast<double>(d) * diag.w_nu_bar);
    return diag;
}

/// One online maximum-likelihood step. Pure: returns the advanced state
/// (t incremented) together with the diagnostics used for it.
inline std::pair<TDistState, StepDiagnostics> update_state(const TDistState& state,
                                                           std::span<const double> g,
                                                           const EstimatorOptions& opts = {}) {
    StepDiagnostics diag = compute_diagnostics(state, g, opts);
    TDistState next = state;
    const std::size_t d = state.dim();
    const double eps2 = state.eps * state.eps;
    for (std::size_t i = 0; i < d; ++i) {
        next.m[i] = (1.0 - diag.tau_mv) * state.m[i] + diag.tau_mv * g[i];
        const double target = opts.scale_rule == ScaleRule::WeightedSquare
                                  ? diag.w_mv * diag.s[i] + eps2
                                  : diag.s[i] + diag.delta_s[i];
        next.v[i] = (1.0 - diag.tau_v) * state.v[i] + diag.tau_v * target;
    }
    if (diag.tau_nu > 0.0) {
        next.nu_tilde = (1.0 - diag.tau_nu) * state.nu_tilde + diag.tau_nu * diag.lambda;
    }
    next.t = state.t + 1;
    return {std::move(next), std::move(diag)};
}

// ---------------------------------------------------------------------------
// Checkpoint: "ATDS" v1, payload (d, t, beta, eps, nu_tilde_min, nu_tilde, m..., v...)
// ---------------------------------------------------------------------------

inline constexpr framing::Magic kTDistMagic = framing::make_magic("ATDS");
inline constexpr std::uint8_t kTDistVersion = 1;

inline std::vector<double> state_payload(const TDistState& s) {
    std::vector<double> p;
    p.reserve(6 + 2 * s.dim());
    p.push_back(static_cast<double>(s.dim()));
    p.push_back(static_cast<double>(s.t));
    p.push_back(s.beta);
    p.push_back(s.eps);
    p.push_back(s.nu_tilde_min);
    p.push_back(s.nu_tilde);
    p.insert(p.end(), s.m.begin(), s.m.end());
    p.insert(p.end(), s.v.begin(), s.v.end());
    return p;
}

inline TDistState state_from_payload(std::span<const double> p) {
    if (p.size() < 6) throw ParameterError("checkpoint: short state payload");
    const auto d = static_cast<std::size_t>(p[0]);
    if (static_cast<double>(d) != p[0] || d == 0 || p.size() != 6 + 2 * d) {
        throw ParameterError("checkpoint: inconsistent state dimension");
    }
    TDistState s;
    s.t = static_cast<std::uint64_t>(p[1]);
    s.beta = p[2];
    s.eps = p[3];
    s.nu_tilde_min = p[4];
    s.nu_tilde = p[5];
    s.m.assign(p.begin() + 6, p.begin() + 6 + static_cast<std::ptrdiff_t>(d));
    s.v.assign(p.begin() + 6 + static_cast<std::ptrdiff_t>(d), p.end());
    return s;
}

inline std::vector<std::uint8_t> serialize_state(const TDistState& s) {
    return framing::encode({kTDistMagic, kTDistVersion, std::nullopt, state_payload(s)});
}

inline TDistState deserialize_state(std::span<const std::uint8_t> bytes) {
    const auto frame = framing::decode(bytes, kTDistMagic, kTDistVersion, false);
    return state_from_payload(frame.payload);
}

}  // namespace adaterm
