#pragma once

// Online-convex regret runs for AdaTerm with projection onto a box, and the
// regret bound evaluated from the logged v_t, g_t and tau_t.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "adaterm/numerics.hpp"
#include "adaterm/optimizers.hpp"
#include "adaterm/problems.hpp"
#include "adaterm/tdist.hpp"

namespace adaterm {

struct Box {
    std::vector<double> lo;
    std::vector<double> hi;

    static Box symmetric(std::size_t d, double bound) {
        return {std::vector<double>(d, -bound), std::vector<double>(d, bound)};
    }

    /// Largest coordinate width, i.e. the sup-norm diameter.
    double diameter() const {
        double w = 0.0;
        for (std::size_t i = 0; i < lo.size(); ++i) w = std::max(w, hi[i] - lo[i]);
        return w;
    }
};

/// argmin_{x in box} ||x - theta||_V for V = diag(weights): coordinate clamping.
inline std::vector<double> weighted_projection(std::span<const double> theta, std::span<const double> weights,
                                               const Box& box) {
    const std::size_t d = theta.size();
    if (box.lo.size() != d || box.hi.size() != d || weights.size() != d) {
        throw ParameterError("weighted_projection: dimension mismatch");
    }
    std::vector<double> out(d);
    for (std::size_t i = 0; i < d; ++i) {
        if (!(box.lo[i] <= box.hi[i])) throw ParameterError("weighted_projection: empty box");
        if (!(weights[i] > 0.0)) throw ParameterError("weighted_projection: weights must be positive");
        out[i] = std::clamp(theta[i], box.lo[i], box.hi[i]);
    }
    return out;
}

/// x y <= (zeta / 2) x^2 + y^2 / (2 zeta), compared with a few ulps of slack
/// so that exact equality cases survive rounding.
inline bool young_inequality_check(double zeta, double x, double y) {
    if (!(zeta > 0.0)) throw ParameterError("young_inequality_check: zeta must be positive");
    const double lhs = x * y;
    const double rhs = 0.5 * zeta * x * x + y * y / (2.0 * zeta);
    return lhs <= rhs + 4.0 * std::numeric_limits<double>::epsilon() * std::abs(rhs);
}

// ---------------------------------------------------------------------------
// Bound evaluation
// ---------------------------------------------------------------------------

/// Quantities logged during a run; index t - 1 holds step t.
struct RegretLog {
    double alpha = 0.0;
    double beta = 0.9;
    double eps = 1e-5;
    double d_diam = 0.0;
    std::vector<std::vector<double>> v;  // v_t after step t
    std::vector<std::vector<double>> g;  // g_t
    std::vector<double> tau;             // tau_mv at step t

    std::size_t horizon() const { return tau.size(); }
};

struct BoundTerms {
    double t1 = 0.0;  // D^2 sqrt(T) / (4 tau_T alpha) sum_i v_T^{1/2}
    double t2 = 0.0;  // sum over t < T of D^2 / alpha_t sum_i v_t^{1/2}
    double t3 = 0.0;  // geometric (1 - tau_min)^{T-k} g_k^2 sum
    double t4 = 0.0;  // sqrt(1 + log(T - 1)) sum_i ||g^2_{1:T-1,i}||_2 term

    double total() const { return t1 + t2 + t3 + t4; }
};

namespace detail {

inline double sum_sqrt(std::span<const double> x) {
    double acc = 0.0;
    for (double a : x) acc += std::sqrt(a);
    return acc;
}

inline double sum_sq(std::span<const double> x) {
    double acc = 0.0;
    for (double a : x) acc += a * a;
    return acc;
}

inline double log_growth(std::size_t T) {
    return T > 1 ? std::sqrt(1.0 + std::log(static_cast<double>(T - 1))) : 0.0;
}

}  // namespace detail

/// Bound terms at prefix T for explicit tau_min and tau_T. Direct O(T d) evaluation.
inline BoundTerms regret_bound_terms(const RegretLog& log, std::size_t T, double tau_min, double tau_T) {
    if (T == 0 || T > log.horizon()) throw ParameterError("regret_bound_terms: prefix out of range");
    if (!(tau_min > 0.0) || !(tau_T > 0.0)) throw ParameterError("regret_bound_terms: tau must be positive");
    const double a = log.alpha, b = log.beta, e = log.eps;
    const double D2 = log.d_diam * log.d_diam;
    const double tm2 = tau_min * tau_min;
    const double rootT = std::sqrt(static_cast<double>(T));
    BoundTerms out;
    out.t1 = D2 * rootT / (4.0 * tau_T * a) * detail::sum_sqrt(log.v[T - 1]);

    double acc2 = 0.0;
    for (std::size_t t = 1; t < T; ++t) {
        const double alpha_t = a / std::sqrt(static_cast<double>(t));
        acc2 += D2 / alpha_t * detail::sum_sqrt(log.v[t - 1]);
    }
    out.t2 = (tm2 + 1.0 - b - tau_min) / (2.0 * tm2) * acc2;

    const double scale = (1.0 - b) * (1.0 - b) * a / (e * tm2);
    double acc3 = 0.0;
    for (std::size_t k = 1; k <= T; ++k) {
        acc3 += std::pow(1.0 - tau_min, static_cast<double>(T - k)) * detail::sum_sq(log.g[k - 1]);
    }
    out.t3 = scale / rootT * acc3;

    if (T > 1) {
        const std::size_t d = log.g.front().size();
        double acc4 = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            double s = 0.0;
            for (std::size_t t = 0; t + 1 < T; ++t) {
                const double g2 = log.g[t][i] * log.g[t][i];
                s += g2 * g2;
            }
            acc4 += std::sqrt(s);
        }
        out.t4 = (tau_min * (1.0 - tau_min) + (1.0 - b)) / (2.0 * tm2) * scale * detail::log_growth(T) * acc4;
    }
    return out;
}

/// Tau values taken from the log: tau_min = min_{t <= T} tau_t, tau_T = tau at T.
inline BoundTerms regret_bound_terms(const RegretLog& log, std::size_t T) {
    if (T == 0 || T > log.horizon()) throw ParameterError("regret_bound_terms: prefix out of range");
    const double tau_min = *std::min_element(log.tau.begin(), log.tau.begin() + static_cast<std::ptrdiff_t>(T));
    return regret_bound_terms(log, T, tau_min, log.tau[T - 1]);
}

/// Closed form when every tau equals 1 - beta.
inline BoundTerms constant_tau_bound_terms(const RegretLog& log, std::size_t T) {
    if (T == 0 || T > log.horizon()) throw ParameterError("constant_tau_bound_terms: prefix out of range");
    const double a = log.alpha, b = log.beta, e = log.eps;
    const double D2 = log.d_diam * log.d_diam;
    const double rootT = std::sqrt(static_cast<double>(T));
    BoundTerms out;
    out.t1 = D2 * rootT / (4.0 * (1.0 - b) * a) * detail::sum_sqrt(log.v[T - 1]);
    double acc2 = 0.0;
    for (std::size_t t = 1; t < T; ++t) {
        acc2 += D2 * std::sqrt(static_cast<double>(t)) / a * detail::sum_sqrt(log.v[t - 1]);
    }
    out.t2 = 0.5 * acc2;
    double acc3 = 0.0;
    for (std::size_t k = 1; k <= T; ++k) {
        acc3 += std::pow(b, static_cast<double>(T - k)) * detail::sum_sq(log.g[k - 1]);
    }
    out.t3 = a / (e * rootT) * acc3;
    if (T > 1) {
        const std::size_t d = log.g.front().size();
        double acc4 = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            double s = 0.0;
            for (std::size_t t = 0; t + 1 < T; ++t) {
                const double g2 = log.g[t][i] * log.g[t][i];
                s += g2 * g2;
            }
            acc4 += std::sqrt(s);
        }
        out.t4 = (1.0 + b) * a / (2.0 * (1.0 - b) * e) * detail::log_growth(T) * acc4;
    }
    return out;
}

/// Bound RHS at every prefix 1..T in one pass. The geometric sum is carried
/// forward and rebuilt only when the running minimum of tau changes.
inline std::vector<double> regret_bound_prefix(const RegretLog& log) {
    const std::size_t T = log.horizon();
    std::vector<double> out(T);
    if (T == 0) return out;
    const std::size_t d = log.g.front().size();
    const double a = log.alpha, b = log.beta, e = log.eps;
    const double D2 = log.d_diam * log.d_diam;

    std::vector<double> g_norm2(T);
    for (std::size_t t = 0; t < T; ++t) g_norm2[t] = detail::sum_sq(log.g[t]);

    double tau_min = std::numeric_limits<double>::infinity();
    double geo = 0.0;       // sum_{k<=T} (1 - tau_min)^{T-k} |g_k|^2
    double acc2 = 0.0;      // sum_{t<T} sqrt(t) / alpha D^2 sum_i v_t^{1/2}
    std::vector<double> g4(d, 0.0);  // sum_{t<T} g_{t,i}^4

    for (std::size_t T1 = 1; T1 <= T; ++T1) {
        const double tau_T = log.tau[T1 - 1];
        if (tau_T < tau_min) {
            tau_min = tau_T;
            geo = 0.0;
            for (std::size_t k = 1; k <= T1; ++k) geo = (1.0 - tau_min) * geo + g_norm2[k - 1];
        } else {
            geo = (1.0 - tau_min) * geo + g_norm2[T1 - 1];
        }
        if (T1 > 1) {
            const double t = static_cast<double>(T1 - 1);
            acc2 += D2 * std::sqrt(t) / a * detail::sum_sqrt(log.v[T1 - 2]);
            for (std::size_t i = 0; i < d; ++i) {
                const double g2 = log.g[T1 - 2][i] * log.g[T1 - 2][i];
                g4[i] += g2 * g2;
            }
        }
        const double tm2 = tau_min * tau_min;
        const double rootT = std::sqrt(static_cast<double>(T1));
        const double scale = (1.0 - b) * (1.0 - b) * a / (e * tm2);
        BoundTerms terms;
        terms.t1 = D2 * rootT / (4.0 * tau_T * a) * detail::sum_sqrt(log.v[T1 - 1]);
        terms.t2 = (tm2 + 1.0 - b - tau_min) / (2.0 * tm2) * acc2;
        terms.t3 = scale / rootT * geo;
        if (T1 > 1) {
            double acc4 = 0.0;
            for (double s : g4) acc4 += std::sqrt(s);
            terms.t4 = (tau_min * (1.0 - tau_min) + (1.0 - b)) / (2.0 * tm2) * scale *
                       detail::log_growth(T1) * acc4;
        }
        out[T1 - 1] = terms.total();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

struct RegretReport {
    std::size_t T = 0;
    std::vector<double> losses;             // l_t(theta_t)
    std::vector<double> comparator_losses;  // l_t(theta*)
    std::vector<double> regret_prefix;      // R_1..R_T
    std::vector<double> bound_prefix;       // bound RHS at each prefix
    std::vector<double> tau;                // tau_mv,t
    std::vector<double> theta_star;
    BoundTerms terms;                       // at the full horizon
    double R_T = 0.0;
    double underline_tau = 0.0;
    double tau_T = 0.0;
    double d_diam = 0.0;
    double G = 0.0;
    RegretLog log;

    /// First prefix at which R_t exceeds the bound, or 0 if none.
    std::size_t first_violation() const {
        for (std::size_t t = 0; t < T; ++t) {
            if (regret_prefix[t] > bound_prefix[t]) return t + 1;
        }
        return 0;
    }

    /// max_{t in [lo, hi]} R_t / sqrt(t) divided by R_lo / sqrt(lo).
    double sqrt_growth_ratio(std::size_t lo, std::size_t hi) const {
        if (lo == 0 || hi > T || lo > hi) throw ParameterError("sqrt_growth_ratio: bad range");
        const double base = regret_prefix[lo - 1] / std::sqrt(static_cast<double>(lo));
        double best = base;
        for (std::size_t t = lo; t <= hi; ++t) {
            best = std::max(best, regret_prefix[t - 1] / std::sqrt(static_cast<double>(t)));
        }
        return best / base;
    }
};

/// AdaTerm (no bias correction, alpha_t = alpha / sqrt(t)) on random box
/// quadratics, projected with weights sqrt(v_t). Starts at the lower corner.
inline RegretReport run_regret_experiment(const OnlineConvexSpec& spec, const OptimizerConfig& cfg,
                                          std::size_t T, Rng rng) {
    spec.validate();
    cfg.validate();
    if (cfg.algorithm != Algorithm::AdaTerm) throw ParameterError("regret: only AdaTerm is supported");
    if (cfg.lr_schedule != LrSchedule::InverseSqrt) throw ParameterError("regret: requires the InverseSqrt schedule");
    if (T == 0) throw ParameterError("regret: horizon must be positive");

    const std::size_t d = spec.dim;
    const auto losses = make_online_convex_losses(spec, T, rng);
    const auto theta_star = offline_optimum(losses, d);
    const Box box = Box::symmetric(d, spec.bound);
    const double eps = cfg.effective_eps();
    const auto opts = cfg.estimator_options();

    TDistState est = TDistState::initial(d, cfg.beta, eps, cfg.nu_tilde_min,
                                         cfg.nu_tilde_init.value_or(cfg.nu_tilde_min + eps));
    std::vector<double> theta(d, -spec.bound);

    RegretReport rep;
    rep.T = T;
    rep.theta_star = theta_star;
    rep.d_diam = box.diameter();
    rep.log.alpha = cfg.alpha;
    rep.log.beta = cfg.beta;
    rep.log.eps = eps;
    rep.log.d_diam = rep.d_diam;
    rep.log.v.reserve(T);
    rep.log.g.reserve(T);

    double regret = 0.0;
    for (std::size_t t = 1; t <= T; ++t) {
        const auto& loss = losses[t - 1];
        const double lt = loss.value(theta);
        const double ls = loss.value(theta_star);
        auto g = loss.gradient(theta);
        for (double x : g) rep.G = std::max(rep.G, std::abs(x));

        auto [next, diag] = update_state(est, g, opts);
        est = std::move(next);
        const double lr = cfg.learning_rate(t);
        std::vector<double> weights(d);
        for (std::size_t i = 0; i < d; ++i) {
            theta[i] -= lr * est.m[i] / std::sqrt(est.v[i]);
            weights[i] = std::sqrt(est.v[i]);
        }
        theta = weighted_projection(theta, weights, box);
        if (!all_finite(theta)) throw NumericalError("regret: iterate became non-finite");

        regret += lt - ls;
        rep.losses.push_back(lt);
        rep.comparator_losses.push_back(ls);
        rep.regret_prefix.push_back(regret);
        rep.tau.push_back(diag.tau_mv);
        rep.log.tau.push_back(diag.tau_mv);
        rep.log.v.push_back(est.v);
        rep.log.g.push_back(std::move(g));
    }

    rep.R_T = regret;
    rep.underline_tau = *std::min_element(rep.tau.begin(), rep.tau.end());
    rep.tau_T = rep.tau.back();
    rep.bound_prefix = regret_bound_prefix(rep.log);
    rep.terms = regret_bound_terms(rep.log, T);
    return rep;
}

inline void write_regret_csv(const RegretReport& rep, std::ostream& os) {
    os << "t,loss,regret_prefix,bound_rhs_prefix,tau_t\n";
    os.precision(17);
    for (std::size_t t = 0; t < rep.T; ++t) {
        os << (t + 1) << ',' << rep.losses[t] << ',' << rep.regret_prefix[t] << ','
           << rep.bound_prefix[t] << ',' << rep.tau[t] << '\n';
    }
}

}  // namespace adaterm
