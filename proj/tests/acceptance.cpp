// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "adaterm/adaterm.hpp"

using namespace adaterm;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

// Gap between x + step and an independently computed update, relative to the
// operand magnitude so that near-cancelling sums are not amplified.
double update_gap(double next, double x, double step) {
    return std::abs(next - (x + step)) / std::max({std::abs(next), std::abs(x) + std::abs(step), 1e-300});
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return out;
}

std::vector<double> ranks(const std::vector<double>& x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
        i = j + 1;
    }
    return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    const auto ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    return saa > 0 && sbb > 0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

ParamGroup group_of(std::size_t d) { return ParamGroup("p", DenseArray::vector(std::vector<double>(d, 0.0))); }

void feed(ParamGroup& g, const std::vector<double>& grad, const OptimizerConfig& cfg) {
    g.grad = DenseArray::vector(grad);
    step(g, cfg);
}

OptimizerConfig make(Algorithm a, double alpha) {
    OptimizerConfig c;
    c.algorithm = a;
    c.alpha = alpha;
    return c;
}

// Rosenbrock medians per optimizer config, 100 seeds in parallel.
struct RosenbrockRun {
    std::vector<double> error_norm;
    std::vector<double> nu_tilde;
};

RosenbrockRun rosenbrock(const OptimizerConfig& cfg, double p, std::size_t seeds = 100, std::size_t steps = 15000) {
    RosenbrockRun out{std::vector<double>(seeds), std::vector<double>(seeds, NAN)};
    const auto spec = TestFunctionSpec::standard(TestFunction::Rosenbrock, p);
    parallel_for(seeds, 0, [&](std::size_t s) {
        const auto res = run_test_function_trial(spec, cfg, steps, s, false);
        out.error_norm[s] = res.error_norm;
        if (res.final_nu_tilde) out.nu_tilde[s] = *res.final_nu_tilde;
    });
    return out;
}

// ---------------------------------------------------------------------------

Outcome c1_gradients() {
    const auto rep = verify_gradients(100, {1, 2, 5, 8}, Rng(1));
    return {rep.passes(1e-5), fmt("max rel err m %.2e v %.2e nu %.2e over %zu points", rep.max_err_m,
                                  rep.max_err_v, rep.max_err_nu, rep.points)};
}

Outcome c2_dominance() {
    const auto rep = check_surrogate_dominance(linspace(0.5, 100.0, 50), linspace(0.0, 100.0, 50),
                                               {1, 10, 100, 10000}, 1e-12);
    return {rep.violations_pre == 0 && rep.violations_tilde == 0,
            fmt("%zu points, violations pre %zu tilde %zu", rep.evaluated, rep.violations_pre,
                rep.violations_tilde)};
}

Outcome c3_dof_gradient_grid() {
    GridSpec spec = GridSpec::defaults(GridKind::DofGradient);
    spec.dims = {1, 10000};
    auto ws = spec.w_axis.values();
    for (double w : {0.05, 0.5, 0.9, 0.98, 1.0, 1.1, 2.0}) ws.push_back(w);
    spec.w_values = ws;
    const auto t = emit_grid(spec);
    bool d1_pos = true, d1_neg = true, big_neg = true;
    double big_max_abs = 0.0;
    for (const auto& row : t.rows) {
        const double d = row[0], w = row[1], val = row[2];
        if (d == 1.0) {
            if (w >= 0.5 && w <= 2.0 && !(val > 0.0)) d1_pos = false;
            if (w == 0.05 && !(val < 0.0)) d1_neg = false;
        } else {
            if (w <= 0.98 && !(val < 0.0)) big_neg = false;
            if (w >= 0.9 && w <= 1.1) big_max_abs = std::max(big_max_abs, std::abs(val));
        }
    }
    const bool pass = d1_pos && d1_neg && big_neg && big_max_abs < 1e-4;
    return {pass, fmt("d=1 positive on [0.5,2] %s, negative at 0.05 %s; d=1e4 negative for w<=0.98 %s, "
                      "max |value| on [0.9,1.1] = %.3e (needs < 1e-4)",
                      d1_pos ? "yes" : "no", d1_neg ? "yes" : "no", big_neg ? "yes" : "no", big_max_abs)};
}

Outcome c4_identities() {
    Rng r(4);
    double worst = 0.0;
    for (int k = 0; k < 10000; ++k) {
        const std::size_t d = 1 + r.next_u64() % 8;
        auto st = TDistState::initial(d, 0.9, 1e-5, 1.0, 1.0 + std::exp(r.uniform(-3.0, 4.0)));
        std::vector<double> g(d);
        const double spread = std::exp(r.uniform(-2.0, 2.0));
        for (std::size_t i = 0; i < d; ++i) {
            st.m[i] = r.normal();
            st.v[i] = std::exp(r.uniform(-1.0, 1.0));
            g[i] = st.m[i] + spread * std::sqrt(st.v[i]) * r.normal();
        }
        const auto [next, diag] = update_state(st, g);
        const auto gm = grad_m(g, st.m, st.v, st.nu_tilde);
        const double nt = st.nu_tilde;
        for (std::size_t i = 0; i < d; ++i) {
            worst = std::max(worst, update_gap(next.m[i], st.m[i], diag.kappa_m[i] * gm[i]));
            const double gv =
                diag.w_mv * nt / (2.0 * st.v[i] * st.v[i] * (nt + 1.0)) * (diag.s[i] + diag.delta_s[i] - st.v[i]);
            worst = std::max(worst, update_gap(next.v[i], st.v[i], diag.kappa_v[i] * gv));
        }
        const double gnu = grad_nu_tilde_surrogate(nt, d, diag.w_mv);
        worst = std::max(worst, update_gap(next.nu_tilde, nt, diag.kappa_dnu * gnu + diag.tau_nu * st.eps));
    }
    return {worst < 1e-12, fmt("max relative gap %.2e over 10000 steps", worst)};
}

Outcome c5_gaussian_limit() {
    OptimizerConfig a;
    a.nu_tilde_min = 1e8;
    OptimizerConfig b;
    b.ablation = Ablation::NoRobustness;
    auto ga = group_of(10), gb = group_of(10);
    Rng r(5);
    double worst = 0.0, tau_gap = 0.0;
    for (int t = 0; t < 500; ++t) {
        // Gradients on the scale of eps keep the floor-driven nu_tilde shift
        // relative to 1e8 below 1e-6.
        std::vector<double> grad(10);
        for (auto& x : grad) x = 1e-5 * r.normal(0.3, 1.0);
        feed(ga, grad, a);
        feed(gb, grad, b);
        tau_gap = std::max(tau_gap, std::abs(std::get<AdaTermGroupState>(ga.state).last.tau_mv - 0.1));
        for (int i = 0; i < 10; ++i) worst = std::max(worst, rel(ga.values[i], gb.values[i]));
    }
    return {worst < 1e-6 && tau_gap < 1e-6, fmt("trajectory rel gap %.2e, |tau - 0.1| %.2e", worst, tau_gap)};
}

Outcome c6_bias_closed_form() {
    OptimizerConfig c;
    c.variant = Variant::AdaBias;
    c.ablation = Ablation::NoRobustness;
    auto g = group_of(3);
    Rng r(6);
    double worst = 0.0;
    for (int t = 1; t <= 200; ++t) {
        feed(g, {r.normal(), r.normal(), 10.0 * r.normal()}, c);
        worst = std::max(worst, std::abs(std::get<AdaTermGroupState>(g.state).bias_c - (1.0 - std::pow(0.9, t))));
    }
    return {worst <= 1e-14, fmt("max |c_t - (1 - beta^t)| = %.2e", worst)};
}

Outcome c7_rosenbrock() {
    const auto at = make(Algorithm::AdaTerm, 0.01), ad = make(Algorithm::Adam, 0.01);
    const double at15 = median_of(rosenbrock(at, 0.15).error_norm);
    const double ad15 = median_of(rosenbrock(ad, 0.15).error_norm);
    const double at0 = median_of(rosenbrock(at, 0.0).error_norm);
    const double ad0 = median_of(rosenbrock(ad, 0.0).error_norm);
    return {at15 < ad15 && at0 < 0.1 && ad0 < 0.1,
            fmt("p=15%%: AdaTerm %.3e vs Adam %.3e; p=0: AdaTerm %.3e, Adam %.3e", at15, ad15, at0, ad0)};
}

Outcome c8_dof_trend() {
    const std::vector<double> ps{0.0, 0.01, 0.025, 0.05, 0.10, 0.15};
    std::vector<double> medians;
    std::string listing;
    for (double p : ps) {
        medians.push_back(median_of(rosenbrock(make(Algorithm::AdaTerm, 0.01), p).nu_tilde));
        listing += fmt("%s%.3g", listing.empty() ? "" : " ", medians.back());
    }
    const double rho = spearman(ps, medians);
    return {rho <= -0.8, fmt("median nu_tilde [%s], Spearman rho %.3f", listing.c_str(), rho)};
}

Outcome c9_regression() {
    const std::vector<double> ps{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    const std::size_t seeds = 50;
    RegressionSpec spec;
    spec.samples = 8000;
    spec.batch_size = 10;
    const auto layers = MlpModel::regression_layout();
    const auto at = make(Algorithm::AdaTerm, 1e-3), ad = make(Algorithm::Adam, 1e-3);
    std::vector<double> med_at, med_ad;
    bool ok = true;
    std::string listing;
    for (double p : ps) {
        spec.noise_ratio = p;
        std::vector<double> ma(seeds), md(seeds);
        parallel_for(2 * seeds, 0, [&](std::size_t job) {
            const std::size_t s = job % seeds;
            const auto& cfg = job < seeds ? at : ad;
            const auto res = run_regression_trial(spec, cfg, layers, 1, 200, s);
            (job < seeds ? ma : md)[s] = res.test_mse;
        });
        med_at.push_back(median_of(ma));
        med_ad.push_back(median_of(md));
        if (p >= 0.4 - 1e-12 && !(med_at.back() < med_ad.back())) ok = false;
        listing += fmt("%sp=%.1f %.3g/%.3g", listing.empty() ? "" : ", ", p, med_at.back(), med_ad.back());
    }
    const double ratio = med_at.back() / med_at.front();
    ok = ok && ratio <= 3.0;
    return {ok, fmt("median test MSE AdaTerm/Adam: %s; AdaTerm p=1 / p=0 = %.2f", listing.c_str(), ratio)};
}

Outcome c10_regret() {
    std::size_t violations = 0;
    double worst_ratio = 0.0, worst_cor = 0.0;
    for (std::size_t d : {2u, 10u}) {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            OnlineConvexSpec spec;
            spec.dim = d;
            OptimizerConfig cfg = make(Algorithm::AdaTerm, 0.1);
            cfg.lr_schedule = LrSchedule::InverseSqrt;
            cfg.bias_correction = false;
            const auto rep = run_regret_experiment(spec, cfg, 5000, Rng(seed));
            if (rep.first_violation() != 0) ++violations;
            worst_ratio = std::max(worst_ratio, rep.sqrt_growth_ratio(1000, 5000));
            for (std::size_t T : {1u, 1000u, 5000u}) {
                const auto a = constant_tau_bound_terms(rep.log, T);
                const auto b = regret_bound_terms(rep.log, T, 1.0 - cfg.beta, 1.0 - cfg.beta);
                worst_cor = std::max(worst_cor, rel(a.total(), b.total()));
            }
        }
    }
    return {violations == 0 && worst_ratio <= 1.2 && worst_cor <= 1e-9,
            fmt("20 runs, runs with a bound violation %zu, max growth ratio %.3f, closed-form gap %.2e",
                violations, worst_ratio, worst_cor)};
}

Outcome c11_variants() {
    OptimizerConfig cu;
    cu.variant = Variant::Uncentered;
    auto g = group_of(5);
    Rng r(11);
    double max_eta = 0.0;
    for (int t = 1; t <= 1000; ++t) {
        std::vector<double> grad(5);
        for (auto& x : grad) x = r.normal(0.5, 1.0) * (r.uniform() < 0.05 ? 30.0 : 1.0);
        feed(g, grad, cu);
        if (t > 100) {
            for (double e : adaterm_variant_eta(std::get<AdaTermGroupState>(g.state), cu)) {
                max_eta = std::max(max_eta, std::abs(e));
            }
        }
    }
    OptimizerConfig c2;
    c2.variant = Variant::AdaTerm2;
    auto h = group_of(3);
    double min_v = INFINITY;
    for (int t = 0; t < 10000; ++t) {
        std::vector<double> grad(3);
        for (auto& x : grad) x = std::exp(r.uniform(-10.0, 3.0)) * r.normal();
        feed(h, grad, c2);
        for (double v : std::get<AdaTermGroupState>(h.state).est.v) min_v = std::min(min_v, v);
    }
    return {max_eta < 1.0 && min_v > 0.0,
            fmt("uncentered max |eta| after burn-in %.4f; AdaTerm2 min v %.3e", max_eta, min_v)};
}

Outcome c12_tadam_spike() {
    Rng r(12);
    double worst = 0.0;
    for (int ctx = 0; ctx < 100; ++ctx) {
        const std::size_t d = 1 + r.next_u64() % 8;
        const int history = 20 + static_cast<int>(r.next_u64() % 300);
        const double mu = r.normal(), sigma = std::exp(r.uniform(-2.0, 1.0));
        auto ta = group_of(d), ad = group_of(d);
        const auto cta = make(Algorithm::TAdam, 1e-3), cad = make(Algorithm::Adam, 1e-3);
        for (int t = 0; t < history; ++t) {
            std::vector<double> grad(d);
            for (auto& x : grad) x = r.normal(mu, sigma);
            feed(ta, grad, cta);
            feed(ad, grad, cad);
        }
        const auto m_ta = std::get<TAdamGroupState>(ta.state).m;
        const auto m_ad = std::get<AdamGroupState>(ad.state).m;
        std::vector<double> spike(d);
        for (auto& x : spike) x = 100.0 * r.normal(mu, sigma);
        feed(ta, spike, cta);
        feed(ad, spike, cad);
        double move_ta = 0.0, move_ad = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            move_ta += std::pow(std::get<TAdamGroupState>(ta.state).m[i] - m_ta[i], 2);
            move_ad += std::pow(std::get<AdamGroupState>(ad.state).m[i] - m_ad[i], 2);
        }
        worst = std::max(worst, std::sqrt(move_ta / move_ad));
    }
    return {worst < 0.1, fmt("max displacement ratio t-Adam/Adam %.4f over 100 contexts", worst)};
}

Outcome c13_ablation() {
    OptimizerConfig nr = make(Algorithm::AdaTerm, 0.01);
    nr.ablation = Ablation::NoRobustness;
    const auto def = make(Algorithm::AdaTerm, 0.01);
    const double nr15 = median_of(rosenbrock(nr, 0.15).error_norm);
    const double df15 = median_of(rosenbrock(def, 0.15).error_norm);
    const double nr0 = median_of(rosenbrock(nr, 0.0).error_norm);
    const double df0 = median_of(rosenbrock(def, 0.0).error_norm);
    return {nr15 > df15 && nr0 <= df0 + 0.05,
            fmt("p=15%%: NoRobustness %.3e vs default %.3e; p=0: NoRobustness %.3e vs default %.3e", nr15, df15,
                nr0, df0)};
}

}  // namespace

int main() {
    const std::vector<std::function<Outcome()>> criteria{
        c1_gradients, c2_dominance,   c3_dof_gradient_grid,        c4_identities, c5_gaussian_limit,
        c6_bias_closed_form, c7_rosenbrock, c8_dof_trend, c9_regression, c10_regret,
        c11_variants, c12_tadam_spike, c13_ablation};
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i]();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("criterion %2zu: %s  %s  (%.1f s)\n", i + 1, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
        std::fflush(stdout);
        if (!o.pass) ++failed;
    }
    std::printf("%d of %zu criteria failed\n", failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
