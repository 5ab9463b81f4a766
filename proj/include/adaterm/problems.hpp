#pragma once

// Problem generators: 2-D test functions with analytic gradients and
// coordinate-noise injection, the noisy 1-D regression stream, and random
// online convex quadratics for regret experiments.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adaterm/numerics.hpp"

namespace adaterm {

// ---------------------------------------------------------------------------
// Test functions
// ---------------------------------------------------------------------------

enum class TestFunction { Rosenbrock, McCormick, Michalewicz };

using Point2 = std::array<double, 2>;

struct FunctionEval {
    double value = 0.0;
    Point2 gradient{};
};

inline std::optional<TestFunction> parse_test_function(std::string_view name) {
    if (name == "rosenbrock") return TestFunction::Rosenbrock;
    if (name == "mccormick") return TestFunction::McCormick;
    if (name == "michalewicz") return TestFunction::Michalewicz;
    return std::nullopt;
}

inline std::string_view to_string(TestFunction f) {
    switch (f) {
        case TestFunction::Rosenbrock: return "rosenbrock";
        case TestFunction::McCormick: return "mccormick";
        case TestFunction::Michalewicz: return "michalewicz";
    }
    return "?";
}

namespace detail {

inline double pow_int(double base, int exp) {
    double r = 1.0;
    for (int i = 0; i < exp; ++i) r *= base;
    return r;
}

/// sin(u) * sin(k u^2 / pi)^20 and its derivative.
inline std::pair<double, double> michalewicz_term(double u, double k) {
    const double arg = k * u * u / std::numbers::pi;
    const double s = std::sin(arg);
    const double s19 = pow_int(s, 19);
    const double s20 = s19 * s;
    const double value = std::sin(u) * s20;
    const double deriv = std::cos(u) * s20 +
                         std::sin(u) * 20.0 * s19 * std::cos(arg) * (2.0 * k * u / std::numbers::pi);
    return {value, deriv};
}

}  // namespace detail

inline FunctionEval eval_test_function(TestFunction f, Point2 p) {
    const double x = p[0], y = p[1];
    if (!std::isfinite(x) || !std::isfinite(y)) throw ParameterError("eval_test_function: non-finite point");
    switch (f) {
        case TestFunction::Rosenbrock: {
            const double r = y - x * x;
            return {100.0 * r * r + (x - 1.0) * (x - 1.0),
                    {-400.0 * x * r + 2.0 * (x - 1.0), 200.0 * r}};
        }
        case TestFunction::McCormick: {
            const double c = std::cos(x + y);
            return {std::sin(x + y) + (x - y) * (x - y) - 1.5 * x + 2.5 * y + 1.0,
                    {c + 2.0 * (x - y) - 1.5, c - 2.0 * (x - y) + 2.5}};
        }
        case TestFunction::Michalewicz: {
            const auto [ax, dax] = detail::michalewicz_term(x, 1.0);
            const auto [by, dby] = detail::michalewicz_term(y, 2.0);
            return {-ax - by, {-dax, -dby}};
        }
    }
    throw ParameterError("eval_test_function: unknown function");
}

namespace detail {

/// x maximising sin(x) sin(x^2/pi)^20 near 2.2, by bisection on the derivative.
inline double michalewicz_x_star() {
    double lo = 2.1, hi = 2.3;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (michalewicz_term(mid, 1.0).second > 0.0) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace detail

/// Reference minimiser used for error norms.
inline Point2 test_function_optimum(TestFunction f) {
    switch (f) {
        case TestFunction::Rosenbrock: return {1.0, 1.0};
        case TestFunction::McCormick: {
            // cos(x + y) = -1/2 and x - y = 1 on the branch x + y = -2 pi / 3.
            const double sum = -2.0 * std::numbers::pi / 3.0;
            return {0.5 * (sum + 1.0), 0.5 * (sum - 1.0)};
        }
        case TestFunction::Michalewicz: {
            static const double xs = detail::michalewicz_x_star();
            return {xs, std::numbers::pi / 2.0};
        }
    }
    throw ParameterError("test_function_optimum: unknown function");
}

inline Point2 test_function_start(TestFunction f) {
    switch (f) {
        case TestFunction::Rosenbrock: return {-2.0, 2.0};
        case TestFunction::McCormick: return {4.0, -3.0};
        case TestFunction::Michalewicz: return {1.0, 1.0};
    }
    throw ParameterError("test_function_start: unknown function");
}

struct TestFunctionSpec {
    TestFunction function = TestFunction::Rosenbrock;
    Point2 start = test_function_start(TestFunction::Rosenbrock);
    double noise_half_width = 0.1;  // perturbations ~ U(-0.1, 0.1)
    double noise_probability = 0.0;

    static TestFunctionSpec standard(TestFunction f, double p) {
        return {f, test_function_start(f), 0.1, p};
    }

    static std::vector<double> default_noise_ratios() { return {0.0, 0.01, 0.025, 0.05, 0.10, 0.15}; }
};

/// With probability p both coordinates receive independent U(-h, h)
/// perturbations; otherwise the point is returned unchanged. The caller's
/// iterate is never modified.
inline Point2 inject_coordinate_noise(Point2 point, double p, Rng& rng, double half_width = 0.1) {
    if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("inject_coordinate_noise: p must lie in [0, 1]");
    if (rng.uniform() >= p) return point;
    point[0] += rng.uniform(-half_width, half_width);
    point[1] += rng.uniform(-half_width, half_width);
    return point;
}

// ---------------------------------------------------------------------------
// Regression stream
// ---------------------------------------------------------------------------

/// f(x) = x^2 + ln(x + 1) + sin(2 pi x) cos(2 pi x)
inline double regression_target(double x) {
    const double tp = 2.0 * std::numbers::pi * x;
    return x * x + std::log(x + 1.0) + std::sin(tp) * std::cos(tp);
}

struct RegressionSpec {
    std::size_t samples = 40000;
    std::size_t batch_size = 10;
    double noise_ratio = 0.0;  // fraction of corrupted targets, in [0, 1]
    double x_min = 0.0;
    double x_max = 1.0;
    double noise_dof = 1.0;
    double noise_loc = 0.0;
    double noise_scale = 0.05;

    void validate() const {
        if (samples == 0 || batch_size == 0) throw ParameterError("regression: samples and batch size must be positive");
        if (!(noise_ratio >= 0.0 && noise_ratio <= 1.0)) throw ParameterError("regression: noise ratio must lie in [0, 1]");
        if (!(x_min > -1.0)) throw ParameterError("regression: x_min must exceed -1 so ln(x + 1) is defined");
        if (!(x_min < x_max)) throw ParameterError("regression: require x_min < x_max");
        if (!(noise_dof > 0.0 && noise_scale > 0.0)) throw ParameterError("regression: noise dof and scale must be positive");
    }
};

struct RegressionBatch {
    DenseArray x;      // [b, 1]
    DenseArray y;      // [b, 1], possibly corrupted
    DenseArray clean;  // [b, 1], f(x)
};

/// Single-owner iterator over a pre-drawn dataset. Each pair consumes the
/// same number of random draws regardless of the noise ratio, so x values
/// coincide across noise levels for a given seed.
class RegressionStream {
public:
    RegressionStream(RegressionSpec spec, Rng rng) : spec_(spec) {
        spec_.validate();
        xs_.resize(spec_.samples);
        ys_.resize(spec_.samples);
        for (std::size_t i = 0; i < spec_.samples; ++i) {
            const double x = spec_.x_min + (spec_.x_max - spec_.x_min) * rng.uniform();
            const bool corrupt = rng.uniform() < spec_.noise_ratio;
            const double zeta = sample_student_t(rng, spec_.noise_dof, spec_.noise_loc, spec_.noise_scale);
            xs_[i] = x;
            ys_[i] = regression_target(x) + (corrupt ? zeta : 0.0);
        }
    }

    const RegressionSpec& spec() const noexcept { return spec_; }
    std::size_t batches() const { return (spec_.samples + spec_.batch_size - 1) / spec_.batch_size; }

    std::optional<RegressionBatch> next() {
        if (pos_ >= spec_.samples) return std::nullopt;
        const std::size_t b = std::min(spec_.batch_size, spec_.samples - pos_);
        RegressionBatch batch{DenseArray({b, 1}), DenseArray({b, 1}), DenseArray({b, 1})};
        for (std::size_t i = 0; i < b; ++i) {
            batch.x[i] = xs_[pos_ + i];
            batch.y[i] = ys_[pos_ + i];
            batch.clean[i] = regression_target(xs_[pos_ + i]);
        }
        pos_ += b;
        return batch;
    }

    void rewind() noexcept { pos_ = 0; }

private:
    RegressionSpec spec_;
    std::vector<double> xs_;
    std::vector<double> ys_;
    std::size_t pos_ = 0;
};

inline RegressionStream generate_regression_stream(const RegressionSpec& spec, Rng rng) {
    return RegressionStream(spec, std::move(rng));
}

/// Evenly spaced clean evaluation set over the input domain.
inline RegressionBatch regression_test_set(const RegressionSpec& spec, std::size_t points) {
    if (points < 2) throw ParameterError("regression_test_set: need at least two points");
    RegressionBatch batch{DenseArray({points, 1}), DenseArray({points, 1}), DenseArray({points, 1})};
    for (std::size_t i = 0; i < points; ++i) {
        const double x = spec.x_min + (spec.x_max - spec.x_min) * static_cast<double>(i) /
                                          static_cast<double>(points - 1);
        batch.x[i] = x;
        batch.y[i] = batch.clean[i] = regression_target(x);
    }
    return batch;
}

// ---------------------------------------------------------------------------
// Online convex quadratics
// ---------------------------------------------------------------------------

struct OnlineConvexSpec {
    std::size_t dim = 2;
    double bound = 1.0;           // box [-B, B]^d; sup-norm diameter 2B
    double curvature_min = 0.5;   // diagonal of A_t ~ U(a_min, a_max)
    double curvature_max = 2.0;
    double centre = 0.3;          // c_t,i = clamp(centre + spread U(-1, 1))
    double centre_spread = 0.5;
    std::optional<double> gradient_bound;  // G; default a_max * 2B

    double diameter() const { return 2.0 * bound; }
    double max_gradient() const { return gradient_bound.value_or(curvature_max * diameter()); }

    void validate() const {
        if (dim == 0) throw ParameterError("online convex: dim must be positive");
        if (!(bound > 0.0)) throw ParameterError("online convex: bound must be positive");
        if (!(curvature_min >= 0.0) || !(curvature_max >= curvature_min)) {
            throw ParameterError("online convex: curvatures must satisfy 0 <= a_min <= a_max (convexity)");
        }
        if (gradient_bound && !(*gradient_bound > 0.0)) throw ParameterError("online convex: G must be positive");
        if (!(centre_spread >= 0.0)) throw ParameterError("online convex: spread must be >= 0");
    }
};

/// l(theta) = 1/2 (theta - c)^T diag(a) (theta - c)
struct QuadraticLoss {
    std::vector<double> curvature;
    std::vector<double> centre;

    double value(std::span<const double> theta) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double r = theta[i] - centre[i];
            acc += 0.5 * curvature[i] * r * r;
        }
        return acc;
    }

    std::vector<double> gradient(std::span<const double> theta) const {
        std::vector<double> g(theta.size());
        for (std::size_t i = 0; i < theta.size(); ++i) g[i] = curvature[i] * (theta[i] - centre[i]);
        return g;
    }
};

/// T random quadratics whose gradients are bounded by G on the box.
inline std::vector<QuadraticLoss> make_online_convex_losses(const OnlineConvexSpec& spec, std::size_t horizon,
                                                            Rng& rng) {
    spec.validate();
    const double a_cap = spec.max_gradient() / spec.diameter();
    std::vector<QuadraticLoss> losses(horizon);
    for (auto& loss : losses) {
        loss.curvature.resize(spec.dim);
        loss.centre.resize(spec.dim);
        for (std::size_t i = 0; i < spec.dim; ++i) {
            const double a = spec.curvature_min + (spec.curvature_max - spec.curvature_min) * rng.uniform();
            loss.curvature[i] = std::min(a, a_cap);
            const double c = spec.centre + spec.centre_spread * (2.0 * rng.uniform() - 1.0);
            loss.centre[i] = std::clamp(c, -spec.bound, spec.bound);
        }
    }
    return losses;
}

/// argmin_theta sum_t l_t(theta): per coordinate the curvature-weighted mean
/// of the centres (zero where every curvature vanishes).
inline std::vector<double> offline_optimum(std::span<const QuadraticLoss> losses, std::size_t dim) {
    std::vector<double> num(dim, 0.0), den(dim, 0.0);
    for (const auto& l : losses) {
        for (std::size_t i = 0; i < dim; ++i) {
            num[i] += l.curvature[i] * l.centre[i];
            den[i] += l.curvature[i];
        }
    }
    std::vector<double> out(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) out[i] = den[i] > 0.0 ? num[i] / den[i] : 0.0;
    return out;
}

}  // namespace adaterm
