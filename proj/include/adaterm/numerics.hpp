#pragma once

// Dense arrays, reproducible random streams and the special functions the
// rest of the library builds on. Everything here works in double precision.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace adaterm {

/// Invalid argument to a library function (bad shape, out-of-range parameter).
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Non-finite value reached a place where it would poison state.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline bool all_finite(std::span<const double> xs) {
    return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

// ---------------------------------------------------------------------------
// DenseArray
// ---------------------------------------------------------------------------

/// Row-major n-dimensional array of doubles. Shape entries are positive and
/// their product always equals the element count.
class DenseArray {
public:
    DenseArray() = default;

    explicit DenseArray(std::vector<std::size_t> shape, double fill = 0.0)
        : shape_(std::move(shape)) {
        validate_shape(shape_);
        data_.assign(count(shape_), fill);
    }

    DenseArray(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape(shape_);
        if (count(shape_) != data_.size()) {
            throw ParameterError("DenseArray: shape does not match data length");
        }
    }

    static DenseArray vector(std::vector<double> data) {
        const std::size_t n = data.size();
        return DenseArray({n}, std::move(data));
    }

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    std::size_t rank() const noexcept { return shape_.size(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    double& at(std::size_t row, std::size_t col) {
        return data_[row * shape_.at(1) + col];
    }
    double at(std::size_t row, std::size_t col) const {
        return data_[row * shape_.at(1) + col];
    }

    DenseArray reshaped(std::vector<std::size_t> shape) const {
        return DenseArray(std::move(shape), data_);
    }

    DenseArray flattened() const { return reshaped({data_.size()}); }

    template <class F>
    DenseArray map(F&& f) const {
        DenseArray out = *this;
        std::transform(out.data_.begin(), out.data_.end(), out.data_.begin(),
                       std::forward<F>(f));
        return out;
    }

    void fill(double value) { std::fill(data_.begin(), data_.end(), value); }

    DenseArray& operator+=(const DenseArray& rhs) {
        check_same_shape(rhs);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += rhs.data_[i];
        return *this;
    }

    DenseArray& operator-=(const DenseArray& rhs) {
        check_same_shape(rhs);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= rhs.data_[i];
        return *this;
    }

    DenseArray& operator*=(double s) {
        for (double& x : data_) x *= s;
        return *this;
    }

    bool same_shape(const DenseArray& other) const noexcept { return shape_ == other.shape_; }

    friend bool operator==(const DenseArray&, const DenseArray&) = default;

private:
    static std::size_t count(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                               std::multiplies<>());
    }

    static void validate_shape(const std::vector<std::size_t>& shape) {
        if (std::any_of(shape.begin(), shape.end(), [](std::size_t n) { return n == 0; })) {
            throw ParameterError("DenseArray: shape entries must be positive");
        }
    }

    void check_same_shape(const DenseArray& rhs) const {
        if (!same_shape(rhs)) throw ParameterError("DenseArray: shape mismatch");
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Rng
// ---------------------------------------------------------------------------

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
}

}  // namespace detail

/// xoshiro256** seeded through splitmix64. All samplers are implemented here
/// (no <random> distributions) so streams are identical across standard
/// libraries. `fork` derives an independent child stream from the seed and a
/// stream id, which is how parallel trials get non-overlapping randomness.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = detail::splitmix64(sm);
    }

    std::uint64_t seed() const noexcept { return seed_; }

    Rng fork(std::uint64_t stream) const {
        std::uint64_t sm = seed_ ^ (0xd1b54a32d192ed03ULL * (stream + 1));
        return Rng(detail::splitmix64(sm));
    }

    std::uint64_t next_u64() noexcept {
        const std::uint64_t result = detail::rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl(state_[3], 45);
        return result;
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform on the open interval (lo, hi).
    double uniform(double lo, double hi) {
        if (!(lo < hi)) throw ParameterError("uniform: require lo < hi");
        double u = 0.0;
        do {
            u = uniform();
        } while (u == 0.0);
        return lo + (hi - lo) * u;
    }

    /// Standard normal via the Marsaglia polar method.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u = 0.0, v = 0.0, s = 0.0;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double scale = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * scale;
        has_spare_ = true;
        return u * scale;
    }

    double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

    /// Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 uses the U^{1/a} boost.
    double gamma(double shape) {
        if (!(shape > 0.0)) throw ParameterError("gamma: shape must be positive");
        if (shape < 1.0) {
            double u = 0.0;
            do {
                u = uniform();
            } while (u == 0.0);
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = 0.0, v = 0.0;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    double chi_square(double dof) { return 2.0 * gamma(0.5 * dof); }

    bool bernoulli(double p) {
        if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("bernoulli: p must lie in [0, 1]");
        return uniform() < p;
    }

private:
    std::uint64_t seed_;
    std::uint64_t state_[4]{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// One draw from T(nu, loc, scale): loc + scale * Z / sqrt(chi2(nu) / nu).
inline double sample_student_t(Rng& rng, double nu, double loc, double scale) {
    if (!(nu > 0.0)) throw ParameterError("sample_student_t: nu must be positive");
    if (!(scale > 0.0)) throw ParameterError("sample_student_t: scale must be positive");
    const double z = rng.normal();
    const double chi2 = rng.chi_square(nu);
    return loc + scale * z / std::sqrt(chi2 / nu);
}

inline std::vector<bool> sample_bernoulli_mask(Rng& rng, std::size_t n, double p) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw ParameterError("sample_bernoulli_mask: p must lie in [0, 1]");
    }
    std::vector<bool> mask(n);
    for (std::size_t i = 0; i < n; ++i) mask[i] = rng.uniform() < p;
    return mask;
}

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

/// Digamma for x > 0: shift up with psi(x) = psi(x+1) - 1/x until x >= 10,
/// then the asymptotic expansion through the x^-14 term.
inline double digamma(double x) {
    if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("digamma: x must be positive and finite");
    double shift = 0.0;
    while (x < 10.0) {
        shift -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    // Bernoulli-number coefficients B_{2n} / (2n).
    const double series =
        inv2 * (1.0 / 12.0 -
                inv2 * (1.0 / 120.0 -
                        inv2 * (1.0 / 252.0 -
                                inv2 * (1.0 / 240.0 -
                                        inv2 * (1.0 / 132.0 -
                                                inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    return shift + std::log(x) - 0.5 * inv - series;
}

}  // namespace adaterm
