#pragma once

// Numeric grids of the surrogate dof gradient against w_mv, the interpolation
// factor tau_mv(nu_tilde, D) and the dof increment kappa * g(nu_tilde, D).

#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "adaterm/numerics.hpp"
#include "adaterm/tdist.hpp"

namespace adaterm {

enum class GridKind { DofGradient, TauSurface, DofIncrementSurface };

inline std::optional<GridKind> parse_grid_kind(std::string_view s) {
    if (s == "dof-gradient") return GridKind::DofGradient;
    if (s == "tau") return GridKind::TauSurface;
    if (s == "dof-increment") return GridKind::DofIncrementSurface;
    return std::nullopt;
}

inline std::string_view to_string(GridKind k) {
    switch (k) {
        case GridKind::DofGradient: return "dof-gradient";
        case GridKind::TauSurface: return "tau";
        case GridKind::DofIncrementSurface: return "dof-increment";
    }
    return "?";
}

struct Axis {
    double lo = 0.0;
    double hi = 1.0;
    std::size_t points = 2;
    bool log_spaced = false;

    void validate(const char* name) const {
        if (points < 2) throw ParameterError(std::string("grid: axis ") + name + " needs at least 2 points");
        if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
            throw ParameterError(std::string("grid: axis ") + name + " needs lo < hi");
        }
        if (log_spaced && !(lo > 0.0)) throw ParameterError(std::string("grid: log axis ") + name + " must be positive");
    }

    std::vector<double> values() const {
        std::vector<double> out(points);
        for (std::size_t i = 0; i < points; ++i) {
            const double f = static_cast<double>(i) / static_cast<double>(points - 1);
            out[i] = log_spaced ? std::exp(std::log(lo) + f * (std::log(hi) - std::log(lo)))
                                : lo + f * (hi - lo);
        }
        out.back() = hi;
        return out;
    }
};

struct GridSpec {
    GridKind kind = GridKind::DofGradient;
    Axis w_axis{1e-6, 2.0, 400, true};
    std::vector<double> w_values;  // explicit w_mv values; overrides w_axis when set
    std::vector<std::size_t> dims{1, 10, 100, 1000, 10000};
    Axis nu_axis{1.0, 100.0, 100, false};
    Axis dev_axis{0.0, 100.0, 101, false};
    double beta = 0.9;
    double nu_tilde_min = 1.0;

    static GridSpec defaults(GridKind k) {
        GridSpec s;
        s.kind = k;
        return s;
    }

    void validate() const {
        if (!(beta > 0.0 && beta < 1.0)) throw ParameterError("grid: beta must lie in (0, 1)");
        switch (kind) {
            case GridKind::DofGradient:
                if (w_values.empty()) w_axis.validate("w_mv");
                for (double w : w_values) {
                    if (!(w > 0.0)) throw ParameterError("grid: w_mv values must be positive");
                }
                if (dims.empty()) throw ParameterError("grid: dimension list is empty");
                for (auto d : dims) {
                    if (d == 0) throw ParameterError("grid: dimensions must be positive");
                }
                break;
            case GridKind::TauSurface:
            case GridKind::DofIncrementSurface:
                nu_axis.validate("nu_tilde");
                dev_axis.validate("D");
                if (!(nu_axis.lo > 0.0)) throw ParameterError("grid: nu_tilde axis must be positive");
                if (!(dev_axis.lo >= 0.0)) throw ParameterError("grid: D axis must be non-negative");
                if (kind == GridKind::DofIncrementSurface && !(nu_tilde_min > 0.0)) {
                    throw ParameterError("grid: nu_tilde_min must be positive");
                }
                break;
        }
    }
};

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

/// tau_mv = (1 - beta) nu_tilde / (nu_tilde + D)
inline double tau_mv_value(double nu_tilde, double dev, double beta) {
    return (1.0 - beta) * robust_weight(nu_tilde, dev) / ((nu_tilde + 1.0) / nu_tilde);
}

/// kappa_dnu * g_nu_tilde for a one-step update from (nu_tilde, D); independent of d.
inline double dof_increment_value(double nu_tilde, double dev, double beta, double nu_tilde_min) {
    const double w_mv = robust_weight(nu_tilde, dev);
    const double w_bar = (nu_tilde + 1.0) / nu_tilde;
    const double w_nu_bar = std::max(dof_weight(w_bar), eps_float_weight_ceiling());
    const double kappa = 2.0 * (nu_tilde - nu_tilde_min) * (1.0 - beta) / w_nu_bar;
    return kappa * grad_nu_tilde_surrogate(nu_tilde, 1, w_mv);
}

/// Row-major over axes in the listed column order.
inline Table emit_grid(const GridSpec& spec) {
    spec.validate();
    Table table;
    switch (spec.kind) {
        case GridKind::DofGradient: {
            table.columns = {"d", "w_mv", "grad_nu"};
            const auto ws = spec.w_values.empty() ? spec.w_axis.values() : spec.w_values;
            for (auto d : spec.dims) {
                for (double w : ws) {
                    const double value = grad_nu_surrogate_pre(static_cast<double>(d), d, w);
                    table.rows.push_back({static_cast<double>(d), w, value});
                }
            }
            break;
        }
        case GridKind::TauSurface:
        case GridKind::DofIncrementSurface: {
            const bool tau = spec.kind == GridKind::TauSurface;
            table.columns = {"nu_tilde", "D", tau ? "tau_mv" : "dof_increment"};
            for (double nu : spec.nu_axis.values()) {
                for (double dev : spec.dev_axis.values()) {
                    const double value = tau ? tau_mv_value(nu, dev, spec.beta)
                                             : dof_increment_value(nu, dev, spec.beta, spec.nu_tilde_min);
                    table.rows.push_back({nu, dev, value});
                }
            }
            break;
        }
    }
    return table;
}

inline void write_csv(const Table& table, std::ostream& os) {
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
        os << (c ? "," : "") << table.columns[c];
    }
    os << '\n';
    os.precision(17);
    for (const auto& row : table.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << row[c];
        os << '\n';
    }
}

}  // namespace adaterm
