#pragma once

// Experiment harness: JSON configs, per-trial runners, parallel fan-out,
// result files and summary statistics.
//
// Config schema (schema_version 1):
//   { "schema_version": 1, "output_dir": "...", "threads": 0,
//     "experiments": [ { "id": "...", "kind": "test_function" | "regression" |
//       "regret" | "verify_gradients" | "surface", ... } ] }
// Unknown keys are rejected. Trial i runs with seed base_seed + i.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "adaterm/gradcheck.hpp"
#include "adaterm/models.hpp"
#include "adaterm/numerics.hpp"
#include "adaterm/optimizers.hpp"
#include "adaterm/problems.hpp"
#include "adaterm/regret.hpp"
#include "adaterm/surfaces.hpp"

namespace adaterm {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};


enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitNumerical = 3, kExitInvariant = 4 };

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

struct ResultRow {
    std::string experiment;
    std::string optimizer;
    std::uint64_t seed = 0;
    std::string metric;
    std::uint64_t step = 0;
    double value = 0.0;
};

inline constexpr const char* kResultHeader = "experiment,optimizer,seed,metric,step,value";

inline std::string format_double(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

inline void write_results(const std::vector<ResultRow>& rows, std::ostream& os) {
    os << kResultHeader << '\n';
    for (const auto& r : rows) {
        os << r.experiment << ',' << r.optimizer << ',' << r.seed << ',' << r.metric << ',' << r.step << ','
           << format_double(r.value) << '\n';
    }
}

inline std::vector<ResultRow> read_results(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != kResultHeader) throw ConfigError("results: missing or unexpected header");
    std::vector<ResultRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 6) throw ConfigError("results: malformed row '" + line + "'");
        try {
            rows.push_back({f[0], f[1], std::stoull(f[2]), f[3], std::stoull(f[4]), std::stod(f[5])});
        } catch (const std::exception&) {
            throw ConfigError("results: malformed row '" + line + "'");
        }
    }
    return rows;
}

struct SummaryRow {
    std::string experiment;
    std::string optimizer;
    std::string metric;
    std::size_t count = 0;
    double mean = 0.0;
    double std = 0.0;  // population
    double median = 0.0;
};

inline double median_of(std::vector<double> xs) {
    if (xs.empty()) throw ParameterError("median_of: empty input");
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

/// Mean, population standard deviation and median per (experiment, optimizer, metric).
inline std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
    if (rows.empty()) throw ParameterError("summarize: no result rows");
    std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> groups;
    for (const auto& r : rows) groups[{r.experiment, r.optimizer, r.metric}].push_back(r.value);
    std::vector<SummaryRow> out;
    for (const auto& [key, xs] : groups) {
        SummaryRow s;
        std::tie(s.experiment, s.optimizer, s.metric) = key;
        s.count = xs.size();
        double acc = 0.0;
        for (double x : xs) acc += x;
        s.mean = acc / static_cast<double>(xs.size());
        double var = 0.0;
        for (double x : xs) var += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(var / static_cast<double>(xs.size()));
        s.median = median_of(xs);
        out.push_back(std::move(s));
    }
    return out;
}

inline void write_summary(const std::vector<SummaryRow>& rows, std::ostream& os) {
    os << "experiment,optimizer,metric,count,mean,std,median\n";
    for (const auto& s : rows) {
        os << s.experiment << ',' << s.optimizer << ',' << s.metric << ',' << s.count << ','
           << format_double(s.mean) << ',' << format_double(s.std) << ',' << format_double(s.median) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Trial runners
// ---------------------------------------------------------------------------

struct TestFunctionTrial {
    Point2 final_point{};
    double error_norm = 0.0;
    double final_value = 0.0;
    std::optional<double> final_nu_tilde;
    std::vector<std::array<double, 3>> trajectory;  // (x, y, nu_tilde or NaN) after each step
};

/// Gradients are taken at the (possibly perturbed) evaluation point; the
/// stored iterate itself is never perturbed.
inline TestFunctionTrial run_test_function_trial(const TestFunctionSpec& spec, const OptimizerConfig& cfg,
                                                 std::size_t steps, std::uint64_t seed, bool record = false) {
    cfg.validate();
    Rng rng(seed);
    ParamGroup group("xy", DenseArray({2}, {spec.start[0], spec.start[1]}));
    TestFunctionTrial out;
    if (record) out.trajectory.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        const Point2 at = inject_coordinate_noise({group.values[0], group.values[1]}, spec.noise_probability, rng,
                                                  spec.noise_half_width);
        const auto ev = eval_test_function(spec.function, at);
        group.grad[0] = ev.gradient[0];
        group.grad[1] = ev.gradient[1];
        step(group, cfg);
        if (!all_finite(group.values.data())) throw NumericalError("test function: iterate became non-finite");
        if (record) {
            out.trajectory.push_back({group.values[0], group.values[1],
                                      nu_tilde_of(group).value_or(std::numeric_limits<double>::quiet_NaN())});
        }
    }
    out.final_point = {group.values[0], group.values[1]};
    const Point2 opt = test_function_optimum(spec.function);
    out.error_norm = std::hypot(out.final_point[0] - opt[0], out.final_point[1] - opt[1]);
    out.final_value = eval_test_function(spec.function, out.final_point).value;
    out.final_nu_tilde = nu_tilde_of(group);
    return out;
}

struct RegressionTrial {
    double test_mse = 0.0;
    double last_train_mse = 0.0;
    std::size_t updates = 0;
    std::vector<double> nu_tilde;  // per group, AdaTerm only
};

inline double evaluate_mse(const MlpModel& model, const RegressionBatch& data) {
    auto [yhat, tape] = forward(model, data.x);
    return mse_loss(yhat, data.clean).first;
}

/// Trains a fresh network on one pass (per epoch) over the noisy stream and
/// reports the MSE against the clean target on an even grid.
inline RegressionTrial run_regression_trial(const RegressionSpec& spec, const OptimizerConfig& cfg,
                                            const std::vector<std::size_t>& layers, std::size_t epochs,
                                            std::size_t test_points, std::uint64_t seed) {
    cfg.validate();
    Rng root(seed);
    Rng init_rng = root.fork(1);
    MlpModel model = MlpModel::he_uniform(layers, init_rng);
    RegressionStream stream(spec, root.fork(2));
    auto groups = make_param_groups(model);
    RegressionTrial out;
    for (std::size_t e = 0; e < epochs; ++e) {
        stream.rewind();
        while (auto batch = stream.next()) {
            auto [yhat, tape] = forward(model, batch->x);
            auto [loss, dloss] = mse_loss(yhat, batch->y);
            const auto grads = backward(model, tape, dloss);
            set_gradients(groups, grads);
            step(std::span<ParamGroup>(groups), cfg);
            load_param_groups(model, groups);
            out.last_train_mse = loss;
            ++out.updates;
        }
    }
    out.test_mse = evaluate_mse(model, regression_test_set(spec, test_points));
    if (!std::isfinite(out.test_mse)) throw NumericalError("regression: non-finite test loss");
    for (const auto& g : groups) {
        if (auto nu = nu_tilde_of(g)) out.nu_tilde.push_back(*nu);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Parallel fan-out
// ---------------------------------------------------------------------------

/// Runs fn(i) for i in [0, n) on up to `threads` workers. The first exception
/// (by index) is rethrown after all workers finish.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

enum class ExperimentKind { TestFunction, Regression, Regret, VerifyGradients, Surface };

struct NamedOptimizer {
    std::string name;
    OptimizerConfig cfg;
};

struct ExperimentConfig {
    std::string id;
    ExperimentKind kind = ExperimentKind::TestFunction;
    std::size_t trials = 1;
    std::uint64_t base_seed = 0;
    std::vector<NamedOptimizer> optimizers;
    std::vector<double> noise_ratios;  // sweep for test_function / regression

    TestFunctionSpec test_function;
    std::size_t steps = 15000;
    bool trajectory = false;

    RegressionSpec regression;
    std::vector<std::size_t> layers = MlpModel::regression_layout();
    std::size_t epochs = 1;
    std::size_t test_points = 200;

    OnlineConvexSpec online;
    std::size_t horizon = 5000;

    std::size_t points = 100;
    std::vector<std::size_t> dims{1, 2, 5, 8};
    double tolerance = 1e-5;

    GridSpec grid;
};

struct HarnessConfig {
    int schema_version = 1;
    std::filesystem::path output_dir = "results";
    std::size_t threads = 0;
    std::vector<ExperimentConfig> experiments;
};

namespace detail {

/// Object wrapper that records which keys were read so leftovers can be
/// reported as unknown.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    bool has(const std::string& key) {
        used_.insert(key);
        return j_.contains(key);
    }

    const json& raw(const std::string& key) {
        if (!has(key)) throw ConfigError(at(key) + ": missing required key");
        return j_.at(key);
    }

    double number(const std::string& key, double fallback) {
        if (!has(key)) return fallback;
        return number(key);
    }

    double number(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_number()) throw ConfigError(at(key) + ": expected a number");
        return v.get<double>();
    }

    std::uint64_t count(const std::string& key, std::uint64_t fallback) {
        if (!has(key)) return fallback;
        return count_of(raw(key), at(key));
    }

    bool boolean(const std::string& key, bool fallback) {
        if (!has(key)) return fallback;
        const json& v = raw(key);
        if (!v.is_boolean()) throw ConfigError(at(key) + ": expected true or false");
        return v.get<bool>();
    }

    std::string string(const std::string& key, const std::string& fallback) {
        if (!has(key)) return fallback;
        return string(key);
    }

    std::string string(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_string()) throw ConfigError(at(key) + ": expected a string");
        return v.get<std::string>();
    }

    std::vector<double> numbers(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_array()) throw ConfigError(at(key) + ": expected an array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) throw ConfigError(at(key) + "[" + std::to_string(i) + "]: expected a number");
            out.push_back(v[i].get<double>());
        }
        return out;
    }

    std::vector<std::size_t> counts(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_array()) throw ConfigError(at(key) + ": expected an array of integers");
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            out.push_back(count_of(v[i], at(key) + "[" + std::to_string(i) + "]"));
        }
        return out;
    }

    void finish() const {
        for (const auto& [key, _] : j_.items()) {
            if (!used_.count(key)) throw ConfigError(at(key) + ": unknown key");
        }
    }

private:
    static std::uint64_t count_of(const json& v, const std::string& where) {
        if (v.is_number_unsigned()) return v.get<std::uint64_t>();
        if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
        throw ConfigError(where + ": expected a non-negative integer");
    }

    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

template <class E>
E parse_enum(Section& s, const std::string& key, E fallback, const std::vector<std::pair<const char*, E>>& table) {
    if (!s.has(key)) return fallback;
    const std::string v = s.string(key);
    for (const auto& [name, e] : table) {
        if (v == name) return e;
    }
    throw ConfigError(s.at(key) + ": unknown value '" + v + "'");
}

template <class F>
void rethrow_as_config(const std::string& where, F&& f) {
    try {
        f();
    } catch (const ParameterError& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

}  // namespace detail

inline NamedOptimizer parse_optimizer(const json& j, const std::string& path) {
    detail::Section s(j, path);
    NamedOptimizer out;
    auto& c = out.cfg;
    c.algorithm = detail::parse_enum<Algorithm>(s, "algorithm", Algorithm::AdaTerm,
                                                {{"adaterm", Algorithm::AdaTerm},
                                                 {"adam", Algorithm::Adam},
                                                 {"adabelief", Algorithm::AdaBelief},
                                                 {"tadam", Algorithm::TAdam}});
    out.name = s.string("name", std::string(to_string(c.algorithm)));
    c.alpha = s.number("alpha", c.alpha);
    c.beta = s.number("beta", c.beta);
    c.beta1 = s.number("beta1", c.beta1);
    c.beta2 = s.number("beta2", c.beta2);
    if (s.has("eps")) c.eps = s.number("eps");
    c.nu_tilde_min = s.number("nu_tilde_min", c.nu_tilde_min);
    if (s.has("nu_tilde_init")) c.nu_tilde_init = s.number("nu_tilde_init");
    c.variant = detail::parse_enum<Variant>(s, "variant", Variant::Default,
                                            {{"default", Variant::Default},
                                             {"uncentered", Variant::Uncentered},
                                             {"adabias", Variant::AdaBias},
                                             {"uncentered_adabias", Variant::UncenteredAdaBias},
                                             {"adaterm2", Variant::AdaTerm2}});
    c.ablation = detail::parse_enum<Ablation>(s, "ablation", Ablation::None,
                                              {{"none", Ablation::None},
                                               {"no_adaptiveness", Ablation::NoAdaptiveness},
                                               {"no_robustness", Ablation::NoRobustness}});
    c.lr_schedule = detail::parse_enum<LrSchedule>(s, "lr_schedule", LrSchedule::Constant,
                                                   {{"constant", LrSchedule::Constant},
                                                    {"inverse_sqrt", LrSchedule::InverseSqrt}});
    c.bias_correction = s.boolean("bias_correction", c.bias_correction);
    c.weight_decay = s.number("weight_decay", c.weight_decay);
    c.tadam_nu_tilde = s.number("tadam_nu_tilde", c.tadam_nu_tilde);
    c.adabelief_zero_mean = s.boolean("adabelief_zero_mean", c.adabelief_zero_mean);
    s.finish();
    if (out.name.empty() || out.name.find_first_of(",\n") != std::string::npos) {
        throw ConfigError(s.at("name") + ": must be non-empty without commas");
    }
    detail::rethrow_as_config(path, [&] { c.validate(); });
    return out;
}

inline ExperimentConfig parse_experiment(const json& j, const std::string& path, std::size_t index) {
    detail::Section s(j, path);
    ExperimentConfig e;
    e.kind = detail::parse_enum<ExperimentKind>(s, "kind", ExperimentKind::TestFunction,
                                                {{"test_function", ExperimentKind::TestFunction},
                                                 {"regression", ExperimentKind::Regression},
                                                 {"regret", ExperimentKind::Regret},
                                                 {"verify_gradients", ExperimentKind::VerifyGradients},
                                                 {"surface", ExperimentKind::Surface}});
    if (!s.has("kind")) throw ConfigError(s.at("kind") + ": missing required key");
    e.id = s.string("id", "exp" + std::to_string(index));
    if (e.id.empty() || e.id.find_first_of(",/\\\n") != std::string::npos) {
        throw ConfigError(s.at("id") + ": must be non-empty without commas or slashes");
    }
    e.trials = s.count("trials", e.trials);
    if (e.trials == 0) throw ConfigError(s.at("trials") + ": must be at least 1");
    e.base_seed = s.count("base_seed", e.base_seed);

    auto parse_optimizers = [&] {
        const json& arr = s.raw("optimizers");
        if (!arr.is_array() || arr.empty()) throw ConfigError(s.at("optimizers") + ": expected a non-empty array");
        std::set<std::string> names;
        for (std::size_t i = 0; i < arr.size(); ++i) {
            e.optimizers.push_back(parse_optimizer(arr[i], s.at("optimizers") + "[" + std::to_string(i) + "]"));
            if (!names.insert(e.optimizers.back().name).second) {
                throw ConfigError(s.at("optimizers") + "[" + std::to_string(i) + "].name: duplicate name");
            }
        }
    };
    auto parse_ratios = [&](double single) {
        e.noise_ratios = s.has("noise_ratios") ? s.numbers("noise_ratios") : std::vector<double>{single};
        if (e.noise_ratios.empty()) throw ConfigError(s.at("noise_ratios") + ": must not be empty");
        for (double p : e.noise_ratios) {
            if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(s.at("noise_ratios") + ": ratios must lie in [0, 1]");
        }
    };

    switch (e.kind) {
        case ExperimentKind::TestFunction: {
            const std::string fname = s.string("function");
            const auto f = parse_test_function(fname);
            if (!f) throw ConfigError(s.at("function") + ": unknown value '" + fname + "'");
            e.test_function = TestFunctionSpec::standard(*f, 0.0);
            if (s.has("start")) {
                const auto st = s.numbers("start");
                if (st.size() != 2) throw ConfigError(s.at("start") + ": expected two numbers");
                e.test_function.start = {st[0], st[1]};
            }
            e.test_function.noise_half_width = s.number("noise_half_width", 0.1);
            parse_ratios(s.number("noise_ratio", 0.0));
            e.steps = s.count("steps", e.steps);
            e.trajectory = s.boolean("trajectory", false);
            parse_optimizers();
            break;
        }
        case ExperimentKind::Regression: {
            auto& r = e.regression;
            r.samples = s.count("samples", r.samples);
            r.batch_size = s.count("batch_size", r.batch_size);
            r.x_min = s.number("x_min", r.x_min);
            r.x_max = s.number("x_max", r.x_max);
            r.noise_dof = s.number("noise_dof", r.noise_dof);
            r.noise_scale = s.number("noise_scale", r.noise_scale);
            parse_ratios(s.number("noise_ratio", 0.0));
            if (s.has("layers")) e.layers = s.counts("layers");
            if (e.layers.size() < 2 || e.layers.front() != 1 || e.layers.back() != 1 ||
                std::find(e.layers.begin(), e.layers.end(), 0u) != e.layers.end()) {
                throw ConfigError(s.at("layers") + ": expected positive widths starting and ending with 1");
            }
            e.epochs = s.count("epochs", e.epochs);
            e.test_points = s.count("test_points", e.test_points);
            if (e.epochs == 0) throw ConfigError(s.at("epochs") + ": must be at least 1");
            if (e.test_points < 2) throw ConfigError(s.at("test_points") + ": must be at least 2");
            detail::rethrow_as_config(path, [&] { r.validate(); });
            parse_optimizers();
            break;
        }
        case ExperimentKind::Regret: {
            auto& o = e.online;
            o.dim = s.count("dim", o.dim);
            o.bound = s.number("bound", o.bound);
            o.curvature_min = s.number("curvature_min", o.curvature_min);
            o.curvature_max = s.number("curvature_max", o.curvature_max);
            o.centre = s.number("centre", o.centre);
            o.centre_spread = s.number("centre_spread", o.centre_spread);
            if (s.has("gradient_bound")) o.gradient_bound = s.number("gradient_bound");
            e.horizon = s.count("horizon", e.horizon);
            if (e.horizon == 0) throw ConfigError(s.at("horizon") + ": must be at least 1");
            detail::rethrow_as_config(path, [&] { o.validate(); });
            parse_optimizers();
            for (auto& opt : e.optimizers) {
                if (opt.cfg.algorithm != Algorithm::AdaTerm) {
                    throw ConfigError(s.at("optimizers") + ": regret runs support only adaterm");
                }
                opt.cfg.lr_schedule = LrSchedule::InverseSqrt;
                opt.cfg.bias_correction = false;
            }
            break;
        }
        case ExperimentKind::VerifyGradients: {
            e.points = s.count("points", e.points);
            if (s.has("dims")) e.dims = s.counts("dims");
            e.tolerance = s.number("tolerance", e.tolerance);
            if (e.points == 0 || e.dims.empty()) throw ConfigError(s.at("points") + ": need points and dims");
            for (auto d : e.dims) {
                if (d == 0) throw ConfigError(s.at("dims") + ": dimensions must be positive");
            }
            break;
        }
        case ExperimentKind::Surface: {
            const std::string g = s.string("grid");
            const auto k = parse_grid_kind(g);
            if (!k) throw ConfigError(s.at("grid") + ": unknown value '" + g + "'");
            e.grid = GridSpec::defaults(*k);
            e.grid.beta = s.number("beta", e.grid.beta);
            if (s.has("w_values")) e.grid.w_values = s.numbers("w_values");
            if (s.has("dims")) e.grid.dims = s.counts("dims");
            e.grid.w_axis.points = s.count("w_points", e.grid.w_axis.points);
            e.grid.nu_axis.points = s.count("nu_points", e.grid.nu_axis.points);
            e.grid.dev_axis.points = s.count("dev_points", e.grid.dev_axis.points);
            detail::rethrow_as_config(path, [&] { e.grid.validate(); });
            break;
        }
    }
    s.finish();
    return e;
}

inline HarnessConfig parse_config(const json& j, const std::filesystem::path& base_dir = {}) {
    detail::Section s(j, "");
    HarnessConfig cfg;
    if (!s.has("schema_version")) throw ConfigError("schema_version: missing required key");
    cfg.schema_version = static_cast<int>(s.count("schema_version", 1));
    if (cfg.schema_version != 1) throw ConfigError("schema_version: unsupported version");
    std::filesystem::path out = s.string("output_dir", "results");
    cfg.output_dir = out.is_absolute() ? out : base_dir / out;
    cfg.threads = s.count("threads", 0);
    const json& arr = s.raw("experiments");
    if (!arr.is_array() || arr.empty()) throw ConfigError("experiments: expected a non-empty array");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        cfg.experiments.push_back(parse_experiment(arr[i], "experiments[" + std::to_string(i) + "]", i));
        if (!ids.insert(cfg.experiments.back().id).second) {
            throw ConfigError("experiments[" + std::to_string(i) + "].id: duplicate id");
        }
    }
    s.finish();
    return cfg;
}

/// Reads and parses a config file. Relative output_dir resolves against the
/// current directory.
inline HarnessConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string() + ": cannot open config");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_config(j);
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

namespace detail {

inline std::string ratio_suffix(double p, std::size_t n_ratios) {
    return n_ratios > 1 ? "_p" + format_double(p) : std::string();
}

inline void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw std::runtime_error(path.string() + ": cannot write");
    body(os);
}

struct TrialOutput {
    std::vector<ResultRow> rows;
    std::function<void(const std::filesystem::path&)> write_extra;
    std::string invariant_failure;
};

}  // namespace detail

struct ExperimentOutcome {
    std::string id;
    std::vector<ResultRow> rows;
    std::vector<std::string> invariant_failures;
};

/// Runs one experiment and writes <output_dir>/<id>/results.csv (plus
/// summary.csv and per-kind extras). Numerical errors propagate.
inline ExperimentOutcome run_experiment(const ExperimentConfig& e, const std::filesystem::path& output_dir,
                                        std::size_t threads, std::ostream& log) {
    const auto dir = output_dir / e.id;
    std::filesystem::create_directories(dir);
    ExperimentOutcome outcome{e.id, {}, {}};

    if (e.kind == ExperimentKind::Surface) {
        const Table table = emit_grid(e.grid);
        detail::write_file(dir / (std::string(to_string(e.grid.kind)) + ".csv"),
                           [&](std::ostream& os) { write_csv(table, os); });
        log << e.id << ": wrote " << table.rows.size() << " grid rows\n";
        return outcome;
    }

    if (e.kind == ExperimentKind::VerifyGradients) {
        for (std::size_t t = 0; t < e.trials; ++t) {
            const std::uint64_t seed = e.base_seed + t;
            const auto rep = verify_gradients(e.points, e.dims, Rng(seed));
            const auto push = [&](const char* metric, double v) {
                outcome.rows.push_back({e.id, "-", seed, metric, rep.points, v});
            };
            push("max_rel_err_grad_m", rep.max_err_m);
            push("max_rel_err_grad_v", rep.max_err_v);
            push("max_rel_err_grad_nu", rep.max_err_nu);
            log << e.id << " seed " << seed << ": max relative error grad_m " << rep.max_err_m << ", grad_v "
                << rep.max_err_v << ", grad_nu " << rep.max_err_nu << " over " << rep.points << " points\n";
            if (!rep.passes(e.tolerance)) {
                outcome.invariant_failures.push_back(e.id + ": finite-difference error " +
                                                     format_double(rep.worst()) + " exceeds tolerance");
            }
        }
    } else {
        // Jobs: ratio x optimizer x trial, merged by job index.
        const std::size_t n_ratios = e.kind == ExperimentKind::Regret ? 1 : e.noise_ratios.size();
        const std::size_t n_jobs = n_ratios * e.optimizers.size() * e.trials;
        std::vector<detail::TrialOutput> outputs(n_jobs);
        parallel_for(n_jobs, threads, [&](std::size_t job) {
            const std::size_t trial = job % e.trials;
            const std::size_t oi = (job / e.trials) % e.optimizers.size();
            const std::size_t ri = job / (e.trials * e.optimizers.size());
            const auto& opt = e.optimizers[oi];
            const std::uint64_t seed = e.base_seed + trial;
            auto& out = outputs[job];
            switch (e.kind) {
                case ExperimentKind::TestFunction: {
                    auto spec = e.test_function;
                    spec.noise_probability = e.noise_ratios[ri];
                    const std::string exp_id = e.id + detail::ratio_suffix(spec.noise_probability, n_ratios);
                    auto res = run_test_function_trial(spec, opt.cfg, e.steps, seed, e.trajectory);
                    const auto push = [&](const char* metric, double v) {
                        out.rows.push_back({exp_id, opt.name, seed, metric, e.steps, v});
                    };
                    push("error_norm", res.error_norm);
                    push("final_x", res.final_point[0]);
                    push("final_y", res.final_point[1]);
                    push("final_value", res.final_value);
                    if (res.final_nu_tilde) push("final_nu_tilde", *res.final_nu_tilde);
                    if (e.trajectory) {
                        auto traj = std::move(res.trajectory);
                        out.write_extra = [traj = std::move(traj), exp_id, name = opt.name,
                                           seed](const std::filesystem::path& d) {
                            detail::write_file(d / ("trajectory_" + exp_id + "_" + name + "_" +
                                                    std::to_string(seed) + ".csv"),
                                               [&](std::ostream& os) {
                                                   os << "step,x,y,nu_tilde\n";
                                                   for (std::size_t t = 0; t < traj.size(); ++t) {
                                                       os << (t + 1) << ',' << format_double(traj[t][0]) << ','
                                                          << format_double(traj[t][1]) << ','
                                                          << format_double(traj[t][2]) << '\n';
                                                   }
                                               });
                        };
                    }
                    break;
                }
                case ExperimentKind::Regression: {
                    auto spec = e.regression;
                    spec.noise_ratio = e.noise_ratios[ri];
                    const std::string exp_id = e.id + detail::ratio_suffix(spec.noise_ratio, n_ratios);
                    const auto res = run_regression_trial(spec, opt.cfg, e.layers, e.epochs, e.test_points, seed);
                    out.rows.push_back({exp_id, opt.name, seed, "test_mse", res.updates, res.test_mse});
                    out.rows.push_back({exp_id, opt.name, seed, "last_train_mse", res.updates, res.last_train_mse});
                    if (!res.nu_tilde.empty()) {
                        out.rows.push_back({exp_id, opt.name, seed, "final_nu_tilde_median", res.updates,
                                            median_of(res.nu_tilde)});
                    }
                    break;
                }
                case ExperimentKind::Regret: {
                    auto rep = std::make_shared<RegretReport>(
                        run_regret_experiment(e.online, opt.cfg, e.horizon, Rng(seed)));
                    const auto push = [&](const char* metric, double v) {
                        out.rows.push_back({e.id, opt.name, seed, metric, e.horizon, v});
                    };
                    const std::size_t violation = rep->first_violation();
                    push("regret", rep->R_T);
                    push("bound_rhs", rep->terms.total());
                    push("bound_term1", rep->terms.t1);
                    push("bound_term2", rep->terms.t2);
                    push("bound_term3", rep->terms.t3);
                    push("bound_term4", rep->terms.t4);
                    push("underline_tau", rep->underline_tau);
                    push("tau_T", rep->tau_T);
                    push("max_grad", rep->G);
                    push("first_violation", static_cast<double>(violation));
                    const std::size_t lo = std::min<std::size_t>(1000, e.horizon);
                    push("sqrt_growth_ratio", rep->sqrt_growth_ratio(lo, e.horizon));
                    if (violation != 0 || !(rep->underline_tau > 0.0)) {
                        out.invariant_failure = e.id + " seed " + std::to_string(seed) +
                                                ": regret exceeds the bound at t = " + std::to_string(violation);
                    }
                    out.write_extra = [rep, name = opt.name, seed](const std::filesystem::path& d) {
                        detail::write_file(d / ("regret_" + name + "_" + std::to_string(seed) + ".csv"),
                                           [&](std::ostream& os) { write_regret_csv(*rep, os); });
                    };
                    break;
                }
                default: break;
            }
        });
        for (auto& o : outputs) {
            outcome.rows.insert(outcome.rows.end(), o.rows.begin(), o.rows.end());
            if (o.write_extra) o.write_extra(dir);
            if (!o.invariant_failure.empty()) outcome.invariant_failures.push_back(o.invariant_failure);
        }
        log << e.id << ": " << n_jobs << " trials done\n";
    }

    detail::write_file(dir / "results.csv", [&](std::ostream& os) { write_results(outcome.rows, os); });
    if (!outcome.rows.empty()) {
        detail::write_file(dir / "summary.csv", [&](std::ostream& os) { write_summary(summarize(outcome.rows), os); });
    }
    return outcome;
}

/// Runs every experiment (optionally only those of one kind) and maps
/// failures onto exit codes.
inline int run_harness(const HarnessConfig& cfg, std::ostream& log, std::ostream& err,
                       std::optional<ExperimentKind> only = std::nullopt) {
    std::vector<std::string> failures;
    bool any = false;
    try {
        for (const auto& e : cfg.experiments) {
            if (only && e.kind != *only) continue;
            any = true;
            auto outcome = run_experiment(e, cfg.output_dir, cfg.threads, log);
            failures.insert(failures.end(), outcome.invariant_failures.begin(), outcome.invariant_failures.end());
        }
    } catch (const ConfigError& ex) {
        err << "config error: " << ex.what() << '\n';
        return kExitConfig;
    } catch (const ParameterError& ex) {
        err << "config error: " << ex.what() << '\n';
        return kExitConfig;
    } catch (const NumericalError& ex) {
        err << "numerical error: " << ex.what() << '\n';
        return kExitNumerical;
    } catch (const DomainError& ex) {
        err << "numerical error: " << ex.what() << '\n';
        return kExitNumerical;
    }
    if (!any) {
        err << "config error: experiments: no experiment of the requested kind\n";
        return kExitConfig;
    }
    for (const auto& f : failures) err << "invariant failure: " << f << '\n';
    return failures.empty() ? kExitOk : kExitInvariant;
}

/// Collects every results.csv under dir (recursively).
inline std::vector<ResultRow> collect_results(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw ConfigError(dir.string() + ": not a directory");
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().filename() == "results.csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<ResultRow> rows;
    for (const auto& f : files) {
        std::ifstream in(f);
        auto part = read_results(in);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    return rows;
}

}  // namespace adaterm
