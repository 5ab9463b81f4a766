#pragma once

// AdaTerm (with its variants and ablations), Adam, AdaBelief and t-Adam.
// Each optimizer owns per-group state and is driven by caller-supplied
// gradients; nothing here evaluates a loss.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "adaterm/framing.hpp"
#include "adaterm/models.hpp"
#include "adaterm/numerics.hpp"
#include "adaterm/tdist.hpp"

namespace adaterm {

enum class Algorithm : std::uint8_t { AdaTerm = 0, Adam = 1, AdaBelief = 2, TAdam = 3 };
enum class Variant { Default, Uncentered, AdaBias, UncenteredAdaBias, AdaTerm2 };
enum class Ablation { None, NoAdaptiveness, NoRobustness };
enum class LrSchedule { Constant, InverseSqrt };

inline std::string_view to_string(Algorithm a) {
    switch (a) {
        case Algorithm::AdaTerm: return "adaterm";
        case Algorithm::Adam: return "adam";
        case Algorithm::AdaBelief: return "adabelief";
        case Algorithm::TAdam: return "tadam";
    }
    return "?";
}

struct OptimizerConfig {
    Algorithm algorithm = Algorithm::AdaTerm;
    double alpha = 1e-3;
    double beta = 0.9;    // AdaTerm's single smoothness
    double beta1 = 0.9;   // Adam family
    double beta2 = 0.999;
    std::optional<double> eps;  // unset: 1e-5 for AdaTerm, 1e-8 otherwise
    double nu_tilde_min = 1.0;
    std::optional<double> nu_tilde_init;  // unset: nu_tilde_min + eps
    Variant variant = Variant::Default;
    Ablation ablation = Ablation::None;
    LrSchedule lr_schedule = LrSchedule::Constant;
    bool bias_correction = true;
    double weight_decay = 0.0;
    double tadam_nu_tilde = 1.0;  // t-Adam's fixed dof per dimension
    /// Diagnostic switch: AdaBelief treats m as zero in its belief term and
    /// drops the inner eps, which reduces it to Adam.
    bool adabelief_zero_mean = false;

    double effective_eps() const {
        if (eps) return *eps;
        return algorithm == Algorithm::AdaTerm ? 1e-5 : 1e-8;
    }

    void validate() const {
        auto in_unit = [](double x) { return x > 0.0 && x < 1.0; };
        if (!(alpha > 0.0)) throw ParameterError("optimizer: alpha must be positive");
        if (!in_unit(beta)) throw ParameterError("optimizer: beta must lie in (0, 1)");
        if (!in_unit(beta1) || !in_unit(beta2)) {
            throw ParameterError("optimizer: beta1/beta2 must lie in (0, 1)");
        }
        if (!(effective_eps() > 0.0)) throw ParameterError("optimizer: eps must be positive");
        if (!(nu_tilde_min > 0.0)) throw ParameterError("optimizer: nu_tilde_min must be positive");
        if (nu_tilde_init && !(*nu_tilde_init > nu_tilde_min)) {
            throw ParameterError("optimizer: nu_tilde_init must exceed nu_tilde_min");
        }
        if (!(weight_decay >= 0.0)) throw ParameterError("optimizer: weight_decay must be >= 0");
        if (!(tadam_nu_tilde > 0.0)) throw ParameterError("optimizer: tadam_nu_tilde must be positive");
    }

    /// Learning rate at (1-based) step t.
    double learning_rate(std::uint64_t t) const {
        if (lr_schedule == LrSchedule::InverseSqrt) {
            return alpha / std::sqrt(static_cast<double>(t == 0 ? 1 : t));
        }
        return alpha;
    }

    EstimatorOptions estimator_options() const {
        EstimatorOptions o;
        o.robust = ablation != Ablation::NoRobustness;
        o.adapt_dof = ablation != Ablation::NoAdaptiveness;
        o.scale_rule = variant == Variant::AdaTerm2 ? ScaleRule::WeightedSquare : ScaleRule::Clipped;
        return o;
    }
};

struct AdaTermGroupState {
    TDistState est;
    double bias_c = 0.0;  // adaptive correction, c_t = (1 - tau_t) c_{t-1} + tau_t
    StepDiagnostics last;
};

struct AdamGroupState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;
};

struct TAdamGroupState {
    std::vector<double> m;
    std::vector<double> v;
    double weight_sum = 0.0;  // W_t
    double last_weight = 0.0; // w_t
    std::uint64_t t = 0;
};

using GroupState = std::variant<std::monostate, AdaTermGroupState, AdamGroupState, TAdamGroupState>;

struct ParamGroup {
    std::string name;
    DenseArray values;
    DenseArray grad;
    GroupState state;

    ParamGroup() = default;
    ParamGroup(std::string n, DenseArray v)
        : name(std::move(n)), values(std::move(v)), grad(values.shape()) {}

    std::size_t dim() const noexcept { return values.size(); }
};

namespace detail {

inline void check_group(const ParamGroup& group) {
    if (group.values.empty()) throw ParameterError("optimizer: empty parameter group");
    if (!group.grad.same_shape(group.values)) {
        throw ParameterError("optimizer: gradient shape does not match values in group " + group.name);
    }
    if (!all_finite(group.grad.data())) {
        throw NumericalError("optimizer: non-finite gradient in group " + group.name);
    }
}

inline void apply_weight_decay(ParamGroup& group, double lr, double decay) {
    if (decay == 0.0) return;
    const double keep = 1.0 - lr * decay;
    for (double& x : group.values.data()) x *= keep;
}

}  // namespace detail

/// Update direction eta for the AdaTerm family given an advanced state.
inline std::vector<double> adaterm_variant_eta(const AdaTermGroupState& st, const OptimizerConfig& cfg) {
    const auto& est = st.est;
    const std::size_t d = est.dim();
    double correction = 1.0;
    const bool adaptive = cfg.variant == Variant::AdaBias || cfg.variant == Variant::UncenteredAdaBias;
    if (cfg.bias_correction) {
        correction = adaptive ? st.bias_c
                              : 1.0 - std::pow(est.beta, static_cast<double>(est.t));
    }
    const bool uncentered =
        cfg.variant == Variant::Uncentered || cfg.variant == Variant::UncenteredAdaBias;
    std::vector<double> eta(d);
    for (std::size_t i = 0; i < d; ++i) {
        const double second = uncentered ? est.v[i] + est.m[i] * est.m[i] : est.v[i];
        eta[i] = (est.m[i] / correction) / std::sqrt(second / correction);
    }
    return eta;
}

inline void adaterm_step(ParamGroup& group, const OptimizerConfig& cfg) {
    detail::check_group(group);
    if (!std::holds_alternative<AdaTermGroupState>(group.state)) {
        const double eps = cfg.effective_eps();
        double nu_init = cfg.nu_tilde_init.value_or(cfg.nu_tilde_min + eps);
        group.state = AdaTermGroupState{
            TDistState::initial(group.dim(), cfg.beta, eps, cfg.nu_tilde_min, nu_init), 0.0, {}};
    }
    auto& st = std::get<AdaTermGroupState>(group.state);
    auto [next, diag] = update_state(st.est, group.grad.data(), cfg.estimator_options());
    st.est = std::move(next);
    st.bias_c = (1.0 - diag.tau_mv) * st.bias_c + diag.tau_mv;
    st.last = std::move(diag);

    const double lr = cfg.learning_rate(st.est.t);
    detail::apply_weight_decay(group, lr, cfg.weight_decay);
    const auto eta = adaterm_variant_eta(st, cfg);
    auto theta = group.values.data();
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * eta[i];
}

namespace detail {

inline AdamGroupState& adam_state(ParamGroup& group) {
    if (!std::holds_alternative<AdamGroupState>(group.state)) {
        group.state = AdamGroupState{std::vector<double>(group.dim(), 0.0),
                                     std::vector<double>(group.dim(), 0.0), 0};
    }
    return std::get<AdamGroupState>(group.state);
}

/// theta -= lr * m_hat / (sqrt(v_hat) + eps)
inline void adam_family_apply(ParamGroup& group, const OptimizerConfig& cfg, std::uint64_t t,
                              std::span<const double> m, std::span<const double> v) {
    const double eps = cfg.effective_eps();
    const double c1 = cfg.bias_correction ? 1.0 - std::pow(cfg.beta1, static_cast<double>(t)) : 1.0;
    const double c2 = cfg.bias_correction ? 1.0 - std::pow(cfg.beta2, static_cast<double>(t)) : 1.0;
    const double lr = cfg.learning_rate(t);
    apply_weight_decay(group, lr, cfg.weight_decay);
    auto theta = group.values.data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
        theta[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
}

}  // namespace detail

inline void adam_step(ParamGroup& group, const OptimizerConfig& cfg) {
    detail::check_group(group);
    auto& st = detail::adam_state(group);
    const auto g = group.grad.data();
    st.t += 1;
    for (std::size_t i = 0; i < g.size(); ++i) {
        st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * g[i];
        st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    }
    detail::adam_family_apply(group, cfg, st.t, st.m, st.v);
}

/// AdaBelief: v tracks EMA of (g_t - m_t)^2 + eps.
inline void adabelief_step(ParamGroup& group, const OptimizerConfig& cfg) {
    detail::check_group(group);
    auto& st = detail::adam_state(group);
    const auto g = group.grad.data();
    const double eps = cfg.effective_eps();
    st.t += 1;
    for (std::size_t i = 0; i < g.size(); ++i) {
        st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * g[i];
        const double centre = cfg.adabelief_zero_mean ? 0.0 : st.m[i];
        const double r = g[i] - centre;
        st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * r * r +
                  (cfg.adabelief_zero_mean ? 0.0 : eps);
    }
    detail::adam_family_apply(group, cfg, st.t, st.m, st.v);
}

/// t-Adam: Student's t weighted first moment with decaying weight sum,
/// Adam's second moment. W_0 = beta1 / (1 - beta1).
inline void tadam_step(ParamGroup& group, const OptimizerConfig& cfg) {
    detail::check_group(group);
    if (!std::holds_alternative<TAdamGroupState>(group.state)) {
        group.state = TAdamGroupState{std::vector<double>(group.dim(), 0.0),
                                      std::vector<double>(group.dim(), 0.0),
                                      cfg.beta1 / (1.0 - cfg.beta1), 0.0, 0};
    }
    auto& st = std::get<TAdamGroupState>(group.state);
    const auto g = group.grad.data();
    const double eps = cfg.effective_eps();
    const double d = static_cast<double>(g.size());
    const double nu = cfg.tadam_nu_tilde * d;

    double dist = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double r = g[i] - st.m[i];
        dist += r * r / (st.v[i] + eps);
    }
    const double w = (nu + d) / (nu + dist);
    const double keep = st.weight_sum / (st.weight_sum + w);
    const double take = w / (st.weight_sum + w);
    st.t += 1;
    for (std::size_t i = 0; i < g.size(); ++i) {
        st.m[i] = keep * st.m[i] + take * g[i];
        st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    }
    st.weight_sum = (2.0 * cfg.beta1 - 1.0) / cfg.beta1 * st.weight_sum + w;
    st.last_weight = w;
    detail::adam_family_apply(group, cfg, st.t, st.m, st.v);
}

/// Dispatches on cfg.algorithm.
inline void step(ParamGroup& group, const OptimizerConfig& cfg) {
    switch (cfg.algorithm) {
        case Algorithm::AdaTerm: adaterm_step(group, cfg); return;
        case Algorithm::Adam: adam_step(group, cfg); return;
        case Algorithm::AdaBelief: adabelief_step(group, cfg); return;
        case Algorithm::TAdam: tadam_step(group, cfg); return;
    }
}

inline void step(std::span<ParamGroup> groups, const OptimizerConfig& cfg) {
    for (auto& g : groups) step(g, cfg);
}

/// Current nu_tilde of an AdaTerm group, if any.
inline std::optional<double> nu_tilde_of(const ParamGroup& group) {
    if (const auto* st = std::get_if<AdaTermGroupState>(&group.state)) return st->est.nu_tilde;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Model <-> groups
// ---------------------------------------------------------------------------

/// One group per weight matrix and one per bias vector, in layer order.
inline std::vector<ParamGroup> make_param_groups(const MlpModel& model) {
    std::vector<ParamGroup> groups;
    groups.reserve(2 * model.layer_count());
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        const auto& layer = model.layer(l);
        groups.emplace_back("layer" + std::to_string(l) + ".weight", layer.weight);
        groups.emplace_back("layer" + std::to_string(l) + ".bias", layer.bias);
    }
    return groups;
}

/// Writes group values back into the model (order as make_param_groups).
inline void load_param_groups(MlpModel& model, std::span<const ParamGroup> groups) {
    if (groups.size() != 2 * model.layer_count()) throw ParameterError("load_param_groups: group count mismatch");
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        auto& layer = model.mutable_layer(l);
        if (!groups[2 * l].values.same_shape(layer.weight) || !groups[2 * l + 1].values.same_shape(layer.bias)) {
            throw ParameterError("load_param_groups: shape mismatch");
        }
        layer.weight = groups[2 * l].values;
        layer.bias = groups[2 * l + 1].values;
    }
}

inline void set_gradients(std::span<ParamGroup> groups, std::span<const DenseArray> grads) {
    if (groups.size() != grads.size()) throw ParameterError("set_gradients: count mismatch");
    for (std::size_t i = 0; i < groups.size(); ++i) {
        if (!grads[i].same_shape(groups[i].values)) throw ParameterError("set_gradients: shape mismatch");
        groups[i].grad = grads[i];
    }
}

// ---------------------------------------------------------------------------
// Checkpoint: "AOPT" v1 + algorithm tag. AdaTerm payload is the "ATDS"
// payload followed by the adaptive correction c; Adam/AdaBelief is
// (d, t, m..., v...); t-Adam is (d, t, W, w, m..., v...).
// ---------------------------------------------------------------------------

inline constexpr framing::Magic kOptimizerMagic = framing::make_magic("AOPT");
inline constexpr std::uint8_t kOptimizerVersion = 1;

inline std::vector<std::uint8_t> serialize_group_state(const ParamGroup& group, Algorithm algorithm) {
    std::vector<double> p;
    if (const auto* a = std::get_if<AdaTermGroupState>(&group.state)) {
        p = state_payload(a->est);
        p.push_back(a->bias_c);
    } else if (const auto* b = std::get_if<AdamGroupState>(&group.state)) {
        p = {static_cast<double>(b->m.size()), static_cast<double>(b->t)};
        p.insert(p.end(), b->m.begin(), b->m.end());
        p.insert(p.end(), b->v.begin(), b->v.end());
    } else if (const auto* c = std::get_if<TAdamGroupState>(&group.state)) {
        p = {static_cast<double>(c->m.size()), static_cast<double>(c->t), c->weight_sum, c->last_weight};
        p.insert(p.end(), c->m.begin(), c->m.end());
        p.insert(p.end(), c->v.begin(), c->v.end());
    } else {
        throw ParameterError("serialize_group_state: group has no optimizer state yet");
    }
    return framing::encode({kOptimizerMagic, kOptimizerVersion,
                            static_cast<std::uint8_t>(algorithm), std::move(p)});
}

inline std::pair<Algorithm, GroupState> deserialize_group_state(std::span<const std::uint8_t> bytes) {
    const auto frame = framing::decode(bytes, kOptimizerMagic, kOptimizerVersion, true);
    const auto algo = static_cast<Algorithm>(*frame.tag);
    const auto& p = frame.payload;
    auto split = [&](std::size_t offset) {
        if (p.size() < offset) throw ParameterError("checkpoint: short optimizer payload");
        const auto d = static_cast<std::size_t>(p[0]);
        if (p.size() != offset + 2 * d) throw ParameterError("checkpoint: optimizer payload length");
        auto mid = p.begin() + static_cast<std::ptrdiff_t>(offset + d);
        return std::pair{std::vector<double>(p.begin() + static_cast<std::ptrdiff_t>(offset), mid),
                         std::vector<double>(mid, p.end())};
    };
    switch (algo) {
        case Algorithm::AdaTerm: {
            if (p.empty()) throw ParameterError("checkpoint: short optimizer payload");
            AdaTermGroupState st;
            st.est = state_from_payload(std::span(p).first(p.size() - 1));
            st.bias_c = p.back();
            return {algo, std::move(st)};
        }
        case Algorithm::Adam:
        case Algorithm::AdaBelief: {
            auto [m, v] = split(2);
            return {algo, AdamGroupState{std::move(m), std::move(v), static_cast<std::uint64_t>(p[1])}};
        }
        case Algorithm::TAdam: {
            auto [m, v] = split(4);
            return {algo, TAdamGroupState{std::move(m), std::move(v), p[2], p[3],
                                          static_cast<std::uint64_t>(p[1])}};
        }
    }
    throw ParameterError("checkpoint: unknown algorithm tag");
}

}  // namespace adaterm
