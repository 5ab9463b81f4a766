#pragma once

// Fully-connected ReLU network with explicit forward/backward passes and the
// mean-squared-error loss. Hidden layers use ReLU (derivative 0 at exactly
// 0); the output layer is linear.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adaterm/framing.hpp"
#include "adaterm/numerics.hpp"

namespace adaterm {

struct DenseLayer {
    DenseArray weight;  // [out, in]
    DenseArray bias;    // [out]

    std::size_t in() const { return weight.shape()[1]; }
    std::size_t out() const { return weight.shape()[0]; }
};

class MlpModel {
public:
    MlpModel() = default;

    /// Zero-initialised network with the given layer widths (input first).
    explicit MlpModel(std::vector<std::size_t> layer_sizes) : sizes_(std::move(layer_sizes)) {
        if (sizes_.size() == 1) throw ParameterError("MlpModel: need at least two layer sizes");
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            layers_.push_back({DenseArray({sizes_[l + 1], sizes_[l]}), DenseArray({sizes_[l + 1]})});
        }
    }

    /// He-uniform fan-in weights, zero biases.
    static MlpModel he_uniform(std::vector<std::size_t> layer_sizes, Rng& rng) {
        MlpModel model(std::move(layer_sizes));
        for (auto& layer : model.layers_) {
            const double limit = std::sqrt(6.0 / static_cast<double>(layer.in()));
            for (double& w : layer.weight.data()) w = limit * (2.0 * rng.uniform() - 1.0);
        }
        return model;
    }

    /// Default regression network: 1 -> 50 -> 50 -> 50 -> 50 -> 1.
    static std::vector<std::size_t> regression_layout() { return {1, 50, 50, 50, 50, 1}; }

    const std::vector<std::size_t>& layer_sizes() const noexcept { return sizes_; }
    std::size_t layer_count() const noexcept { return layers_.size(); }
    bool empty() const noexcept { return layers_.empty(); }
    std::size_t input_dim() const { return sizes_.front(); }
    std::size_t output_dim() const { return sizes_.back(); }

    const DenseLayer& layer(std::size_t i) const { return layers_.at(i); }

    /// Mutable access invalidates outstanding forward tapes.
    DenseLayer& mutable_layer(std::size_t i) {
        ++version_;
        return layers_.at(i);
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
        return n;
    }

    std::uint64_t version() const noexcept { return version_; }

private:
    std::vector<std::size_t> sizes_;
    std::vector<DenseLayer> layers_;
    std::uint64_t version_ = 0;
};

/// Activations cached by forward for one backward pass.
struct ForwardTape {
    const MlpModel* model = nullptr;
    std::uint64_t model_version = 0;
    std::size_t batch = 0;
    std::vector<DenseArray> inputs;  // input to layer l, [batch, in_l]
    std::vector<DenseArray> pre;     // pre-activation of layer l, [batch, out_l]
    bool consumed = false;
};

/// Returns y_hat [batch, out] and the tape. x must be [batch, in].
inline std::pair<DenseArray, ForwardTape> forward(const MlpModel& model, const DenseArray& x) {
    if (model.empty()) throw ParameterError("forward: empty model");
    if (x.rank() != 2 || x.shape()[1] != model.input_dim()) {
        throw ParameterError("forward: input must be [batch, input_dim]");
    }
    if (!all_finite(x.data())) throw NumericalError("forward: non-finite input");
    ForwardTape tape;
    tape.model = &model;
    tape.model_version = model.version();
    tape.batch = x.shape()[0];
    const std::size_t batch = tape.batch;

    DenseArray h = x;
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        const DenseLayer& layer = model.layer(l);
        const std::size_t in = layer.in(), out = layer.out();
        DenseArray z({batch, out});
        const double* w = layer.weight.data().data();
        const double* b = layer.bias.data().data();
        for (std::size_t n = 0; n < batch; ++n) {
            const double* hn = h.data().data() + n * in;
            double* zn = z.data().data() + n * out;
            for (std::size_t o = 0; o < out; ++o) {
                const double* wo = w + o * in;
                double acc = b[o];
                for (std::size_t i = 0; i < in; ++i) acc += wo[i] * hn[i];
                zn[o] = acc;
            }
        }
        tape.inputs.push_back(std::move(h));
        const bool hidden = l + 1 < model.layer_count();
        h = hidden ? z.map([](double a) { return a > 0.0 ? a : 0.0; }) : z;
        tape.pre.push_back(std::move(z));
    }
    return {std::move(h), std::move(tape)};
}

/// Exact gradients of the scalar batch loss given dLoss/dy_hat. Returned in
/// parameter-group order: layer0.weight, layer0.bias, layer1.weight, ...
/// Consumes the tape.
inline std::vector<DenseArray> backward(const MlpModel& model, ForwardTape& tape,
                                        const DenseArray& loss_grad) {
    if (tape.model != &model || tape.model_version != model.version()) {
        throw ParameterError("backward: tape does not belong to the current model parameters");
    }
    if (tape.consumed) throw ParameterError("backward: tape already consumed");
    if (tape.inputs.size() != model.layer_count()) throw ParameterError("backward: corrupt tape");
    const std::size_t batch = tape.batch;
    if (loss_grad.rank() != 2 || loss_grad.shape()[0] != batch ||
        loss_grad.shape()[1] != model.output_dim()) {
        throw ParameterError("backward: loss gradient must be [batch, output_dim]");
    }
    tape.consumed = true;

    std::vector<DenseArray> grads(2 * model.layer_count());
    DenseArray delta = loss_grad;
    for (std::size_t l = model.layer_count(); l-- > 0;) {
        const DenseLayer& layer = model.layer(l);
        const std::size_t in = layer.in(), out = layer.out();
        const DenseArray& input = tape.inputs[l];
        DenseArray gw({out, in});
        DenseArray gb({out});
        for (std::size_t n = 0; n < batch; ++n) {
            const double* dn = delta.data().data() + n * out;
            const double* xn = input.data().data() + n * in;
            for (std::size_t o = 0; o < out; ++o) {
                const double dv = dn[o];
                if (dv == 0.0) continue;
                gb[o] += dv;
                double* row = gw.data().data() + o * in;
                for (std::size_t i = 0; i < in; ++i) row[i] += dv * xn[i];
            }
        }
        if (l > 0) {
            DenseArray prev({batch, in});
            const DenseArray& pre_prev = tape.pre[l - 1];
            const double* w = layer.weight.data().data();
            for (std::size_t n = 0; n < batch; ++n) {
                const double* dn = delta.data().data() + n * out;
                double* pn = prev.data().data() + n * in;
                for (std::size_t o = 0; o < out; ++o) {
                    const double dv = dn[o];
                    if (dv == 0.0) continue;
                    const double* wo = w + o * in;
                    for (std::size_t i = 0; i < in; ++i) pn[i] += dv * wo[i];
                }
                const double* zn = pre_prev.data().data() + n * in;
                for (std::size_t i = 0; i < in; ++i) {
                    if (!(zn[i] > 0.0)) pn[i] = 0.0;
                }
            }
            delta = std::move(prev);
        }
        grads[2 * l] = std::move(gw);
        grads[2 * l + 1] = std::move(gb);
    }
    return grads;
}

/// Mean over all elements of (y_hat - y)^2 and its gradient 2 (y_hat - y) / N.
inline std::pair<double, DenseArray> mse_loss(const DenseArray& y_hat, const DenseArray& y) {
    if (!y_hat.same_shape(y) || y.empty()) throw ParameterError("mse_loss: shape mismatch");
    const double n = static_cast<double>(y.size());
    DenseArray grad(y.shape());
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y_hat[i] - y[i];
        acc += r * r;
        grad[i] = 2.0 * r / n;
    }
    return {acc / n, std::move(grad)};
}

// ---------------------------------------------------------------------------
// Checkpoint: "AMLP" v1, payload (L+1, sizes..., w0..., b0..., w1..., ...)
// ---------------------------------------------------------------------------

inline constexpr framing::Magic kModelMagic = framing::make_magic("AMLP");
inline constexpr std::uint8_t kModelVersion = 1;

inline std::vector<std::uint8_t> serialize_model(const MlpModel& model) {
    std::vector<double> p;
    p.push_back(static_cast<double>(model.layer_sizes().size()));
    for (std::size_t s : model.layer_sizes()) p.push_back(static_cast<double>(s));
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        const auto& layer = model.layer(l);
        p.insert(p.end(), layer.weight.data().begin(), layer.weight.data().end());
        p.insert(p.end(), layer.bias.data().begin(), layer.bias.data().end());
    }
    return framing::encode({kModelMagic, kModelVersion, std::nullopt, std::move(p)});
}

inline MlpModel deserialize_model(std::span<const std::uint8_t> bytes) {
    const auto frame = framing::decode(bytes, kModelMagic, kModelVersion, false);
    const auto& p = frame.payload;
    if (p.empty()) throw ParameterError("checkpoint: empty model payload");
    const auto n_sizes = static_cast<std::size_t>(p[0]);
    if (p.size() < 1 + n_sizes) throw ParameterError("checkpoint: truncated model layout");
    std::vector<std::size_t> sizes;
    for (std::size_t i = 0; i < n_sizes; ++i) sizes.push_back(static_cast<std::size_t>(p[1 + i]));
    if (n_sizes == 0) return MlpModel();
    MlpModel model(sizes);
    std::size_t pos = 1 + n_sizes;
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        auto& layer = model.mutable_layer(l);
        const std::size_t need = layer.weight.size() + layer.bias.size();
        if (pos + need > p.size()) throw ParameterError("checkpoint: truncated model weights");
        std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(pos), layer.weight.size(),
                    layer.weight.data().begin());
        pos += layer.weight.size();
        std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(pos), layer.bias.size(),
                    layer.bias.data().begin());
        pos += layer.bias.size();
    }
    if (pos != p.size()) throw ParameterError("checkpoint: trailing model data");
    return model;
}

}  // namespace adaterm
