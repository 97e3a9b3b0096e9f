#pragma once

// Dense feed-forward networks with exact backpropagation.
//
// Parameter layout of a Model: for each layer in order, the weight matrix
// (fan_out x fan_in, row-major) followed by the bias vector (fan_out).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "flad/dataset.hpp"
#include "flad/error.hpp"
#include "flad/random.hpp"
#include "flad/tensor.hpp"

namespace flad {

enum class Activation { relu, tanh };
enum class OutputHead { softmax_logits, linear };
enum class OptimizerKind { sgd, adam };

struct MlpConfig {
    std::vector<std::size_t> layer_sizes;
    Activation hidden_activation = Activation::relu;
    OutputHead output_head = OutputHead::softmax_logits;

    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t output_dim() const { return layer_sizes.back(); }
    std::size_t layer_count() const { return layer_sizes.size() - 1; }

    void validate() const {
        if (layer_sizes.size() < 2) throw InvalidSpecError("MlpConfig needs at least two layer sizes");
        for (auto s : layer_sizes)
            if (s == 0) throw InvalidSpecError("MlpConfig layer sizes must be positive");
    }

    friend bool operator==(const MlpConfig&, const MlpConfig&) = default;
};

inline std::size_t param_count(const MlpConfig& cfg) {
    cfg.validate();
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < cfg.layer_sizes.size(); ++l)
        n += cfg.layer_sizes[l] * cfg.layer_sizes[l + 1] + cfg.layer_sizes[l + 1];
    return n;
}

struct Model {
    MlpConfig config;
    ParamVector params;

    static Model zeros(MlpConfig cfg) {
        const auto d = param_count(cfg);
        return Model{std::move(cfg), ParamVector(d)};
    }

    /// Glorot-uniform weights, zero biases.
    static Model glorot(MlpConfig cfg, std::uint64_t seed) {
        Model m = zeros(std::move(cfg));
        Rng rng(seed);
        std::size_t off = 0;
        const auto& ls = m.config.layer_sizes;
        for (std::size_t l = 0; l + 1 < ls.size(); ++l) {
            const double limit = std::sqrt(6.0 / static_cast<double>(ls[l] + ls[l + 1]));
            std::uniform_real_distribution<double> u(-limit, limit);
            for (std::size_t i = 0; i < ls[l] * ls[l + 1]; ++i) m.params[off + i] = u(rng);
            off += ls[l] * ls[l + 1] + ls[l + 1];
        }
        return m;
    }

    void check() const {
        if (params.size() != param_count(config))
            throw ShapeError("model has " + std::to_string(params.size()) + " params, config expects " +
                             std::to_string(param_count(config)));
    }
};

namespace detail {

enum class Act { relu, tanh, identity };

struct LayerRef {
    std::size_t fan_in;
    std::size_t fan_out;
    Act act;
    const double* w;
    const double* b;
    std::size_t grad_offset;  // offset of this layer's weights in the gradient buffer
};

// Appends the layers of `m` to `out`; gradient offsets start at `base`.
inline void append_layers(const Model& m, std::size_t base, std::vector<LayerRef>& out) {
    m.check();
    const auto& ls = m.config.layer_sizes;
    const Act hidden = m.config.hidden_activation == Activation::relu ? Act::relu : Act::tanh;
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < ls.size(); ++l) {
        const bool last = l + 2 == ls.size();
        const double* p = m.params.values().data() + off;
        out.push_back({ls[l], ls[l + 1], last ? Act::identity : hidden, p, p + ls[l] * ls[l + 1], base + off});
        off += ls[l] * ls[l + 1] + ls[l + 1];
    }
}

inline std::vector<LayerRef> layers_of(const Model& m) {
    std::vector<LayerRef> out;
    append_layers(m, 0, out);
    return out;
}

// acts[0] is the input; acts[l+1] is the activated output of layer l.
struct Trace {
    std::vector<Tensor> acts;
};

inline Tensor forward_layers(std::span<const LayerRef> layers, const Tensor& x, Trace* trace) {
    if (x.rank() != 2 || x.cols() != layers.front().fan_in)
        throw ShapeError("input-shape error: expected (n, " + std::to_string(layers.front().fan_in) + ")");
    const std::size_t n = x.rows();
    Tensor a = x;
    if (trace) trace->acts.assign(1, x);
    for (const auto& L : layers) {
        Tensor z = Tensor::matrix(n, L.fan_out);
        for (std::size_t r = 0; r < n; ++r) {
            const auto in = a.row(r);
            auto out = z.row(r);
            for (std::size_t o = 0; o < L.fan_out; ++o) {
                const double* w = L.w + o * L.fan_in;
                double s = L.b[o];
                for (std::size_t i = 0; i < L.fan_in; ++i) s += w[i] * in[i];
                switch (L.act) {
                    case Act::relu: s = s > 0.0 ? s : 0.0; break;
                    case Act::tanh: s = std::tanh(s); break;
                    case Act::identity: break;
                }
                out[o] = s;
            }
        }
        a = std::move(z);
        if (trace) trace->acts.push_back(a);
    }
    if (!a.all_finite()) throw NumericError("non-finite network output");
    return a;
}

// `delta` is dLoss/d(pre-activation) of the final layer (identity output).
inline void backward_layers(std::span<const LayerRef> layers, const Trace& trace, Tensor delta,
                            std::span<double> grad) {
    const std::size_t n = delta.rows();
    for (std::size_t li = layers.size(); li-- > 0;) {
        const auto& L = layers[li];
        const Tensor& a_prev = trace.acts[li];
        double* gw = grad.data() + L.grad_offset;
        double* gb = gw + L.fan_in * L.fan_out;
        for (std::size_t r = 0; r < n; ++r) {
            const auto d = delta.row(r);
            const auto a = a_prev.row(r);
            for (std::size_t o = 0; o < L.fan_out; ++o) {
                const double dv = d[o];
                if (dv == 0.0) continue;
                double* g = gw + o * L.fan_in;
                for (std::size_t i = 0; i < L.fan_in; ++i) g[i] += dv * a[i];
                gb[o] += dv;
            }
        }
        if (li == 0) break;
        const Act prev_act = layers[li - 1].act;
        Tensor next = Tensor::matrix(n, L.fan_in);
        for (std::size_t r = 0; r < n; ++r) {
            const auto d = delta.row(r);
            const auto a = a_prev.row(r);
            auto out = next.row(r);
            for (std::size_t o = 0; o < L.fan_out; ++o) {
                const double dv = d[o];
                if (dv == 0.0) continue;
                const double* w = L.w + o * L.fan_in;
                for (std::size_t i = 0; i < L.fan_in; ++i) out[i] += dv * w[i];
            }
            for (std::size_t i = 0; i < L.fan_in; ++i) {
                switch (prev_act) {
                    case Act::relu: out[i] = a[i] > 0.0 ? out[i] : 0.0; break;
                    case Act::tanh: out[i] *= 1.0 - a[i] * a[i]; break;
                    case Act::identity: break;
                }
            }
        }
        delta = std::move(next);
    }
}

}  // namespace detail

/// Raw output of the final layer (pre-softmax for classifier heads).
inline Tensor logits(const Model& model, const Tensor& batch) {
    const auto layers = detail::layers_of(model);
    return detail::forward_layers(layers, batch, nullptr);
}

/// Row-wise softmax with max-subtraction.
inline Tensor softmax_rows(const Tensor& z) {
    Tensor p = z;
    for (std::size_t r = 0; r < p.rows(); ++r) {
        auto row = p.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double s = 0.0;
        for (double& v : row) {
            v = std::exp(v - mx);
            s += v;
        }
        for (double& v : row) v /= s;
    }
    return p;
}

/// Network output; rows are probability vectors for a softmax head.
inline Tensor forward(const Model& model, const Tensor& batch) {
    Tensor z = logits(model, batch);
    return model.config.output_head == OutputHead::softmax_logits ? softmax_rows(z) : z;
}

inline void check_labels(const Tensor& logits, std::span<const std::size_t> labels) {
    if (logits.rank() != 2 || logits.rows() != labels.size())
        throw ShapeError("labels length does not match batch rows");
    for (auto y : labels)
        if (y >= logits.cols())
            throw InvalidLabelError("label " + std::to_string(y) + " outside [0," + std::to_string(logits.cols()) + ")");
}

/// Mean negative log-likelihood of integer labels under softmax(logits).
inline double cross_entropy_loss(const Tensor& logits, std::span<const std::size_t> labels) {
    check_labels(logits, labels);
    if (labels.empty()) throw EmptyDataError("cross_entropy_loss on empty batch");
    double total = 0.0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto row = logits.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double s = 0.0;
        for (double v : row) s += std::exp(v - mx);
        total += mx + std::log(s) - row[labels[r]];
    }
    return total / static_cast<double>(logits.rows());
}

/// Mean over all entries of the squared difference.
inline double mse_loss(const Tensor& x, const Tensor& x_hat) {
    if (x.shape() != x_hat.shape()) throw ShapeError("mse_loss: shape mismatch");
    if (x.size() == 0) throw EmptyDataError("mse_loss on empty tensor");
    double s = 0.0;
    const auto a = x.data();
    const auto b = x_hat.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

inline double loss_value(const Model& model, const Tensor& batch, std::span<const std::size_t> labels) {
    return cross_entropy_loss(logits(model, batch), labels);
}

inline double loss_value(const Model& model, const Tensor& batch, const Tensor& target) {
    return mse_loss(target, logits(model, batch));
}

/// Exact mean-over-batch gradient of the cross-entropy loss.
inline ParamVector backward(const Model& model, const Tensor& batch, std::span<const std::size_t> labels) {
    const auto layers = detail::layers_of(model);
    detail::Trace trace;
    Tensor z = detail::forward_layers(layers, batch, &trace);
    check_labels(z, labels);
    if (labels.empty()) throw EmptyDataError("backward on empty batch");
    Tensor delta = softmax_rows(z);
    const double inv_n = 1.0 / static_cast<double>(z.rows());
    for (std::size_t r = 0; r < delta.rows(); ++r) {
        auto row = delta.row(r);
        row[labels[r]] -= 1.0;
        for (double& v : row) v *= inv_n;
    }
    ParamVector grad(model.params.size());
    detail::backward_layers(layers, trace, std::move(delta), grad.values());
    return grad;
}

/// Exact gradient of mse_loss(target, output).
inline ParamVector backward(const Model& model, const Tensor& batch, const Tensor& target) {
    const auto layers = detail::layers_of(model);
    detail::Trace trace;
    Tensor z = detail::forward_layers(layers, batch, &trace);
    if (z.shape() != target.shape()) throw ShapeError("backward: target shape mismatch");
    const double scale = 2.0 / static_cast<double>(z.size());
    Tensor delta = z;
    auto dd = delta.data();
    const auto t = target.data();
    for (std::size_t i = 0; i < dd.size(); ++i) dd[i] = scale * (dd[i] - t[i]);
    ParamVector grad(model.params.size());
    detail::backward_layers(layers, trace, std::move(delta), grad.values());
    return grad;
}

/// Central-difference gradient of an arbitrary scalar function.
inline ParamVector finite_diff_gradient(const std::function<double(const ParamVector&)>& f, const ParamVector& x,
                                        double eps) {
    if (!(eps >= 1e-7 && eps <= 1e-3)) throw InvalidSpecError("finite-difference eps must lie in [1e-7, 1e-3]");
    ParamVector g(x.size());
    ParamVector probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + eps;
        const double up = f(probe);
        probe[i] = x[i] - eps;
        const double down = f(probe);
        probe[i] = x[i];
        g[i] = (up - down) / (2.0 * eps);
    }
    return g;
}

inline ParamVector finite_diff_gradient(const Model& model, const Tensor& batch, std::span<const std::size_t> labels,
                                        double eps) {
    Model probe = model;
    return finite_diff_gradient(
        [&](const ParamVector& p) {
            probe.params = p;
            return loss_value(probe, batch, labels);
        },
        model.params, eps);
}

inline ParamVector finite_diff_gradient(const Model& model, const Tensor& batch, const Tensor& target, double eps) {
    Model probe = model;
    return finite_diff_gradient(
        [&](const ParamVector& p) {
            probe.params = p;
            return loss_value(probe, batch, target);
        },
        model.params, eps);
}

// ---------------------------------------------------------------------------
// Autoencoder

struct Autoencoder {
    Model encoder;  // d_in -> bottleneck
    Model decoder;  // bottleneck -> d_in

    std::size_t input_dim() const { return encoder.config.input_dim(); }
    std::size_t bottleneck() const { return encoder.config.output_dim(); }

    void validate() const {
        encoder.check();
        decoder.check();
        if (decoder.config.input_dim() != encoder.config.output_dim())
            throw ShapeError("decoder input must equal encoder bottleneck");
        if (decoder.config.output_dim() != encoder.config.input_dim())
            throw ShapeError("decoder output dimension must equal encoder input dimension");
        if (bottleneck() >= input_dim()) throw InvalidSpecError("autoencoder bottleneck must be smaller than d_in");
    }

    /// Symmetric tanh autoencoder d_in -> hidden... -> bottleneck -> ...hidden -> d_in
    /// with linear bottleneck and output layers.
    static Autoencoder make(std::size_t d_in, const std::vector<std::size_t>& hidden, std::size_t bottleneck,
                            std::uint64_t seed) {
        MlpConfig enc{{d_in}, Activation::tanh, OutputHead::linear};
        for (auto h : hidden) enc.layer_sizes.push_back(h);
        enc.layer_sizes.push_back(bottleneck);
        MlpConfig dec{{bottleneck}, Activation::tanh, OutputHead::linear};
        for (auto it = hidden.rbegin(); it != hidden.rend(); ++it) dec.layer_sizes.push_back(*it);
        dec.layer_sizes.push_back(d_in);
        Autoencoder ae{Model::glorot(enc, derive_seed(seed, {0})), Model::glorot(dec, derive_seed(seed, {1}))};
        ae.validate();
        return ae;
    }

    ParamVector params() const {
        ParamVector p(encoder.params.size() + decoder.params.size());
        std::copy(encoder.params.begin(), encoder.params.end(), p.begin());
        std::copy(decoder.params.begin(), decoder.params.end(), p.begin() + encoder.params.size());
        return p;
    }

    void set_params(const ParamVector& p) {
        if (p.size() != encoder.params.size() + decoder.params.size())
            throw ShapeError("autoencoder parameter dimension mismatch");
        std::copy(p.begin(), p.begin() + encoder.params.size(), encoder.params.begin());
        std::copy(p.begin() + encoder.params.size(), p.end(), decoder.params.begin());
    }
};

namespace detail {

inline std::vector<LayerRef> layers_of(const Autoencoder& ae) {
    if (ae.decoder.config.input_dim() != ae.encoder.config.output_dim() ||
        ae.decoder.config.output_dim() != ae.encoder.config.input_dim())
        throw ShapeError("autoencoder encoder/decoder dimensions do not chain");
    std::vector<LayerRef> out;
    append_layers(ae.encoder, 0, out);
    append_layers(ae.decoder, ae.encoder.params.size(), out);
    return out;
}

}  // namespace detail

/// Dec(Enc(batch)).
inline Tensor reconstruct(const Autoencoder& ae, const Tensor& batch) {
    const auto layers = detail::layers_of(ae);
    return detail::forward_layers(layers, batch, nullptr);
}

inline double loss_value(const Autoencoder& ae, const Tensor& batch) { return mse_loss(batch, reconstruct(ae, batch)); }

/// Gradient of mse_loss(batch, reconstruct(ae, batch)) w.r.t. ae.params().
inline ParamVector backward(const Autoencoder& ae, const Tensor& batch) {
    const auto layers = detail::layers_of(ae);
    detail::Trace trace;
    Tensor z = detail::forward_layers(layers, batch, &trace);
    const double scale = 2.0 / static_cast<double>(z.size());
    auto dd = z.data();
    const auto x = batch.data();
    for (std::size_t i = 0; i < dd.size(); ++i) dd[i] = scale * (dd[i] - x[i]);
    ParamVector grad(ae.encoder.params.size() + ae.decoder.params.size());
    detail::backward_layers(layers, trace, std::move(z), grad.values());
    return grad;
}

inline ParamVector finite_diff_gradient(const Autoencoder& ae, const Tensor& batch, double eps) {
    Autoencoder probe = ae;
    return finite_diff_gradient(
        [&](const ParamVector& p) {
            probe.set_params(p);
            return loss_value(probe, batch);
        },
        ae.params(), eps);
}

// ---------------------------------------------------------------------------
// Optimizers

struct OptimizerState {
    OptimizerKind kind = OptimizerKind::adam;
    ParamVector m;
    ParamVector v;
    std::uint64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static OptimizerState make(OptimizerKind kind, std::size_t dim) {
        OptimizerState s;
        s.kind = kind;
        if (kind == OptimizerKind::adam) {
            s.m = ParamVector(dim);
            s.v = ParamVector(dim);
        }
        return s;
    }
};

/// One optimizer step; returns the updated parameters and advances `state.t`.
inline ParamVector optimizer_step(OptimizerState& state, const ParamVector& params, const ParamVector& grad,
                                  double lr) {
    if (params.size() != grad.size()) throw ShapeError("optimizer_step: gradient dimension mismatch");
    if (!(lr >= 0.0)) throw InvalidSpecError("learning rate must be non-negative");
    ParamVector out = params;
    ++state.t;
    if (state.kind == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] -= lr * grad[i];
        return out;
    }
    if (state.m.size() != params.size()) throw ShapeError("optimizer_step: state dimension mismatch");
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < out.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        out[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
    return out;
}

namespace detail {

// Shuffled minibatch loop shared by classifier and autoencoder training.
// `grad_fn(batch_rows)` returns the gradient at `params` for those rows.
template <typename GradFn>
ParamVector minibatch_train(ParamVector params, std::size_t n, std::size_t bs, std::size_t epochs, double lr,
                            std::uint64_t seed, OptimizerKind kind, GradFn&& grad_fn) {
    if (n == 0) throw EmptyDataError("training on empty dataset");
    if (bs == 0) throw InvalidSpecError("batch size must be positive");
    auto state = OptimizerState::make(kind, params.size());
    std::vector<std::size_t> order(n);
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        Rng rng(derive_seed(seed, {epoch}));
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t stop = std::min(n, start + bs);
            const std::span<const std::size_t> rows(order.data() + start, stop - start);
            const ParamVector g = grad_fn(params, rows);
            params = optimizer_step(state, params, g, lr);
        }
    }
    return params;
}

}  // namespace detail

/// Minibatch training of a classifier with cross-entropy. Returns an updated
/// copy; identical (inputs, seed) give bit-identical results.
inline Model train_local(const Model& model, const Dataset& data, double lr, std::size_t bs, std::size_t epochs,
                         std::uint64_t seed, OptimizerKind kind = OptimizerKind::adam) {
    if (data.empty()) throw EmptyDataError("train_local: empty dataset");
    Model out = model;
    if (epochs == 0) return out;
    Model probe = model;
    out.params = detail::minibatch_train(
        model.params, data.size(), bs, epochs, lr, seed, kind,
        [&](const ParamVector& p, std::span<const std::size_t> rows) {
            probe.params = p;
            const Tensor x = gather_rows(data.features, rows);
            Labels y;
            y.reserve(rows.size());
            for (auto r : rows) y.push_back(data.labels[r]);
            return backward(probe, x, y);
        });
    return out;
}

/// Minibatch training of an autoencoder on the rows of `features` (MSE).
inline Autoencoder train_autoencoder(const Autoencoder& ae, const Tensor& features, double lr, std::size_t bs,
                                     std::size_t epochs, std::uint64_t seed,
                                     OptimizerKind kind = OptimizerKind::adam) {
    if (features.rows() == 0) throw EmptyDataError("train_autoencoder: empty dataset");
    Autoencoder out = ae;
    if (epochs == 0) return out;
    Autoencoder probe = ae;
    out.set_params(detail::minibatch_train(ae.params(), features.rows(), bs, epochs, lr, seed, kind,
                                           [&](const ParamVector& p, std::span<const std::size_t> rows) {
                                               probe.set_params(p);
                                               return backward(probe, gather_rows(features, rows));
                                           }));
    return out;
}

}  // namespace flad
