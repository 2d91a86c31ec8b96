#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "hotspot/models/common.hpp"

namespace hotspot {

// Channel-major raster: data[(ch * rows + r) * cols + c].
struct Raster {
    int channels = 0;
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Raster() = default;
    Raster(int ch, int r, int c) : channels(ch), rows(r), cols(c), data(static_cast<std::size_t>(ch) * r * c, 0.0) {}

    double& operator()(int ch, int r, int c) { return data[(static_cast<std::size_t>(ch) * rows + r) * cols + c]; }
    double operator()(int ch, int r, int c) const {
        return data[(static_cast<std::size_t>(ch) * rows + r) * cols + c];
    }
};

struct ConvLayer {
    int in = 0;
    int out = 0;
    int k = 3;  // odd square kernel
    std::vector<double> w;  // [out][in][k][k]
    std::vector<double> b;  // [out]

    ConvLayer() = default;
    ConvLayer(int in_ch, int out_ch, int kernel)
        : in(in_ch), out(out_ch), k(kernel), w(static_cast<std::size_t>(out_ch) * in_ch * kernel * kernel, 0.0),
          b(out_ch, 0.0) {
        if (kernel < 1 || kernel % 2 == 0) throw UsageError("convolution kernel size must be odd and positive");
    }
    double& weight(int o, int i, int ky, int kx) { return w[((static_cast<std::size_t>(o) * in + i) * k + ky) * k + kx]; }
    double weight(int o, int i, int ky, int kx) const {
        return w[((static_cast<std::size_t>(o) * in + i) * k + ky) * k + kx];
    }
};

// Convolutional layers with kernels shared across the whole city, followed by
// a per-cell linear head shared across cells.
struct CnnWeights {
    std::vector<ConvLayer> layers;
    std::vector<double> head;  // one weight per channel of the last layer
    double head_bias = 0.0;
    Activation activation = Activation::tanh;

    static CnnWeights random(int in_channels, int channels, int kernel, int n_layers, std::uint64_t seed) {
        if (n_layers < 1) throw UsageError("CNN needs at least one convolution layer");
        std::mt19937_64 rng(seed);
        CnnWeights net;
        int in = in_channels;
        for (int l = 0; l < n_layers; ++l) {
            ConvLayer layer(in, channels, kernel);
            const double a = std::sqrt(6.0 / static_cast<double>((in + channels) * kernel * kernel));
            std::uniform_real_distribution<double> u(-a, a);
            for (auto& x : layer.w) x = u(rng);
            net.layers.push_back(std::move(layer));
            in = channels;
        }
        const double a = std::sqrt(6.0 / static_cast<double>(channels + 1));
        std::uniform_real_distribution<double> u(-a, a);
        net.head.resize(channels);
        for (auto& x : net.head) x = u(rng);
        return net;
    }

    std::size_t n_params() const {
        std::size_t n = head.size() + 1;
        for (const auto& l : layers) n += l.w.size() + l.b.size();
        return n;
    }
    std::vector<double> flatten() const {
        std::vector<double> v;
        v.reserve(n_params());
        for (const auto& l : layers) {
            v.insert(v.end(), l.w.begin(), l.w.end());
            v.insert(v.end(), l.b.begin(), l.b.end());
        }
        v.insert(v.end(), head.begin(), head.end());
        v.push_back(head_bias);
        return v;
    }
    void assign(const std::vector<double>& v) {
        std::size_t k = 0;
        for (auto& l : layers) {
            for (auto& x : l.w) x = v[k++];
            for (auto& x : l.b) x = v[k++];
        }
        for (auto& x : head) x = v[k++];
        head_bias = v[k];
    }
};

// Zero-padded ("same") convolution, before the activation.
inline Raster conv_forward(const ConvLayer& layer, const Raster& input) {
    if (input.channels != layer.in) throw DataError("raster channels do not match convolution input");
    if (layer.k > input.rows || layer.k > input.cols) throw DataError("convolution kernel is larger than the raster");
    const int pad = layer.k / 2;
    Raster out(layer.out, input.rows, input.cols);
    for (int o = 0; o < layer.out; ++o) {
        for (int r = 0; r < input.rows; ++r)
            for (int c = 0; c < input.cols; ++c) out(o, r, c) = layer.b[o];
        for (int i = 0; i < layer.in; ++i)
            for (int ky = 0; ky < layer.k; ++ky)
                for (int kx = 0; kx < layer.k; ++kx) {
                    const double wt = layer.weight(o, i, ky, kx);
                    if (wt == 0.0) continue;
                    const int dy = ky - pad, dx = kx - pad;
                    const int r0 = std::max(0, -dy), r1 = std::min(input.rows, input.rows - dy);
                    const int c0 = std::max(0, -dx), c1 = std::min(input.cols, input.cols - dx);
                    for (int r = r0; r < r1; ++r) {
                        const double* src = &input.data[(static_cast<std::size_t>(i) * input.rows + r + dy) * input.cols];
                        double* dst = &out.data[(static_cast<std::size_t>(o) * input.rows + r) * input.cols];
                        for (int c = c0; c < c1; ++c) dst[c] += wt * src[c + dx];
                    }
                }
    }
    return out;
}

struct CnnPass {
    std::vector<Raster> activations;  // [0] = input, [l + 1] = output of layer l after activation
    Raster output;                     // single channel
};

inline CnnPass cnn_pass(const CnnWeights& net, const Raster& input) {
    CnnPass p;
    p.activations.push_back(input);
    for (const auto& layer : net.layers) {
        Raster a = conv_forward(layer, p.activations.back());
        if (net.activation == Activation::tanh)
            for (auto& x : a.data) x = std::tanh(x);
        p.activations.push_back(std::move(a));
    }
    const Raster& last = p.activations.back();
    if (static_cast<int>(net.head.size()) != last.channels) throw DataError("CNN head width does not match channels");
    p.output = Raster(1, input.rows, input.cols);
    for (int r = 0; r < input.rows; ++r)
        for (int c = 0; c < input.cols; ++c) {
            double s = net.head_bias;
            for (int ch = 0; ch < last.channels; ++ch) s += net.head[ch] * last(ch, r, c);
            if (!std::isfinite(s)) throw NumericError("CNN output is not finite");
            p.output(0, r, c) = s;
        }
    return p;
}

inline Raster cnn_forward(const CnnWeights& net, const Raster& input) { return cnn_pass(net, input).output; }

struct CnnGradient {
    double loss = 0.0;
    CnnWeights grad;
};

// Loss = mean over samples and masked cells of squared error; targets are
// row-major rasters aligned with the inputs.
inline CnnGradient cnn_backprop(const CnnWeights& net, const std::vector<Raster>& inputs,
                                const std::vector<std::vector<double>>& targets, const std::vector<char>& mask) {
    if (inputs.size() != targets.size() || inputs.empty()) throw DataError("CNN needs matching, nonempty samples");
    std::size_t masked = 0;
    for (char m : mask) masked += m ? 1 : 0;
    if (masked == 0) throw DataError("CNN mask selects no cells");
    const double denom = static_cast<double>(masked * inputs.size());

    CnnGradient g;
    g.grad = net;
    for (auto& l : g.grad.layers) {
        std::fill(l.w.begin(), l.w.end(), 0.0);
        std::fill(l.b.begin(), l.b.end(), 0.0);
    }
    std::fill(g.grad.head.begin(), g.grad.head.end(), 0.0);
    g.grad.head_bias = 0.0;

    for (std::size_t s = 0; s < inputs.size(); ++s) {
        const auto pass = cnn_pass(net, inputs[s]);
        const int rows = inputs[s].rows, cols = inputs[s].cols;
        if (mask.size() != static_cast<std::size_t>(rows) * cols || targets[s].size() != mask.size())
            throw DataError("CNN target or mask does not match raster size");
        const Raster& last = pass.activations.back();
        Raster d_act(last.channels, rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                const std::size_t idx = static_cast<std::size_t>(r) * cols + c;
                if (!mask[idx]) continue;
                const double resid = pass.output(0, r, c) - targets[s][idx];
                g.loss += resid * resid / denom;
                const double d = 2.0 * resid / denom;
                g.grad.head_bias += d;
                for (int ch = 0; ch < last.channels; ++ch) {
                    g.grad.head[ch] += d * last(ch, r, c);
                    d_act(ch, r, c) = d * net.head[ch];
                }
            }
        for (int l = static_cast<int>(net.layers.size()) - 1; l >= 0; --l) {
            const auto& layer = net.layers[l];
            auto& gl = g.grad.layers[l];
            const Raster& in = pass.activations[l];
            const Raster& outa = pass.activations[l + 1];
            Raster d_pre = d_act;
            for (std::size_t i = 0; i < d_pre.data.size(); ++i)
                d_pre.data[i] *= activate_grad(net.activation, outa.data[i]);
            Raster d_in(layer.in, rows, cols);
            const int pad = layer.k / 2;
            for (int o = 0; o < layer.out; ++o) {
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < cols; ++c) gl.b[o] += d_pre(o, r, c);
                for (int i = 0; i < layer.in; ++i)
                    for (int ky = 0; ky < layer.k; ++ky)
                        for (int kx = 0; kx < layer.k; ++kx) {
                            const int dy = ky - pad, dx = kx - pad;
                            const int r0 = std::max(0, -dy), r1 = std::min(rows, rows - dy);
                            const int c0 = std::max(0, -dx), c1 = std::min(cols, cols - dx);
                            const double wt = layer.weight(o, i, ky, kx);
                            double acc = 0.0;
                            for (int r = r0; r < r1; ++r)
                                for (int c = c0; c < c1; ++c) {
                                    acc += d_pre(o, r, c) * in(i, r + dy, c + dx);
                                    d_in(i, r + dy, c + dx) += d_pre(o, r, c) * wt;
                                }
                            gl.weight(o, i, ky, kx) += acc;
                        }
            }
            d_act = std::move(d_in);
        }
    }
    return g;
}

struct CnnOptions {
    int channels = 8;
    int kernel = 3;
    int layers = 2;
    double learning_rate = 0.05;
    int max_epochs = 150;
    int patience = 20;
    double validation_fraction = 0.2;  // trailing samples
    std::uint64_t seed = 1;
};

struct CnnTraining {
    CnnWeights weights;
    int epochs = 0;
    double train_loss = 0.0;
    double validation_loss = std::numeric_limits<double>::quiet_NaN();
};

inline CnnTraining train_cnn(const std::vector<Raster>& inputs, const std::vector<std::vector<double>>& targets,
                             const std::vector<char>& mask, const CnnOptions& opt) {
    if (inputs.empty()) throw DataError("CNN has no training samples");
    std::size_t n_val = static_cast<std::size_t>(std::floor(opt.validation_fraction * inputs.size()));
    if (opt.validation_fraction > 0 && n_val == 0 && inputs.size() >= 2) n_val = 1;
    const std::size_t n_train = inputs.size() - n_val;
    const std::vector<Raster> xt(inputs.begin(), inputs.begin() + n_train), xv(inputs.begin() + n_train, inputs.end());
    const std::vector<std::vector<double>> yt(targets.begin(), targets.begin() + n_train),
        yv(targets.begin() + n_train, targets.end());

    CnnTraining out;
    out.weights = CnnWeights::random(inputs[0].channels, opt.channels, opt.kernel, opt.layers, opt.seed);
    auto w = out.weights;
    auto params = w.flatten();
    double best = std::numeric_limits<double>::infinity();
    int since_best = 0;
    for (int epoch = 1; epoch <= opt.max_epochs; ++epoch) {
        const auto g = cnn_backprop(w, xt, yt, mask);
        const auto grad = g.grad.flatten();
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= opt.learning_rate * grad[i];
        w.assign(params);
        out.epochs = epoch;
        out.train_loss = g.loss;
        if (n_val > 0) {
            const double val = cnn_backprop(w, xv, yv, mask).loss;
            if (val < best - 1e-12) {
                best = val;
                out.weights = w;
                out.validation_loss = val;
                since_best = 0;
            } else if (++since_best >= opt.patience) {
                break;
            }
        } else {
            out.weights = w;
        }
    }
    out.train_loss = cnn_backprop(out.weights, xt, yt, mask).loss;
    return out;
}

}  // namespace hotspot
