#include "prunekit/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "prunekit/error.hpp"
#include "prunekit/parallel.hpp"
#include "prunekit/rng.hpp"

namespace prunekit {

namespace {

// Samples per gradient shard. Fixed so the reduction tree depends only on the
// batch, never on the worker count.
constexpr std::size_t kShardSize = 8;

struct LayerPlan {
    const LayerSpec* spec = nullptr;
    const LayerWeights* weights = nullptr;
    Shape in;
    Shape out;
};

// Shape-resolved view of a validated model.
struct Plan {
    std::vector<LayerPlan> layers;
    std::size_t input_elements = 0;
    std::size_t num_classes = 0;

    explicit Plan(const ModelGraph& g) {
        const auto shapes = activation_shapes(g);
        input_elements = g.input_shape.elements();
        num_classes = g.num_classes;
        for (std::size_t i = 0; i < g.layers.size(); ++i) {
            LayerPlan lp;
            lp.spec = &g.layers[i];
            lp.weights = g.layers[i].has_weights() ? &g.weights_of(g.layers[i].id) : nullptr;
            lp.in = shapes[i];
            lp.out = shapes[i + 1];
            layers.push_back(lp);
        }
    }
};

// Per-worker activation and gradient buffers.
struct SampleState {
    std::vector<std::vector<double>> acts;   // acts[0] = input, acts[i+1] = output of layer i
    std::vector<std::vector<double>> grads;  // dL/d acts[i]
    std::vector<std::vector<std::size_t>> argmax;
    std::vector<double> last_z;
    std::vector<double> dz;

    explicit SampleState(const Plan& p) {
        acts.resize(p.layers.size() + 1);
        grads.resize(p.layers.size() + 1);
        argmax.resize(p.layers.size());
        acts[0].resize(p.input_elements);
        grads[0].resize(p.input_elements);
        std::size_t widest = 0;
        for (std::size_t i = 0; i < p.layers.size(); ++i) {
            acts[i + 1].resize(p.layers[i].out.elements());
            grads[i + 1].resize(p.layers[i].out.elements());
            if (p.layers[i].spec->kind == LayerKind::MaxPool) argmax[i].resize(p.layers[i].out.elements());
            widest = std::max(widest, p.layers[i].out.elements());
        }
        last_z.resize(p.num_classes);
        dz.resize(widest);
    }
};

// out = W x (no bias), conv with stride 1.
void conv_linear(const LayerPlan& lp, const double* in, double* out) {
    const Shape& f = *lp.spec->filter_shape;
    const std::size_t kh = f[0], kw = f[1], ci = f[2], co = f[3];
    const std::size_t ih = lp.in[0], iw = lp.in[1];
    const std::size_t oh = lp.out[0], ow = lp.out[1];
    const std::ptrdiff_t pt = lp.spec->padding == Padding::Same ? static_cast<std::ptrdiff_t>((kh - 1) / 2) : 0;
    const std::ptrdiff_t pl = lp.spec->padding == Padding::Same ? static_cast<std::ptrdiff_t>((kw - 1) / 2) : 0;
    const double* k = lp.weights->kernel.data().data();
    std::fill(out, out + oh * ow * co, 0.0);
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            double* o = out + (oy * ow + ox) * co;
            for (std::size_t ky = 0; ky < kh; ++ky) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - pt;
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(ih)) continue;
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - pl;
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(iw)) continue;
                    const double* x = in + (static_cast<std::size_t>(iy) * iw + static_cast<std::size_t>(ix)) * ci;
                    const double* kk = k + (ky * kw + kx) * ci * co;
                    for (std::size_t c = 0; c < ci; ++c) {
                        const double v = x[c];
                        if (v == 0.0) continue;
                        const double* kr = kk + c * co;
                        for (std::size_t j = 0; j < co; ++j) o[j] += v * kr[j];
                    }
                }
            }
        }
    }
}

// dK += x (x) dz, db += dz, and (if din) din = W^T dz.
void conv_backward(const LayerPlan& lp, const double* in, const double* dz, double* dk, double* db, double* din) {
    const Shape& f = *lp.spec->filter_shape;
    const std::size_t kh = f[0], kw = f[1], ci = f[2], co = f[3];
    const std::size_t ih = lp.in[0], iw = lp.in[1];
    const std::size_t oh = lp.out[0], ow = lp.out[1];
    const std::ptrdiff_t pt = lp.spec->padding == Padding::Same ? static_cast<std::ptrdiff_t>((kh - 1) / 2) : 0;
    const std::ptrdiff_t pl = lp.spec->padding == Padding::Same ? static_cast<std::ptrdiff_t>((kw - 1) / 2) : 0;
    const double* k = lp.weights->kernel.data().data();
    if (din) std::fill(din, din + ih * iw * ci, 0.0);
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            const double* g = dz + (oy * ow + ox) * co;
            for (std::size_t j = 0; j < co; ++j) db[j] += g[j];
            for (std::size_t ky = 0; ky < kh; ++ky) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - pt;
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(ih)) continue;
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - pl;
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(iw)) continue;
                    const std::size_t in_off = (static_cast<std::size_t>(iy) * iw + static_cast<std::size_t>(ix)) * ci;
                    const double* x = in + in_off;
                    const std::size_t k_off = (ky * kw + kx) * ci * co;
                    for (std::size_t c = 0; c < ci; ++c) {
                        const double v = x[c];
                        double* dkr = dk + k_off + c * co;
                        const double* kr = k + k_off + c * co;
                        double acc = 0.0;
                        for (std::size_t j = 0; j < co; ++j) {
                            dkr[j] += v * g[j];
                            acc += kr[j] * g[j];
                        }
                        if (din) din[in_off + c] += acc;
                    }
                }
            }
        }
    }
}

void fc_linear(const LayerPlan& lp, const double* in, double* out) {
    const std::size_t ni = (*lp.spec->filter_shape)[0], no = (*lp.spec->filter_shape)[1];
    const double* w = lp.weights->kernel.data().data();
    std::fill(out, out + no, 0.0);
    for (std::size_t i = 0; i < ni; ++i) {
        const double v = in[i];
        if (v == 0.0) continue;
        const double* wr = w + i * no;
        for (std::size_t j = 0; j < no; ++j) out[j] += v * wr[j];
    }
}

void fc_backward(const LayerPlan& lp, const double* in, const double* dz, double* dk, double* db, double* din) {
    const std::size_t ni = (*lp.spec->filter_shape)[0], no = (*lp.spec->filter_shape)[1];
    const double* w = lp.weights->kernel.data().data();
    for (std::size_t j = 0; j < no; ++j) db[j] += dz[j];
    for (std::size_t i = 0; i < ni; ++i) {
        const double v = in[i];
        double* dkr = dk + i * no;
        const double* wr = w + i * no;
        double acc = 0.0;
        for (std::size_t j = 0; j < no; ++j) {
            dkr[j] += v * dz[j];
            acc += wr[j] * dz[j];
        }
        if (din) din[i] = acc;
    }
}

void maxpool_forward(const LayerPlan& lp, const double* in, double* out, std::size_t* arg) {
    const std::size_t ph = (*lp.spec->filter_shape)[0], pw = (*lp.spec->filter_shape)[1];
    const std::size_t iw = lp.in[1], c = lp.in[2];
    const std::size_t oh = lp.out[0], ow = lp.out[1];
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                std::size_t best = ((oy * ph) * iw + ox * pw) * c + ch;
                for (std::size_t dy = 0; dy < ph; ++dy) {
                    for (std::size_t dx = 0; dx < pw; ++dx) {
                        const std::size_t idx = ((oy * ph + dy) * iw + ox * pw + dx) * c + ch;
                        if (in[idx] > in[best]) best = idx;
                    }
                }
                const std::size_t o = (oy * ow + ox) * c + ch;
                out[o] = in[best];
                arg[o] = best;
            }
        }
    }
}

// Forward for one sample; fills state.acts and state.last_z, optionally the
// capture norms for layers flagged in `capture_mask`.
void forward_sample(const Plan& p, std::span<const double> input, SampleState& st,
                    const std::vector<char>* capture_mask, NormPair* captured) {
    std::copy(input.begin(), input.end(), st.acts[0].begin());
    const std::size_t last = p.layers.size() - 1;
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        const LayerPlan& lp = p.layers[i];
        const double* in = st.acts[i].data();
        double* out = st.acts[i + 1].data();
        const std::size_t n_out = st.acts[i + 1].size();
        switch (lp.spec->kind) {
            case LayerKind::Conv2d:
            case LayerKind::FullyConnected: {
                if (lp.spec->kind == LayerKind::Conv2d) {
                    conv_linear(lp, in, out);
                } else {
                    fc_linear(lp, in, out);
                }
                if (capture_mask && (*capture_mask)[i]) {
                    captured[i] = NormPair{l2_norm(st.acts[i]), l2_norm(std::span<const double>(out, n_out))};
                }
                const double* b = lp.weights->bias.data().data();
                const std::size_t co = lp.spec->out_channels();
                for (std::size_t j = 0; j < n_out; ++j) out[j] += b[j % co];
                break;
            }
            case LayerKind::MaxPool: maxpool_forward(lp, in, out, st.argmax[i].data()); break;
            case LayerKind::Flatten: std::copy(in, in + n_out, out); break;
        }
        if (i == last) std::copy(out, out + n_out, st.last_z.begin());
        switch (lp.spec->activation) {
            case Activation::Relu:
                for (std::size_t j = 0; j < n_out; ++j) out[j] = out[j] > 0.0 ? out[j] : 0.0;
                break;
            case Activation::Softmax: {
                const double m = *std::max_element(out, out + n_out);
                double sum = 0.0;
                for (std::size_t j = 0; j < n_out; ++j) {
                    out[j] = std::exp(out[j] - m);
                    sum += out[j];
                }
                for (std::size_t j = 0; j < n_out; ++j) out[j] /= sum;
                break;
            }
            case Activation::None: break;
        }
    }
}

struct LayerGrad {
    std::vector<double> dk;
    std::vector<double> db;
};

using GradBuffers = std::vector<LayerGrad>;  // indexed like layers; empty for weightless

GradBuffers make_grad_buffers(const Plan& p) {
    GradBuffers g(p.layers.size());
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        if (p.layers[i].weights) {
            g[i].dk.assign(p.layers[i].weights->kernel.size(), 0.0);
            g[i].db.assign(p.layers[i].weights->bias.size(), 0.0);
        }
    }
    return g;
}

void zero(GradBuffers& g) {
    for (auto& l : g) {
        std::fill(l.dk.begin(), l.dk.end(), 0.0);
        std::fill(l.db.begin(), l.db.end(), 0.0);
    }
}

void add_into(GradBuffers& acc, const GradBuffers& g) {
    for (std::size_t i = 0; i < acc.size(); ++i) {
        for (std::size_t j = 0; j < acc[i].dk.size(); ++j) acc[i].dk[j] += g[i].dk[j];
        for (std::size_t j = 0; j < acc[i].db.size(); ++j) acc[i].db[j] += g[i].db[j];
    }
}

// Cross-entropy of softmax(last_z) against label; accumulates gradients.
double backward_sample(const Plan& p, std::size_t label, SampleState& st, GradBuffers& grads) {
    const std::size_t last = p.layers.size() - 1;
    const std::vector<double>& z = st.last_z;
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - m);
    const double log_sum = std::log(sum) + m;
    const double loss = log_sum - z[label];

    for (std::size_t i = last + 1; i-- > 0;) {
        const LayerPlan& lp = p.layers[i];
        const std::size_t n_out = st.acts[i + 1].size();
        double* dz = st.dz.data();
        if (i == last) {
            for (std::size_t j = 0; j < n_out; ++j) dz[j] = std::exp(z[j] - log_sum) - (j == label ? 1.0 : 0.0);
        } else {
            const double* g = st.grads[i + 1].data();
            const double* a = st.acts[i + 1].data();
            if (lp.spec->activation == Activation::Relu) {
                for (std::size_t j = 0; j < n_out; ++j) dz[j] = a[j] > 0.0 ? g[j] : 0.0;
            } else {
                std::copy(g, g + n_out, dz);
            }
        }
        double* din = i > 0 ? st.grads[i].data() : nullptr;
        const double* in = st.acts[i].data();
        switch (lp.spec->kind) {
            case LayerKind::Conv2d: conv_backward(lp, in, dz, grads[i].dk.data(), grads[i].db.data(), din); break;
            case LayerKind::FullyConnected: fc_backward(lp, in, dz, grads[i].dk.data(), grads[i].db.data(), din); break;
            case LayerKind::MaxPool:
                if (din) {
                    std::fill(din, din + st.acts[i].size(), 0.0);
                    for (std::size_t j = 0; j < n_out; ++j) din[st.argmax[i][j]] += dz[j];
                }
                break;
            case LayerKind::Flatten:
                if (din) std::copy(dz, dz + n_out, din);
                break;
        }
    }
    return loss;
}

void check_loss_head(const ModelGraph& g) {
    const Activation a = g.layers.back().activation;
    if (a != Activation::Softmax && a != Activation::None) {
        throw validation_error("training needs a softmax or linear output layer");
    }
}

// Mean loss over `indices`, mean gradients into `out`. Shards of kShardSize
// samples are reduced in shard order.
double batch_gradients(const Plan& p, const Dataset& d, std::span<const std::size_t> indices,
                       std::vector<SampleState>& states, std::vector<GradBuffers>& shard_grads, GradBuffers& out) {
    const std::size_t shards = (indices.size() + kShardSize - 1) / kShardSize;
    std::vector<double> shard_loss(shards, 0.0);
    while (shard_grads.size() < shards) shard_grads.push_back(make_grad_buffers(p));
    parallel_for(shards, [&](std::size_t s, std::size_t worker) {
        GradBuffers& gb = shard_grads[s];
        zero(gb);
        const std::size_t begin = s * kShardSize;
        const std::size_t end = std::min(indices.size(), begin + kShardSize);
        double loss = 0.0;
        for (std::size_t k = begin; k < end; ++k) {
            const std::size_t idx = indices[k];
            forward_sample(p, d.image(idx), states[worker], nullptr, nullptr);
            loss += backward_sample(p, d.labels[idx], states[worker], gb);
        }
        shard_loss[s] = loss;
    });
    zero(out);
    double loss = 0.0;
    for (std::size_t s = 0; s < shards; ++s) {
        add_into(out, shard_grads[s]);
        loss += shard_loss[s];
    }
    const double scale = 1.0 / static_cast<double>(indices.size());
    for (auto& l : out) {
        for (double& v : l.dk) v *= scale;
        for (double& v : l.db) v *= scale;
    }
    return loss * scale;
}

std::vector<SampleState> make_states(const Plan& p) {
    std::vector<SampleState> states;
    const std::size_t n = std::max<std::size_t>(1, worker_count());
    states.reserve(n);
    for (std::size_t w = 0; w < n; ++w) states.emplace_back(p);
    return states;
}

void check_input(const ModelGraph& g, const Dataset& d) {
    if (d.image_shape != g.input_shape) {
        throw validation_error("shape mismatch: dataset images are " + d.image_shape.to_string() + " but model expects " +
                               g.input_shape.to_string());
    }
    if (d.pixels.size() != d.size() * d.image_elements()) throw validation_error("dataset pixel buffer is inconsistent");
}

}  // namespace

ForwardOutput forward(const ModelGraph& g, const Dataset& batch, const std::set<std::string>& capture) {
    check_input(g, batch);
    const Plan p(g);
    std::vector<char> mask(g.layers.size(), 0);
    for (const auto& id : capture) {
        const std::size_t i = g.index_of(id);
        if (!g.layers[i].has_weights()) throw validation_error("cannot capture weightless layer '" + id + "'");
        mask[i] = 1;
    }
    const std::size_t n = batch.size();
    if (n == 0) throw validation_error("forward needs a non-empty batch");
    ForwardOutput out;
    out.logits = Tensor(Shape{n, g.num_classes});
    std::vector<std::vector<NormPair>> per_layer(g.layers.size());
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        if (mask[i]) per_layer[i].resize(n);
    }
    auto states = make_states(p);
    parallel_for(n, [&](std::size_t s, std::size_t worker) {
        SampleState& st = states[worker];
        std::vector<NormPair> captured(g.layers.size());
        forward_sample(p, batch.image(s), st, &mask, captured.data());
        for (std::size_t i = 0; i < g.layers.size(); ++i) {
            if (mask[i]) per_layer[i][s] = captured[i];
        }
        const auto& o = st.acts.back();
        std::copy(o.begin(), o.end(), out.logits.data().begin() + static_cast<std::ptrdiff_t>(s * g.num_classes));
    });
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        if (mask[i]) out.trace.emplace(g.layers[i].id, std::move(per_layer[i]));
    }
    return out;
}

double evaluate(const ModelGraph& g, const Dataset& d) {
    check_input(g, d);
    if (d.size() == 0) throw validation_error("cannot evaluate on an empty dataset");
    const Plan p(g);
    auto states = make_states(p);
    std::vector<char> correct(d.size(), 0);
    parallel_for(d.size(), [&](std::size_t s, std::size_t worker) {
        SampleState& st = states[worker];
        forward_sample(p, d.image(s), st, nullptr, nullptr);
        const auto& o = st.acts.back();
        const auto best = static_cast<std::size_t>(std::max_element(o.begin(), o.end()) - o.begin());
        correct[s] = best == d.labels[s] ? 1 : 0;
    });
    std::size_t hits = 0;
    for (char c : correct) hits += static_cast<std::size_t>(c);
    return static_cast<double>(hits) / static_cast<double>(d.size());
}

void validate(const TrainConfig& cfg, const Dataset& d) {
    if (!(cfg.learning_rate > 0.0)) throw validation_error("learning rate must be positive");
    if (cfg.momentum < 0.0) throw validation_error("momentum must be nonnegative");
    if (cfg.batch_size == 0) throw validation_error("batch size must be positive");
    if (cfg.batch_size > d.size()) throw validation_error("batch size exceeds dataset size");
}

Gradients loss_and_gradients(const ModelGraph& g, const Dataset& batch) {
    check_input(g, batch);
    check_loss_head(g);
    if (batch.size() == 0) throw validation_error("empty batch");
    const Plan p(g);
    auto states = make_states(p);
    std::vector<GradBuffers> shard_grads;
    GradBuffers total = make_grad_buffers(p);
    std::vector<std::size_t> idx(batch.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Gradients out;
    out.loss = batch_gradients(p, batch, idx, states, shard_grads, total);
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        const LayerSpec& l = g.layers[i];
        if (!l.has_weights()) continue;
        const LayerWeights& w = g.weights_of(l.id);
        out.per_layer.emplace(l.id, LayerWeights{Tensor(w.kernel.shape(), total[i].dk), Tensor(w.bias.shape(), total[i].db)});
    }
    return out;
}

ModelGraph finetune(const ModelGraph& g0, const KeepMasks& masks, const Dataset& d, const TrainConfig& cfg,
                    const EpochCallback& on_epoch) {
    validate(g0);
    check_input(g0, d);
    check_loss_head(g0);
    validate(cfg, d);
    ModelGraph g = g0;

    const Plan p(g);
    std::vector<const std::vector<std::uint8_t>*> layer_masks(g.layers.size(), nullptr);
    for (const auto& [id, mask] : masks) {
        const std::size_t i = g.index_of(id);
        LayerWeights& w = g.weights_of(id);
        if (mask.size() != w.kernel.size()) {
            throw validation_error("mask for layer '" + id + "' has " + std::to_string(mask.size()) +
                                   " entries, kernel has " + std::to_string(w.kernel.size()));
        }
        layer_masks[i] = &mask;
        for (std::size_t j = 0; j < mask.size(); ++j) {
            if (!mask[j]) w.kernel[j] = 0.0;
        }
    }
    if (cfg.epochs == 0) return g;

    auto states = make_states(p);
    std::vector<GradBuffers> shard_grads;
    GradBuffers grads = make_grad_buffers(p);
    GradBuffers velocity = make_grad_buffers(p);
    Rng rng(cfg.seed);
    const std::size_t n = d.size();
    const std::size_t batches = n / cfg.batch_size;  // trailing partial batch dropped

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = rng.permutation(n);
        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < batches; ++b) {
            const std::span<const std::size_t> idx(order.data() + b * cfg.batch_size, cfg.batch_size);
            const double loss = batch_gradients(p, d, idx, states, shard_grads, grads);
            if (!std::isfinite(loss) || loss > kDivergenceLoss) {
                throw numerical_error("training diverged: loss is " + std::to_string(loss) + " at epoch " +
                                      std::to_string(epoch) + ", batch " + std::to_string(b));
            }
            epoch_loss += loss;
            for (std::size_t i = 0; i < g.layers.size(); ++i) {
                if (!g.layers[i].has_weights()) continue;
                LayerWeights& w = g.weights_of(g.layers[i].id);
                auto kernel = w.kernel.data();
                auto bias = w.bias.data();
                const auto* mask = layer_masks[i];
                for (std::size_t j = 0; j < kernel.size(); ++j) {
                    const double gj = (mask && !(*mask)[j]) ? 0.0 : grads[i].dk[j];
                    velocity[i].dk[j] = cfg.momentum * velocity[i].dk[j] - cfg.learning_rate * gj;
                    kernel[j] += velocity[i].dk[j];
                }
                for (std::size_t j = 0; j < bias.size(); ++j) {
                    velocity[i].db[j] = cfg.momentum * velocity[i].db[j] - cfg.learning_rate * grads[i].db[j];
                    bias[j] += velocity[i].db[j];
                }
                if (!w.kernel.all_finite() || !w.bias.all_finite()) {
                    throw numerical_error("training diverged: non-finite weights in layer '" + g.layers[i].id +
                                          "' at epoch " + std::to_string(epoch));
                }
            }
        }
        if (on_epoch) on_epoch(epoch, batches ? epoch_loss / static_cast<double>(batches) : 0.0);
    }
    return g;
}

ModelGraph train(const ModelGraph& g, const Dataset& d, const TrainConfig& cfg, const EpochCallback& on_epoch) {
    return finetune(g, {}, d, cfg, on_epoch);
}

void initialize_weights(ModelGraph& g, std::uint64_t seed) {
    Rng rng(seed);
    for (const auto& l : g.layers) {
        if (!l.has_weights()) continue;
        const Shape& f = *l.filter_shape;
        double fan_in = 0.0, fan_out = 0.0;
        if (l.kind == LayerKind::Conv2d) {
            fan_in = static_cast<double>(f[0] * f[1] * f[2]);
            fan_out = static_cast<double>(f[0] * f[1] * f[3]);
        } else {
            fan_in = static_cast<double>(f[0]);
            fan_out = static_cast<double>(f[1]);
        }
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        LayerWeights w{Tensor(f), Tensor(Shape{l.out_channels()})};
        for (double& v : w.kernel.data()) v = rng.uniform(-limit, limit);
        g.weights.insert_or_assign(l.id, std::move(w));
    }
}

}  // namespace prunekit
