#include "pathprof/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pathprof/errors.hpp"
#include "pathprof/parallel.hpp"
#include "pathprof/pooling.hpp"
#include "pathprof/rng.hpp"

namespace pathprof {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// (output positions) x (in_channels * kernel_h * kernel_w), padding cells zero.
MatrixXd im2col(const VectorXd& in, const Shape& in_shape, int kernel_h, int kernel_w, int stride,
                int padding) {
    const int channels = in_shape[0], height = in_shape[1], width = in_shape[2];
    const int oh = conv_output_extent(height, kernel_h, stride, padding);
    const int ow = conv_output_extent(width, kernel_w, stride, padding);
    MatrixXd cols = MatrixXd::Zero(static_cast<Eigen::Index>(oh) * ow,
                                   static_cast<Eigen::Index>(channels) * kernel_h * kernel_w);
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const Eigen::Index p = static_cast<Eigen::Index>(oy) * ow + ox;
            for (int ic = 0; ic < channels; ++ic) {
                for (int ky = 0; ky < kernel_h; ++ky) {
                    const int iy = oy * stride - padding + ky;
                    if (iy < 0 || iy >= height) {
                        continue;
                    }
                    for (int kx = 0; kx < kernel_w; ++kx) {
                        const int ix = ox * stride - padding + kx;
                        if (ix < 0 || ix >= width) {
                            continue;
                        }
                        const Eigen::Index k =
                            (static_cast<Eigen::Index>(ic) * kernel_h + ky) * kernel_w + kx;
                        cols(p, k) = in[static_cast<Eigen::Index>(ic) * height * width +
                                        static_cast<Eigen::Index>(iy) * width + ix];
                    }
                }
            }
        }
    }
    return cols;
}

void col2im_add(const MatrixXd& dcol, const Shape& in_shape, int kernel_h, int kernel_w,
                int stride, int padding, VectorXd& in_grad) {
    const int channels = in_shape[0], height = in_shape[1], width = in_shape[2];
    const int oh = conv_output_extent(height, kernel_h, stride, padding);
    const int ow = conv_output_extent(width, kernel_w, stride, padding);
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const Eigen::Index p = static_cast<Eigen::Index>(oy) * ow + ox;
            for (int ic = 0; ic < channels; ++ic) {
                for (int ky = 0; ky < kernel_h; ++ky) {
                    const int iy = oy * stride - padding + ky;
                    if (iy < 0 || iy >= height) {
                        continue;
                    }
                    for (int kx = 0; kx < kernel_w; ++kx) {
                        const int ix = ox * stride - padding + kx;
                        if (ix < 0 || ix >= width) {
                            continue;
                        }
                        const Eigen::Index k =
                            (static_cast<Eigen::Index>(ic) * kernel_h + ky) * kernel_w + kx;
                        in_grad[static_cast<Eigen::Index>(ic) * height * width +
                                static_cast<Eigen::Index>(iy) * width + ix] += dcol(p, k);
                    }
                }
            }
        }
    }
}

struct ForwardState {
    std::vector<VectorXd> outputs;  // one per layer
};

void eval_layer(const Network& net, const PathGeometry& geom, std::size_t index, const VectorXd& in,
                VectorXd& out) {
    const LayerSpec& layer = net.layers[index];
    const Shape& in_shape = geom.input_shapes[index];
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
        out.noalias() = d->weights.cast<double>() * in + d->bias.cast<double>();
    } else if (const auto* c = std::get_if<Conv2DLayer>(&layer)) {
        const MatrixXd cols = im2col(in, in_shape, c->kernel_h, c->kernel_w, c->stride, c->padding);
        const MatrixXd res = c->weights.cast<double>() * cols.transpose();  // oc x positions
        const Eigen::Index positions = cols.rows();
        out.resize(static_cast<Eigen::Index>(c->out_channels) * positions);
        for (int oc = 0; oc < c->out_channels; ++oc) {
            out.segment(static_cast<Eigen::Index>(oc) * positions, positions) =
                res.row(oc).transpose().array() + static_cast<double>(c->bias[oc]);
        }
    } else if (const auto* p = std::get_if<MaxPool2DLayer>(&layer)) {
        const int channels = in_shape[0], height = in_shape[1], width = in_shape[2];
        const int oh = conv_output_extent(height, p->kernel_h, p->stride, 0);
        const int ow = conv_output_extent(width, p->kernel_w, p->stride, 0);
        out.resize(static_cast<Eigen::Index>(channels) * oh * ow);
        for (int ic = 0; ic < channels; ++ic) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    const PoolArgmax arg = pool_window_argmax(
                        in, height, width, ic, oy, ox, p->kernel_h, p->kernel_w, p->stride);
                    out[static_cast<Eigen::Index>(ic) * oh * ow +
                        static_cast<Eigen::Index>(oy) * ow + ox] = in[arg.input_flat];
                }
            }
        }
    } else if (const auto* p = std::get_if<AvgPool2DLayer>(&layer)) {
        const int channels = in_shape[0], height = in_shape[1], width = in_shape[2];
        const int oh = conv_output_extent(height, p->kernel_h, p->stride, 0);
        const int ow = conv_output_extent(width, p->kernel_w, p->stride, 0);
        const double area = static_cast<double>(p->kernel_h) * p->kernel_w;
        out.resize(static_cast<Eigen::Index>(channels) * oh * ow);
        for (int ic = 0; ic < channels; ++ic) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    double sum = 0.0;
                    for (int ky = 0; ky < p->kernel_h; ++ky) {
                        for (int kx = 0; kx < p->kernel_w; ++kx) {
                            const int iy = oy * p->stride + ky;
                            const int ix = ox * p->stride + kx;
                            sum += in[static_cast<Eigen::Index>(ic) * height * width +
                                      static_cast<Eigen::Index>(iy) * width + ix];
                        }
                    }
                    out[static_cast<Eigen::Index>(ic) * oh * ow +
                        static_cast<Eigen::Index>(oy) * ow + ox] = sum / area;
                }
            }
        }
    } else if (std::holds_alternative<ReLULayer>(layer)) {
        out = in.cwiseMax(0.0);
    } else if (std::holds_alternative<FlattenLayer>(layer)) {
        out = in;
    } else {
        // ResidualAdd needs the source layer's output; run_forward handles it.
        throw InternalInvariantError("eval_layer called on a residual layer");
    }
}

ForwardState run_forward(const Network& net, const PathGeometry& geom, const VectorXd& input,
                         bool check_finite) {
    if (input.size() != flat_size(net.input_shape)) {
        throw DomainError("input has " + std::to_string(input.size()) + " values, expected " +
                          std::to_string(flat_size(net.input_shape)) + " for shape " +
                          shape_to_string(net.input_shape));
    }
    ForwardState st;
    st.outputs.resize(net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const VectorXd& in = (i == 0) ? input : st.outputs[i - 1];
        if (const auto* r = std::get_if<ResidualAddLayer>(&net.layers[i])) {
            st.outputs[i] = in + st.outputs[static_cast<std::size_t>(r->source_layer_index)];
        } else {
            eval_layer(net, geom, i, in, st.outputs[i]);
        }
        if (check_finite && !st.outputs[i].allFinite()) {
            throw NumericError("non-finite value in output of layer " + std::to_string(i) + " (" +
                               layer_kind_name(net.layers[i]) + ")");
        }
    }
    return st;
}

std::vector<int> rank_classes(const VectorXd& logits) {
    std::vector<int> rank(static_cast<std::size_t>(logits.size()));
    std::iota(rank.begin(), rank.end(), 0);
    std::stable_sort(rank.begin(), rank.end(),
                     [&](int a, int b) { return logits[a] > logits[b]; });
    return rank;
}

struct ParamGradients {
    std::vector<MatrixXd> weights;  // parallel to net.layers; empty when non-parametric
    std::vector<VectorXd> biases;

    explicit ParamGradients(const Network& net) {
        weights.resize(net.layers.size());
        biases.resize(net.layers.size());
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            if (const auto* d = std::get_if<DenseLayer>(&net.layers[i])) {
                weights[i] = MatrixXd::Zero(d->weights.rows(), d->weights.cols());
                biases[i] = VectorXd::Zero(d->bias.size());
            } else if (const auto* c = std::get_if<Conv2DLayer>(&net.layers[i])) {
                weights[i] = MatrixXd::Zero(c->weights.rows(), c->weights.cols());
                biases[i] = VectorXd::Zero(c->bias.size());
            }
        }
    }
};

double softmax_cross_entropy(const VectorXd& logits, int target, VectorXd* dlogits) {
    const double max_logit = logits.maxCoeff();
    const VectorXd shifted = logits.array() - max_logit;
    const VectorXd exps = shifted.array().exp();
    const double sum = exps.sum();
    const double loss = std::log(sum) - shifted[target];
    if (dlogits != nullptr) {
        *dlogits = exps / sum;
        (*dlogits)[target] -= 1.0;
    }
    return loss;
}

// Backpropagates d(loss)/d(everything). Returns the loss. Accumulates weight
// and bias gradients into pg when given; writes the input gradient when given.
double backprop(const Network& net, const PathGeometry& geom, const VectorXd& input, int target,
                ParamGradients* pg, VectorXd* input_grad) {
    const ForwardState st = run_forward(net, geom, input, /*check_finite=*/true);
    const VectorXd& logits = st.outputs.back();

    VectorXd dlogits;
    const double loss = softmax_cross_entropy(logits, target, &dlogits);

    std::vector<VectorXd> grads(net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        grads[i] = VectorXd::Zero(st.outputs[i].size());
    }
    grads.back() = dlogits;
    if (input_grad != nullptr) {
        *input_grad = VectorXd::Zero(input.size());
    }

    for (std::size_t ri = net.layers.size(); ri-- > 0;) {
        const VectorXd& g = grads[ri];
        const VectorXd& in = (ri == 0) ? input : st.outputs[ri - 1];
        const Shape& in_shape = geom.input_shapes[ri];
        VectorXd gin;
        const LayerSpec& layer = net.layers[ri];
        if (const auto* d = std::get_if<DenseLayer>(&layer)) {
            if (pg != nullptr) {
                pg->weights[ri].noalias() += g * in.transpose();
                pg->biases[ri] += g;
            }
            gin.noalias() = d->weights.cast<double>().transpose() * g;
        } else if (const auto* c = std::get_if<Conv2DLayer>(&layer)) {
            const MatrixXd cols =
                im2col(in, in_shape, c->kernel_h, c->kernel_w, c->stride, c->padding);
            const Eigen::Index positions = cols.rows();
            MatrixXd g_mat(c->out_channels, positions);
            for (int oc = 0; oc < c->out_channels; ++oc) {
                g_mat.row(oc) = g.segment(static_cast<Eigen::Index>(oc) * positions, positions)
                                    .transpose();
            }
            if (pg != nullptr) {
                pg->weights[ri].noalias() += g_mat * cols;
                pg->biases[ri] += g_mat.rowwise().sum();
            }
            const MatrixXd dcol = g_mat.transpose() * c->weights.cast<double>();  // positions x k
            gin = VectorXd::Zero(in.size());
            col2im_add(dcol, in_shape, c->kernel_h, c->kernel_w, c->stride, c->padding, gin);
        } else if (const auto* p = std::get_if<MaxPool2DLayer>(&layer)) {
            const int channels = in_shape[0], height = in_shape[1], width = in_shape[2];
            const int oh = conv_output_extent(height, p->kernel_h, p->stride, 0);
            const int ow = conv_output_extent(width, p->kernel_w, p->stride, 0);
            gin = VectorXd::Zero(in.size());
            for (int ic = 0; ic < channels; ++ic) {
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox) {
                        const PoolArgmax arg = pool_window_argmax(
                            in, height, width, ic, oy, ox, p->kernel_h, p->kernel_w, p->stride);
                        gin[arg.input_flat] += g[static_cast<Eigen::Index>(ic) * oh * ow +
                                      static_cast<Eigen::Index>(oy) * ow + ox];
                    }
                }
            }
        } else if (const auto* p = std::get_if<AvgPool2DLayer>(&layer)) {
            const int channels = in_shape[0], height = in_shape[1], width = in_shape[2];
            const int oh = conv_output_extent(height, p->kernel_h, p->stride, 0);
            const int ow = conv_output_extent(width, p->kernel_w, p->stride, 0);
            const double area = static_cast<double>(p->kernel_h) * p->kernel_w;
            gin = VectorXd::Zero(in.size());
            for (int ic = 0; ic < channels; ++ic) {
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox) {
                        const double share = g[static_cast<Eigen::Index>(ic) * oh * ow +
                                               static_cast<Eigen::Index>(oy) * ow + ox] /
                                             area;
                        for (int ky = 0; ky < p->kernel_h; ++ky) {
                            for (int kx = 0; kx < p->kernel_w; ++kx) {
                                const int iy = oy * p->stride + ky;
                                const int ix = ox * p->stride + kx;
                                gin[static_cast<Eigen::Index>(ic) * height * width +
                                    static_cast<Eigen::Index>(iy) * width + ix] += share;
                            }
                        }
                    }
                }
            }
        } else if (std::holds_alternative<ReLULayer>(layer)) {
            gin = (in.array() > 0.0).select(g, VectorXd::Zero(g.size()));
        } else if (std::holds_alternative<FlattenLayer>(layer)) {
            gin = g;
        } else if (const auto* r = std::get_if<ResidualAddLayer>(&layer)) {
            grads[static_cast<std::size_t>(r->source_layer_index)] += g;
            gin = g;
        }
        if (ri == 0) {
            if (input_grad != nullptr) {
                *input_grad += gin;
            }
        } else {
            grads[ri - 1] += gin;
        }
    }
    return loss;
}

}  // namespace

ActivationTrace forward_trace(const Network& net, const VectorXd& input) {
    const PathGeometry geom = PathGeometry::of(net);
    const ForwardState st = run_forward(net, geom, input, /*check_finite=*/true);
    ActivationTrace trace;
    trace.input = input;
    trace.layers.resize(net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (std::holds_alternative<ReLULayer>(net.layers[i])) {
            trace.layers[i].pre = (i == 0) ? input : st.outputs[i - 1];
        } else {
            trace.layers[i].pre = st.outputs[i];
        }
        trace.layers[i].post = st.outputs[i];
    }
    trace.logits = st.outputs.back();
    trace.predicted_rank = rank_classes(trace.logits);
    return trace;
}

LossAndGradient loss_and_input_gradient(const Network& net, const VectorXd& input,
                                        int target_class, bool targeted) {
    (void)targeted;
    const int classes = net.num_classes();
    if (target_class < 0 || target_class >= classes) {
        throw DomainError("target class " + std::to_string(target_class) + " out of range for " +
                          std::to_string(classes) + " classes");
    }
    const PathGeometry geom = PathGeometry::of(net);
    LossAndGradient out;
    out.loss = backprop(net, geom, input, target_class, nullptr, &out.input_gradient);
    return out;
}

void TrainConfig::validate() const {
    if (learning_rate < 0.0) {
        throw DomainError("learning_rate must be nonnegative");
    }
    if (epochs <= 0 || batch_size <= 0) {
        throw DomainError("epochs and batch_size must be positive");
    }
    if (l2_decay < 0.0) {
        throw DomainError("l2_decay must be nonnegative");
    }
}

TrainResult train_sgd(const Network& net, const LabeledDataset& data, const TrainConfig& cfg) {
    cfg.validate();
    net.validate();
    if (data.size() == 0) {
        throw DomainError("train_sgd: empty dataset");
    }
    const int classes = net.num_classes();
    for (int label : data.labels) {
        if (label < 0 || label >= classes) {
            throw DomainError("train_sgd: label " + std::to_string(label) + " out of range");
        }
    }

    TrainResult result;
    result.network = net;
    Network& model = result.network;
    const PathGeometry geom = PathGeometry::of(model);

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        seeded_shuffle(order, rng);
        double epoch_loss = 0.0;
        std::size_t cursor = 0;
        while (cursor < order.size()) {
            const std::size_t batch_end =
                std::min(order.size(), cursor + static_cast<std::size_t>(cfg.batch_size));
            ParamGradients pg(model);
            for (std::size_t b = cursor; b < batch_end; ++b) {
                const std::size_t idx = order[b];
                epoch_loss += backprop(model, geom, data.images[idx].cast<double>(),
                                       data.labels[idx], &pg, nullptr);
            }
            const double scale = cfg.learning_rate / static_cast<double>(batch_end - cursor);
            for (std::size_t i = 0; i < model.layers.size(); ++i) {
                auto update = [&](Eigen::MatrixXf& w, const MatrixXd& gw) {
                    w = (w.cast<double>() -
                         (scale * gw + (cfg.learning_rate * cfg.l2_decay) * w.cast<double>()))
                            .cast<float>();
                };
                if (auto* d = std::get_if<DenseLayer>(&model.layers[i])) {
                    update(d->weights, pg.weights[i]);
                    d->bias = (d->bias.cast<double>() - scale * pg.biases[i]).cast<float>();
                } else if (auto* c = std::get_if<Conv2DLayer>(&model.layers[i])) {
                    update(c->weights, pg.weights[i]);
                    c->bias = (c->bias.cast<double>() - scale * pg.biases[i]).cast<float>();
                }
            }
            cursor = batch_end;
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(data.size()));
    }
    return result;
}

std::vector<int> predict_topk(const Network& net, const VectorXd& input, int k) {
    const int classes = net.num_classes();
    if (k < 1 || k > classes) {
        throw DomainError("predict_topk: k = " + std::to_string(k) + " out of range [1, " +
                          std::to_string(classes) + "]");
    }
    const ActivationTrace trace = forward_trace(net, input);
    return {trace.predicted_rank.begin(), trace.predicted_rank.begin() + k};
}

int predict_class(const Network& net, const VectorXd& input) {
    return predict_topk(net, input, 1)[0];
}

double accuracy(const Network& net, const LabeledDataset& data, int jobs) {
    if (data.size() == 0) {
        throw DomainError("accuracy: empty dataset");
    }
    std::vector<std::uint8_t> hits(data.size(), 0);
    parallel_for(static_cast<std::int64_t>(data.size()), jobs, [&](std::int64_t i) {
        const auto idx = static_cast<std::size_t>(i);
        hits[idx] = predict_class(net, data.images[idx].cast<double>()) == data.labels[idx];
    });
    std::int64_t correct = 0;
    for (std::uint8_t h : hits) {
        correct += h;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

// (layer index, flat weight coordinate) pairs in canonical ascending order.
std::vector<std::pair<int, std::int64_t>> path_weight_list(const EffectivePath& path) {
    std::vector<std::pair<int, std::int64_t>> out;
    for (const PathLayer& l : path.layers) {
        l.weights.for_each([&](std::int64_t w) { out.emplace_back(l.layer_index, w); });
    }
    return out;
}

void zero_weight(Network& net, int layer_index, std::int64_t coord) {
    if (auto* d = std::get_if<DenseLayer>(&net.layers[static_cast<std::size_t>(layer_index)])) {
        d->weights(static_cast<Eigen::Index>(coord / d->in_dim),
                   static_cast<Eigen::Index>(coord % d->in_dim)) = 0.0f;
    } else if (auto* c =
                   std::get_if<Conv2DLayer>(&net.layers[static_cast<std::size_t>(layer_index)])) {
        const Eigen::Index k = c->weights.cols();
        c->weights(static_cast<Eigen::Index>(coord / k), static_cast<Eigen::Index>(coord % k)) =
            0.0f;
    }
}

}  // namespace

int ablate_forward(const Network& net, const VectorXd& input, const EffectivePath& path,
                   const AblationMode& mode) {
    if (path.fingerprint != net.fingerprint()) {
        throw DomainError("ablate_forward: path was extracted from a different topology");
    }
    if (mode.kind != AblationKind::KeepPathOnly && (mode.fraction < 0.0 || mode.fraction > 1.0)) {
        throw DomainError("ablation fraction must be in [0, 1]");
    }

    Network ablated = net;
    const auto path_weights = path_weight_list(path);

    if (mode.kind == AblationKind::KeepPathOnly) {
        for (const PathLayer& l : path.layers) {
            if (l.weights.capacity() == 0) {
                continue;  // pools own no weights
            }
            for (std::int64_t w = 0; w < l.weights.capacity(); ++w) {
                if (!l.weights.test(w)) {
                    zero_weight(ablated, l.layer_index, w);
                }
            }
        }
    } else {
        const auto count = static_cast<std::size_t>(
            std::llround(mode.fraction * static_cast<double>(path_weights.size())));
        std::mt19937_64 rng(mode.seed);
        if (mode.kind == AblationKind::DropPathFraction) {
            auto pool = path_weights;
            seeded_shuffle(pool, rng);
            for (std::size_t i = 0; i < count && i < pool.size(); ++i) {
                zero_weight(ablated, pool[i].first, pool[i].second);
            }
        } else {
            std::vector<std::pair<int, std::int64_t>> complement;
            for (const PathLayer& l : path.layers) {
                for (std::int64_t w = 0; w < l.weights.capacity(); ++w) {
                    if (!l.weights.test(w)) {
                        complement.emplace_back(l.layer_index, w);
                    }
                }
            }
            seeded_shuffle(complement, rng);
            for (std::size_t i = 0; i < count && i < complement.size(); ++i) {
                zero_weight(ablated, complement[i].first, complement[i].second);
            }
        }
    }
    return predict_class(ablated, input);
}

VectorXd softmax(const VectorXd& logits) {
    const double max_logit = logits.maxCoeff();
    VectorXd exps = (logits.array() - max_logit).exp();
    return exps / exps.sum();
}

}  // namespace pathprof
