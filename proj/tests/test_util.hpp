#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "pathprof/engine.hpp"
#include "pathprof/network.hpp"
#include "pathprof/rng.hpp"

namespace testutil {

using namespace pathprof;

// ---------------------------------------------------------------------------
// Independent oracles. These deliberately re-derive results through different
// code paths than the library (exhaustive enumeration, stable_sort greedy,
// index-order accumulation) so agreement is meaningful.
// ---------------------------------------------------------------------------

// Smallest subset cardinality with product sum >= theta * output, by
// exhaustive enumeration (n <= ~20).
inline int enumerate_min_cardinality(const std::vector<double>& values,
                                     const std::vector<double>& weights, double output,
                                     double theta) {
    const int n = static_cast<int>(values.size());
    const double threshold = theta * output;
    int best = n + 1;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        double sum = 0.0;
        int card = 0;
        for (int k = 0; k < n; ++k) {
            if (mask & (1u << k)) {
                sum += values[static_cast<std::size_t>(k)] * weights[static_cast<std::size_t>(k)];
                ++card;
            }
        }
        if (sum >= threshold && card < best) {
            best = card;
        }
    }
    return best;
}

// The declared greedy with tie-break, written independently: stable_sort keeps
// ascending-index order among equal products.
inline std::vector<int> stable_greedy_select(const std::vector<double>& values,
                                             const std::vector<double>& weights, double output,
                                             double theta) {
    struct Pair {
        double product;
        int index;
    };
    std::vector<Pair> pairs;
    for (std::size_t k = 0; k < values.size(); ++k) {
        pairs.push_back({values[k] * weights[k], static_cast<int>(k)});
    }
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const Pair& a, const Pair& b) { return a.product > b.product; });
    std::vector<int> chosen;
    double sum = 0.0;
    for (const Pair& p : pairs) {
        if (!(p.product > 0.0)) {
            break;
        }
        sum += p.product;
        chosen.push_back(p.index);
        if (sum >= theta * output) {
            std::sort(chosen.begin(), chosen.end());
            return chosen;
        }
    }
    return {};  // unreachable threshold
}

// Reference extractor for dense/ReLU-only networks: plain recursion over
// std::set demand sets, bias as a virtual trailing input, expansion only for
// positive outputs.
struct RefLayerSets {
    int layer_index = -1;
    std::set<std::int64_t> neurons, synapses, weights;
};

inline std::vector<RefLayerSets> reference_extract_dense(const Network& net,
                                                         const Eigen::VectorXd& input,
                                                         double theta, int start_rank,
                                                         int num_layers = 1 << 30) {
    // Forward in index-order long double accumulation.
    std::vector<Eigen::VectorXd> outs(net.layers.size());
    Eigen::VectorXd cur = input;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (const auto* d = std::get_if<DenseLayer>(&net.layers[i])) {
            Eigen::VectorXd next(d->out_dim);
            for (int j = 0; j < d->out_dim; ++j) {
                long double acc = 0.0L;
                for (int k = 0; k < d->in_dim; ++k) {
                    acc += static_cast<long double>(cur[k]) *
                           static_cast<long double>(d->weights(j, k));
                }
                acc += static_cast<long double>(d->bias[j]);
                next[j] = static_cast<double>(acc);
            }
            cur = next;
        } else if (std::holds_alternative<ReLULayer>(net.layers[i])) {
            cur = cur.cwiseMax(0.0);
        } else {
            throw std::logic_error("reference extractor handles dense/relu only");
        }
        outs[i] = cur;
    }
    const Eigen::VectorXd& logits = outs.back();
    std::vector<int> rank(static_cast<std::size_t>(logits.size()));
    std::iota(rank.begin(), rank.end(), 0);
    std::stable_sort(rank.begin(), rank.end(), [&](int a, int b) { return logits[a] > logits[b]; });

    std::vector<RefLayerSets> result;
    std::set<std::int64_t> demand{rank[static_cast<std::size_t>(start_rank - 1)]};
    int taken = 0;
    for (std::size_t ri = net.layers.size(); ri-- > 0;) {
        if (std::holds_alternative<ReLULayer>(net.layers[ri])) {
            continue;  // index-preserving
        }
        const auto* d = std::get_if<DenseLayer>(&net.layers[ri]);
        const Eigen::VectorXd in_vals = (ri == 0) ? input : outs[ri - 1];
        RefLayerSets sets;
        sets.layer_index = static_cast<int>(ri);
        sets.neurons = demand;
        std::set<std::int64_t> next_demand;
        for (std::int64_t j : demand) {
            std::vector<double> vals, wts;
            for (int k = 0; k < d->in_dim; ++k) {
                vals.push_back(in_vals[k]);
                wts.push_back(static_cast<double>(d->weights(j, k)));
            }
            vals.push_back(1.0);
            wts.push_back(static_cast<double>(d->bias[j]));
            long double total = 0.0L;
            for (std::size_t k = 0; k < vals.size(); ++k) {
                total += static_cast<long double>(vals[k]) * static_cast<long double>(wts[k]);
            }
            if (!(total > 0.0L)) {
                continue;  // degenerate output: contributes nothing
            }
            const auto chosen =
                stable_greedy_select(vals, wts, static_cast<double>(total), theta);
            for (int k : chosen) {
                if (k == d->in_dim) {
                    continue;  // bias virtual input
                }
                sets.synapses.insert(j * d->in_dim + k);
                sets.weights.insert(j * d->in_dim + k);
                next_demand.insert(k);
            }
        }
        result.push_back(std::move(sets));
        demand = std::move(next_demand);
        if (++taken == num_layers) {
            break;
        }
    }
    std::reverse(result.begin(), result.end());
    return result;
}

// Central finite differences of the cross-entropy loss over input coords.
inline Eigen::VectorXd fd_input_gradient(const Network& net, const Eigen::VectorXd& input,
                                         int target, double h = 1e-4) {
    Eigen::VectorXd grad(input.size());
    for (Eigen::Index i = 0; i < input.size(); ++i) {
        Eigen::VectorXd hi = input, lo = input;
        hi[i] += h;
        lo[i] -= h;
        const double fhi = loss_and_input_gradient(net, hi, target).loss;
        const double flo = loss_and_input_gradient(net, lo, target).loss;
        grad[i] = (fhi - flo) / (2.0 * h);
    }
    return grad;
}

inline double rel_err(double a, double b, double floor = 1e-4) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// ---------------------------------------------------------------------------
// Random fixtures.
// ---------------------------------------------------------------------------

inline Eigen::MatrixXf random_matrix(int rows, int cols, std::mt19937_64& rng, double scale) {
    Eigen::MatrixXf m(rows, cols);
    for (int j = 0; j < rows; ++j) {
        for (int i = 0; i < cols; ++i) {
            m(j, i) = static_cast<float>(uniform_real(rng, -scale, scale));
        }
    }
    return m;
}

inline Eigen::VectorXf random_vector(int n, std::mt19937_64& rng, double scale) {
    Eigen::VectorXf v(n);
    for (int i = 0; i < n; ++i) {
        v[i] = static_cast<float>(uniform_real(rng, -scale, scale));
    }
    return v;
}

inline DenseLayer random_dense(int in, int out, std::mt19937_64& rng, double scale = 1.0) {
    DenseLayer d;
    d.in_dim = in;
    d.out_dim = out;
    d.weights = random_matrix(out, in, rng, scale);
    d.bias = random_vector(out, rng, scale * 0.5);
    return d;
}

inline Conv2DLayer random_conv(int ic, int oc, int k, int stride, int padding,
                               std::mt19937_64& rng, double scale = 1.0) {
    Conv2DLayer c;
    c.in_channels = ic;
    c.out_channels = oc;
    c.kernel_h = c.kernel_w = k;
    c.stride = stride;
    c.padding = padding;
    c.weights = random_matrix(oc, ic * k * k, rng, scale);
    c.bias = random_vector(oc, rng, scale * 0.5);
    return c;
}

// Mixed-topology small networks covering every in-scope layer kind.
inline Network random_small_net(std::mt19937_64& rng) {
    Network net;
    switch (bounded_rand(rng, 4)) {
        case 0: {  // plain MLP
            const int in = 3 + static_cast<int>(bounded_rand(rng, 5));
            const int hidden = 3 + static_cast<int>(bounded_rand(rng, 5));
            const int out = 2 + static_cast<int>(bounded_rand(rng, 3));
            net.input_shape = {in};
            net.layers.emplace_back(random_dense(in, hidden, rng));
            net.layers.emplace_back(ReLULayer{});
            net.layers.emplace_back(random_dense(hidden, out, rng));
            break;
        }
        case 1: {  // conv + maxpool
            const int side = 6 + static_cast<int>(bounded_rand(rng, 3));
            const int oc = 2 + static_cast<int>(bounded_rand(rng, 2));
            net.input_shape = {1, side, side};
            net.layers.emplace_back(random_conv(1, oc, 3, 1, 0, rng, 0.7));
            net.layers.emplace_back(ReLULayer{});
            net.layers.emplace_back(MaxPool2DLayer{2, 2, 2});
            const int conv_side = side - 2;
            const int pooled = (conv_side - 2) / 2 + 1;
            net.layers.emplace_back(FlattenLayer{});
            net.layers.emplace_back(random_dense(oc * pooled * pooled, 3, rng, 0.7));
            break;
        }
        case 2: {  // conv + avgpool, padded conv
            const int side = 6 + static_cast<int>(bounded_rand(rng, 3));
            net.input_shape = {1, side, side};
            net.layers.emplace_back(random_conv(1, 2, 3, 1, 1, rng, 0.7));
            net.layers.emplace_back(ReLULayer{});
            net.layers.emplace_back(AvgPool2DLayer{2, 2, 2});
            const int pooled = (side - 2) / 2 + 1;
            net.layers.emplace_back(FlattenLayer{});
            net.layers.emplace_back(random_dense(2 * pooled * pooled, 3, rng, 0.7));
            break;
        }
        default: {  // residual MLP
            const int in = 3 + static_cast<int>(bounded_rand(rng, 4));
            const int d = 4 + static_cast<int>(bounded_rand(rng, 4));
            net.input_shape = {in};
            net.layers.emplace_back(random_dense(in, d, rng));
            net.layers.emplace_back(ReLULayer{});                 // 1
            net.layers.emplace_back(random_dense(d, d, rng, 0.6));  // 2
            net.layers.emplace_back(ResidualAddLayer{1});         // 3
            net.layers.emplace_back(ReLULayer{});                 // 4
            net.layers.emplace_back(random_dense(d, 3, rng));     // 5
            break;
        }
    }
    net.validate();
    return net;
}

inline Eigen::VectorXd random_input(const Network& net, std::mt19937_64& rng, double lo = -1.0,
                                    double hi = 1.0) {
    const std::int64_t n = flat_size(net.input_shape);
    Eigen::VectorXd x(n);
    for (std::int64_t i = 0; i < n; ++i) {
        x[i] = uniform_real(rng, lo, hi);
    }
    return x;
}

// True when the input keeps every ReLU pre-activation and every max-pool
// window gap away from the finite-difference stencil (gradient checks assume
// a locally smooth loss).
inline bool smooth_at(const Network& net, const Eigen::VectorXd& input, double margin = 2e-3) {
    const ActivationTrace trace = forward_trace(net, input);
    const auto shapes = net.layer_output_shapes();
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (std::holds_alternative<ReLULayer>(net.layers[i])) {
            for (Eigen::Index j = 0; j < trace.layers[i].pre.size(); ++j) {
                if (std::abs(trace.layers[i].pre[j]) < margin) {
                    return false;
                }
            }
        } else if (const auto* p = std::get_if<MaxPool2DLayer>(&net.layers[i])) {
            const Shape in_shape = (i == 0) ? net.input_shape : shapes[i - 1];
            const Eigen::VectorXd& in =
                (i == 0) ? trace.input : trace.layers[i - 1].post;
            const int channels = in_shape[0], height = in_shape[1], width = in_shape[2];
            const int oh = conv_output_extent(height, p->kernel_h, p->stride, 0);
            const int ow = conv_output_extent(width, p->kernel_w, p->stride, 0);
            for (int c = 0; c < channels; ++c) {
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox) {
                        double top1 = -1e300, top2 = -1e300;
                        for (int ky = 0; ky < p->kernel_h; ++ky) {
                            for (int kx = 0; kx < p->kernel_w; ++kx) {
                                const double v =
                                    in[static_cast<Eigen::Index>(c) * height * width +
                                       static_cast<Eigen::Index>(oy * p->stride + ky) * width +
                                       (ox * p->stride + kx)];
                                if (v > top1) {
                                    top2 = top1;
                                    top1 = v;
                                } else if (v > top2) {
                                    top2 = v;
                                }
                            }
                        }
                        if (top1 - top2 < margin) {
                            return false;
                        }
                    }
                }
            }
        }
    }
    return true;
}

}  // namespace testutil
