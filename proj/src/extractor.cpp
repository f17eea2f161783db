#include "pathprof/extractor.hpp"

#include <algorithm>

#include "pathprof/errors.hpp"
#include "pathprof/pooling.hpp"

namespace pathprof {

namespace {

struct Candidate {
    double product = 0.0;
    std::int64_t tie = 0;       // ascending-index tie-break key
    std::int64_t payload = -1;  // caller-defined id; < 0 marks the bias pair
};

// Sorts candidates by (product desc, tie asc), accumulates the full sum n in
// that order in float64, and selects the shortest prefix
// with partial sum >= theta * n. Because the prefix sums pass through every
// partial of the same accumulation, a positive n is always reachable from the
// positive products alone. n <= 0 yields an empty, degenerate selection.
struct Selection {
    double total = 0.0;
    bool degenerate = false;
    std::vector<std::int64_t> chosen;  // payloads of selected candidates
};

Selection select_prefix(std::vector<Candidate>& cands, double theta) {
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        if (a.product != b.product) {
            return a.product > b.product;
        }
        return a.tie < b.tie;
    });
    Selection sel;
    for (const Candidate& c : cands) {
        sel.total += c.product;
    }
    if (!(sel.total > 0.0)) {
        sel.degenerate = true;
        return sel;
    }
    const double threshold = theta * sel.total;
    double sum = 0.0;
    for (const Candidate& c : cands) {
        if (!(c.product > 0.0)) {
            break;
        }
        sum += c.product;
        sel.chosen.push_back(c.payload);
        if (sum >= threshold) {
            return sel;
        }
    }
    throw InternalInvariantError(
        "contributor selection could not reach theta * n from positive products");
}

}  // namespace

std::vector<int> select_min_contributors(const std::vector<double>& input_values,
                                         const std::vector<double>& weights, double output_value,
                                         double theta) {
    if (input_values.size() != weights.size()) {
        throw DomainError("select_min_contributors: input/weight length mismatch");
    }
    if (!(theta > 0.0 && theta <= 1.0)) {
        throw DomainError("select_min_contributors: theta must be in (0, 1]");
    }
    if (!(output_value > 0.0)) {
        throw DomainError("select_min_contributors: output_value must be positive");
    }
    std::vector<Candidate> cands;
    cands.reserve(input_values.size());
    for (std::size_t k = 0; k < input_values.size(); ++k) {
        cands.push_back({input_values[k] * weights[k], static_cast<std::int64_t>(k),
                         static_cast<std::int64_t>(k)});
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        if (a.product != b.product) {
            return a.product > b.product;
        }
        return a.tie < b.tie;
    });
    const double threshold = theta * output_value;
    double sum = 0.0;
    std::vector<int> chosen;
    for (const Candidate& c : cands) {
        if (!(c.product > 0.0)) {
            break;
        }
        sum += c.product;
        chosen.push_back(static_cast<int>(c.payload));
        if (sum >= threshold) {
            std::sort(chosen.begin(), chosen.end());
            return chosen;
        }
    }
    throw InternalInvariantError(
        "select_min_contributors: threshold unreachable even with all positive products");
}

namespace {

const Eigen::VectorXd& layer_input_values(const ActivationTrace& trace, int layer_index) {
    return layer_index == 0 ? trace.input
                            : trace.layers[static_cast<std::size_t>(layer_index) - 1].post;
}

void extract_dense(const DenseLayer& d, const Eigen::VectorXd& in, const Bitset& active_outputs,
                   double theta, LayerExtraction& out) {
    std::vector<Candidate> cands;
    active_outputs.for_each([&](std::int64_t j) {
        cands.clear();
        for (int k = 0; k < d.in_dim; ++k) {
            const double product = in[k] * static_cast<double>(d.weights(j, k));
            if (product != 0.0) {
                cands.push_back({product, k, k});
            }
        }
        const double bias = static_cast<double>(d.bias[j]);
        if (bias != 0.0) {
            cands.push_back({bias, d.in_dim, -1});
        }
        const Selection sel = select_prefix(cands, theta);
        if (sel.degenerate) {
            ++out.degenerate_outputs;
            return;
        }
        for (std::int64_t payload : sel.chosen) {
            if (payload < 0) {
                continue;  // virtual bias input: no synapse, no weight
            }
            out.synapses.set(j * d.in_dim + payload);
            out.weights.set(j * d.in_dim + payload);
            out.active_inputs.set(payload);
        }
    });
}

void extract_conv(const Conv2DLayer& c, const Shape& in_shape, const Shape& out_shape,
                  const Eigen::VectorXd& in, const Bitset& active_outputs, double theta,
                  LayerExtraction& out) {
    const int height = in_shape[1], width = in_shape[2];
    const int oh = out_shape[1], ow = out_shape[2];
    const std::int64_t kvol = static_cast<std::int64_t>(c.in_channels) * c.kernel_h * c.kernel_w;
    std::vector<Candidate> cands;
    std::vector<std::int64_t> input_flat_of(static_cast<std::size_t>(kvol));
    active_outputs.for_each([&](std::int64_t j) {
        const int oc = static_cast<int>(j / (static_cast<std::int64_t>(oh) * ow));
        const int p = static_cast<int>(j % (static_cast<std::int64_t>(oh) * ow));
        const int oy = p / ow;
        const int ox = p % ow;
        cands.clear();
        for (int ic = 0; ic < c.in_channels; ++ic) {
            for (int ky = 0; ky < c.kernel_h; ++ky) {
                const int iy = oy * c.stride - c.padding + ky;
                if (iy < 0 || iy >= height) {
                    continue;
                }
                for (int kx = 0; kx < c.kernel_w; ++kx) {
                    const int ix = ox * c.stride - c.padding + kx;
                    if (ix < 0 || ix >= width) {
                        continue;
                    }
                    const std::int64_t off =
                        (static_cast<std::int64_t>(ic) * c.kernel_h + ky) * c.kernel_w + kx;
                    const std::int64_t flat = static_cast<std::int64_t>(ic) * height * width +
                                              static_cast<std::int64_t>(iy) * width + ix;
                    const double product = in[flat] * static_cast<double>(c.weights(oc, off));
                    if (product != 0.0) {
                        input_flat_of[static_cast<std::size_t>(off)] = flat;
                        cands.push_back({product, off, off});
                    }
                }
            }
        }
        const double bias = static_cast<double>(c.bias[oc]);
        if (bias != 0.0) {
            cands.push_back({bias, kvol, -1});
        }
        const Selection sel = select_prefix(cands, theta);
        if (sel.degenerate) {
            ++out.degenerate_outputs;
            return;
        }
        for (std::int64_t off : sel.chosen) {
            if (off < 0) {
                continue;
            }
            out.synapses.set(j * kvol + off);
            out.weights.set(static_cast<std::int64_t>(oc) * kvol + off);
            out.active_inputs.set(input_flat_of[static_cast<std::size_t>(off)]);
        }
    });
}

void extract_maxpool(const MaxPool2DLayer& p, const Shape& in_shape, const Shape& out_shape,
                     const Eigen::VectorXd& in, const Bitset& active_outputs,
                     LayerExtraction& out) {
    const int height = in_shape[1], width = in_shape[2];
    const int oh = out_shape[1], ow = out_shape[2];
    const std::int64_t area = static_cast<std::int64_t>(p.kernel_h) * p.kernel_w;
    active_outputs.for_each([&](std::int64_t j) {
        const int ic = static_cast<int>(j / (static_cast<std::int64_t>(oh) * ow));
        const int pos = static_cast<int>(j % (static_cast<std::int64_t>(oh) * ow));
        const PoolArgmax arg = pool_window_argmax(in, height, width, ic, pos / ow, pos % ow,
                                                  p.kernel_h, p.kernel_w, p.stride);
        out.synapses.set(j * area + arg.window_offset);
        out.active_inputs.set(arg.input_flat);
    });
}

void extract_avgpool(const AvgPool2DLayer& p, const Shape& in_shape, const Shape& out_shape,
                     const Eigen::VectorXd& in, const Bitset& active_outputs, double theta,
                     LayerExtraction& out) {
    const int height = in_shape[1], width = in_shape[2];
    const int oh = out_shape[1], ow = out_shape[2];
    const std::int64_t area = static_cast<std::int64_t>(p.kernel_h) * p.kernel_w;
    std::vector<Candidate> cands;
    std::vector<std::int64_t> input_flat_of(static_cast<std::size_t>(area));
    active_outputs.for_each([&](std::int64_t j) {
        const int ic = static_cast<int>(j / (static_cast<std::int64_t>(oh) * ow));
        const int pos = static_cast<int>(j % (static_cast<std::int64_t>(oh) * ow));
        const int oy = pos / ow;
        const int ox = pos % ow;
        cands.clear();
        for (int ky = 0; ky < p.kernel_h; ++ky) {
            for (int kx = 0; kx < p.kernel_w; ++kx) {
                const int iy = oy * p.stride + ky;
                const int ix = ox * p.stride + kx;
                const std::int64_t off = static_cast<std::int64_t>(ky) * p.kernel_w + kx;
                const std::int64_t flat = static_cast<std::int64_t>(ic) * height * width +
                                          static_cast<std::int64_t>(iy) * width + ix;
                const double value = in[flat];  // all-ones virtual conv weights
                if (value != 0.0) {
                    input_flat_of[static_cast<std::size_t>(off)] = flat;
                    cands.push_back({value, off, off});
                }
            }
        }
        const Selection sel = select_prefix(cands, theta);
        if (sel.degenerate) {
            ++out.degenerate_outputs;
            return;
        }
        for (std::int64_t off : sel.chosen) {
            out.synapses.set(j * area + off);
            out.active_inputs.set(input_flat_of[static_cast<std::size_t>(off)]);
        }
    });
}

}  // namespace

LayerExtraction extract_layer(const Network& net, const PathGeometry& geom, int layer_index,
                              const ActivationTrace& trace, const Bitset& active_outputs,
                              double theta) {
    const auto li = static_cast<std::size_t>(layer_index);
    if (!is_selecting_layer(net.layers[li])) {
        throw DomainError(std::string("extract_layer: unsupported layer kind ") +
                          layer_kind_name(net.layers[li]));
    }
    const LayerSetCapacity& cap = geom.capacity[li];
    LayerExtraction out{Bitset(cap.synapses), Bitset(cap.weights),
                        Bitset(flat_size(geom.input_shapes[li])), 0};
    const Eigen::VectorXd& in = layer_input_values(trace, layer_index);
    if (const auto* d = std::get_if<DenseLayer>(&net.layers[li])) {
        extract_dense(*d, in, active_outputs, theta, out);
    } else if (const auto* c = std::get_if<Conv2DLayer>(&net.layers[li])) {
        extract_conv(*c, geom.input_shapes[li], geom.output_shapes[li], in, active_outputs, theta,
                     out);
    } else if (const auto* p = std::get_if<MaxPool2DLayer>(&net.layers[li])) {
        extract_maxpool(*p, geom.input_shapes[li], geom.output_shapes[li], in, active_outputs, out);
    } else if (const auto* p = std::get_if<AvgPool2DLayer>(&net.layers[li])) {
        extract_avgpool(*p, geom.input_shapes[li], geom.output_shapes[li], in, active_outputs,
                        theta, out);
    }
    return out;
}

EffectivePath extract_effective_path(const Network& net, const ActivationTrace& trace,
                                     const ExtractionConfig& cfg) {
    const PathGeometry geom = PathGeometry::of(net);
    cfg.validate(net.num_classes());
    if (trace.layers.size() != net.layers.size()) {
        throw DomainError("trace layer count does not match network");
    }
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (trace.layers[i].post.size() != flat_size(geom.output_shapes[i])) {
            throw DomainError("trace layer " + std::to_string(i) +
                              " shape does not match network");
        }
    }
    if (geom.selecting_layers.empty()) {
        throw DomainError("network has no extractable layers");
    }

    const int depth =
        std::min<int>(cfg.num_layers, static_cast<int>(geom.selecting_layers.size()));

    std::vector<Bitset> demand(net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        demand[i] = Bitset(flat_size(geom.output_shapes[i]));
    }
    const int start_class = trace.predicted_rank[static_cast<std::size_t>(cfg.start_rank) - 1];
    demand.back().set(start_class);

    EffectivePath path;
    path.fingerprint = net.fingerprint();
    path.theta = cfg.theta;
    path.start_rank = cfg.start_rank;
    path.depth = depth;

    std::vector<PathLayer> reversed;
    for (std::size_t ri = net.layers.size(); ri-- > 0;) {
        const int i = static_cast<int>(ri);
        if (is_selecting_layer(net.layers[ri])) {
            LayerExtraction ext = extract_layer(net, geom, i, trace, demand[ri], cfg.theta);
            PathLayer entry;
            entry.layer_index = i;
            entry.neurons = demand[ri];
            entry.synapses = std::move(ext.synapses);
            entry.weights = std::move(ext.weights);
            path.degenerate_outputs += ext.degenerate_outputs;
            reversed.push_back(std::move(entry));
            if (static_cast<int>(reversed.size()) == depth) {
                break;
            }
            if (ri > 0) {
                demand[ri - 1].or_with(ext.active_inputs);
            }
        } else if (const auto* r = std::get_if<ResidualAddLayer>(&net.layers[ri])) {
            if (ri > 0) {
                demand[ri - 1].or_with(demand[ri]);
            }
            demand[static_cast<std::size_t>(r->source_layer_index)].or_with(demand[ri]);
        } else {  // ReLU / Flatten: index-preserving pass-through
            if (ri > 0) {
                demand[ri - 1].or_with(demand[ri]);
            }
        }
    }

    path.layers.assign(std::make_move_iterator(reversed.rbegin()),
                       std::make_move_iterator(reversed.rend()));
    return path;
}

}  // namespace pathprof
