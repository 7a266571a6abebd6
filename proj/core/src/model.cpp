#include "fedskew/model.hpp"

#include <algorithm>
#include <cmath>

#include "fedskew/errors.hpp"
#include "fedskew/rng.hpp"

namespace fedskew {

std::vector<int> ModelParams::layer_dims() const {
    std::vector<int> dims;
    dims.push_back(layers.front().in);
    for (const Layer& layer : layers) {
        dims.push_back(layer.out);
    }
    return dims;
}

size_t ModelParams::parameter_count() const {
    size_t count = 0;
    for (const Layer& layer : layers) {
        count += layer.weights.size() + layer.bias.size();
    }
    return count;
}

ModelParams init_params(const std::vector<int>& layer_dims, uint64_t seed, double scale) {
    if (layer_dims.size() < 2) {
        throw ConfigError("need at least an input and an output dimension", "model.layer_dims");
    }
    for (int dim : layer_dims) {
        if (dim <= 0) {
            throw ConfigError("layer dimensions must be positive", "model.layer_dims");
        }
    }
    if (scale <= 0.0) {
        throw ConfigError("init scale must be positive", "model.init_scale");
    }
    Rng rng(seed);
    ModelParams params;
    for (size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        Layer layer;
        layer.in = layer_dims[l];
        layer.out = layer_dims[l + 1];
        layer.weights.resize(static_cast<size_t>(layer.in) * layer.out);
        layer.bias.assign(layer.out, 0.0);
        double stddev = scale / std::sqrt(static_cast<double>(layer.in));
        for (double& w : layer.weights) {
            w = stddev * rng.normal();
        }
        params.layers.push_back(std::move(layer));
    }
    return params;
}

namespace {

// Activations of every layer for one input: acts[0] = x, acts.back() = the
// class probabilities. Logits of the last layer are softmaxed with
// max-subtraction.
std::vector<std::vector<double>> forward_pass(const ModelParams& params,
                                              std::span<const double> x) {
    if (static_cast<int>(x.size()) != params.input_dim()) {
        throw ShapeError("input has dim " + std::to_string(x.size()) +
                         ", model expects " + std::to_string(params.input_dim()));
    }
    std::vector<std::vector<double>> acts;
    acts.reserve(params.layers.size() + 1);
    acts.emplace_back(x.begin(), x.end());
    for (size_t l = 0; l < params.layers.size(); ++l) {
        const Layer& layer = params.layers[l];
        const std::vector<double>& prev = acts.back();
        std::vector<double> z(layer.out);
        for (int u = 0; u < layer.out; ++u) {
            double sum = layer.bias[u];
            const double* row = layer.weights.data() + static_cast<size_t>(u) * layer.in;
            for (int v = 0; v < layer.in; ++v) {
                sum += row[v] * prev[v];
            }
            z[u] = sum;
        }
        bool last = (l + 1 == params.layers.size());
        if (last) {
            double zmax = *std::max_element(z.begin(), z.end());
            double total = 0.0;
            for (double& v : z) {
                v = std::exp(v - zmax);
                total += v;
            }
            for (double& v : z) {
                v /= total;
            }
        } else {
            for (double& v : z) {
                v = std::tanh(v);
            }
        }
        acts.push_back(std::move(z));
    }
    return acts;
}

GradientSet zero_like(const ModelParams& params) {
    GradientSet grad = params;
    for (Layer& layer : grad.layers) {
        std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
        std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
    }
    return grad;
}

// Backprop of the single-example NLL into `grad` (accumulated, not scaled).
// Returns the example's loss.
double accumulate_example(const ModelParams& params, GradientSet& grad,
                          std::span<const double> x, int label) {
    auto acts = forward_pass(params, x);
    const std::vector<double>& probs = acts.back();
    double loss = -std::log(std::max(probs[label], 1e-300));

    // Softmax + NLL collapses to (p - onehot) at the output.
    std::vector<double> delta = probs;
    delta[label] -= 1.0;

    for (size_t l = params.layers.size(); l-- > 0;) {
        const Layer& layer = params.layers[l];
        Layer& glayer = grad.layers[l];
        const std::vector<double>& below = acts[l];
        for (int u = 0; u < layer.out; ++u) {
            glayer.bias[u] += delta[u];
            double* grow = glayer.weights.data() + static_cast<size_t>(u) * layer.in;
            for (int v = 0; v < layer.in; ++v) {
                grow[v] += delta[u] * below[v];
            }
        }
        if (l == 0) {
            break;
        }
        std::vector<double> next_delta(layer.in, 0.0);
        for (int u = 0; u < layer.out; ++u) {
            const double* row = layer.weights.data() + static_cast<size_t>(u) * layer.in;
            for (int v = 0; v < layer.in; ++v) {
                next_delta[v] += row[v] * delta[u];
            }
        }
        // tanh' = 1 - a^2, with a the activation already computed going forward.
        for (int v = 0; v < layer.in; ++v) {
            next_delta[v] *= 1.0 - below[v] * below[v];
        }
        delta = std::move(next_delta);
    }
    return loss;
}

void scale_params(ModelParams& params, double factor) {
    for (Layer& layer : params.layers) {
        for (double& w : layer.weights) {
            w *= factor;
        }
        for (double& b : layer.bias) {
            b *= factor;
        }
    }
}

void check_batch(const ModelParams& params, const LabeledDataset& batch) {
    if (batch.size() == 0) {
        throw DataError("empty batch");
    }
    if (batch.feature_dim != params.input_dim()) {
        throw ShapeError("batch feature dim does not match model input dim");
    }
    for (int label : batch.labels) {
        if (label < 0 || label >= params.num_classes()) {
            throw DataError("label " + std::to_string(label) +
                            " outside the model's " +
                            std::to_string(params.num_classes()) + " classes");
        }
    }
}

} // namespace

ClassDistribution forward(const ModelParams& params, std::span<const double> x) {
    auto acts = forward_pass(params, x);
    return {std::move(acts.back())};
}

LossGrad loss_and_grad(const ModelParams& params, const LabeledDataset& batch) {
    check_batch(params, batch);
    LossGrad result;
    result.grad = zero_like(params);
    for (int i = 0; i < batch.size(); ++i) {
        result.loss += accumulate_example(params, result.grad, batch.example(i),
                                          batch.labels[i]);
    }
    result.loss /= batch.size();
    scale_params(result.grad, 1.0 / batch.size());
    return result;
}

GradientSet class_conditional_grad(const ModelParams& params,
                                   const LabeledDataset& data, int class_i) {
    check_batch(params, data);
    GradientSet grad = zero_like(params);
    int count = 0;
    for (int i = 0; i < data.size(); ++i) {
        if (data.labels[i] != class_i) {
            continue;
        }
        accumulate_example(params, grad, data.example(i), data.labels[i]);
        ++count;
    }
    if (count == 0) {
        throw DataError("no examples of class " + std::to_string(class_i));
    }
    scale_params(grad, 1.0 / count);
    return grad;
}

std::pair<std::vector<GradientSet>, std::vector<bool>>
all_class_conditional_grads(const ModelParams& params, const LabeledDataset& data) {
    check_batch(params, data);
    int c = params.num_classes();
    std::vector<GradientSet> grads(c, zero_like(params));
    std::vector<int> counts(c, 0);
    for (int i = 0; i < data.size(); ++i) {
        int label = data.labels[i];
        accumulate_example(params, grads[label], data.example(i), label);
        counts[label] += 1;
    }
    std::vector<bool> present(c, false);
    for (int i = 0; i < c; ++i) {
        if (counts[i] > 0) {
            scale_params(grads[i], 1.0 / counts[i]);
            present[i] = true;
        }
    }
    return {std::move(grads), std::move(present)};
}

ModelParams sgd_step(const ModelParams& params, const GradientSet& grad, double eta) {
    if (eta <= 0.0) {
        throw ConfigError("learning rate must be positive", "fed.eta0");
    }
    ModelParams next = params;
    apply_sgd_step(next, grad, eta);
    return next;
}

void apply_sgd_step(ModelParams& params, const GradientSet& grad, double eta) {
    check_same_shape(params, grad);
    for (size_t l = 0; l < params.layers.size(); ++l) {
        Layer& layer = params.layers[l];
        const Layer& glayer = grad.layers[l];
        for (size_t i = 0; i < layer.weights.size(); ++i) {
            layer.weights[i] -= eta * glayer.weights[i];
        }
        for (size_t i = 0; i < layer.bias.size(); ++i) {
            layer.bias[i] -= eta * glayer.bias[i];
        }
    }
}

double evaluate(const ModelParams& params, const LabeledDataset& test) {
    check_batch(params, test);
    int correct = 0;
    for (int i = 0; i < test.size(); ++i) {
        ClassDistribution probs = forward(params, test.example(i));
        int best = 0;
        for (int c = 1; c < probs.size(); ++c) {
            if (probs.probs[c] > probs.probs[best]) {
                best = c;
            }
        }
        if (best == test.labels[i]) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / test.size();
}

std::vector<double> flatten(const ModelParams& params) {
    std::vector<double> flat;
    flat.reserve(params.parameter_count());
    for (const Layer& layer : params.layers) {
        flat.insert(flat.end(), layer.weights.begin(), layer.weights.end());
        flat.insert(flat.end(), layer.bias.begin(), layer.bias.end());
    }
    return flat;
}

ModelParams unflatten(const ModelParams& shape_like, std::span<const double> flat) {
    if (flat.size() != shape_like.parameter_count()) {
        throw ShapeError("flat vector has " + std::to_string(flat.size()) +
                         " entries, model has " +
                         std::to_string(shape_like.parameter_count()));
    }
    ModelParams params = shape_like;
    size_t pos = 0;
    for (Layer& layer : params.layers) {
        std::copy_n(flat.begin() + pos, layer.weights.size(), layer.weights.begin());
        pos += layer.weights.size();
        std::copy_n(flat.begin() + pos, layer.bias.size(), layer.bias.begin());
        pos += layer.bias.size();
    }
    return params;
}

void check_same_shape(const ModelParams& a, const ModelParams& b) {
    bool ok = a.layers.size() == b.layers.size();
    for (size_t l = 0; ok && l < a.layers.size(); ++l) {
        ok = a.layers[l].in == b.layers[l].in && a.layers[l].out == b.layers[l].out;
    }
    if (!ok) {
        throw ShapeError("parameter shapes do not match");
    }
}

double l2_norm(const ModelParams& params) {
    double sum = 0.0;
    for (const Layer& layer : params.layers) {
        for (double w : layer.weights) {
            sum += w * w;
        }
        for (double b : layer.bias) {
            sum += b * b;
        }
    }
    return std::sqrt(sum);
}

double l2_distance(const ModelParams& a, const ModelParams& b) {
    check_same_shape(a, b);
    double sum = 0.0;
    for (size_t l = 0; l < a.layers.size(); ++l) {
        const Layer& la = a.layers[l];
        const Layer& lb = b.layers[l];
        for (size_t i = 0; i < la.weights.size(); ++i) {
            double d = la.weights[i] - lb.weights[i];
            sum += d * d;
        }
        for (size_t i = 0; i < la.bias.size(); ++i) {
            double d = la.bias[i] - lb.bias[i];
            sum += d * d;
        }
    }
    return std::sqrt(sum);
}

} // namespace fedskew
