#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedskew/dataset.hpp"

namespace fedskew {

/// One dense layer: weights are out x in, row-major.
struct Layer {
    int in = 0;
    int out = 0;
    std::vector<double> weights;
    std::vector<double> bias;
};

/// Weights of the dense feed-forward classifier. Hidden layers apply tanh;
/// the final layer feeds a softmax over the classes.
struct ModelParams {
    std::vector<Layer> layers;

    int input_dim() const { return layers.front().in; }
    int num_classes() const { return layers.back().out; }
    std::vector<int> layer_dims() const;
    size_t parameter_count() const;
};

/// Same shape as the params it was computed from; holds d(loss)/d(params).
using GradientSet = ModelParams;

/// Deterministic Gaussian init: weight std = scale / sqrt(fan_in), biases zero.
ModelParams init_params(const std::vector<int>& layer_dims, uint64_t seed,
                        double scale = 1.0);

/// Class probabilities for one input. Softmax is computed with
/// max-subtraction, so outputs stay finite for any logits.
ClassDistribution forward(const ModelParams& params, std::span<const double> x);

struct LossGrad {
    double loss = 0.0;
    GradientSet grad;
};

/// Mean negative log-likelihood over the batch and its exact gradient.
LossGrad loss_and_grad(const ModelParams& params, const LabeledDataset& batch);

/// Gradient of the mean per-example loss restricted to examples of one class.
GradientSet class_conditional_grad(const ModelParams& params,
                                   const LabeledDataset& data, int class_i);

/// Mean per-class gradients for every class in one pass over the data.
/// Classes absent from the data get an empty marker (all-zero gradient and
/// a false flag in the second member).
std::pair<std::vector<GradientSet>, std::vector<bool>>
all_class_conditional_grads(const ModelParams& params, const LabeledDataset& data);

/// params - eta * grad, element-wise.
ModelParams sgd_step(const ModelParams& params, const GradientSet& grad, double eta);

/// In-place variant used by the training loops.
void apply_sgd_step(ModelParams& params, const GradientSet& grad, double eta);

/// Fraction of test examples whose argmax prediction matches the label.
/// Ties break toward the lowest class index.
double evaluate(const ModelParams& params, const LabeledDataset& test);

std::vector<double> flatten(const ModelParams& params);
ModelParams unflatten(const ModelParams& shape_like, std::span<const double> flat);

void check_same_shape(const ModelParams& a, const ModelParams& b);

double l2_norm(const ModelParams& params);
double l2_distance(const ModelParams& a, const ModelParams& b);

} // namespace fedskew
