#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "prunekit/dataset.hpp"
#include "prunekit/model.hpp"

namespace prunekit {

// Per-sample norms of a layer's input and of its bias-free, pre-activation
// linear response.
struct NormPair {
    double input_norm = 0.0;
    double output_norm = 0.0;
};

// layer id -> one entry per sample, in dataset order.
using CaptureTrace = std::map<std::string, std::vector<NormPair>>;

struct ForwardOutput {
    Tensor logits;  // (batch, num_classes); softmax applied when the last layer has it
    CaptureTrace trace;
};

ForwardOutput forward(const ModelGraph& g, const Dataset& batch, const std::set<std::string>& capture = {});

// Fraction of samples whose argmax output equals the label; ties go to the
// lowest class index.
double evaluate(const ModelGraph& g, const Dataset& d);

// Mean batch loss above this aborts training as divergent.
inline constexpr double kDivergenceLoss = 1e4;

struct TrainConfig {
    std::size_t epochs = 1;
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
};

void validate(const TrainConfig& cfg, const Dataset& d);

// Keep-mask per layer id, aligned with the flat kernel (1 = keep, 0 = pruned).
using KeepMasks = std::map<std::string, std::vector<std::uint8_t>>;

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

// Minibatch SGD with momentum on softmax cross-entropy. The batch order is a
// seeded permutation redrawn every epoch; batch gradients are reduced over
// fixed-size shards in shard order, so results do not depend on worker count.
ModelGraph train(const ModelGraph& g, const Dataset& d, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// As train, but masked-out kernel entries are zeroed up front and their
// gradients are forced to zero on every step.
ModelGraph finetune(const ModelGraph& g, const KeepMasks& masks, const Dataset& d, const TrainConfig& cfg,
                    const EpochCallback& on_epoch = {});

struct Gradients {
    double loss = 0.0;  // mean cross-entropy over the batch
    std::map<std::string, LayerWeights> per_layer;
};

Gradients loss_and_gradients(const ModelGraph& g, const Dataset& batch);

// Glorot-uniform kernels, zero biases.
void initialize_weights(ModelGraph& g, std::uint64_t seed);

}  // namespace prunekit
