#pragma once

#include <string>
#include <vector>

#include "landet/datasets.hpp"
#include "landet/models.hpp"
#include "landet/tensor.hpp"

namespace landet {

enum class OptimizerKind { sgd_momentum, adam };
enum class NoiseKind { uniform01, gaussian_fit };

struct TrainConfig {
    int epochs = 10;
    int batch_size = 32;
    float learning_rate = 0.01f;
    OptimizerKind optimizer = OptimizerKind::adam;
    uint64_t seed = 1;
    // LAN-specific
    float sparsity_weight = 0.1f;  // lambda
    NoiseKind noise = NoiseKind::uniform01;
    // per-pixel +/- jitter applied to the attention net's input during
    // training; makes the learned masks stable under bounded perturbations
    float input_jitter = 0.0f;

    void validate() const;
};

struct TrainReport {
    std::vector<double> epoch_mean_loss;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    double wall_clock_seconds = 0.0;  // not serialized; reports stay seed-deterministic

    std::string to_json(const TrainConfig& config) const;
};

// Per-parameter optimizer state (momentum or Adam moments).
struct OptState {
    OptimizerKind kind = OptimizerKind::adam;
    std::vector<std::vector<float>> m;  // momentum / first moment
    std::vector<std::vector<float>> v;  // second moment (adam)
    long step = 0;

    static OptState init(const std::vector<Tensor>& params, OptimizerKind kind);
};

// SGD-momentum (mu = 0.9) or Adam (b1=0.9, b2=0.999, eps=1e-8, bias
// corrected). grads must align with params elementwise.
void optimizer_step(std::vector<Tensor>& params,
                    const std::vector<std::vector<float>>& grads, OptState& state,
                    const TrainConfig& config);

// Minibatch cross-entropy training, deterministic given config.seed.
TrainReport train_classifier(Model& model, const Dataset& train, const Dataset& test,
                             const TrainConfig& config);

// x_tilde = m * x + (1 - m) * eta, eta i.i.d. noise per the config's law.
Tensor corrupt_with_mask(const Tensor& x, const Tensor& mask, Rng& rng,
                         NoiseKind noise = NoiseKind::uniform01,
                         const Tensor* noise_mean = nullptr,
                         const Tensor* noise_std = nullptr);

// Trains g to keep the frozen classifier's prediction stable under
// mask-guided corruption while penalizing dense masks:
//   E[ CE(f(x_tilde), argmax f(x)) ] + lambda * mean(m),  m = g(x).
TrainReport train_lan(Model& g, const Model& frozen_classifier, const Dataset& train,
                      const TrainConfig& config);

// One mask per image via g, labels carried over.
Dataset build_mask_dataset(const Model& g, const Dataset& dataset);

// As above plus one extra mask per image computed from a jittered copy
// (random signs or the gradient-sign direction against `frozen`, both within
// the given l-inf budget); labels stay the clean labels. Teaches the mask
// classifier to read masks of perturbed inputs.
Dataset build_mask_dataset_augmented(const Model& g, const Model& frozen,
                                     const Dataset& dataset, float jitter,
                                     uint64_t seed);

double dataset_accuracy(const Model& model, const Dataset& ds);

}  // namespace landet
