#pragma once

#include <string>
#include <vector>

#include "landet/tensor.hpp"

namespace landet {

enum class ModelRole {
    image_classifier_f1,
    transfer_classifier_f1p,
    attention_net_g,
    mask_classifier_f2,
};

std::string role_name(ModelRole r);
ModelRole role_from_name(const std::string& s);

// One entry per layer; params_per_layer: conv/affine own two tensors
// (weights, bias), the rest own none.
struct LayerSpec {
    enum class Kind { conv, relu, maxpool, affine, sigmoid, flatten, reshape_to_input };
    Kind kind;
    int out_channels = 0;  // conv
    int kernel = 0;        // conv
    int stride = 1;        // conv, maxpool
    int padding = 0;       // conv
    int window = 0;        // maxpool
    int out_features = 0;  // affine
};

struct Model {
    ModelRole role;
    std::vector<int> input_dims;  // [C,H,W]
    int class_count = 0;
    uint64_t seed = 0;
    int epochs_trained = 0;
    std::vector<LayerSpec> layers;
    std::vector<Tensor> params;  // weights/bias pairs in layer order
};

// Node ids of one forward pass; param_nodes aligns with model.params.
struct ForwardBinding {
    std::vector<int> param_nodes;
    int input_node = -1;
    int output_node = -1;
};

// Deterministic construction: He-uniform weights, zero biases.
Model build_model(ModelRole role, const std::vector<int>& input_dims,
                  int class_count, uint64_t seed);

// Runs the model's layers over an existing input node.
ForwardBinding bind_forward(Graph& g, const Model& m, int input_node);

struct Prediction {
    int label = 0;
    Tensor logits;
};

// argmax of the forward pass; ties break to the lowest index.
Prediction model_predict(const Model& m, const Tensor& input);

// Checkpoint file: "LANDET01" magic, u32-LE length-prefixed JSON header,
// then raw little-endian float32 parameter blobs in header order.
void checkpoint_save(const Model& m, const std::string& path);
Model checkpoint_load(const std::string& path);

int argmax_lowest(const std::vector<float>& v);

}  // namespace landet
