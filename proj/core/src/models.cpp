#include "landet/models.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace landet {

using nlohmann::ordered_json;

std::string role_name(ModelRole r) {
    switch (r) {
        case ModelRole::image_classifier_f1: return "image_classifier_f1";
        case ModelRole::transfer_classifier_f1p: return "transfer_classifier_f1p";
        case ModelRole::attention_net_g: return "attention_net_g";
        case ModelRole::mask_classifier_f2: return "mask_classifier_f2";
    }
    fail(Error::Kind::invalid_argument, "unknown role");
}

ModelRole role_from_name(const std::string& s) {
    if (s == "image_classifier_f1") return ModelRole::image_classifier_f1;
    if (s == "transfer_classifier_f1p") return ModelRole::transfer_classifier_f1p;
    if (s == "attention_net_g") return ModelRole::attention_net_g;
    if (s == "mask_classifier_f2") return ModelRole::mask_classifier_f2;
    fail(Error::Kind::format, "unknown role name: " + s);
}

int argmax_lowest(const std::vector<float>& v) {
    int best = 0;
    for (int i = 1; i < int(v.size()); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

namespace {

const char* layer_kind_name(LayerSpec::Kind k) {
    switch (k) {
        case LayerSpec::Kind::conv: return "conv";
        case LayerSpec::Kind::relu: return "relu";
        case LayerSpec::Kind::maxpool: return "maxpool";
        case LayerSpec::Kind::affine: return "affine";
        case LayerSpec::Kind::sigmoid: return "sigmoid";
        case LayerSpec::Kind::flatten: return "flatten";
        case LayerSpec::Kind::reshape_to_input: return "reshape_to_input";
    }
    fail(Error::Kind::invalid_argument, "unknown layer kind");
}

LayerSpec::Kind layer_kind_from_name(const std::string& s) {
    if (s == "conv") return LayerSpec::Kind::conv;
    if (s == "relu") return LayerSpec::Kind::relu;
    if (s == "maxpool") return LayerSpec::Kind::maxpool;
    if (s == "affine") return LayerSpec::Kind::affine;
    if (s == "sigmoid") return LayerSpec::Kind::sigmoid;
    if (s == "flatten") return LayerSpec::Kind::flatten;
    if (s == "reshape_to_input") return LayerSpec::Kind::reshape_to_input;
    fail(Error::Kind::format, "unknown layer kind: " + s);
}

LayerSpec conv(int out_c, int k, int pad) {
    LayerSpec s;
    s.kind = LayerSpec::Kind::conv;
    s.out_channels = out_c;
    s.kernel = k;
    s.stride = 1;
    s.padding = pad;
    return s;
}

LayerSpec pool2() {
    LayerSpec s;
    s.kind = LayerSpec::Kind::maxpool;
    s.window = 2;
    s.stride = 2;
    return s;
}

LayerSpec affine(int out) {
    LayerSpec s;
    s.kind = LayerSpec::Kind::affine;
    s.out_features = out;
    return s;
}

LayerSpec simple(LayerSpec::Kind k) {
    LayerSpec s;
    s.kind = k;
    return s;
}

std::vector<LayerSpec> layers_for(ModelRole role, const std::vector<int>& dims, int l) {
    switch (role) {
        case ModelRole::image_classifier_f1:
            return {conv(16, 3, 1), simple(LayerSpec::Kind::relu), pool2(),
                    conv(32, 3, 1), simple(LayerSpec::Kind::relu), pool2(),
                    simple(LayerSpec::Kind::flatten),
                    affine(128),    simple(LayerSpec::Kind::relu), affine(l)};
        case ModelRole::transfer_classifier_f1p:
            // doubled widths plus one extra conv block
            return {conv(32, 3, 1), simple(LayerSpec::Kind::relu), pool2(),
                    conv(64, 3, 1), simple(LayerSpec::Kind::relu), pool2(),
                    conv(64, 3, 1), simple(LayerSpec::Kind::relu), pool2(),
                    simple(LayerSpec::Kind::flatten),
                    affine(128),    simple(LayerSpec::Kind::relu), affine(l)};
        case ModelRole::attention_net_g:
            // Fully convolutional: translation equivariance lets the mask
            // track localized evidence wherever it sits in the frame, and a
            // constant mask is representable only through the biases.
            return {conv(16, 3, 1),      simple(LayerSpec::Kind::relu),
                    conv(16, 3, 1),      simple(LayerSpec::Kind::relu),
                    conv(dims[0], 3, 1), simple(LayerSpec::Kind::sigmoid)};
        case ModelRole::mask_classifier_f2:
            return {conv(6, 5, 2),  pool2(),
                    conv(16, 5, 2), pool2(),
                    simple(LayerSpec::Kind::flatten),
                    affine(120),    simple(LayerSpec::Kind::relu),
                    affine(84),     simple(LayerSpec::Kind::relu),
                    affine(l)};
    }
    fail(Error::Kind::invalid_argument, "unknown role");
}

// Walks the layer stack tracking the activation shape, invoking `visit`
// for each parameterized layer with its inferred weight shapes.
template <typename Visit>
std::vector<int> trace_shapes(const std::vector<LayerSpec>& layers,
                              const std::vector<int>& input_dims, Visit&& visit) {
    std::vector<int> cur = input_dims;
    for (const LayerSpec& s : layers) {
        switch (s.kind) {
            case LayerSpec::Kind::conv: {
                if (cur.size() != 3)
                    fail(Error::Kind::invalid_argument, "conv on non [C,H,W] activation");
                const int Ho = (cur[1] + 2 * s.padding - s.kernel) / s.stride + 1;
                const int Wo = (cur[2] + 2 * s.padding - s.kernel) / s.stride + 1;
                if (Ho < 1 || Wo < 1)
                    fail(Error::Kind::invalid_argument, "conv shrinks activation to nothing");
                visit(std::vector<int>{s.out_channels, cur[0], s.kernel, s.kernel},
                      std::vector<int>{s.out_channels},
                      cur[0] * s.kernel * s.kernel);
                cur = {s.out_channels, Ho, Wo};
                break;
            }
            case LayerSpec::Kind::maxpool: {
                if (cur.size() != 3)
                    fail(Error::Kind::invalid_argument, "maxpool on non [C,H,W] activation");
                if ((cur[1] - s.window) % s.stride != 0 || (cur[2] - s.window) % s.stride != 0)
                    fail(Error::Kind::invalid_argument, "maxpool geometry does not tile");
                cur = {cur[0], (cur[1] - s.window) / s.stride + 1,
                       (cur[2] - s.window) / s.stride + 1};
                break;
            }
            case LayerSpec::Kind::affine: {
                if (cur.size() != 1)
                    fail(Error::Kind::invalid_argument, "affine needs flattened activation");
                visit(std::vector<int>{s.out_features, cur[0]},
                      std::vector<int>{s.out_features}, cur[0]);
                cur = {s.out_features};
                break;
            }
            case LayerSpec::Kind::flatten: {
                int n = 1;
                for (int dd : cur) n *= dd;
                cur = {n};
                break;
            }
            case LayerSpec::Kind::reshape_to_input: {
                int n = 1;
                for (int dd : cur) n *= dd;
                if (n != input_dims[0] * input_dims[1] * input_dims[2])
                    fail(Error::Kind::shape_mismatch, "reshape_to_input numel mismatch");
                cur = input_dims;
                break;
            }
            case LayerSpec::Kind::relu:
            case LayerSpec::Kind::sigmoid:
                break;
        }
    }
    return cur;
}

}  // namespace

Model build_model(ModelRole role, const std::vector<int>& input_dims,
                  int class_count, uint64_t seed) {
    if (input_dims.size() != 3 || class_count < 2)
        fail(Error::Kind::invalid_argument, "build_model: need [C,H,W] dims and >= 2 classes");
    for (int d : input_dims)
        if (d < 1) fail(Error::Kind::invalid_argument, "build_model: bad dims");

    Model m;
    m.role = role;
    m.input_dims = input_dims;
    m.class_count = class_count;
    m.seed = seed;
    m.layers = layers_for(role, input_dims, class_count);

    Rng rng(seed);
    trace_shapes(m.layers, input_dims,
                 [&](const std::vector<int>& w_shape, const std::vector<int>& b_shape,
                     int fan_in) {
                     Tensor w(w_shape);
                     const float limit = std::sqrt(6.0f / float(fan_in));
                     for (float& v : w.data) v = rng.uniform(-limit, limit);
                     m.params.push_back(std::move(w));
                     m.params.emplace_back(b_shape, 0.0f);
                 });
    return m;
}

ForwardBinding bind_forward(Graph& g, const Model& m, int input_node) {
    if (g.value(input_node).shape != m.input_dims)
        fail(Error::Kind::shape_mismatch, "bind_forward: input shape mismatch for role " +
                                              role_name(m.role));
    ForwardBinding fb;
    fb.input_node = input_node;
    int cur = input_node;
    size_t pi = 0;
    for (const LayerSpec& s : m.layers) {
        switch (s.kind) {
            case LayerSpec::Kind::conv: {
                const int w = g.leaf(m.params[pi]);
                const int b = g.leaf(m.params[pi + 1]);
                fb.param_nodes.push_back(w);
                fb.param_nodes.push_back(b);
                pi += 2;
                cur = g.conv2d(cur, w, b, s.stride, s.padding);
                break;
            }
            case LayerSpec::Kind::affine: {
                const int w = g.leaf(m.params[pi]);
                const int b = g.leaf(m.params[pi + 1]);
                fb.param_nodes.push_back(w);
                fb.param_nodes.push_back(b);
                pi += 2;
                cur = g.affine(cur, w, b);
                break;
            }
            case LayerSpec::Kind::relu:
                cur = g.relu(cur);
                break;
            case LayerSpec::Kind::maxpool:
                cur = g.maxpool(cur, s.window, s.stride);
                break;
            case LayerSpec::Kind::sigmoid:
                cur = g.sigmoid(cur);
                break;
            case LayerSpec::Kind::flatten:
                cur = g.reshape(cur, {int(g.value(cur).size())});
                break;
            case LayerSpec::Kind::reshape_to_input:
                cur = g.reshape(cur, m.input_dims);
                break;
        }
    }
    fb.output_node = cur;
    return fb;
}

Prediction model_predict(const Model& m, const Tensor& input) {
    Graph g;
    const ForwardBinding fb = bind_forward(g, m, g.leaf(input));
    Prediction p;
    p.logits = g.value(fb.output_node);
    p.label = argmax_lowest(p.logits.data);
    return p;
}

namespace {

constexpr char kMagic[8] = {'L', 'A', 'N', 'D', 'E', 'T', '0', '1'};
constexpr uint32_t kCheckpointVersion = 1;

ordered_json layer_to_json(const LayerSpec& s) {
    ordered_json j;
    j["kind"] = layer_kind_name(s.kind);
    switch (s.kind) {
        case LayerSpec::Kind::conv:
            j["out_channels"] = s.out_channels;
            j["kernel"] = s.kernel;
            j["stride"] = s.stride;
            j["padding"] = s.padding;
            break;
        case LayerSpec::Kind::maxpool:
            j["window"] = s.window;
            j["stride"] = s.stride;
            break;
        case LayerSpec::Kind::affine:
            j["out_features"] = s.out_features;
            break;
        default:
            break;
    }
    return j;
}

LayerSpec layer_from_json(const ordered_json& j) {
    LayerSpec s;
    s.kind = layer_kind_from_name(j.at("kind").get<std::string>());
    switch (s.kind) {
        case LayerSpec::Kind::conv:
            s.out_channels = j.at("out_channels").get<int>();
            s.kernel = j.at("kernel").get<int>();
            s.stride = j.at("stride").get<int>();
            s.padding = j.at("padding").get<int>();
            break;
        case LayerSpec::Kind::maxpool:
            s.window = j.at("window").get<int>();
            s.stride = j.at("stride").get<int>();
            break;
        case LayerSpec::Kind::affine:
            s.out_features = j.at("out_features").get<int>();
            break;
        default:
            break;
    }
    return s;
}

}  // namespace

void checkpoint_save(const Model& m, const std::string& path) {
    ordered_json header;
    header["version"] = kCheckpointVersion;
    header["role"] = role_name(m.role);
    header["input_dims"] = m.input_dims;
    header["class_count"] = m.class_count;
    header["seed"] = m.seed;
    header["epochs_trained"] = m.epochs_trained;
    ordered_json layers = ordered_json::array();
    for (const LayerSpec& s : m.layers) layers.push_back(layer_to_json(s));
    header["layers"] = std::move(layers);
    ordered_json shapes = ordered_json::array();
    for (const Tensor& t : m.params) shapes.push_back(t.shape);
    header["param_shapes"] = std::move(shapes);

    const std::string hs = header.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Error::Kind::io, "cannot open for write: " + path);
    out.write(kMagic, 8);
    const uint32_t len = uint32_t(hs.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(hs.data(), std::streamsize(hs.size()));
    for (const Tensor& t : m.params)
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  std::streamsize(t.data.size() * sizeof(float)));
    if (!out) fail(Error::Kind::io, "write failed: " + path);
}

Model checkpoint_load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Error::Kind::io, "cannot open for read: " + path);

    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0)
        fail(Error::Kind::bad_magic, "bad magic in " + path);

    uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 4);
    if (in.gcount() != 4) fail(Error::Kind::truncated, "truncated header length in " + path);
    std::string hs(len, '\0');
    in.read(hs.data(), std::streamsize(len));
    if (size_t(in.gcount()) != len)
        fail(Error::Kind::truncated, "truncated header in " + path);

    ordered_json header;
    try {
        header = ordered_json::parse(hs);
    } catch (const std::exception& e) {
        fail(Error::Kind::format, std::string("bad checkpoint header: ") + e.what());
    }
    if (header.at("version").get<uint32_t>() != kCheckpointVersion)
        fail(Error::Kind::version_mismatch, "unsupported checkpoint version in " + path);

    Model m;
    m.role = role_from_name(header.at("role").get<std::string>());
    m.input_dims = header.at("input_dims").get<std::vector<int>>();
    m.class_count = header.at("class_count").get<int>();
    m.seed = header.at("seed").get<uint64_t>();
    m.epochs_trained = header.at("epochs_trained").get<int>();
    for (const auto& lj : header.at("layers")) m.layers.push_back(layer_from_json(lj));

    // Cross-check declared shapes against the architecture before reading blobs.
    std::vector<std::vector<int>> expect;
    trace_shapes(m.layers, m.input_dims,
                 [&](const std::vector<int>& w, const std::vector<int>& b, int) {
                     expect.push_back(w);
                     expect.push_back(b);
                 });
    const auto declared = header.at("param_shapes").get<std::vector<std::vector<int>>>();
    if (declared != expect)
        fail(Error::Kind::shape_mismatch, "checkpoint param shapes disagree with layers");

    for (const auto& shape : declared) {
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data.data()),
                std::streamsize(t.data.size() * sizeof(float)));
        if (size_t(in.gcount()) != t.data.size() * sizeof(float))
            fail(Error::Kind::truncated, "truncated parameter blob in " + path);
        m.params.push_back(std::move(t));
    }
    return m;
}

}  // namespace landet
