#include "landet/training.hpp"

#include <algorithm>

#include "landet/attacks.hpp"
#include "landet/detector.hpp"
#include <chrono>
#include <cmath>
#include <numeric>

#include <json.hpp>

namespace landet {

using nlohmann::ordered_json;

void TrainConfig::validate() const {
    if (epochs < 0) fail(Error::Kind::invalid_argument, "epochs < 0");
    if (batch_size < 1) fail(Error::Kind::invalid_argument, "batch_size < 1");
    if (learning_rate <= 0.0f) fail(Error::Kind::invalid_argument, "learning_rate <= 0");
    if (sparsity_weight < 0.0f) fail(Error::Kind::invalid_argument, "sparsity_weight < 0");
    if (input_jitter < 0.0f) fail(Error::Kind::invalid_argument, "input_jitter < 0");
}

std::string TrainReport::to_json(const TrainConfig& config) const {
    ordered_json j;
    j["epoch_mean_loss"] = epoch_mean_loss;
    j["train_accuracy"] = train_accuracy;
    j["test_accuracy"] = test_accuracy;
    j["seed"] = config.seed;
    ordered_json c;
    c["epochs"] = config.epochs;
    c["batch_size"] = config.batch_size;
    c["learning_rate"] = config.learning_rate;
    c["optimizer"] = config.optimizer == OptimizerKind::adam ? "adam" : "sgd_momentum";
    c["sparsity_weight"] = config.sparsity_weight;
    c["noise"] = config.noise == NoiseKind::uniform01 ? "uniform01" : "gaussian_fit";
    c["input_jitter"] = config.input_jitter;
    j["config"] = std::move(c);
    return j.dump(2);
}

OptState OptState::init(const std::vector<Tensor>& params, OptimizerKind kind) {
    OptState s;
    s.kind = kind;
    for (const Tensor& p : params) {
        s.m.emplace_back(p.size(), 0.0f);
        if (kind == OptimizerKind::adam) s.v.emplace_back(p.size(), 0.0f);
    }
    return s;
}

void optimizer_step(std::vector<Tensor>& params,
                    const std::vector<std::vector<float>>& grads, OptState& state,
                    const TrainConfig& config) {
    if (grads.size() != params.size())
        fail(Error::Kind::shape_mismatch, "optimizer_step: grads/params count mismatch");
    for (size_t p = 0; p < params.size(); ++p) {
        if (grads[p].size() != params[p].size())
            fail(Error::Kind::shape_mismatch, "optimizer_step: grad shape mismatch");
        for (float g : grads[p])
            if (!std::isfinite(g)) fail(Error::Kind::numeric, "NaN gradient");
    }

    state.step += 1;
    const float lr = config.learning_rate;
    if (state.kind == OptimizerKind::sgd_momentum) {
        constexpr float mu = 0.9f;
        for (size_t p = 0; p < params.size(); ++p) {
            for (size_t i = 0; i < params[p].size(); ++i) {
                state.m[p][i] = mu * state.m[p][i] - lr * grads[p][i];
                params[p].data[i] += state.m[p][i];
            }
        }
    } else {
        constexpr float b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;
        const float bc =
            lr * std::sqrt(1.0f - std::pow(b2, float(state.step))) /
            (1.0f - std::pow(b1, float(state.step)));
        for (size_t p = 0; p < params.size(); ++p) {
            for (size_t i = 0; i < params[p].size(); ++i) {
                const float g = grads[p][i];
                state.m[p][i] = b1 * state.m[p][i] + (1.0f - b1) * g;
                state.v[p][i] = b2 * state.v[p][i] + (1.0f - b2) * g * g;
                params[p].data[i] -= bc * state.m[p][i] / (std::sqrt(state.v[p][i]) + eps);
            }
        }
    }
}

double dataset_accuracy(const Model& model, const Dataset& ds) {
    if (ds.items.empty()) return 0.0;
    size_t correct = 0;
    for (const LabeledImage& li : ds.items)
        if (model_predict(model, li.image).label == li.label) ++correct;
    return double(correct) / double(ds.size());
}

namespace {

// Deterministic serial accumulation of one batch of gradients.
struct GradAccum {
    std::vector<std::vector<float>> g;

    explicit GradAccum(const std::vector<Tensor>& params) {
        for (const Tensor& p : params) g.emplace_back(p.size(), 0.0f);
    }
    void add(const Graph& graph, const std::vector<int>& param_nodes) {
        for (size_t p = 0; p < g.size(); ++p) {
            const Tensor& pg = graph.grad(param_nodes[p]);
            if (pg.data.empty()) continue;
            for (size_t i = 0; i < g[p].size(); ++i) g[p][i] += pg.data[i];
        }
    }
    void scale(float s) {
        for (auto& v : g)
            for (float& x : v) x *= s;
    }
};

}  // namespace

TrainReport train_classifier(Model& model, const Dataset& train, const Dataset& test,
                             const TrainConfig& config) {
    config.validate();
    if (train.items.empty()) fail(Error::Kind::empty_result, "empty training set");

    const auto t0 = std::chrono::steady_clock::now();
    TrainReport report;
    OptState opt = OptState::init(model.params, config.optimizer);
    Rng rng(config.seed);

    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), size_t(0));

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        for (size_t start = 0; start < order.size(); start += size_t(config.batch_size)) {
            const size_t end = std::min(order.size(), start + size_t(config.batch_size));
            GradAccum acc(model.params);
            for (size_t k = start; k < end; ++k) {
                const LabeledImage& li = train.items[order[k]];
                Graph g;
                const ForwardBinding fb = bind_forward(g, model, g.leaf(li.image));
                const int loss = g.softmax_ce(fb.output_node, li.label);
                g.backward(loss);
                loss_sum += g.value(loss).data[0];
                acc.add(g, fb.param_nodes);
            }
            acc.scale(1.0f / float(end - start));
            optimizer_step(model.params, acc.g, opt, config);
        }
        const double mean_loss = loss_sum / double(train.size());
        if (!std::isfinite(mean_loss)) fail(Error::Kind::numeric, "training diverged");
        report.epoch_mean_loss.push_back(mean_loss);
    }

    model.epochs_trained += config.epochs;
    report.train_accuracy = dataset_accuracy(model, train);
    report.test_accuracy = dataset_accuracy(model, test);
    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

Tensor corrupt_with_mask(const Tensor& x, const Tensor& mask, Rng& rng, NoiseKind noise,
                         const Tensor* noise_mean, const Tensor* noise_std) {
    if (!x.same_shape(mask))
        fail(Error::Kind::shape_mismatch, "corrupt_with_mask: shape mismatch");
    for (float v : mask.data)
        if (v < 0.0f || v > 1.0f)
            fail(Error::Kind::invalid_argument, "corrupt_with_mask: mask outside [0,1]");

    Tensor out(x.shape);
    for (size_t i = 0; i < x.size(); ++i) {
        float eta;
        if (noise == NoiseKind::uniform01) {
            eta = rng.uniform();
        } else {
            const float mu = noise_mean ? noise_mean->data[i] : 0.5f;
            const float sd = noise_std ? noise_std->data[i] : 0.25f;
            eta = std::clamp(mu + sd * rng.normal(), 0.0f, 1.0f);
        }
        out.data[i] = mask.data[i] * x.data[i] + (1.0f - mask.data[i]) * eta;
    }
    return out;
}

TrainReport train_lan(Model& g_model, const Model& frozen, const Dataset& train,
                      const TrainConfig& config) {
    config.validate();
    if (train.items.empty()) fail(Error::Kind::empty_result, "empty training set");
    if (g_model.role != ModelRole::attention_net_g)
        fail(Error::Kind::invalid_argument, "train_lan: model is not the attention net");
    if (frozen.epochs_trained == 0)
        fail(Error::Kind::invalid_argument, "train_lan: frozen classifier is untrained");

    const auto t0 = std::chrono::steady_clock::now();
    TrainReport report;
    OptState opt = OptState::init(g_model.params, config.optimizer);
    Rng rng(config.seed);

    // per-pixel moments for the gaussian_fit noise law
    Tensor noise_mean, noise_std;
    if (config.noise == NoiseKind::gaussian_fit) {
        noise_mean = Tensor(train.dims, 0.0f);
        noise_std = Tensor(train.dims, 0.0f);
        for (const LabeledImage& li : train.items)
            for (size_t i = 0; i < li.image.size(); ++i)
                noise_mean.data[i] += li.image.data[i];
        for (float& v : noise_mean.data) v /= float(train.size());
        for (const LabeledImage& li : train.items)
            for (size_t i = 0; i < li.image.size(); ++i) {
                const float d = li.image.data[i] - noise_mean.data[i];
                noise_std.data[i] += d * d;
            }
        for (float& v : noise_std.data) v = std::sqrt(v / float(train.size()));
    }

    // frozen classifier's clean predictions are the fidelity targets
    std::vector<int> f_label(train.size());
    for (size_t i = 0; i < train.size(); ++i)
        f_label[i] = model_predict(frozen, train.items[i].image).label;

    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), size_t(0));

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        for (size_t start = 0; start < order.size(); start += size_t(config.batch_size)) {
            const size_t end = std::min(order.size(), start + size_t(config.batch_size));
            GradAccum acc(g_model.params);
            for (size_t k = start; k < end; ++k) {
                const LabeledImage& li = train.items[order[k]];

                // jitter matching a bounded l-inf threat model, so the mask
                // stays stable under full-image perturbations; alternates
                // random signs with the gradient-sign direction against the
                // frozen classifier, which random noise does not cover
                Tensor xin = li.image;
                if (config.input_jitter > 0.0f) {
                    const float pick = rng.uniform();
                    if (pick < 0.5f) {
                        for (float& v : xin.data)
                            v = std::clamp(v + (rng.uniform() < 0.5f ? -1.0f : 1.0f) *
                                                   config.input_jitter,
                                           0.0f, 1.0f);
                    } else if (pick < 0.75f) {
                        // a mild dose of the gradient-sign direction against
                        // the frozen classifier; random scale keeps enough
                        // clean structure for the mask objective to latch on
                        xin = fgsm(frozen, li.image, f_label[order[k]],
                                   config.input_jitter * rng.uniform())
                                  .perturbed;
                    }
                }

                // one noise draw per image per step
                Tensor eta(li.image.shape);
                for (size_t i = 0; i < eta.size(); ++i) {
                    if (config.noise == NoiseKind::uniform01) {
                        eta.data[i] = rng.uniform();
                    } else {
                        eta.data[i] = std::clamp(
                            noise_mean.data[i] + noise_std.data[i] * rng.normal(), 0.0f,
                            1.0f);
                    }
                }

                Graph g;
                const ForwardBinding gb = bind_forward(g, g_model, g.leaf(xin));
                const int corrupted = g.mask_corrupt(gb.output_node, xin, eta);
                const ForwardBinding fbind = bind_forward(g, frozen, corrupted);
                const int fidelity = g.softmax_ce(fbind.output_node, f_label[order[k]]);
                const int sparsity = g.mean(gb.output_node);
                const int loss = g.add_scaled(fidelity, sparsity, config.sparsity_weight);
                g.backward(loss);
                loss_sum += g.value(loss).data[0];
                acc.add(g, gb.param_nodes);  // only g's parameters update
            }
            acc.scale(1.0f / float(end - start));
            optimizer_step(g_model.params, acc.g, opt, config);
        }
        const double mean_loss = loss_sum / double(train.size());
        if (!std::isfinite(mean_loss)) fail(Error::Kind::numeric, "LAN training diverged");
        report.epoch_mean_loss.push_back(mean_loss);
    }

    g_model.epochs_trained += config.epochs;
    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

namespace {

LabeledImage mask_item(const Model& g, const Tensor& image, int label,
                       const std::string& source_id) {
    LabeledImage m;
    m.image = generate_mask(g, image);  // peak-normalized, same as detection
    m.label = label;
    m.source_id = source_id;
    return m;
}

}  // namespace

Dataset build_mask_dataset(const Model& g, const Dataset& dataset) {
    Dataset out;
    out.class_count = dataset.class_count;
    out.dims = dataset.dims;
    for (const LabeledImage& li : dataset.items)
        out.items.push_back(mask_item(g, li.image, li.label, li.source_id + "/mask"));
    return out;
}

Dataset build_mask_dataset_augmented(const Model& g, const Model& frozen,
                                     const Dataset& dataset, float jitter,
                                     uint64_t seed) {
    Dataset out = build_mask_dataset(g, dataset);
    if (jitter <= 0.0f) return out;
    // one extra mask per image, computed from a perturbed copy: the
    // gradient-sign direction against the frozen classifier is what shifts
    // masks in practice, so the mask classifier learns to read those too
    Rng rng(seed);
    for (const LabeledImage& li : dataset.items) {
        Tensor xp;
        const float pick = rng.uniform();
        if (pick < 0.4f) {
            xp = li.image;
            for (float& v : xp.data)
                v = std::clamp(
                    v + (rng.uniform() < 0.5f ? -1.0f : 1.0f) * jitter, 0.0f, 1.0f);
        } else if (pick < 0.8f) {
            xp = fgsm(frozen, li.image, li.label, jitter * rng.uniform(0.5f, 1.0f))
                     .perturbed;
        } else {
            // saturate a few random pixels, the footprint a saliency-guided
            // pixel attack leaves behind
            xp = li.image;
            const size_t dots = 1 + size_t(rng.uniform() * 0.05f * float(xp.size()));
            for (size_t k = 0; k < dots; ++k)
                xp.data[size_t(rng.uniform() * float(xp.size())) % xp.size()] = 1.0f;
        }
        out.items.push_back(mask_item(g, xp, li.label, li.source_id + "/mask_jit"));
    }
    return out;
}

}  // namespace landet
