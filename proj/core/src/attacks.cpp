#include "landet/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace landet {

using nlohmann::ordered_json;

std::string attack_name(AttackKind k) {
    switch (k) {
        case AttackKind::fgsm: return "fgsm";
        case AttackKind::jsma: return "jsma";
        case AttackKind::cw_l2: return "cw_l2";
    }
    fail(Error::Kind::invalid_argument, "unknown attack kind");
}

AttackKind attack_from_name(const std::string& s) {
    if (s == "fgsm") return AttackKind::fgsm;
    if (s == "jsma") return AttackKind::jsma;
    if (s == "cw_l2") return AttackKind::cw_l2;
    fail(Error::Kind::format, "unknown attack name: " + s);
}

void AttackConfig::validate() const {
    if (fgsm_epsilon < 0.0f) fail(Error::Kind::invalid_argument, "fgsm epsilon < 0");
    if (jsma_theta <= 0.0f || jsma_theta > 1.0f)
        fail(Error::Kind::invalid_argument, "jsma theta outside (0,1]");
    if (jsma_gamma < 0.0f || jsma_gamma > 1.0f)
        fail(Error::Kind::invalid_argument, "jsma gamma outside [0,1]");
    if (cw_c_start <= 0.0f) fail(Error::Kind::invalid_argument, "cw c <= 0");
    if (cw_binary_steps < 1 || cw_iterations < 1)
        fail(Error::Kind::invalid_argument, "cw steps/iterations < 1");
    if (cw_step <= 0.0f || cw_kappa < 0.0f)
        fail(Error::Kind::invalid_argument, "cw step <= 0 or kappa < 0");
}

float l2_distance(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = double(a.data[i]) - double(b.data[i]);
        acc += d * d;
    }
    return float(std::sqrt(acc));
}

float linf_distance(const Tensor& a, const Tensor& b) {
    float m = 0.0f;
    for (size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

int count_changed_pixels(const Tensor& a, const Tensor& b) {
    int n = 0;
    for (size_t i = 0; i < a.size(); ++i)
        if (a.data[i] != b.data[i]) ++n;
    return n;
}

namespace {

void finish(AdversarialExample& ae, const Model& victim) {
    ae.pred_before = model_predict(victim, ae.original).label;
    ae.pred_after = model_predict(victim, ae.perturbed).label;
    ae.success = ae.pred_before == ae.true_label && ae.pred_after != ae.true_label;
    ae.l2 = l2_distance(ae.original, ae.perturbed);
}

}  // namespace

AdversarialExample fgsm(const Model& victim, const Tensor& x, int y_true, float epsilon) {
    Graph g;
    const int xin = g.leaf(x);
    const ForwardBinding fb = bind_forward(g, victim, xin);
    const int loss = g.softmax_ce(fb.output_node, y_true);
    g.backward(loss);
    const Tensor& gx = g.grad(xin);

    AdversarialExample ae;
    ae.original = x;
    ae.perturbed = x;
    ae.attack = AttackKind::fgsm;
    ae.true_label = y_true;
    ae.epsilon = epsilon;
    for (size_t i = 0; i < x.size(); ++i) {
        const float s = gx.data[i] > 0.0f ? 1.0f : (gx.data[i] < 0.0f ? -1.0f : 0.0f);
        ae.perturbed.data[i] = std::clamp(x.data[i] + epsilon * s, 0.0f, 1.0f);
    }
    finish(ae, victim);
    return ae;
}

std::vector<float> jsma_saliency(const Model& victim, const Tensor& x, int target) {
    Graph g;
    const int xin = g.leaf(x);
    const ForwardBinding fb = bind_forward(g, victim, xin);
    const int l = victim.class_count;
    const size_t d = x.size();

    // One backward per logit gives the full Jacobian dZ/dx.
    std::vector<std::vector<float>> jac(l);
    for (int j = 0; j < l; ++j) {
        g.backward_logit(fb.output_node, j);
        jac[j] = g.grad(xin).data;
    }

    std::vector<float> score(d, 0.0f);
    for (size_t i = 0; i < d; ++i) {
        const float alpha = jac[target][i];
        float beta = 0.0f;
        for (int j = 0; j < l; ++j)
            if (j != target) beta += jac[j][i];
        if (alpha > 0.0f && beta < 0.0f) score[i] = alpha * std::fabs(beta);
    }
    return score;
}

AdversarialExample jsma(const Model& victim, const Tensor& x, int y_true,
                        const AttackConfig& config) {
    config.validate();
    AdversarialExample ae;
    ae.original = x;
    ae.perturbed = x;
    ae.attack = AttackKind::jsma;
    ae.true_label = y_true;

    const size_t d = x.size();
    const int budget = int(std::floor(config.jsma_gamma * double(d)));
    std::vector<bool> modified(d, false);

    Prediction p = model_predict(victim, x);
    // target: runner-up class of the clean prediction
    int target = 0;
    {
        float best = -std::numeric_limits<float>::infinity();
        for (int j = 0; j < victim.class_count; ++j) {
            if (j == p.label) continue;
            if (p.logits.data[j] > best) {
                best = p.logits.data[j];
                target = j;
            }
        }
    }

    int changed = 0;
    while (changed < budget) {
        Prediction cur = model_predict(victim, ae.perturbed);
        if (cur.label != y_true) break;  // misclassified, done

        const std::vector<float> score = jsma_saliency(victim, ae.perturbed, target);
        int pick = -1;
        float best = 0.0f;
        for (size_t i = 0; i < d; ++i) {
            if (ae.perturbed.data[i] >= 1.0f) continue;  // saturated pixels ineligible
            if (score[i] > best) {
                best = score[i];
                pick = int(i);
            }
        }
        if (pick < 0) break;  // all scores zero: dead end

        ae.perturbed.data[pick] =
            std::min(1.0f, ae.perturbed.data[pick] + config.jsma_theta);
        if (!modified[pick]) {
            modified[pick] = true;
            ++changed;
        }
    }

    ae.pixels_changed = count_changed_pixels(ae.original, ae.perturbed);
    finish(ae, victim);
    return ae;
}

AdversarialExample cw_l2(const Model& victim, const Tensor& x, int y_true,
                         const AttackConfig& config) {
    config.validate();
    const size_t d = x.size();

    // w = atanh(2x - 1) with x pulled slightly off the box boundary. w stays
    // boxed to this margin throughout the optimization: beyond it tanh rounds
    // to +/-1 in float and x* would land exactly on the box boundary.
    const float w_box = std::atanh(1.0f - 2e-6f);
    Tensor w0(x.shape);
    for (size_t i = 0; i < d; ++i) {
        const float xi = std::clamp(x.data[i], 1e-6f, 1.0f - 1e-6f);
        w0.data[i] = std::atanh(2.0f * xi - 1.0f);
    }

    AdversarialExample best;
    best.original = x;
    best.perturbed = x;
    best.attack = AttackKind::cw_l2;
    best.true_label = y_true;
    float best_l2 = std::numeric_limits<float>::infinity();
    bool found = false;
    Tensor last_attempt = x;

    float c = config.cw_c_start;
    float c_lo = 0.0f;
    float c_hi = std::numeric_limits<float>::infinity();

    for (int step = 0; step < config.cw_binary_steps; ++step) {
        Tensor w = w0;
        std::vector<float> m(d, 0.0f), v(d, 0.0f);
        constexpr float b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;
        bool round_success = false;

        for (int it = 1; it <= config.cw_iterations; ++it) {
            Graph g;
            const int wn = g.leaf(w);
            const int xstar = g.tanh_unit(wn);
            const ForwardBinding fb = bind_forward(g, victim, xstar);
            const int dist = g.sq_dist(xstar, x);
            const int margin = g.cw_margin(fb.output_node, y_true, config.cw_kappa);
            const int loss = g.add_scaled(dist, margin, c);
            g.backward(loss);
            const Tensor& gw = g.grad(wn);

            // track the best successful iterate of this round
            const Tensor& xs = g.value(xstar);
            const int pred = argmax_lowest(g.value(fb.output_node).data);
            if (pred != y_true) {
                round_success = true;
                const float l2 = l2_distance(xs, x);
                if (l2 < best_l2) {
                    best_l2 = l2;
                    best.perturbed = xs;
                    found = true;
                }
            }
            last_attempt = xs;

            const float bc = config.cw_step *
                             std::sqrt(1.0f - std::pow(b2, float(it))) /
                             (1.0f - std::pow(b1, float(it)));
            for (size_t i = 0; i < d; ++i) {
                m[i] = b1 * m[i] + (1.0f - b1) * gw.data[i];
                v[i] = b2 * v[i] + (1.0f - b2) * gw.data[i] * gw.data[i];
                w.data[i] = std::clamp(w.data[i] - bc * m[i] / (std::sqrt(v[i]) + eps),
                                       -w_box, w_box);
            }
        }

        if (round_success) {
            c_hi = c;
            c = 0.5f * (c_lo + c_hi);
        } else {
            c_lo = c;
            c = std::isinf(c_hi) ? c * 10.0f : 0.5f * (c_lo + c_hi);
        }
    }

    if (!found) best.perturbed = last_attempt;
    finish(best, victim);
    return best;
}

AdversarialExample run_attack(AttackKind kind, const Model& victim, const Tensor& x,
                              int y_true, const AttackConfig& config) {
    switch (kind) {
        case AttackKind::fgsm: return fgsm(victim, x, y_true, config.fgsm_epsilon);
        case AttackKind::jsma: return jsma(victim, x, y_true, config);
        case AttackKind::cw_l2: return cw_l2(victim, x, y_true, config);
    }
    fail(Error::Kind::invalid_argument, "unknown attack kind");
}

bool attack_success(const Model& victim, const AdversarialExample& ae, int y_true) {
    return model_predict(victim, ae.original).label == y_true &&
           model_predict(victim, ae.perturbed).label != y_true;
}

namespace {

ordered_json config_to_json(const AttackConfig& c) {
    ordered_json j;
    j["fgsm_epsilon"] = c.fgsm_epsilon;
    j["jsma_theta"] = c.jsma_theta;
    j["jsma_gamma"] = c.jsma_gamma;
    j["cw_c_start"] = c.cw_c_start;
    j["cw_binary_steps"] = c.cw_binary_steps;
    j["cw_iterations"] = c.cw_iterations;
    j["cw_step"] = c.cw_step;
    j["cw_kappa"] = c.cw_kappa;
    return j;
}

}  // namespace

void save_adversarial_set(const std::vector<AdversarialExample>& set,
                          const AttackConfig& config, const std::vector<int>& dims,
                          const std::string& dir, const std::string& name) {
    ordered_json man;
    man["kind"] = "adversarial_set";
    man["attack"] = set.empty() ? "none" : attack_name(set.front().attack);
    man["config"] = config_to_json(config);
    man["dims"] = dims;
    man["count"] = set.size();
    ordered_json exs = ordered_json::array();
    for (const AdversarialExample& ae : set) {
        ordered_json e;
        e["source_index"] = ae.source_index;
        e["true_label"] = ae.true_label;
        e["pred_before"] = ae.pred_before;
        e["pred_after"] = ae.pred_after;
        e["success"] = ae.success;
        e["epsilon"] = ae.epsilon;
        e["pixels_changed"] = ae.pixels_changed;
        e["l2"] = ae.l2;
        exs.push_back(std::move(e));
    }
    man["examples"] = std::move(exs);

    std::ofstream mj(dir + "/" + name + ".json", std::ios::trunc);
    if (!mj) fail(Error::Kind::io, "cannot write manifest in " + dir);
    mj << man.dump(2) << "\n";

    std::ofstream blob(dir + "/" + name + ".bin", std::ios::binary | std::ios::trunc);
    if (!blob) fail(Error::Kind::io, "cannot write blob in " + dir);
    for (const AdversarialExample& ae : set) {
        blob.write(reinterpret_cast<const char*>(ae.original.data.data()),
                   std::streamsize(ae.original.size() * sizeof(float)));
        blob.write(reinterpret_cast<const char*>(ae.perturbed.data.data()),
                   std::streamsize(ae.perturbed.size() * sizeof(float)));
    }
    if (!blob) fail(Error::Kind::io, "blob write failed in " + dir);
}

std::vector<AdversarialExample> load_adversarial_set(const std::string& dir,
                                                     const std::string& name) {
    std::ifstream mj(dir + "/" + name + ".json");
    if (!mj) fail(Error::Kind::io, "cannot read manifest in " + dir);
    ordered_json man;
    try {
        man = ordered_json::parse(mj);
    } catch (const std::exception& e) {
        fail(Error::Kind::format, std::string("bad adversarial manifest: ") + e.what());
    }
    const auto dims = man.at("dims").get<std::vector<int>>();
    const size_t count = man.at("count").get<size_t>();
    const size_t d = Tensor::numel(dims);
    const AttackKind kind = attack_from_name(man.at("attack").get<std::string>());

    std::ifstream blob(dir + "/" + name + ".bin", std::ios::binary);
    if (!blob) fail(Error::Kind::io, "cannot read blob in " + dir);

    std::vector<AdversarialExample> set;
    const auto& exs = man.at("examples");
    if (exs.size() != count) fail(Error::Kind::format, "adversarial count mismatch");
    for (size_t i = 0; i < count; ++i) {
        AdversarialExample ae;
        ae.attack = kind;
        ae.original = Tensor(dims);
        ae.perturbed = Tensor(dims);
        blob.read(reinterpret_cast<char*>(ae.original.data.data()),
                  std::streamsize(d * sizeof(float)));
        blob.read(reinterpret_cast<char*>(ae.perturbed.data.data()),
                  std::streamsize(d * sizeof(float)));
        if (!blob) fail(Error::Kind::truncated, "truncated adversarial blob");
        const auto& e = exs[i];
        ae.source_index = e.at("source_index").get<int>();
        ae.true_label = e.at("true_label").get<int>();
        ae.pred_before = e.at("pred_before").get<int>();
        ae.pred_after = e.at("pred_after").get<int>();
        ae.success = e.at("success").get<bool>();
        ae.epsilon = e.at("epsilon").get<float>();
        ae.pixels_changed = e.at("pixels_changed").get<int>();
        ae.l2 = e.at("l2").get<float>();
        set.push_back(std::move(ae));
    }
    return set;
}

}  // namespace landet
