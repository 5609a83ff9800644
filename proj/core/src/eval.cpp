#include "landet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace landet {

using nlohmann::ordered_json;

double retention_rate(const Model& g, const Model& f2,
                      const std::vector<AdversarialExample>& pairs) {
    if (pairs.empty()) fail(Error::Kind::empty_result, "retention_rate: empty input");
    size_t retained = 0;
    for (const AdversarialExample& ae : pairs) {
        const int clean = model_predict(f2, generate_mask(g, ae.original)).label;
        const int adv = model_predict(f2, generate_mask(g, ae.perturbed)).label;
        if (clean == adv) ++retained;
    }
    return double(retained) / double(pairs.size());
}

MetricsReport detection_metrics(const Model& f1, const Model& g, const Model& f2,
                                const std::vector<LabeledImage>& benign,
                                const std::vector<AdversarialExample>& adversarial) {
    if (benign.empty() && adversarial.empty())
        fail(Error::Kind::empty_result, "detection_metrics: empty paired set");
    MetricsReport r;
    for (const AdversarialExample& ae : adversarial) {
        const DetectionVerdict v = detect(f1, g, f2, ae.perturbed);
        if (v.is_adversarial) ++r.tp;
        else ++r.fn;
    }
    for (const LabeledImage& li : benign) {
        const DetectionVerdict v = detect(f1, g, f2, li.image);
        if (v.is_adversarial) ++r.fp;
        else ++r.tn;
    }
    r.adversarial_count = adversarial.size();
    r.benign_count = benign.size();
    if (!adversarial.empty()) r.tp_rate = double(r.tp) / double(adversarial.size());
    if (!benign.empty()) r.tn_rate = double(r.tn) / double(benign.size());
    return r;
}

double recovery_rate(const Model& g, const Model& f2,
                     const std::vector<AdversarialExample>& adversarial) {
    if (adversarial.empty()) fail(Error::Kind::empty_result, "recovery_rate: empty input");
    size_t recovered = 0;
    for (const AdversarialExample& ae : adversarial)
        if (model_predict(f2, generate_mask(g, ae.perturbed)).label == ae.true_label)
            ++recovered;
    return double(recovered) / double(adversarial.size());
}

void export_mask_images(const std::vector<Tensor>& masks, const std::string& directory,
                        const std::string& prefix) {
    std::filesystem::create_directories(directory);
    for (size_t i = 0; i < masks.size(); ++i) {
        const Tensor& m = masks[i];
        if (m.shape.size() != 3 && m.shape.size() != 2)
            fail(Error::Kind::shape_mismatch, "export_mask_images: need [C,H,W] or [H,W]");
        const int C = m.shape.size() == 3 ? m.shape[0] : 1;
        const int H = m.shape.size() == 3 ? m.shape[1] : m.shape[0];
        const int W = m.shape.size() == 3 ? m.shape[2] : m.shape[1];
        const std::string path =
            directory + "/" + prefix + "_" + std::to_string(i) + ".pgm";
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) fail(Error::Kind::io, "cannot write " + path);
        out << "P5\n" << W << " " << C * H << "\n255\n";
        for (float v : m.data) {
            const long b = std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f);
            out.put(char(static_cast<unsigned char>(b)));
        }
        if (!out) fail(Error::Kind::io, "write failed: " + path);
    }
}

Tensor read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Error::Kind::io, "cannot read " + path);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (magic != "P5" || maxval != 255 || w < 1 || h < 1)
        fail(Error::Kind::format, "not a maxval-255 P5 PGM: " + path);
    in.get();  // single whitespace after header
    Tensor t({h, w});
    for (size_t i = 0; i < t.size(); ++i) {
        const int c = in.get();
        if (c == EOF) fail(Error::Kind::truncated, "truncated PGM: " + path);
        t.data[i] = float(c) / 255.0f;
    }
    return t;
}

namespace {

ordered_json attack_config_json(const AttackConfig& c) {
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

void attack_config_from_json(const ordered_json& j, AttackConfig& c) {
    if (j.contains("fgsm_epsilon")) c.fgsm_epsilon = j["fgsm_epsilon"].get<float>();
    if (j.contains("jsma_theta")) c.jsma_theta = j["jsma_theta"].get<float>();
    if (j.contains("jsma_gamma")) c.jsma_gamma = j["jsma_gamma"].get<float>();
    if (j.contains("cw_c_start")) c.cw_c_start = j["cw_c_start"].get<float>();
    if (j.contains("cw_binary_steps")) c.cw_binary_steps = j["cw_binary_steps"].get<int>();
    if (j.contains("cw_iterations")) c.cw_iterations = j["cw_iterations"].get<int>();
    if (j.contains("cw_step")) c.cw_step = j["cw_step"].get<float>();
    if (j.contains("cw_kappa")) c.cw_kappa = j["cw_kappa"].get<float>();
}

ordered_json train_config_json(const TrainConfig& c) {
    ordered_json j;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["learning_rate"] = c.learning_rate;
    j["optimizer"] = c.optimizer == OptimizerKind::adam ? "adam" : "sgd_momentum";
    j["sparsity_weight"] = c.sparsity_weight;
    j["noise"] = c.noise == NoiseKind::uniform01 ? "uniform01" : "gaussian_fit";
    j["input_jitter"] = c.input_jitter;
    return j;
}

void train_config_from_json(const ordered_json& j, TrainConfig& c) {
    if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
    if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<float>();
    if (j.contains("optimizer")) {
        const auto s = j["optimizer"].get<std::string>();
        if (s == "adam") c.optimizer = OptimizerKind::adam;
        else if (s == "sgd_momentum") c.optimizer = OptimizerKind::sgd_momentum;
        else fail(Error::Kind::format, "unknown optimizer: " + s);
    }
    if (j.contains("sparsity_weight")) c.sparsity_weight = j["sparsity_weight"].get<float>();
    if (j.contains("input_jitter")) c.input_jitter = j["input_jitter"].get<float>();
    if (j.contains("noise")) {
        const auto s = j["noise"].get<std::string>();
        if (s == "uniform01") c.noise = NoiseKind::uniform01;
        else if (s == "gaussian_fit") c.noise = NoiseKind::gaussian_fit;
        else fail(Error::Kind::format, "unknown noise law: " + s);
    }
}

ordered_json metrics_json(const MetricsReport& m) {
    ordered_json j;
    j["attack"] = m.attack;
    j["setting"] = m.setting;
    j["tp_rate"] = m.tp_rate;
    j["tn_rate"] = m.tn_rate;
    j["recovery_rate"] = m.recovery_rate;
    j["retention_rate"] = m.retention_rate;
    j["adversarial_count"] = m.adversarial_count;
    j["benign_count"] = m.benign_count;
    j["tp"] = m.tp;
    j["fn"] = m.fn;
    j["tn"] = m.tn;
    j["fp"] = m.fp;
    if (m.setting == "transfer") {
        j["transfer_fooling_tp_rate"] = m.transfer_fooling_tp_rate;
        j["transfer_fooling_count"] = m.transfer_fooling_count;
    }
    return j;
}

[[noreturn]] void stage_fail(const std::string& stage, const std::exception& e) {
    fail(Error::Kind::invalid_argument,
         "experiment stage '" + stage + "' failed: " + e.what());
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults() {
    ExperimentConfig c;
    c.f1_train.epochs = 10;
    c.f1p_train.epochs = 10;
    c.g_train.epochs = 10;
    c.g_train.learning_rate = 0.002f;
    // data-fitted noise keeps masked-out regions on-distribution, which is
    // what makes sparse, input-tracking masks the low-loss solution; the
    // strong sparsity weight keeps the mask on a single evidence region,
    // which suppresses attack-painted decoys
    c.g_train.noise = NoiseKind::gaussian_fit;
    c.g_train.sparsity_weight = 1.5f;
    c.g_train.input_jitter = 0.1f;  // matches the attacks' l-inf budget
    c.f2_train.epochs = 10;
    c.f2_train.input_jitter = 0.1f;  // mask-dataset augmentation budget
    return c;
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        fail(Error::Kind::format, std::string("bad experiment config: ") + e.what());
    }
    ExperimentConfig c = defaults();
    if (j.contains("class_count")) c.class_count = j["class_count"].get<int>();
    if (j.contains("dims")) c.dims = j["dims"].get<std::vector<int>>();
    if (j.contains("samples_per_class"))
        c.samples_per_class = j["samples_per_class"].get<int>();
    if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
    if (j.contains("f1_train")) train_config_from_json(j["f1_train"], c.f1_train);
    if (j.contains("f1p_train")) train_config_from_json(j["f1p_train"], c.f1p_train);
    if (j.contains("g_train")) train_config_from_json(j["g_train"], c.g_train);
    if (j.contains("f2_train")) train_config_from_json(j["f2_train"], c.f2_train);
    if (j.contains("attack")) attack_config_from_json(j["attack"], c.attack);
    if (j.contains("attacks")) {
        c.attacks.clear();
        for (const auto& a : j["attacks"])
            c.attacks.push_back(attack_from_name(a.get<std::string>()));
    }
    if (j.contains("pairs")) c.pairs = j["pairs"].get<size_t>();
    if (j.contains("run_transfer")) c.run_transfer = j["run_transfer"].get<bool>();
    if (j.contains("run_filtered")) c.run_filtered = j["run_filtered"].get<bool>();
    if (j.contains("filter")) {
        const auto s = j["filter"].get<std::string>();
        if (s == "strict") c.filter = FilterMode::strict;
        else if (s == "mask_only") c.filter = FilterMode::mask_only;
        else fail(Error::Kind::format, "unknown filter mode: " + s);
    }
    if (j.contains("shared_benign_pool"))
        c.shared_benign_pool = j["shared_benign_pool"].get<bool>();
    return c;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Error::Kind::io, "cannot read config: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::string ExperimentConfig::to_json() const {
    ordered_json j;
    j["class_count"] = class_count;
    j["dims"] = dims;
    j["samples_per_class"] = samples_per_class;
    j["seed"] = seed;
    j["f1_train"] = train_config_json(f1_train);
    j["f1p_train"] = train_config_json(f1p_train);
    j["g_train"] = train_config_json(g_train);
    j["f2_train"] = train_config_json(f2_train);
    j["attack"] = attack_config_json(attack);
    ordered_json as = ordered_json::array();
    for (AttackKind k : attacks) as.push_back(attack_name(k));
    j["attacks"] = std::move(as);
    j["pairs"] = pairs;
    j["run_transfer"] = run_transfer;
    j["run_filtered"] = run_filtered;
    j["filter"] = filter == FilterMode::strict ? "strict" : "mask_only";
    j["shared_benign_pool"] = shared_benign_pool;
    return j.dump(2);
}

namespace {

// Attack successes over victim-correct images, skipping excluded indices.
std::vector<AdversarialExample> collect_successes(
    const Model& victim, const std::vector<LabeledImage>& pool, AttackKind kind,
    const AttackConfig& config, size_t n, const std::set<int>& excluded) {
    std::vector<AdversarialExample> out;
    for (int i = 0; i < int(pool.size()) && out.size() < n; ++i) {
        if (excluded.count(i)) continue;
        const LabeledImage& li = pool[i];
        if (model_predict(victim, li.image).label != li.label) continue;
        AdversarialExample ae = run_attack(kind, victim, li.image, li.label, config);
        ae.source_index = i;
        if (ae.success) out.push_back(std::move(ae));
    }
    if (out.size() < n)
        fail(Error::Kind::empty_result,
             "only " + std::to_string(out.size()) + "/" + std::to_string(n) +
                 " successes for " + attack_name(kind));
    return out;
}

std::vector<VerdictRow> verdict_rows(const Model& f1, const Model& g, const Model& f2,
                                     const std::vector<LabeledImage>& benign,
                                     const std::vector<AdversarialExample>& adversarial,
                                     const std::string& attack) {
    std::vector<VerdictRow> rows;
    int idx = 0;
    for (const AdversarialExample& ae : adversarial) {
        const DetectionVerdict v = detect(f1, g, f2, ae.perturbed);
        rows.push_back({idx++, ae.true_label, v.y1, v.y2, v.is_adversarial, attack});
    }
    for (const LabeledImage& li : benign) {
        const DetectionVerdict v = detect(f1, g, f2, li.image);
        rows.push_back({idx++, li.label, v.y1, v.y2, v.is_adversarial, "benign"});
    }
    return rows;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
    ExperimentResult res;

    Dataset train, test;
    try {
        std::tie(train, test) = gen_toy_dataset(config.class_count, config.dims,
                                                config.samples_per_class, config.seed);
    } catch (const Error& e) {
        stage_fail("dataset", e);
    }

    // seeds derived from the experiment seed so one knob pins everything
    const uint64_t s = config.seed;

    try {
        res.f1 = build_model(ModelRole::image_classifier_f1, config.dims,
                             config.class_count, s ^ 0xf1);
        TrainConfig tc = config.f1_train;
        tc.seed = s ^ 0x1f1;
        const TrainReport rep = train_classifier(res.f1, train, test, tc);
        res.f1_test_accuracy = rep.test_accuracy;
    } catch (const Error& e) {
        stage_fail("train_f1", e);
    }

    if (config.run_transfer) {
        try {
            res.f1p = build_model(ModelRole::transfer_classifier_f1p, config.dims,
                                  config.class_count, s ^ 0xf2);
            TrainConfig tc = config.f1p_train;
            tc.seed = s ^ 0x1f2;
            const TrainReport rep = train_classifier(res.f1p, train, test, tc);
            res.f1p_test_accuracy = rep.test_accuracy;
        } catch (const Error& e) {
            stage_fail("train_f1p", e);
        }
    }

    try {
        res.g = build_model(ModelRole::attention_net_g, config.dims, config.class_count,
                            s ^ 0xf3);
        TrainConfig tc = config.g_train;
        tc.seed = s ^ 0x1f3;
        train_lan(res.g, res.f1, train, tc);
    } catch (const Error& e) {
        stage_fail("train_g", e);
    }

    Dataset test_masks;
    try {
        const Dataset train_masks = build_mask_dataset_augmented(
            res.g, res.f1, train, config.f2_train.input_jitter, s ^ 0xf5);
        test_masks = build_mask_dataset(res.g, test);  // accuracy on clean masks
        res.f2 = build_model(ModelRole::mask_classifier_f2, config.dims,
                             config.class_count, s ^ 0xf4);
        TrainConfig tc = config.f2_train;
        tc.seed = s ^ 0x1f4;
        const TrainReport rep = train_classifier(res.f2, train_masks, test_masks, tc);
        res.f2_mask_accuracy = rep.test_accuracy;
    } catch (const Error& e) {
        stage_fail("train_f2", e);
    }

    // direct setting: shared benign pool of f1-correct images, attack
    // sources drawn from the remainder
    if (!config.attacks.empty()) {
        std::vector<LabeledImage> benign_pool;
        std::set<int> benign_sources;
        for (int i = 0; i < int(test.size()) && benign_pool.size() < config.pairs; ++i) {
            if (model_predict(res.f1, test.items[i].image).label != test.items[i].label)
                continue;
            benign_pool.push_back(test.items[i]);
            benign_sources.insert(i);
        }
        if (benign_pool.size() < config.pairs)
            fail(Error::Kind::empty_result, "not enough f1-correct benign images");

        for (AttackKind kind : config.attacks) {
            try {
                std::set<int> excluded = benign_sources;
                std::vector<AdversarialExample> adv = collect_successes(
                    res.f1, test.items, kind, config.attack, config.pairs, excluded);
                std::vector<LabeledImage> benign = benign_pool;
                if (!config.shared_benign_pool) {
                    // per-attack pool: shift by the attack's ordinal
                    benign.clear();
                    std::set<int> adv_sources;
                    for (const auto& ae : adv) adv_sources.insert(ae.source_index);
                    for (int i = 0;
                         i < int(test.size()) && benign.size() < config.pairs; ++i) {
                        if (adv_sources.count(i)) continue;
                        if (model_predict(res.f1, test.items[i].image).label !=
                            test.items[i].label)
                            continue;
                        benign.push_back(test.items[i]);
                    }
                }
                MetricsReport m = detection_metrics(res.f1, res.g, res.f2, benign, adv);
                m.attack = attack_name(kind);
                m.setting = "direct";
                m.retention_rate = retention_rate(res.g, res.f2, adv);
                m.recovery_rate = recovery_rate(res.g, res.f2, adv);
                res.metrics.push_back(m);
                res.verdict_csv["direct_" + attack_name(kind)] = verdicts_to_csv(
                    verdict_rows(res.f1, res.g, res.f2, benign, adv, attack_name(kind)));
            } catch (const Error& e) {
                stage_fail("direct_" + attack_name(kind), e);
            }
        }

        if (config.run_transfer) {
            for (AttackKind kind : config.attacks) {
                try {
                    // attacks built against f1', detector triple unchanged
                    std::vector<AdversarialExample> adv =
                        collect_successes(res.f1p, test.items, kind, config.attack,
                                          config.pairs, benign_sources);
                    MetricsReport m =
                        detection_metrics(res.f1, res.g, res.f2, benign_pool, adv);
                    m.attack = attack_name(kind);
                    m.setting = "transfer";
                    m.retention_rate = retention_rate(res.g, res.f2, adv);
                    m.recovery_rate = recovery_rate(res.g, res.f2, adv);
                    // breakout: entries that also fool f1
                    size_t fooling = 0, fooling_tp = 0;
                    for (const AdversarialExample& ae : adv) {
                        if (model_predict(res.f1, ae.perturbed).label == ae.true_label)
                            continue;
                        ++fooling;
                        if (detect(res.f1, res.g, res.f2, ae.perturbed).is_adversarial)
                            ++fooling_tp;
                    }
                    m.transfer_fooling_count = fooling;
                    if (fooling > 0)
                        m.transfer_fooling_tp_rate = double(fooling_tp) / double(fooling);
                    res.metrics.push_back(m);
                    res.verdict_csv["transfer_" + attack_name(kind)] =
                        verdicts_to_csv(verdict_rows(res.f1, res.g, res.f2, benign_pool,
                                                     adv, attack_name(kind)));
                } catch (const Error& e) {
                    stage_fail("transfer_" + attack_name(kind), e);
                }
            }
        }
    }

    // filtered setting over the strict-filtered test set
    if (config.run_filtered) {
        try {
            const FilteredSet fs =
                filter_benign_set(res.f1, res.g, res.f2, test, config.filter);
            res.kept_fraction = fs.kept_fraction;
            Dataset kept;
            kept.class_count = test.class_count;
            kept.dims = test.dims;
            kept.items = fs.kept;

            for (AttackKind kind : config.attacks) {
                const size_t n = std::min(config.pairs, kept.size() / 2);
                if (n == 0)
                    fail(Error::Kind::empty_result, "filtered set too small to pair");
                std::vector<AdversarialExample> adv = collect_successes(
                    res.f1, kept.items, kind, config.attack, n, {});
                std::set<int> adv_sources;
                for (const auto& ae : adv) adv_sources.insert(ae.source_index);
                std::vector<LabeledImage> benign;
                for (int i = 0; i < int(kept.size()) && benign.size() < n; ++i)
                    if (!adv_sources.count(i)) benign.push_back(kept.items[i]);
                MetricsReport m = detection_metrics(res.f1, res.g, res.f2, benign, adv);
                m.attack = attack_name(kind);
                m.setting = "filtered";
                m.retention_rate = retention_rate(res.g, res.f2, adv);
                m.recovery_rate = recovery_rate(res.g, res.f2, adv);
                res.metrics.push_back(m);
                res.verdict_csv["filtered_" + attack_name(kind)] = verdicts_to_csv(
                    verdict_rows(res.f1, res.g, res.f2, benign, adv, attack_name(kind)));
            }
        } catch (const Error& e) {
            stage_fail("filtered", e);
        }
    }

    return res;
}

std::string ExperimentResult::report_json(const ExperimentConfig& config) const {
    ordered_json j;
    j["seed"] = config.seed;
    j["config"] = ordered_json::parse(config.to_json());
    j["f1_test_accuracy"] = f1_test_accuracy;
    if (config.run_transfer) j["f1p_test_accuracy"] = f1p_test_accuracy;
    j["f2_mask_accuracy"] = f2_mask_accuracy;
    if (config.run_filtered) j["kept_fraction"] = kept_fraction;
    j["benign_pool"] = config.shared_benign_pool ? "shared" : "per_attack";
    j["filter_mode"] = config.filter == FilterMode::strict ? "strict" : "mask_only";
    ordered_json ms = ordered_json::array();
    for (const MetricsReport& m : metrics) ms.push_back(metrics_json(m));
    j["metrics"] = std::move(ms);
    return j.dump(2);
}

}  // namespace landet
