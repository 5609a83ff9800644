#include <doctest.h>

#include <filesystem>

#include "helpers.hpp"
#include "landet/eval.hpp"

using namespace landet;
using namespace landet::testing;

namespace {

Model constant_classifier(ModelRole role, const std::vector<int>& dims, int classes,
                          int winner) {
    Model m;
    m.role = role;
    m.input_dims = dims;
    m.class_count = classes;
    m.epochs_trained = 1;
    LayerSpec flat;
    flat.kind = LayerSpec::Kind::flatten;
    LayerSpec head;
    head.kind = LayerSpec::Kind::affine;
    head.out_features = classes;
    m.layers = {flat, head};
    const int d = dims[0] * dims[1] * dims[2];
    m.params = {Tensor({classes, d}, 0.0f), Tensor({classes}, 0.0f)};
    m.params[1].data[winner] = 1.0f;
    return m;
}

}  // namespace

TEST_CASE("retention_rate is 1.0 for identity perturbations") {
    const std::vector<int> dims{1, 8, 8};
    Model g = build_model(ModelRole::attention_net_g, dims, 4, 2);
    g.epochs_trained = 1;
    const Model f2 = constant_classifier(ModelRole::mask_classifier_f2, dims, 4, 1);

    Rng rng(4);
    std::vector<AdversarialExample> pairs;
    for (int i = 0; i < 5; ++i) {
        AdversarialExample ae;
        ae.original = random_tensor(dims, rng, 0, 1);
        ae.perturbed = ae.original;  // x* = x
        pairs.push_back(std::move(ae));
    }
    CHECK(retention_rate(g, f2, pairs) == doctest::Approx(1.0));
    CHECK_THROWS_AS(retention_rate(g, f2, {}), Error);
}

TEST_CASE("recovery_rate is 0.0 under a constantly wrong mask classifier") {
    const std::vector<int> dims{1, 8, 8};
    Model g = build_model(ModelRole::attention_net_g, dims, 4, 2);
    g.epochs_trained = 1;
    const Model f2 = constant_classifier(ModelRole::mask_classifier_f2, dims, 4, 3);

    Rng rng(6);
    std::vector<AdversarialExample> advs;
    for (int i = 0; i < 5; ++i) {
        AdversarialExample ae;
        ae.original = random_tensor(dims, rng, 0, 1);
        ae.perturbed = random_tensor(dims, rng, 0, 1);
        ae.true_label = 1;  // never equals the constant class 3
        advs.push_back(std::move(ae));
    }
    CHECK(recovery_rate(g, f2, advs) == doctest::Approx(0.0));
    CHECK_THROWS_AS(recovery_rate(g, f2, {}), Error);
}

TEST_CASE("detection_metrics with oracle stubs reaches TP=TN=1") {
    const std::vector<int> dims{1, 8, 8};
    Model g = build_model(ModelRole::attention_net_g, dims, 4, 2);
    g.epochs_trained = 1;
    // f1 constantly says 0; f2 constantly says 1 -> every input "adversarial"
    const Model f1 = constant_classifier(ModelRole::image_classifier_f1, dims, 4, 0);
    const Model f2_disagree = constant_classifier(ModelRole::mask_classifier_f2, dims, 4, 1);
    const Model f2_agree = constant_classifier(ModelRole::mask_classifier_f2, dims, 4, 0);

    Rng rng(8);
    std::vector<AdversarialExample> advs;
    std::vector<LabeledImage> benign;
    for (int i = 0; i < 6; ++i) {
        AdversarialExample ae;
        ae.original = random_tensor(dims, rng, 0, 1);
        ae.perturbed = random_tensor(dims, rng, 0, 1);
        advs.push_back(std::move(ae));
        LabeledImage li;
        li.image = random_tensor(dims, rng, 0, 1);
        li.label = 0;
        benign.push_back(std::move(li));
    }

    const MetricsReport adv_side = detection_metrics(f1, g, f2_disagree, {}, advs);
    CHECK(adv_side.tp_rate == doctest::Approx(1.0));
    const MetricsReport ben_side = detection_metrics(f1, g, f2_agree, benign, {});
    CHECK(ben_side.tn_rate == doctest::Approx(1.0));
    CHECK(adv_side.tp + adv_side.fn == adv_side.adversarial_count);
    CHECK(ben_side.tn + ben_side.fp == ben_side.benign_count);
    CHECK_THROWS_AS(detection_metrics(f1, g, f2_agree, {}, {}), Error);
}

TEST_CASE("mask image export: endpoints and byte-exact round trip") {
    const std::string dir =
        (std::filesystem::temp_directory_path() / "landet_masks").string();

    std::vector<Tensor> masks;
    masks.emplace_back(std::vector<int>{1, 4, 4}, 0.0f);  // all black
    masks.emplace_back(std::vector<int>{1, 4, 4}, 1.0f);  // all white
    Rng rng(10);
    masks.push_back(random_tensor({3, 4, 4}, rng, 0, 1));

    export_mask_images(masks, dir, "m");

    const Tensor black = read_pgm(dir + "/m_0.pgm");
    for (float v : black.data) CHECK(v == 0.0f);
    const Tensor white = read_pgm(dir + "/m_1.pgm");
    for (float v : white.data) CHECK(v == 1.0f);

    const Tensor rt = read_pgm(dir + "/m_2.pgm");
    REQUIRE(rt.size() == masks[2].size());
    for (size_t i = 0; i < rt.size(); ++i) {
        const long expect = std::lround(masks[2].data[i] * 255.0f);
        CHECK(std::lround(rt.data[i] * 255.0f) == expect);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("experiment config JSON round trip and overrides") {
    ExperimentConfig c = ExperimentConfig::defaults();
    c.pairs = 7;
    c.attack.cw_iterations = 42;
    c.attacks = {AttackKind::fgsm};
    c.run_transfer = false;
    const std::string js = c.to_json();
    const ExperimentConfig back = ExperimentConfig::from_json(js);
    CHECK(back.pairs == 7);
    CHECK(back.attack.cw_iterations == 42);
    CHECK(back.attacks.size() == 1);
    CHECK_FALSE(back.run_transfer);
    CHECK(back.to_json() == js);

    CHECK_THROWS_AS(ExperimentConfig::from_json("{notjson"), Error);
}

TEST_CASE("run_experiment with zero attacks reports only model quality") {
    ExperimentConfig c = ExperimentConfig::defaults();
    c.class_count = 3;
    c.dims = {1, 8, 8};
    c.samples_per_class = 30;
    c.attacks = {};
    c.run_transfer = false;
    c.run_filtered = false;
    c.f1_train.epochs = 6;
    c.g_train.epochs = 2;
    c.f2_train.epochs = 4;
    c.seed = 5;

    const ExperimentResult r = run_experiment(c);
    CHECK(r.metrics.empty());
    CHECK(r.f1_test_accuracy > 0.5);
    CHECK(r.f2_mask_accuracy >= 0.0);
    const std::string js = r.report_json(c);
    CHECK(js.find("f1_test_accuracy") != std::string::npos);
    CHECK(js.find("\"metrics\": []") != std::string::npos);
}

TEST_CASE("aggregated rates recompute exactly from the verdict CSV") {
    ExperimentConfig c = ExperimentConfig::defaults();
    c.class_count = 3;
    c.dims = {1, 8, 8};
    c.samples_per_class = 40;
    c.attacks = {AttackKind::fgsm};
    c.run_transfer = false;
    c.run_filtered = false;
    c.f1_train.epochs = 8;
    c.g_train.epochs = 4;
    c.f2_train.epochs = 6;
    c.pairs = 8;
    c.seed = 5;

    const ExperimentResult r = run_experiment(c);
    REQUIRE(r.metrics.size() == 1);
    const MetricsReport& m = r.metrics[0];

    const auto rows = verdicts_from_csv(r.verdict_csv.at("direct_fgsm"));
    size_t tp = 0, tn = 0, adv = 0, ben = 0;
    for (const VerdictRow& row : rows) {
        if (row.attack == "benign") {
            ++ben;
            if (!row.is_adversarial) ++tn;
        } else {
            ++adv;
            if (row.is_adversarial) ++tp;
        }
    }
    CHECK(adv == m.adversarial_count);
    CHECK(ben == m.benign_count);
    CHECK(double(tp) / double(adv) == doctest::Approx(m.tp_rate));
    CHECK(double(tn) / double(ben) == doctest::Approx(m.tn_rate));
}
