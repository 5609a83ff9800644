#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "helpers.hpp"
#include "landet/attacks.hpp"
#include "landet/datasets.hpp"
#include "landet/training.hpp"

using namespace landet;
using namespace landet::testing;

namespace {

// Hand-built linear victim: logits = W x + b over a flattened image.
Model linear_victim_dims(const std::vector<int>& dims, const Tensor& w, const Tensor& b) {
    Model m;
    m.role = ModelRole::image_classifier_f1;
    m.input_dims = dims;
    m.class_count = w.shape[0];
    m.epochs_trained = 1;
    LayerSpec flat;
    flat.kind = LayerSpec::Kind::flatten;
    LayerSpec head;
    head.kind = LayerSpec::Kind::affine;
    head.out_features = w.shape[0];
    m.layers = {flat, head};
    m.params = {w, b};
    return m;
}

Model linear_victim(const Tensor& w, const Tensor& b) {
    return linear_victim_dims({1, 1, 2}, w, b);
}

struct TrainedVictim {
    Dataset train, test;
    Model f1;
};

TrainedVictim trained_victim() {
    TrainedVictim tv;
    std::tie(tv.train, tv.test) = gen_toy_dataset(3, {1, 8, 8}, 40, 515);
    tv.f1 = build_model(ModelRole::image_classifier_f1, tv.train.dims, 3, 11);
    TrainConfig c;
    c.epochs = 16;
    c.batch_size = 16;
    c.learning_rate = 0.005f;
    c.seed = 7;
    train_classifier(tv.f1, tv.train, tv.test, c);
    REQUIRE(dataset_accuracy(tv.f1, tv.test) >= 0.9);
    return tv;
}

}  // namespace

TEST_CASE("fgsm epsilon=0 is the identity") {
    const Model m = linear_victim(Tensor({2, 2}, {1, 0, 0, 1}), Tensor({2}, 0.0f));
    const Tensor x({1, 1, 2}, {0.6f, 0.4f});
    const AdversarialExample ae = fgsm(m, x, 0, 0.0f);
    CHECK(ae.perturbed.data == x.data);
    CHECK_FALSE(ae.success);
}

TEST_CASE("fgsm matches the closed-form linear-model gradient") {
    // identity weights, y_true=0: grad_x CE = softmax(x) - onehot(0),
    // signs [-1, +1], so x* = [0.6-0.1, 0.4+0.1] = [0.5, 0.5]
    const Model m = linear_victim(Tensor({2, 2}, {1, 0, 0, 1}), Tensor({2}, 0.0f));
    const Tensor x({1, 1, 2}, {0.6f, 0.4f});
    const AdversarialExample ae = fgsm(m, x, 0, 0.1f);
    CHECK(ae.perturbed.data[0] == doctest::Approx(0.5f).epsilon(1e-6));
    CHECK(ae.perturbed.data[1] == doctest::Approx(0.5f).epsilon(1e-6));
}

TEST_CASE("fgsm clamps at the box boundary") {
    const Model m = linear_victim(Tensor({2, 2}, {1, 0, 0, 1}), Tensor({2}, 0.0f));
    const Tensor x({1, 1, 2}, {0.2f, 0.95f});  // pixel 1 has positive gradient (y_true=0)
    const AdversarialExample ae = fgsm(m, x, 0, 0.1f);
    CHECK(ae.perturbed.data[1] == 1.0f);
    CHECK(linf_distance(ae.original, ae.perturbed) <= 0.1f + 1e-7f);
}

TEST_CASE("jsma saliency zero branches") {
    const Model m = linear_victim(Tensor({2, 2}, {1.0f, -2.0f, -1.0f, 2.0f}),
                                  Tensor({2}, 0.0f));
    // Z0 = x0 - 2 x1, Z1 = -x0 + 2 x1. For target 1:
    // alpha = dZ1/dx = [-1, 2]; beta = dZ0/dx = [1, -2]
    const Tensor x({1, 1, 2}, {0.5f, 0.5f});
    const std::vector<float> s = jsma_saliency(m, x, 1);
    CHECK(s[0] == 0.0f);                       // alpha < 0
    CHECK(s[1] == doctest::Approx(4.0f));      // alpha=2 > 0, beta=-2 < 0 -> 2*2
}

TEST_CASE("jsma saliency alpha>0, beta>0 branch is zero") {
    const Model m = linear_victim(Tensor({2, 2}, {1.0f, 0.5f, 2.0f, 1.0f}),
                                  Tensor({2}, 0.0f));
    // target 1: alpha = [2, 1]; beta = dZ0/dx = [1, 0.5] (both positive)
    const Tensor x({1, 1, 2}, {0.5f, 0.5f});
    const std::vector<float> s = jsma_saliency(m, x, 1);
    CHECK(s[0] == 0.0f);
    CHECK(s[1] == 0.0f);
}

TEST_CASE("jsma saliency argmax agrees with single-pixel bump oracle") {
    // 2-class antisymmetric weights (row 1 = -row 0): per pixel alpha = |beta|,
    // so the saliency ranking alpha*|beta| and the bump oracle's margin-gain
    // ranking provably coincide; any disagreement is a saliency bug.
    Rng rng(81);
    int compared = 0;
    int attempts = 0;
    while (compared < 40 && attempts < 400) {
        ++attempts;
        Tensor w({2, 4});
        for (int i = 0; i < 4; ++i) {
            w.data[i] = rng.uniform(-1.0f, 1.0f);
            w.data[4 + i] = -w.data[i];
        }
        const Model m = linear_victim_dims({1, 2, 2}, w, Tensor({2}, 0.0f));

        const Tensor x = random_tensor({1, 2, 2}, rng, 0.1f, 0.6f);
        const int pred = model_predict(m, x).label;
        const int target = 1 - pred;

        // skip instances whose top two admissible weights nearly tie
        float top = 0.0f, second = 0.0f;
        for (int i = 0; i < 4; ++i) {
            const float a = w.data[size_t(target) * 4 + i];
            if (a <= 0.0f) continue;
            if (a > top) {
                second = top;
                top = a;
            } else if (a > second) {
                second = a;
            }
        }
        if (top <= 0.0f || top - second < 1e-3f) continue;

        const std::vector<float> s = jsma_saliency(m, x, target);
        const int s_arg = int(std::max_element(s.begin(), s.end()) - s.begin());
        REQUIRE(s[s_arg] > 0.0f);

        // oracle: forward-difference change in (Z_target - max other) per bump
        const float theta = 0.3f;
        const auto margin = [&](const Tensor& t) {
            const Prediction p = model_predict(m, t);
            float other = -1e30f;
            for (int j = 0; j < 2; ++j)
                if (j != target) other = std::max(other, p.logits.data[j]);
            return p.logits.data[target] - other;
        };
        int o_arg = -1;
        float o_best = -1e30f;
        for (size_t i = 0; i < x.size(); ++i) {
            Tensor probe = x;
            probe.data[i] = std::min(1.0f, probe.data[i] + theta);
            const float gain = margin(probe) - margin(x);
            if (gain > o_best) {
                o_best = gain;
                o_arg = int(i);
            }
        }
        REQUIRE(o_arg >= 0);
        CHECK(s_arg == o_arg);
        ++compared;
    }
    CHECK(compared >= 40);
}

TEST_CASE("jsma budget and dead-end termination") {
    const TrainedVictim tv = trained_victim();
    AttackConfig cfg;

    SUBCASE("gamma=0 returns the original") {
        cfg.jsma_gamma = 0.0f;
        const LabeledImage& li = tv.test.items[0];
        const AdversarialExample ae = jsma(tv.f1, li.image, li.label, cfg);
        CHECK(ae.perturbed.data == li.image.data);
        CHECK_FALSE(ae.success);
    }

    SUBCASE("l0 budget holds over test images, modified pixels only increase") {
        cfg.jsma_gamma = 0.05f;
        const int d = 64;
        const int budget = int(cfg.jsma_gamma * d);
        int attempted = 0;
        for (const LabeledImage& li : tv.test.items) {
            if (attempted >= 25) break;
            if (model_predict(tv.f1, li.image).label != li.label) continue;
            ++attempted;
            const AdversarialExample ae = jsma(tv.f1, li.image, li.label, cfg);
            CHECK(count_changed_pixels(ae.original, ae.perturbed) <= budget);
            for (size_t i = 0; i < ae.original.size(); ++i)
                CHECK(ae.perturbed.data[i] >= ae.original.data[i]);
        }
        CHECK(attempted == 25);
    }
}

TEST_CASE("cw_l2 stays strictly inside (0,1) and reports its true l2") {
    const TrainedVictim tv = trained_victim();
    AttackConfig cfg;
    cfg.cw_binary_steps = 3;
    cfg.cw_iterations = 50;

    int done = 0;
    for (const LabeledImage& li : tv.test.items) {
        if (done >= 5) break;
        if (model_predict(tv.f1, li.image).label != li.label) continue;
        ++done;
        const AdversarialExample ae = cw_l2(tv.f1, li.image, li.label, cfg);
        for (float v : ae.perturbed.data) {
            CHECK(v > 0.0f);
            CHECK(v < 1.0f);
        }
        CHECK(ae.l2 == doctest::Approx(l2_distance(ae.original, ae.perturbed))
                           .epsilon(1e-5));
        if (ae.success)
            CHECK(model_predict(tv.f1, ae.perturbed).label != li.label);
    }
    CHECK(done == 5);
}

TEST_CASE("cw_l2 keeps delta tiny when the input is already misclassified") {
    const TrainedVictim tv = trained_victim();
    // find a test image f1 gets wrong, attack w.r.t. the (wrong) predicted label's
    // complement: use an image misclassified relative to its true label
    const LabeledImage* wrong = nullptr;
    for (const LabeledImage& li : tv.test.items)
        if (model_predict(tv.f1, li.image).label != li.label) {
            wrong = &li;
            break;
        }
    if (wrong == nullptr) return;  // accuracy 100% on this seed; nothing to assert
    AttackConfig cfg;
    cfg.cw_binary_steps = 1;
    cfg.cw_iterations = 50;
    const AdversarialExample ae = cw_l2(tv.f1, wrong->image, wrong->label, cfg);
    CHECK(l2_distance(ae.original, ae.perturbed) < 0.05f);
}

TEST_CASE("cw successes have smaller median l2 than fgsm successes") {
    const TrainedVictim tv = trained_victim();
    AttackConfig cfg;
    cfg.fgsm_epsilon = 0.1f;
    cfg.cw_binary_steps = 3;
    cfg.cw_iterations = 60;

    std::vector<float> cw_l2s, fg_l2s;
    int tried = 0;
    for (const LabeledImage& li : tv.test.items) {
        if (tried >= 15) break;
        if (model_predict(tv.f1, li.image).label != li.label) continue;
        ++tried;
        const AdversarialExample c = cw_l2(tv.f1, li.image, li.label, cfg);
        const AdversarialExample f = fgsm(tv.f1, li.image, li.label, cfg.fgsm_epsilon);
        if (c.success && f.success) {  // matched success set
            cw_l2s.push_back(c.l2);
            fg_l2s.push_back(f.l2);
        }
    }
    REQUIRE(cw_l2s.size() >= 3);
    std::sort(cw_l2s.begin(), cw_l2s.end());
    std::sort(fg_l2s.begin(), fg_l2s.end());
    CHECK(cw_l2s[cw_l2s.size() / 2] < fg_l2s[fg_l2s.size() / 2]);
}

TEST_CASE("fgsm linf bound and overall success accounting") {
    const TrainedVictim tv = trained_victim();
    int successes = 0, attempted = 0;
    for (const LabeledImage& li : tv.test.items) {
        if (attempted >= 30) break;
        if (model_predict(tv.f1, li.image).label != li.label) continue;
        ++attempted;
        const AdversarialExample ae = fgsm(tv.f1, li.image, li.label, 0.1f);
        CHECK(linf_distance(ae.original, ae.perturbed) <= 0.1f + 1e-7f);
        CHECK(ae.success == attack_success(tv.f1, ae, li.label));
        if (ae.success) ++successes;
    }
    CHECK(attempted == 30);
    CHECK(double(successes) / attempted > 0.5);
}

TEST_CASE("attack_success exclusions") {
    const Model m = linear_victim(Tensor({2, 2}, {1, 0, 0, 1}), Tensor({2}, 0.0f));
    AdversarialExample ae;
    ae.original = Tensor({1, 1, 2}, {0.9f, 0.1f});
    ae.perturbed = ae.original;
    CHECK_FALSE(attack_success(m, ae, 0));  // unperturbed, correct
    CHECK_FALSE(attack_success(m, ae, 1));  // original already misclassified
}

TEST_CASE("adversarial set manifest+blob round trip") {
    const Model m = linear_victim(Tensor({2, 2}, {1, 0, 0, 1}), Tensor({2}, 0.0f));
    std::vector<AdversarialExample> set;
    set.push_back(fgsm(m, Tensor({1, 1, 2}, {0.6f, 0.4f}), 0, 0.1f));
    set.push_back(fgsm(m, Tensor({1, 1, 2}, {0.3f, 0.6f}), 1, 0.05f));
    set[0].source_index = 4;
    set[1].source_index = 9;

    const std::string dir = std::filesystem::temp_directory_path().string();
    AttackConfig cfg;
    save_adversarial_set(set, cfg, {1, 1, 2}, dir, "landet_test_advset");
    const auto loaded = load_adversarial_set(dir, "landet_test_advset");
    REQUIRE(loaded.size() == 2);
    for (size_t i = 0; i < 2; ++i) {
        CHECK(loaded[i].original.data == set[i].original.data);
        CHECK(loaded[i].perturbed.data == set[i].perturbed.data);
        CHECK(loaded[i].source_index == set[i].source_index);
        CHECK(loaded[i].success == set[i].success);
        CHECK(loaded[i].l2 == set[i].l2);
    }
    std::filesystem::remove(dir + "/landet_test_advset.json");
    std::filesystem::remove(dir + "/landet_test_advset.bin");
}

TEST_CASE("attacks are deterministic given identical inputs") {
    const TrainedVictim tv = trained_victim();
    const LabeledImage& li = tv.test.items[1];
    AttackConfig cfg;
    cfg.cw_binary_steps = 2;
    cfg.cw_iterations = 30;

    const AdversarialExample a1 = fgsm(tv.f1, li.image, li.label, 0.1f);
    const AdversarialExample a2 = fgsm(tv.f1, li.image, li.label, 0.1f);
    CHECK(a1.perturbed.data == a2.perturbed.data);

    const AdversarialExample j1 = jsma(tv.f1, li.image, li.label, cfg);
    const AdversarialExample j2 = jsma(tv.f1, li.image, li.label, cfg);
    CHECK(j1.perturbed.data == j2.perturbed.data);

    const AdversarialExample c1 = cw_l2(tv.f1, li.image, li.label, cfg);
    const AdversarialExample c2 = cw_l2(tv.f1, li.image, li.label, cfg);
    CHECK(c1.perturbed.data == c2.perturbed.data);
}
