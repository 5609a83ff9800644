#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "helpers.hpp"
#include "landet/datasets.hpp"
#include "landet/training.hpp"

using namespace landet;
using namespace landet::testing;

namespace {

std::string temp_file(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

// Two hand-written CIFAR records: labels 3 and 7, pixel bytes ramping.
std::vector<unsigned char> fixture_bytes() {
    std::vector<unsigned char> bytes;
    for (int rec = 0; rec < 2; ++rec) {
        bytes.push_back(rec == 0 ? 3 : 7);
        for (int i = 0; i < 3072; ++i)
            bytes.push_back(static_cast<unsigned char>((i + rec * 17) % 256));
    }
    return bytes;
}

}  // namespace

TEST_CASE("cifar fixture parses labels and exact pixel scaling") {
    const std::string path = temp_file("landet_cifar_fixture.bin");
    const auto bytes = fixture_bytes();
    std::ofstream(path, std::ios::binary | std::ios::trunc)
        .write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));

    const Dataset ds = parse_cifar_file(path, "fix");
    REQUIRE(ds.size() == 2);
    CHECK(ds.items[0].label == 3);
    CHECK(ds.items[1].label == 7);
    CHECK(ds.items[0].image.data[0] == doctest::Approx(0.0f / 255.0f));
    CHECK(ds.items[0].image.data[1] == doctest::Approx(1.0f / 255.0f));
    CHECK(ds.items[1].image.data[0] == doctest::Approx(17.0f / 255.0f));
    CHECK(ds.items[0].image.shape == std::vector<int>{3, 32, 32});
    std::remove(path.c_str());
}

TEST_CASE("cifar record round trip is bit exact") {
    const std::string path = temp_file("landet_cifar_rt.bin");
    const auto bytes = fixture_bytes();
    std::ofstream(path, std::ios::binary | std::ios::trunc)
        .write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));

    const Dataset ds = parse_cifar_file(path, "fix");
    std::vector<unsigned char> rebuilt;
    for (const LabeledImage& li : ds.items) {
        const auto rec = serialize_cifar_record(li);
        rebuilt.insert(rebuilt.end(), rec.begin(), rec.end());
    }
    CHECK(rebuilt == bytes);
    std::remove(path.c_str());
}

TEST_CASE("cifar loader error cases") {
    const std::string path = temp_file("landet_cifar_bad.bin");

    SUBCASE("zero-length file") {
        std::ofstream(path, std::ios::binary | std::ios::trunc);
        try {
            parse_cifar_file(path, "bad");
            FAIL("expected format error");
        } catch (const Error& e) {
            CHECK(e.kind == Error::Kind::format);
        }
    }

    SUBCASE("length not a multiple of 3073") {
        std::vector<char> junk(3073 + 10, 0);
        std::ofstream(path, std::ios::binary | std::ios::trunc)
            .write(junk.data(), std::streamsize(junk.size()));
        try {
            parse_cifar_file(path, "bad");
            FAIL("expected format error");
        } catch (const Error& e) {
            CHECK(e.kind == Error::Kind::format);
        }
    }

    SUBCASE("label byte > 9") {
        std::vector<unsigned char> rec(3073, 0);
        rec[0] = 12;
        std::ofstream(path, std::ios::binary | std::ios::trunc)
            .write(reinterpret_cast<const char*>(rec.data()), std::streamsize(rec.size()));
        try {
            parse_cifar_file(path, "bad");
            FAIL("expected format error");
        } catch (const Error& e) {
            CHECK(e.kind == Error::Kind::format);
        }
    }

    SUBCASE("missing file") {
        try {
            parse_cifar_file(temp_file("landet_does_not_exist.bin"), "bad");
            FAIL("expected io error");
        } catch (const Error& e) {
            CHECK(e.kind == Error::Kind::io);
        }
    }

    std::remove(path.c_str());
}

TEST_CASE("toy dataset determinism, balance, range, disjointness") {
    const auto [train, test] = gen_toy_dataset(4, {3, 8, 8}, 20, 31337);
    const auto [train2, test2] = gen_toy_dataset(4, {3, 8, 8}, 20, 31337);

    CHECK(train.size() == 4 * 20);
    CHECK(test.size() == 4 * 5);  // quarter of train, per class

    // bitwise determinism
    for (size_t i = 0; i < train.size(); ++i)
        CHECK(train.items[i].image.data == train2.items[i].image.data);
    for (size_t i = 0; i < test.size(); ++i)
        CHECK(test.items[i].image.data == test2.items[i].image.data);

    // exact class balance and pixel range
    std::vector<int> counts(4, 0);
    for (const LabeledImage& li : train.items) {
        ++counts[li.label];
        for (float v : li.image.data) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
    }
    for (int c : counts) CHECK(c == 20);

    // no leakage: source ids disjoint
    std::set<std::string> train_ids, test_ids;
    for (const LabeledImage& li : train.items) train_ids.insert(li.source_id);
    for (const LabeledImage& li : test.items) test_ids.insert(li.source_id);
    CHECK(train_ids.size() == train.size());
    for (const std::string& id : test_ids) CHECK(train_ids.count(id) == 0);

    const auto [train3, test3] = gen_toy_dataset(4, {3, 8, 8}, 20, 31338);
    CHECK(train3.items[0].image.data != train.items[0].image.data);
}

TEST_CASE("toy dataset rejects invalid geometry") {
    CHECK_THROWS_AS(gen_toy_dataset(4, {3, 4, 4}, 10, 1), Error);
    CHECK_THROWS_AS(gen_toy_dataset(11, {3, 8, 8}, 10, 1), Error);
    CHECK_THROWS_AS(gen_toy_dataset(4, {3, 8, 8}, 0, 1), Error);
}

TEST_CASE("toy default config is learnable to >= 0.95 by f1") {
    const auto [train, test] = gen_toy_dataset(10, {3, 16, 16}, 200, 1);
    Model f1 = build_model(ModelRole::image_classifier_f1, {3, 16, 16}, 10, 1);
    TrainConfig c;
    c.epochs = 10;
    c.batch_size = 32;
    c.learning_rate = 0.003f;
    c.seed = 1;
    const TrainReport r = train_classifier(f1, train, test, c);
    CHECK(r.test_accuracy >= 0.95);
}

TEST_CASE("build_paired_set invariants on the toy pipeline") {
    auto [train, test] = gen_toy_dataset(3, {1, 8, 8}, 40, 515);
    Model f1 = build_model(ModelRole::image_classifier_f1, train.dims, 3, 11);
    TrainConfig c;
    c.epochs = 16;
    c.batch_size = 16;
    c.learning_rate = 0.005f;
    c.seed = 7;
    train_classifier(f1, train, test, c);
    REQUIRE(dataset_accuracy(f1, test) >= 0.9);

    AttackConfig cfg;
    cfg.fgsm_epsilon = 0.1f;

    SUBCASE("n=0 gives an empty set") {
        const PairedEvalSet ps = build_paired_set(f1, test, AttackKind::fgsm, cfg, 0);
        CHECK(ps.benign.empty());
        CHECK(ps.adversarial.empty());
    }

    SUBCASE("counts equal; successes re-verify; benign victim-correct and disjoint") {
        const PairedEvalSet ps = build_paired_set(f1, test, AttackKind::fgsm, cfg, 10);
        CHECK(ps.benign.size() == ps.adversarial.size());
        std::set<int> sources;
        for (const AdversarialExample& ae : ps.adversarial) {
            CHECK(ae.success);
            CHECK(attack_success(f1, ae, ae.true_label));  // re-verified
            sources.insert(ae.source_index);
        }
        for (const LabeledImage& li : ps.benign) {
            CHECK(model_predict(f1, li.image).label == li.label);
            // disjoint from attack sources by construction of source ids
            for (const AdversarialExample& ae : ps.adversarial)
                CHECK(li.source_id != test.items[ae.source_index].source_id);
        }
        CHECK(sources.size() == ps.adversarial.size());
    }

    SUBCASE("impossible n raises") {
        try {
            build_paired_set(f1, test, AttackKind::fgsm, cfg, 10000);
            FAIL("expected empty_result");
        } catch (const Error& e) {
            CHECK(e.kind == Error::Kind::empty_result);
        }
    }
}

TEST_CASE("dataset manifest+blob round trip") {
    const auto [train, test] = gen_toy_dataset(3, {1, 8, 8}, 5, 2);
    const std::string dir = std::filesystem::temp_directory_path().string();
    save_dataset(test, dir, "landet_test_ds");
    const Dataset back = load_dataset(dir, "landet_test_ds");
    REQUIRE(back.size() == test.size());
    CHECK(back.class_count == test.class_count);
    CHECK(back.dims == test.dims);
    for (size_t i = 0; i < back.size(); ++i) {
        CHECK(back.items[i].image.data == test.items[i].image.data);  // bitwise
        CHECK(back.items[i].label == test.items[i].label);
        CHECK(back.items[i].source_id == test.items[i].source_id);
    }
    std::filesystem::remove(dir + "/landet_test_ds.json");
    std::filesystem::remove(dir + "/landet_test_ds.bin");
}
