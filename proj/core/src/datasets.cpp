#include "landet/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

namespace landet {

using nlohmann::ordered_json;

namespace {
constexpr size_t kCifarRecord = 3073;
constexpr size_t kCifarPixels = 3072;
}  // namespace

Dataset parse_cifar_file(const std::string& path, const std::string& id_prefix,
                         size_t subset) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) fail(Error::Kind::io, "cannot open CIFAR file: " + path);
    const auto len = size_t(in.tellg());
    if (len == 0 || len % kCifarRecord != 0)
        fail(Error::Kind::format, "CIFAR file length not a multiple of 3073: " + path);
    in.seekg(0);

    size_t count = len / kCifarRecord;
    if (subset > 0) count = std::min(count, subset);

    Dataset ds;
    ds.class_count = 10;
    ds.dims = {3, 32, 32};
    std::vector<unsigned char> rec(kCifarRecord);
    for (size_t r = 0; r < count; ++r) {
        in.read(reinterpret_cast<char*>(rec.data()), std::streamsize(kCifarRecord));
        if (size_t(in.gcount()) != kCifarRecord)
            fail(Error::Kind::truncated, "truncated CIFAR record in " + path);
        if (rec[0] > 9) fail(Error::Kind::format, "CIFAR label byte > 9 in " + path);
        LabeledImage li;
        li.label = rec[0];
        li.source_id = id_prefix + "/" + std::to_string(r);
        li.image = Tensor({3, 32, 32});
        for (size_t i = 0; i < kCifarPixels; ++i)
            li.image.data[i] = float(rec[1 + i]) / 255.0f;
        ds.items.push_back(std::move(li));
    }
    return ds;
}

std::vector<unsigned char> serialize_cifar_record(const LabeledImage& rec) {
    if (rec.image.size() != kCifarPixels)
        fail(Error::Kind::shape_mismatch, "not a CIFAR-shaped record");
    std::vector<unsigned char> out(kCifarRecord);
    out[0] = static_cast<unsigned char>(rec.label);
    for (size_t i = 0; i < kCifarPixels; ++i)
        out[1 + i] = static_cast<unsigned char>(std::lround(rec.image.data[i] * 255.0f));
    return out;
}

std::pair<Dataset, Dataset> load_cifar10(const std::string& directory,
                                         size_t subset_per_file) {
    Dataset train;
    train.class_count = 10;
    train.dims = {3, 32, 32};
    for (int b = 1; b <= 5; ++b) {
        const std::string path = directory + "/data_batch_" + std::to_string(b) + ".bin";
        Dataset part = parse_cifar_file(path, "cifar/train_" + std::to_string(b),
                                        subset_per_file);
        for (auto& it : part.items) train.items.push_back(std::move(it));
    }
    Dataset test = parse_cifar_file(directory + "/test_batch.bin", "cifar/test",
                                    subset_per_file);
    return {std::move(train), std::move(test)};
}

namespace {

// Procedural class pattern with *localized, movable* evidence: the only
// class signal is a gaussian blob whose vertical band encodes the class;
// its horizontal position is uniform per sample, and a class-specific
// channel gain tints it. The sinusoidal stripe background is random per
// sample (orientation, frequency, phase) and carries no class information —
// it is structured clutter. This layout matters for the mask pipeline: no
// fixed mask can cover every possible blob location without paying the full
// sparsity cost, so a sparse attention mask has to track the blob, and the
// mask itself becomes class-discriminative through the blob's band.
void render_toy_image(Tensor& img, int cls, int class_count, Rng& rng) {
    const int C = img.shape[0], H = img.shape[1], W = img.shape[2];
    const float angle = 3.14159265f * rng.uniform();
    const float freq = rng.uniform(2.0f, 5.0f);
    const float ca = std::cos(angle), sa = std::sin(angle);
    const float phase = rng.uniform(0.0f, 1.0f);
    const float bx = rng.uniform(0.15f, 0.85f);
    // A rare sample places the blob in a random class band while keeping the
    // label's tint: the tint still identifies the class, but attention-mask
    // geometry alone does not, so a mask-only classifier cannot be perfect.
    int band = cls;
    if (rng.uniform() < 0.015f)
        band = int(rng.uniform() * float(class_count)) % class_count;
    const float by =
        0.08f + 0.84f * (float(band) + rng.uniform(0.25f, 0.75f)) / float(class_count);

    for (int c = 0; c < C; ++c) {
        // class-specific blob tint keeps color informative at the blob only
        const float gain = 0.6f + 0.4f * std::cos(2.1f * float(cls) + 1.7f * float(c));
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                const float u = float(x) / float(W);
                const float v = float(y) / float(H);
                const float stripe =
                    std::sin(6.2831853f * freq * (u * ca + v * sa) + 6.2831853f * phase);
                const float dx = u - bx;
                const float dy = v - by;
                const float blob = std::exp(-(dx * dx + dy * dy) / 0.018f);
                float val = 0.45f + 0.10f * stripe + 0.60f * gain * blob;
                val += 0.035f * rng.normal();
                img.data[(size_t(c) * H + y) * W + x] = std::clamp(val, 0.0f, 1.0f);
            }
        }
    }
}

}  // namespace

std::pair<Dataset, Dataset> gen_toy_dataset(int class_count, const std::vector<int>& dims,
                                            int samples_per_class, uint64_t seed) {
    if (dims.size() != 3 || dims[1] < 8 || dims[2] < 8)
        fail(Error::Kind::invalid_argument, "toy dims must be [C,H,W] with H,W >= 8");
    if (class_count < 2 || class_count > 10)
        fail(Error::Kind::invalid_argument, "toy class count must be in [2,10]");
    if (samples_per_class < 1)
        fail(Error::Kind::invalid_argument, "samples_per_class < 1");

    Dataset train, test;
    train.class_count = test.class_count = class_count;
    train.dims = test.dims = dims;
    const int test_per_class = std::max(1, samples_per_class / 4);

    Rng root(seed);
    for (int cls = 0; cls < class_count; ++cls) {
        Rng crng = root.fork(uint64_t(cls) + 1);
        for (int i = 0; i < samples_per_class + test_per_class; ++i) {
            LabeledImage li;
            li.label = cls;
            li.image = Tensor(dims);
            render_toy_image(li.image, cls, class_count, crng);
            const bool is_train = i < samples_per_class;
            li.source_id = std::string("toy/") + (is_train ? "train/" : "test/") +
                           std::to_string(cls) + "/" + std::to_string(i);
            (is_train ? train : test).items.push_back(std::move(li));
        }
    }
    return {std::move(train), std::move(test)};
}

PairedEvalSet build_paired_set(const Model& victim, const Dataset& test,
                               AttackKind attack, const AttackConfig& config, size_t n) {
    PairedEvalSet ps;
    ps.attack = attack_name(attack);
    if (n == 0) return ps;

    std::set<int> attack_sources;
    for (int i = 0; i < int(test.size()) && ps.adversarial.size() < n; ++i) {
        const LabeledImage& li = test.items[i];
        if (model_predict(victim, li.image).label != li.label) continue;
        AdversarialExample ae = run_attack(attack, victim, li.image, li.label, config);
        ae.source_index = i;
        if (!ae.success) continue;
        attack_sources.insert(i);
        ps.adversarial.push_back(std::move(ae));
    }
    if (ps.adversarial.size() < n)
        fail(Error::Kind::empty_result,
             "build_paired_set: only " + std::to_string(ps.adversarial.size()) + "/" +
                 std::to_string(n) + " attack successes for " + attack_name(attack));

    // benign partners: victim-correct images from sources not attacked
    for (int i = 0; i < int(test.size()) && ps.benign.size() < n; ++i) {
        if (attack_sources.count(i)) continue;
        const LabeledImage& li = test.items[i];
        if (model_predict(victim, li.image).label != li.label) continue;
        ps.benign.push_back(li);
    }
    if (ps.benign.size() < n)
        fail(Error::Kind::empty_result, "build_paired_set: not enough benign images");
    return ps;
}

void save_dataset(const Dataset& ds, const std::string& dir, const std::string& name) {
    ordered_json man;
    man["kind"] = "dataset";
    man["class_count"] = ds.class_count;
    man["dims"] = ds.dims;
    man["count"] = ds.size();
    ordered_json items = ordered_json::array();
    for (const LabeledImage& li : ds.items) {
        ordered_json e;
        e["label"] = li.label;
        e["source_id"] = li.source_id;
        items.push_back(std::move(e));
    }
    man["items"] = std::move(items);

    std::ofstream mj(dir + "/" + name + ".json", std::ios::trunc);
    if (!mj) fail(Error::Kind::io, "cannot write dataset manifest in " + dir);
    mj << man.dump(2) << "\n";

    std::ofstream blob(dir + "/" + name + ".bin", std::ios::binary | std::ios::trunc);
    if (!blob) fail(Error::Kind::io, "cannot write dataset blob in " + dir);
    for (const LabeledImage& li : ds.items)
        blob.write(reinterpret_cast<const char*>(li.image.data.data()),
                   std::streamsize(li.image.size() * sizeof(float)));
    if (!blob) fail(Error::Kind::io, "dataset blob write failed in " + dir);
}

Dataset load_dataset(const std::string& dir, const std::string& name) {
    std::ifstream mj(dir + "/" + name + ".json");
    if (!mj) fail(Error::Kind::io, "cannot read dataset manifest in " + dir);
    ordered_json man;
    try {
        man = ordered_json::parse(mj);
    } catch (const std::exception& e) {
        fail(Error::Kind::format, std::string("bad dataset manifest: ") + e.what());
    }

    Dataset ds;
    ds.class_count = man.at("class_count").get<int>();
    ds.dims = man.at("dims").get<std::vector<int>>();
    const size_t count = man.at("count").get<size_t>();
    const size_t d = Tensor::numel(ds.dims);

    std::ifstream blob(dir + "/" + name + ".bin", std::ios::binary);
    if (!blob) fail(Error::Kind::io, "cannot read dataset blob in " + dir);

    const auto& items = man.at("items");
    if (items.size() != count) fail(Error::Kind::format, "dataset count mismatch");
    for (size_t i = 0; i < count; ++i) {
        LabeledImage li;
        li.label = items[i].at("label").get<int>();
        li.source_id = items[i].at("source_id").get<std::string>();
        li.image = Tensor(ds.dims);
        blob.read(reinterpret_cast<char*>(li.image.data.data()),
                  std::streamsize(d * sizeof(float)));
        if (!blob) fail(Error::Kind::truncated, "truncated dataset blob");
        ds.items.push_back(std::move(li));
    }
    return ds;
}

void save_paired_set(const PairedEvalSet& ps, const AttackConfig& config,
                     const std::vector<int>& dims, const std::string& dir,
                     const std::string& name) {
    Dataset ben;
    ben.class_count = 0;
    ben.dims = dims;
    ben.items = ps.benign;
    save_dataset(ben, dir, name + "_benign");
    save_adversarial_set(ps.adversarial, config, dims, dir, name + "_adversarial");
}

}  // namespace landet
