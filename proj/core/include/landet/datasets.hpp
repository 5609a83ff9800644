#pragma once

#include <string>
#include <vector>

#include "landet/attacks.hpp"
#include "landet/models.hpp"
#include "landet/tensor.hpp"

namespace landet {

struct LabeledImage {
    Tensor image;  // [C,H,W], values in [0,1]
    int label = 0;
    std::string source_id;
};

struct Dataset {
    std::vector<LabeledImage> items;
    int class_count = 0;
    std::vector<int> dims;  // [C,H,W]

    size_t size() const { return items.size(); }
};

// CIFAR-10 binary batches (3073-byte records: label byte + 3072 planar
// R,G,B bytes). Pixels scaled to [0,1] by /255. subset_per_file = 0 loads
// everything.
std::pair<Dataset, Dataset> load_cifar10(const std::string& directory,
                                         size_t subset_per_file = 0);

// Parses one directory of raw bytes; exposed for fixtures.
Dataset parse_cifar_file(const std::string& path, const std::string& id_prefix,
                         size_t subset = 0);

// Re-serializes a parsed record to its original 3073 bytes.
std::vector<unsigned char> serialize_cifar_record(const LabeledImage& rec);

// Deterministic procedural classes: per-class oriented stripes plus a
// class-positioned blob, seeded pixel noise sigma = 0.05, clamped to [0,1].
// Train gets samples_per_class per class; test gets a disjoint quarter.
std::pair<Dataset, Dataset> gen_toy_dataset(int class_count, const std::vector<int>& dims,
                                            int samples_per_class, uint64_t seed);

struct PairedEvalSet {
    std::vector<LabeledImage> benign;             // victim-correct, disjoint sources
    std::vector<AdversarialExample> adversarial;  // successes only
    std::string attack;
    uint64_t seed = 0;
};

// First n attack successes over victim-correct test images, paired with n
// victim-correct benign images drawn from sources not used for attacks.
PairedEvalSet build_paired_set(const Model& victim, const Dataset& test,
                               AttackKind attack, const AttackConfig& config, size_t n);

// Manifest JSON + little-endian float blob serialization.
void save_dataset(const Dataset& ds, const std::string& dir, const std::string& name);
Dataset load_dataset(const std::string& dir, const std::string& name);

void save_paired_set(const PairedEvalSet& ps, const AttackConfig& config,
                     const std::vector<int>& dims, const std::string& dir,
                     const std::string& name);

}  // namespace landet
