#pragma once

#include <string>
#include <vector>

#include "landet/datasets.hpp"
#include "landet/models.hpp"

namespace landet {

struct DetectionVerdict {
    int y1 = -1;               // image classifier's decision
    int y2 = -1;               // mask classifier's decision on g(x)
    bool is_adversarial = false;  // y1 != y2
    Tensor mask;               // retained for export
};

// m = g(x) peak-normalized to max 1 (identity for an all-zero mask);
// values in [0,1]^d.
Tensor generate_mask(const Model& g, const Tensor& x);

// Agreement rule: benign iff f2(g(x)) agrees with f1(x).
DetectionVerdict detect(const Model& f1, const Model& g, const Model& f2,
                        const Tensor& x);

enum class FilterMode {
    strict,     // keep x where f2(g(x)) == label AND f1(x) == label
    mask_only,  // keep x where f2(g(x)) == label
};

struct FilteredSet {
    std::vector<LabeledImage> kept;
    std::vector<int> kept_indices;
    double kept_fraction = 0.0;
    FilterMode mode = FilterMode::strict;
};

FilteredSet filter_benign_set(const Model& f1, const Model& g, const Model& f2,
                              const Dataset& labeled_test,
                              FilterMode mode = FilterMode::strict);

// Verdict stream rows: index, y_true, y1, y2, is_adversarial, attack kind.
struct VerdictRow {
    int index = 0;
    int y_true = 0;
    int y1 = 0;
    int y2 = 0;
    bool is_adversarial = false;
    std::string attack = "benign";
};

std::string verdicts_to_csv(const std::vector<VerdictRow>& rows);
std::vector<VerdictRow> verdicts_from_csv(const std::string& csv);

}  // namespace landet
