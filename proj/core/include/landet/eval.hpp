#pragma once

#include <map>
#include <string>
#include <vector>

#include "landet/attacks.hpp"
#include "landet/datasets.hpp"
#include "landet/detector.hpp"
#include "landet/training.hpp"

namespace landet {

struct MetricsReport {
    std::string attack;
    std::string setting;  // direct | transfer | filtered
    double tp_rate = 0.0;
    double tn_rate = 0.0;
    double recovery_rate = 0.0;   // filtered setting
    double retention_rate = 0.0;
    size_t adversarial_count = 0;
    size_t benign_count = 0;
    size_t tp = 0, fn = 0, tn = 0, fp = 0;
    // transfer-only breakout: TP over the subset that also fools f1
    double transfer_fooling_tp_rate = 0.0;
    size_t transfer_fooling_count = 0;
};

// Fraction of pairs whose mask keeps its classification:
// argmax f2(g(x*)) == argmax f2(g(x)).
double retention_rate(const Model& g, const Model& f2,
                      const std::vector<AdversarialExample>& pairs);

// TP = adversarial entries flagged, TN = benign entries passed.
MetricsReport detection_metrics(const Model& f1, const Model& g, const Model& f2,
                                const std::vector<LabeledImage>& benign,
                                const std::vector<AdversarialExample>& adversarial);

// Fraction of adversarial examples whose mask classification equals the
// true label.
double recovery_rate(const Model& g, const Model& f2,
                     const std::vector<AdversarialExample>& adversarial);

// PGM (P5, maxval 255) per mask; channels stacked vertically.
void export_mask_images(const std::vector<Tensor>& masks, const std::string& directory,
                        const std::string& prefix = "mask");
Tensor read_pgm(const std::string& path);

struct ExperimentConfig {
    // toy dataset
    int class_count = 10;
    std::vector<int> dims = {3, 16, 16};
    int samples_per_class = 200;
    uint64_t seed = 1;
    // training
    TrainConfig f1_train;
    TrainConfig f1p_train;
    TrainConfig g_train;
    TrainConfig f2_train;
    // attacks & pairing
    AttackConfig attack;
    std::vector<AttackKind> attacks = {AttackKind::fgsm, AttackKind::jsma,
                                       AttackKind::cw_l2};
    size_t pairs = 25;
    bool run_transfer = true;
    bool run_filtered = true;
    FilterMode filter = FilterMode::strict;
    bool shared_benign_pool = true;

    static ExperimentConfig defaults();
    static ExperimentConfig from_json_file(const std::string& path);
    static ExperimentConfig from_json(const std::string& text);
    std::string to_json() const;
};

struct ExperimentResult {
    Model f1, f1p, g, f2;
    double f1_test_accuracy = 0.0;
    double f1p_test_accuracy = 0.0;
    double f2_mask_accuracy = 0.0;  // on masks of the test set
    double kept_fraction = 0.0;     // strict filter over the test set
    std::vector<MetricsReport> metrics;
    std::map<std::string, std::string> verdict_csv;  // "<setting>_<attack>" -> csv

    // Seed-deterministic JSON (no wall-clock inside).
    std::string report_json(const ExperimentConfig& config) const;
};

// Full pipeline: trains f1 (and f1'), g against f1, f2 on masks, runs the
// attack suite in the direct / transfer / filtered settings and aggregates
// all metrics. Stage failures are rethrown with the stage name attached.
ExperimentResult run_experiment(const ExperimentConfig& config);

}  // namespace landet
