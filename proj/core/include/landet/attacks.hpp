#pragma once

#include <string>
#include <vector>

#include "landet/models.hpp"
#include "landet/tensor.hpp"

namespace landet {

enum class AttackKind { fgsm, jsma, cw_l2 };

std::string attack_name(AttackKind k);
AttackKind attack_from_name(const std::string& s);

struct AttackConfig {
    // FGSM
    float fgsm_epsilon = 0.1f;
    // JSMA
    float jsma_theta = 1.0f;        // per-step pixel increment
    float jsma_gamma = 0.05f;       // max modified pixels as fraction of d
    // C&W (l2)
    float cw_c_start = 1.0f;
    int cw_binary_steps = 5;
    int cw_iterations = 200;
    float cw_step = 0.01f;
    float cw_kappa = 0.0f;

    void validate() const;
};

struct AdversarialExample {
    Tensor original;
    Tensor perturbed;
    AttackKind attack = AttackKind::fgsm;
    int true_label = 0;
    int source_index = -1;          // position in the source dataset
    int pred_before = -1;           // victim on original
    int pred_after = -1;            // victim on perturbed
    bool success = false;
    // budget record
    float epsilon = 0.0f;           // fgsm
    int pixels_changed = 0;         // jsma
    float l2 = 0.0f;                // cw (also recorded for the others)
};

// x* = clamp(x + eps * sign(grad_x CE(victim(x), y_true)), 0, 1); sign(0)=0.
AdversarialExample fgsm(const Model& victim, const Tensor& x, int y_true, float epsilon);

// score_i = alpha_i * |beta_i| when alpha_i > 0 and beta_i < 0, else 0,
// with alpha = dZ_target/dx and beta = sum_{j != target} dZ_j/dx.
std::vector<float> jsma_saliency(const Model& victim, const Tensor& x, int target);

// Single-pixel increasing variant, target = runner-up class.
AdversarialExample jsma(const Model& victim, const Tensor& x, int y_true,
                        const AttackConfig& config);

// tanh-space Adam with binary search on c; keeps the smallest-l2 success.
AdversarialExample cw_l2(const Model& victim, const Tensor& x, int y_true,
                         const AttackConfig& config);

AdversarialExample run_attack(AttackKind kind, const Model& victim, const Tensor& x,
                              int y_true, const AttackConfig& config);

// True iff the victim classifies the original correctly and the perturbed
// example differently from y_true.
bool attack_success(const Model& victim, const AdversarialExample& ae, int y_true);

float l2_distance(const Tensor& a, const Tensor& b);
float linf_distance(const Tensor& a, const Tensor& b);
int count_changed_pixels(const Tensor& a, const Tensor& b);

// Manifest JSON + raw little-endian float blobs (original then perturbed
// per example).
void save_adversarial_set(const std::vector<AdversarialExample>& set,
                          const AttackConfig& config, const std::vector<int>& dims,
                          const std::string& dir, const std::string& name);
std::vector<AdversarialExample> load_adversarial_set(const std::string& dir,
                                                     const std::string& name);

}  // namespace landet
