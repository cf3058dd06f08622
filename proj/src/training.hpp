#ifndef DAC_TRAINING_HPP
#define DAC_TRAINING_HPP

#include <functional>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "encoder.hpp"

namespace dac {

enum class LoraMode { AbLora, PlainLora, Frozen };

LoraMode lora_mode_from_name(const std::string& name);
const char* lora_mode_name(LoraMode m);

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 4;
    double lr = 2e-4;
    double tau = 0.07;
    std::size_t rank = 8;
    double gamma = 1.0;
    double lora_alpha = 0.0;  // > 0 selects the gamma = lora_alpha / rank convention
    double dropout_p = 0.25;
    std::uint64_t seed = 0;
    LoraMode lora_mode = LoraMode::AbLora;
    bool renormalize_pooled = false;  // re-normalize g before the loss (off: plain view mean)

    double effective_gamma() const { return lora_alpha > 0.0 ? lora_alpha / double(rank) : gamma; }
    void validate() const;
};

struct TrainReport {
    std::vector<double> epoch_mean_loss;
    std::vector<double> epoch_lr;  // lr at the first step of each epoch
    std::size_t steps = 0;
    std::size_t objects = 0;
    std::size_t classes = 0;
    // "<tower>.L<i>" -> sha256 of the adapter's (A,B,phi) doubles
    std::vector<std::pair<std::string, std::string>> adapter_checksums;
};

struct TrainResult {
    EncoderTower vis;
    EncoderTower txt;
    TrainReport report;
};

struct LossGrads {
    double loss = 0.0;
    Vec per_sample;  // -log p_k[y_k] per batch row
    Mat d_g;         // N x d
    Mat d_c;         // L x d
};

// Temperature-scaled cross-entropy over cosine-space logits g_k . c_i / tau,
// with exact gradients for both the pooled embeddings and the class weights.
LossGrads contrastive_ce_loss(const Mat& g_batch, const Mat& class_w,
                              const std::vector<std::size_t>& labels, double tau);

// Chain rule through the view mean: every view receives d_g / M, then the
// per-view caches run backwards through the tower.
void backprop_object(const EncoderTower& vt, const std::vector<EncodeCache>& view_caches,
                     const Vec& d_g, TowerGrads& sink);

// Backward over the per-class description encodings (rows of d_c).
void backprop_class_weights(const EncoderTower& tt, const std::vector<EncodeCache>& caches,
                            const Mat& d_c, TowerGrads& sink);

// eta_t = eta0 * (1 + cos(pi t / T)) / 2
double cosine_lr(std::size_t t, std::size_t total_steps, double eta0);

// p <- p - lr * grad on A, B and (when trainable) phi. w0 untouched.
void sgd_update_adapter(AdaptedLinear& layer, const AdapterGrads& grads, double lr);
void sgd_step(EncoderTower& vis, EncoderTower& txt, const TowerGrads& vis_grads,
              const TowerGrads& txt_grads, double lr);

// Full Adapt step: attach adapters per lora_mode, run the epoch loop with a
// per-step cosine schedule, deterministic per seed.
TrainResult train(const OpenSetDataset& ds, const EncoderTower& vis_backbone,
                  const EncoderTower& txt_backbone, const TrainConfig& cfg);

// ---- gradient-check harness -------------------------------------------------

// Central finite differences of f over the n doubles at p.
Vec finite_diff_gradient(const std::function<double()>& f, double* p, std::size_t n,
                         double eps = 1e-5);

// max over entries of |a - f| / max(|a|, |f|, floor)
double max_grad_rel_error(const Vec& analytic, const Vec& fd, double floor = 1e-4);

// Checks every adapter parameter of both towers against central differences
// of the full contrastive loss. Dropout is disabled during the check.
// Returns the max relative error over all parameters.
double grad_check(EncoderTower& vt, EncoderTower& tt,
                  const std::vector<ObjectRecord>& objects,
                  const std::vector<Vec>& class_descriptions,
                  const std::vector<std::size_t>& labels, double tau,
                  double eps = 1e-5);

}  // namespace dac

#endif  // DAC_TRAINING_HPP
