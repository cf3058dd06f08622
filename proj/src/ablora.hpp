#ifndef DAC_ABLORA_HPP
#define DAC_ABLORA_HPP

#include "numcore.hpp"

namespace dac {

// Additive-bias low-rank adapted linear layer:
//
//   o = w0 * z + gamma * B * (A * z~) + phi
//
// where z~ is the adapter-branch input after dropout (train mode only).
// w0 stays frozen; A, B and phi are the trainable state. A starts as
// unit-variance normal draws, B and phi start at zero, so a fresh layer
// is an exact identity delta.
struct AdaptedLinear {
    Mat w0;          // d1 x d2, frozen
    Mat a;           // r x d2
    Mat b;           // d1 x r
    Vec phi;         // d1
    double gamma = 1.0;
    std::size_t rank = 8;
    double dropout_p = 0.25;
    bool train_phi = true;  // false in plain-LoRA mode

    std::size_t d1() const { return b.rows; }
    std::size_t d2() const { return a.cols; }

    bool delta_is_zero() const;
};

struct AdapterGrads {
    Mat d_a;   // r x d2
    Mat d_b;   // d1 x r
    Vec d_phi; // d1
    Vec d_z;   // d2

    void accumulate(const AdapterGrads& other);
};

struct MergedLinear {
    Mat w;    // w0 + gamma * B * A
    Vec bias; // phi
};

// Per-call forward state consumed by backward().
struct AdapterCache {
    Vec z_tilde;    // adapter-branch input after dropout scaling
    Vec az;         // A * z_tilde
    Vec drop_scale; // dz~/dz per entry: 0 dropped, 1/(1-p) kept, 1 in eval
    bool valid = false;
};

// Fresh adapter around an externally supplied frozen weight. The caller
// installs w0 afterwards (the backbone loader owns it).
AdaptedLinear init_adapter(std::size_t d1, std::size_t d2, std::size_t rank,
                           double gamma, double dropout_p, Rng& rng);

// Adapted forward pass. Dropout touches the adapter branch input only; the frozen
// path always sees the raw z. A fresh layer (B, phi all zero) returns
// w0 * z with the adapter branch skipped, bit-for-bit.
Vec adapter_forward(const AdaptedLinear& layer, const Vec& z, bool train_mode,
                    Rng& rng, AdapterCache* cache = nullptr);

// Exact reverse-mode gradients for (A, B, phi) plus the input gradient.
// No gradient is produced for w0.
AdapterGrads adapter_backward(const AdaptedLinear& layer, const AdapterCache& cache,
                              const Vec& grad_o);

// Fold the delta into a plain affine layer; equals eval-mode forward.
MergedLinear merge(const AdaptedLinear& layer);

// Classic-LoRA view: phi pinned at zero and excluded from updates.
AdaptedLinear as_plain_lora(const AdaptedLinear& layer);

AdapterGrads zero_grads(const AdaptedLinear& layer);

}  // namespace dac

#endif  // DAC_ABLORA_HPP
