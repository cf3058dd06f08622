#ifndef DAC_ENCODER_HPP
#define DAC_ENCODER_HPP

#include <optional>
#include <vector>

#include "ablora.hpp"
#include "numcore.hpp"

namespace dac {

// One frozen affine layer of a tower. Layers flagged adaptable carry the
// AB-LoRA delta once adapters are attached; the frozen weight then doubles
// as the adapter's w0.
struct TowerLayer {
    Mat w;      // d1 x d2, frozen
    Vec bias;   // d1, frozen (merges absorb phi here)
    Activation act = Activation::Identity;
    bool adaptable = false;
    std::optional<AdaptedLinear> adapter;
};

// Stack of frozen layers mapping raw feature vectors to unit-norm
// embeddings. normalize_output is the per-view normalization switch;
// contrastively pretrained encoders normalize, so the default is on.
struct EncoderTower {
    std::vector<TowerLayer> layers;
    std::size_t out_dim = 0;
    bool normalize_output = true;

    std::size_t in_dim() const { return layers.empty() ? 0 : layers.front().w.cols; }
};

struct LayerTrace {
    Vec pre;   // linear output incl. bias
    Vec post;  // after activation
    AdapterCache adapter;
};

struct EncodeCache {
    std::vector<LayerTrace> layers;
    Vec pre_norm;
    Vec out;
    bool valid = false;
};

// Gradients for every adapted layer of one tower, indexed by layer position.
struct TowerGrads {
    std::vector<AdapterGrads> layers;  // empty entry for non-adapted layers

    void accumulate(const TowerGrads& other);
    bool empty_set() const;
};

// Consistency check: dimension chaining and the adaptable/adapter pairing.
void validate_tower(const EncoderTower& tower);

// Attach fresh AB-LoRA adapters to every adaptable layer. Layer order is
// the rng consumption order, so fixed seeds give fixed inits.
void attach_adapters(EncoderTower& tower, std::size_t rank, double gamma,
                     double dropout_p, Rng& rng);

void detach_adapters(EncoderTower& tower);

// Sequential layer application, final L2 normalization. Pass a cache to
// retain backward state (train mode); eval callers pass nullptr.
Vec encode(const EncoderTower& tower, const Vec& x, bool train_mode, Rng& rng,
           EncodeCache* cache = nullptr);

// Reverse pass over one encode() call. Adds adapter gradients into sink
// and returns the gradient w.r.t. the tower input.
Vec tower_backward(const EncoderTower& tower, const EncodeCache& cache,
                   const Vec& d_out, TowerGrads& sink);

TowerGrads zero_tower_grads(const EncoderTower& tower);

// Arithmetic mean of per-view embeddings; deliberately not re-normalized.
Vec pool_views(const std::vector<Vec>& view_embs);

// Encode all views of one object then mean-pool.
Vec encode_object(const EncoderTower& tower, const Mat& views, bool train_mode,
                  Rng& rng, std::vector<EncodeCache>* caches = nullptr);

// Row i = text-tower embedding of descriptions[i]; rows are unit norm.
// Duplicate raw descriptions are reported through warnings when given.
Mat build_class_weights(const EncoderTower& text_tower, const std::vector<Vec>& descriptions,
                        bool train_mode, Rng& rng,
                        std::vector<EncodeCache>* caches = nullptr,
                        std::vector<std::string>* warnings = nullptr);

// Replace adapted layers by their merged affine form (adapters removed,
// phi folded into the layer bias).
EncoderTower merge_tower(const EncoderTower& tower);

}  // namespace dac

#endif  // DAC_ENCODER_HPP
