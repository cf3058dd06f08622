#ifndef DAC_FUSION_HPP
#define DAC_FUSION_HPP

#include <optional>
#include <string>

#include "numcore.hpp"

namespace dac {

enum class FusionScheme { Add, Concat };

FusionScheme fusion_scheme_from_name(const std::string& name);
const char* fusion_scheme_name(FusionScheme s);

struct FusionConfig {
    double alpha = 0.4;
    FusionScheme scheme = FusionScheme::Add;
    Activation act = Activation::Tanh;
    bool post_normalize = false;  // optional re-normalization of h (cosine makes it moot)

    void validate() const;
};

// Final per-object descriptor: the fused vector plus its constituents.
struct Descriptor {
    std::string id;
    std::string label;
    Vec h;
    Vec g;
    std::optional<Vec> f_t;
};

// h = act(g + alpha * f_t) for the add scheme; act(g) ++ act(alpha * f_t)
// for concat. A missing f_t (or alpha == 0) reduces to act(g) exactly.
Descriptor fuse(const Vec& g, const std::optional<Vec>& f_t, const FusionConfig& cfg,
                const std::string& id = "", const std::string& label = "");

// Tuned fusion weights per (dataset, backbone) pair; 0.4 when unknown.
double default_alpha(const std::string& dataset_tag, const std::string& backbone_tag);

}  // namespace dac

#endif  // DAC_FUSION_HPP
