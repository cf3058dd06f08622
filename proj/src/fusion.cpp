#include "fusion.hpp"

#include <algorithm>
#include <cctype>

namespace dac {

FusionScheme fusion_scheme_from_name(const std::string& name) {
    if (name == "add") return FusionScheme::Add;
    if (name == "concat") return FusionScheme::Concat;
    raise(ErrorKind::Config, "unknown fusion scheme '" + name + "' (add|concat)");
}

const char* fusion_scheme_name(FusionScheme s) {
    return s == FusionScheme::Add ? "add" : "concat";
}

void FusionConfig::validate() const {
    if (alpha < 0.0 || alpha > 1.0)
        raise(ErrorKind::Config, "fusion alpha must lie in [0,1], got " + std::to_string(alpha));
}

Descriptor fuse(const Vec& g, const std::optional<Vec>& f_t, const FusionConfig& cfg,
                const std::string& id, const std::string& label) {
    cfg.validate();
    if (f_t && f_t->size() != g.size())
        raise(ErrorKind::Shape, "fuse: g dim " + std::to_string(g.size()) + " vs f_t dim " +
                                    std::to_string(f_t->size()));
    Descriptor d;
    d.id = id;
    d.label = label;
    d.g = g;
    d.f_t = f_t;

    const bool text_active = f_t.has_value() && cfg.alpha != 0.0;
    if (!text_active) {
        // image-only fallback; exact reduction, no zero-scaled adds
        d.h = apply_activation(g, cfg.act);
        if (cfg.scheme == FusionScheme::Concat && f_t) {
            Vec zeros(g.size(), 0.0);
            Vec tail = apply_activation(zeros, cfg.act);
            d.h.insert(d.h.end(), tail.begin(), tail.end());
        }
    } else if (cfg.scheme == FusionScheme::Add) {
        Vec sum(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) sum[i] = g[i] + cfg.alpha * (*f_t)[i];
        d.h = apply_activation(sum, cfg.act);
    } else {
        Vec scaled(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) scaled[i] = cfg.alpha * (*f_t)[i];
        d.h = apply_activation(g, cfg.act);
        Vec tail = apply_activation(scaled, cfg.act);
        d.h.insert(d.h.end(), tail.begin(), tail.end());
    }

    if (cfg.post_normalize) d.h = l2_normalize(d.h);
    return d;
}

double default_alpha(const std::string& dataset_tag, const std::string& backbone_tag) {
    auto canon = [](std::string s) {
        std::transform(s.begin(), s.end(), s.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        s.erase(std::remove_if(s.begin(), s.end(),
                               [](unsigned char c) { return !std::isalnum(c); }),
                s.end());
        return s;
    };
    const std::string ds = canon(dataset_tag);
    const std::string bb = canon(backbone_tag);

    const bool l14 = bb.find("l14") != std::string::npos;
    const bool b32 = bb.find("b32") != std::string::npos;
    if (l14 || b32) {
        if (ds.find("esb") != std::string::npos) return 0.1;
        if (ds.find("ntu") != std::string::npos) return l14 ? 0.3 : 0.6;
        if (ds.find("mn40") != std::string::npos) return l14 ? 0.25 : 0.4;
        if (ds.find("abo") != std::string::npos) return l14 ? 0.7 : 0.85;
    }
    return 0.4;
}

}  // namespace dac
