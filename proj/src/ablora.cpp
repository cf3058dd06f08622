#include "ablora.hpp"

#include <algorithm>

namespace dac {

bool AdaptedLinear::delta_is_zero() const {
    auto zero = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
    };
    return zero(b.data) && zero(phi);
}

void AdapterGrads::accumulate(const AdapterGrads& other) {
    for (std::size_t i = 0; i < d_a.data.size(); ++i) d_a.data[i] += other.d_a.data[i];
    for (std::size_t i = 0; i < d_b.data.size(); ++i) d_b.data[i] += other.d_b.data[i];
    for (std::size_t i = 0; i < d_phi.size(); ++i) d_phi[i] += other.d_phi[i];
    for (std::size_t i = 0; i < d_z.size(); ++i) d_z[i] += other.d_z[i];
}

AdaptedLinear init_adapter(std::size_t d1, std::size_t d2, std::size_t rank,
                           double gamma, double dropout_p, Rng& rng) {
    if (rank < 1 || rank >= std::min(d1, d2))
        raise(ErrorKind::Config, "init_adapter: rank must satisfy 1 <= r < min(d1,d2), got r=" +
                                     std::to_string(rank) + " for " + std::to_string(d1) +
                                     "x" + std::to_string(d2));
    if (dropout_p < 0.0 || dropout_p >= 1.0)
        raise(ErrorKind::Config, "init_adapter: dropout_p must lie in [0,1)");
    AdaptedLinear layer;
    layer.a = sample_normal(rng, rank, d2);
    layer.b = Mat(d1, rank);
    layer.phi = Vec(d1, 0.0);
    layer.gamma = gamma;
    layer.rank = rank;
    layer.dropout_p = dropout_p;
    return layer;
}

Vec adapter_forward(const AdaptedLinear& layer, const Vec& z, bool train_mode,
                    Rng& rng, AdapterCache* cache) {
    if (z.size() != layer.d2())
        raise(ErrorKind::Shape, "adapter_forward: input dim " + std::to_string(z.size()) +
                                    " vs layer d2 " + std::to_string(layer.d2()));
    Vec o = matvec(layer.w0, z);

    if (!train_mode && layer.delta_is_zero() && cache == nullptr)
        return o;  // fresh layer: frozen forward, no drift

    Vec z_tilde = z;
    Vec scale(z.size(), 1.0);
    if (train_mode && layer.dropout_p > 0.0) {
        const double keep = 1.0 - layer.dropout_p;
        for (std::size_t i = 0; i < z.size(); ++i) {
            if (rng.uniform() < layer.dropout_p) {
                z_tilde[i] = 0.0;
                scale[i] = 0.0;
            } else {
                z_tilde[i] /= keep;
                scale[i] = 1.0 / keep;
            }
        }
    }

    Vec az = matvec(layer.a, z_tilde);
    Vec delta = matvec(layer.b, az);
    for (std::size_t i = 0; i < o.size(); ++i)
        o[i] += layer.gamma * delta[i] + layer.phi[i];

    if (cache) {
        cache->z_tilde = std::move(z_tilde);
        cache->az = std::move(az);
        cache->drop_scale = std::move(scale);
        cache->valid = true;
    }
    return o;
}

AdapterGrads adapter_backward(const AdaptedLinear& layer, const AdapterCache& cache,
                              const Vec& grad_o) {
    if (!cache.valid)
        raise(ErrorKind::Usage, "adapter_backward: cache not produced by a matching forward");
    if (grad_o.size() != layer.d1())
        raise(ErrorKind::Shape, "adapter_backward: grad dim mismatch");

    AdapterGrads g = zero_grads(layer);

    // phi enters additively
    g.d_phi = grad_o;

    // d_b = gamma * grad_o (A z~)^T
    add_outer(g.d_b, grad_o, cache.az, layer.gamma);

    // s = B^T grad_o; d_a = gamma * s z~^T
    Vec s = matvec_transposed(layer.b, grad_o);
    add_outer(g.d_a, s, cache.z_tilde, layer.gamma);

    // d_z = w0^T grad_o + gamma * (A^T s) masked by the dropout scaling
    g.d_z = matvec_transposed(layer.w0, grad_o);
    Vec ats = matvec_transposed(layer.a, s);
    for (std::size_t i = 0; i < g.d_z.size(); ++i)
        g.d_z[i] += layer.gamma * ats[i] * cache.drop_scale[i];

    return g;
}

MergedLinear merge(const AdaptedLinear& layer) {
    MergedLinear m;
    m.w = layer.w0;
    Mat delta = matmul(layer.b, layer.a);
    for (std::size_t i = 0; i < m.w.data.size(); ++i)
        m.w.data[i] += layer.gamma * delta.data[i];
    m.bias = layer.phi;
    return m;
}

AdaptedLinear as_plain_lora(const AdaptedLinear& layer) {
    AdaptedLinear out = layer;
    std::fill(out.phi.begin(), out.phi.end(), 0.0);
    out.train_phi = false;
    return out;
}

AdapterGrads zero_grads(const AdaptedLinear& layer) {
    AdapterGrads g;
    g.d_a = Mat(layer.rank, layer.d2());
    g.d_b = Mat(layer.d1(), layer.rank);
    g.d_phi = Vec(layer.d1(), 0.0);
    g.d_z = Vec(layer.d2(), 0.0);
    return g;
}

}  // namespace dac
