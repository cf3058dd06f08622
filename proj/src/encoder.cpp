#include "encoder.hpp"

#include <algorithm>

#include "dataset.hpp"

namespace dac {

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "query") return Split::Query;
    if (name == "target") return Split::Target;
    raise(ErrorKind::Format, "unknown split '" + name + "'");
}

const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Query: return "query";
        case Split::Target: return "target";
    }
    return "?";
}

void TowerGrads::accumulate(const TowerGrads& other) {
    if (layers.size() != other.layers.size())
        raise(ErrorKind::Usage, "TowerGrads::accumulate: layer count mismatch");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (other.layers[i].d_phi.empty()) continue;
        if (layers[i].d_phi.empty())
            layers[i] = other.layers[i];
        else
            layers[i].accumulate(other.layers[i]);
    }
}

bool TowerGrads::empty_set() const {
    return std::all_of(layers.begin(), layers.end(),
                       [](const AdapterGrads& g) { return g.d_phi.empty(); });
}

void validate_tower(const EncoderTower& tower) {
    if (tower.layers.empty())
        raise(ErrorKind::Config, "tower has no layers");
    for (std::size_t i = 0; i + 1 < tower.layers.size(); ++i) {
        if (tower.layers[i].w.rows != tower.layers[i + 1].w.cols)
            raise(ErrorKind::Shape, "tower layer " + std::to_string(i) + " outputs dim " +
                                        std::to_string(tower.layers[i].w.rows) +
                                        " but layer " + std::to_string(i + 1) + " expects " +
                                        std::to_string(tower.layers[i + 1].w.cols));
    }
    if (tower.layers.back().w.rows != tower.out_dim)
        raise(ErrorKind::Shape, "tower out_dim does not match the last layer");
    for (std::size_t i = 0; i < tower.layers.size(); ++i) {
        const TowerLayer& l = tower.layers[i];
        if (l.bias.size() != l.w.rows)
            raise(ErrorKind::Shape, "tower layer " + std::to_string(i) + " bias dim mismatch");
        if (l.adapter.has_value() != l.adaptable && l.adapter.has_value())
            raise(ErrorKind::Config, "adapter attached to a non-adaptable layer " +
                                         std::to_string(i));
    }
}

void attach_adapters(EncoderTower& tower, std::size_t rank, double gamma,
                     double dropout_p, Rng& rng) {
    for (TowerLayer& l : tower.layers) {
        if (!l.adaptable) continue;
        AdaptedLinear ad = init_adapter(l.w.rows, l.w.cols, rank, gamma, dropout_p, rng);
        ad.w0 = l.w;
        l.adapter = std::move(ad);
    }
}

void detach_adapters(EncoderTower& tower) {
    for (TowerLayer& l : tower.layers) l.adapter.reset();
}

Vec encode(const EncoderTower& tower, const Vec& x, bool train_mode, Rng& rng,
           EncodeCache* cache) {
    if (tower.layers.empty())
        raise(ErrorKind::Config, "encode: tower has no layers");
    if (x.size() != tower.in_dim())
        raise(ErrorKind::Shape, "encode: input dim " + std::to_string(x.size()) +
                                    " vs tower input " + std::to_string(tower.in_dim()));
    if (cache) {
        cache->layers.assign(tower.layers.size(), LayerTrace{});
        cache->valid = false;
    }

    Vec cur = x;
    for (std::size_t i = 0; i < tower.layers.size(); ++i) {
        const TowerLayer& l = tower.layers[i];
        Vec pre;
        if (l.adapter) {
            AdapterCache* ac = cache ? &cache->layers[i].adapter : nullptr;
            pre = adapter_forward(*l.adapter, cur, train_mode, rng, ac);
        } else {
            pre = matvec(l.w, cur);
        }
        for (std::size_t j = 0; j < pre.size(); ++j) pre[j] += l.bias[j];
        Vec post = apply_activation(pre, l.act);
        if (cache) {
            cache->layers[i].pre = pre;
            cache->layers[i].post = post;
        }
        cur = std::move(post);
    }

    Vec out = tower.normalize_output ? l2_normalize(cur) : cur;
    if (cache) {
        cache->pre_norm = std::move(cur);
        cache->out = out;
        cache->valid = true;
    }
    return out;
}

Vec tower_backward(const EncoderTower& tower, const EncodeCache& cache,
                   const Vec& d_out, TowerGrads& sink) {
    if (!cache.valid)
        raise(ErrorKind::Usage, "tower_backward: cache not produced by a matching encode");
    if (sink.layers.size() != tower.layers.size())
        raise(ErrorKind::Usage, "tower_backward: grad sink shape mismatch");

    Vec d_cur = d_out;
    if (tower.normalize_output) {
        // u = x/||x||: dL/dx = (dL/du - u (u . dL/du)) / ||x||
        const Vec& u = cache.out;
        const double n = norm2(cache.pre_norm);
        const double proj = dot(u, d_cur);
        for (std::size_t i = 0; i < d_cur.size(); ++i)
            d_cur[i] = (d_cur[i] - u[i] * proj) / n;
    }

    for (std::size_t ri = tower.layers.size(); ri-- > 0;) {
        const TowerLayer& l = tower.layers[ri];
        const LayerTrace& tr = cache.layers[ri];
        Vec gact = activation_grad(tr.pre, tr.post, l.act);
        Vec d_pre(d_cur.size());
        for (std::size_t i = 0; i < d_cur.size(); ++i) d_pre[i] = d_cur[i] * gact[i];

        if (l.adapter) {
            AdapterGrads g = adapter_backward(*l.adapter, tr.adapter, d_pre);
            d_cur = g.d_z;
            if (sink.layers[ri].d_phi.empty())
                sink.layers[ri] = std::move(g);
            else
                sink.layers[ri].accumulate(g);
        } else {
            d_cur = matvec_transposed(l.w, d_pre);
        }
    }
    return d_cur;
}

TowerGrads zero_tower_grads(const EncoderTower& tower) {
    TowerGrads g;
    g.layers.resize(tower.layers.size());
    for (std::size_t i = 0; i < tower.layers.size(); ++i)
        if (tower.layers[i].adapter)
            g.layers[i] = zero_grads(*tower.layers[i].adapter);
    return g;
}

Vec pool_views(const std::vector<Vec>& view_embs) {
    if (view_embs.empty())
        raise(ErrorKind::Usage, "pool_views: empty view list");
    const std::size_t d = view_embs.front().size();
    for (const Vec& v : view_embs)
        if (v.size() != d)
            raise(ErrorKind::Shape, "pool_views: inconsistent view dims");

    // summing per dimension in sorted value order makes the mean exactly
    // permutation invariant (view order carries no information)
    Vec g(d, 0.0);
    Vec column(view_embs.size());
    const double inv = 1.0 / static_cast<double>(view_embs.size());
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t m = 0; m < view_embs.size(); ++m) column[m] = view_embs[m][i];
        std::sort(column.begin(), column.end());
        double acc = 0.0;
        for (double x : column) acc += x;
        g[i] = acc * inv;
    }
    return g;
}

Vec encode_object(const EncoderTower& tower, const Mat& views, bool train_mode,
                  Rng& rng, std::vector<EncodeCache>* caches) {
    if (views.rows == 0)
        raise(ErrorKind::Usage, "encode_object: object has no views");
    if (caches) caches->assign(views.rows, EncodeCache{});
    std::vector<Vec> embs;
    embs.reserve(views.rows);
    for (std::size_t m = 0; m < views.rows; ++m) {
        EncodeCache* c = caches ? &(*caches)[m] : nullptr;
        embs.push_back(encode(tower, views.row_vec(m), train_mode, rng, c));
    }
    return pool_views(embs);
}

Mat build_class_weights(const EncoderTower& text_tower, const std::vector<Vec>& descriptions,
                        bool train_mode, Rng& rng,
                        std::vector<EncodeCache>* caches,
                        std::vector<std::string>* warnings) {
    if (descriptions.size() < 2)
        raise(ErrorKind::Config, "build_class_weights: contrastive training needs >= 2 classes, got " +
                                     std::to_string(descriptions.size()));
    if (warnings) {
        for (std::size_t i = 0; i < descriptions.size(); ++i)
            for (std::size_t j = i + 1; j < descriptions.size(); ++j)
                if (descriptions[i] == descriptions[j])
                    warnings->push_back("duplicate class descriptions at indices " +
                                        std::to_string(i) + " and " + std::to_string(j));
    }
    if (caches) caches->assign(descriptions.size(), EncodeCache{});
    Mat w(descriptions.size(), text_tower.out_dim);
    for (std::size_t i = 0; i < descriptions.size(); ++i) {
        EncodeCache* c = caches ? &(*caches)[i] : nullptr;
        Vec e = encode(text_tower, descriptions[i], train_mode, rng, c);
        std::copy(e.begin(), e.end(), w.row(i));
    }
    return w;
}

EncoderTower merge_tower(const EncoderTower& tower) {
    EncoderTower out = tower;
    for (TowerLayer& l : out.layers) {
        if (!l.adapter) continue;
        MergedLinear m = merge(*l.adapter);
        l.w = std::move(m.w);
        for (std::size_t i = 0; i < l.bias.size(); ++i) l.bias[i] += m.bias[i];
        l.adapter.reset();
    }
    return out;
}

}  // namespace dac
