#include "training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sha256.hpp"

namespace dac {

LoraMode lora_mode_from_name(const std::string& name) {
    if (name == "ablora") return LoraMode::AbLora;
    if (name == "plain_lora") return LoraMode::PlainLora;
    if (name == "frozen") return LoraMode::Frozen;
    raise(ErrorKind::Config, "unknown lora mode '" + name + "' (ablora|plain_lora|frozen)");
}

const char* lora_mode_name(LoraMode m) {
    switch (m) {
        case LoraMode::AbLora: return "ablora";
        case LoraMode::PlainLora: return "plain_lora";
        case LoraMode::Frozen: return "frozen";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (tau <= 0.0) raise(ErrorKind::Config, "temperature tau must be > 0");
    if (lr <= 0.0) raise(ErrorKind::Config, "learning rate must be > 0");
    if (epochs < 1) raise(ErrorKind::Config, "epochs must be >= 1");
    if (batch_size < 1) raise(ErrorKind::Config, "batch_size must be >= 1");
    if (dropout_p < 0.0 || dropout_p >= 1.0) raise(ErrorKind::Config, "dropout_p must lie in [0,1)");
    if (rank < 1) raise(ErrorKind::Config, "rank must be >= 1");
}

LossGrads contrastive_ce_loss(const Mat& g_batch, const Mat& class_w,
                              const std::vector<std::size_t>& labels, double tau) {
    if (tau <= 0.0) raise(ErrorKind::Config, "contrastive_ce_loss: tau must be > 0");
    const std::size_t n = g_batch.rows;
    const std::size_t num_classes = class_w.rows;
    if (n < 1) raise(ErrorKind::Shape, "contrastive_ce_loss: empty batch");
    if (num_classes < 2) raise(ErrorKind::Shape, "contrastive_ce_loss: need >= 2 classes");
    if (g_batch.cols != class_w.cols)
        raise(ErrorKind::Shape, "contrastive_ce_loss: embedding dims disagree");
    if (labels.size() != n)
        raise(ErrorKind::Shape, "contrastive_ce_loss: one label per batch row required");
    for (std::size_t y : labels)
        if (y >= num_classes)
            raise(ErrorKind::Data, "contrastive_ce_loss: label " + std::to_string(y) +
                                       " out of range [0," + std::to_string(num_classes) + ")");

    LossGrads out;
    out.per_sample.resize(n);
    out.d_g = Mat(n, g_batch.cols);
    out.d_c = Mat(num_classes, class_w.cols);
    const double inv_n_tau = 1.0 / (static_cast<double>(n) * tau);

    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const Vec g = g_batch.row_vec(k);
        Vec logits(num_classes);
        for (std::size_t i = 0; i < num_classes; ++i)
            logits[i] = dot(g, class_w.row_vec(i)) / tau;

        // loss_k = logsumexp(logits) - logits[y]
        double mx = logits[0];
        for (double v : logits) mx = std::max(mx, v);
        double sum = 0.0;
        for (double v : logits) sum += std::exp(v - mx);
        out.per_sample[k] = mx + std::log(sum) - logits[labels[k]];
        total += out.per_sample[k];

        Vec p = softmax(logits);
        p[labels[k]] -= 1.0;  // p - onehot(y)
        for (std::size_t i = 0; i < num_classes; ++i) {
            const double coeff = p[i] * inv_n_tau;
            const double* c_row = class_w.row(i);
            double* dg_row = out.d_g.row(k);
            double* dc_row = out.d_c.row(i);
            for (std::size_t j = 0; j < g_batch.cols; ++j) {
                dg_row[j] += coeff * c_row[j];
                dc_row[j] += coeff * g[j];
            }
        }
    }
    out.loss = total / static_cast<double>(n);
    return out;
}

void backprop_object(const EncoderTower& vt, const std::vector<EncodeCache>& view_caches,
                     const Vec& d_g, TowerGrads& sink) {
    if (view_caches.empty())
        raise(ErrorKind::Usage, "backprop_object: no view caches");
    const double inv_m = 1.0 / static_cast<double>(view_caches.size());
    Vec d_view(d_g.size());
    for (std::size_t i = 0; i < d_g.size(); ++i) d_view[i] = d_g[i] * inv_m;
    for (const EncodeCache& c : view_caches) tower_backward(vt, c, d_view, sink);
}

void backprop_class_weights(const EncoderTower& tt, const std::vector<EncodeCache>& caches,
                            const Mat& d_c, TowerGrads& sink) {
    if (caches.size() != d_c.rows)
        raise(ErrorKind::Usage, "backprop_class_weights: cache/grad count mismatch");
    for (std::size_t i = 0; i < caches.size(); ++i)
        tower_backward(tt, caches[i], d_c.row_vec(i), sink);
}

double cosine_lr(std::size_t t, std::size_t total_steps, double eta0) {
    if (total_steps < 1) raise(ErrorKind::Usage, "cosine_lr: total_steps must be >= 1");
    if (t > total_steps) raise(ErrorKind::Usage, "cosine_lr: step index beyond schedule end");
    const double pi = 3.14159265358979323846;
    return eta0 * 0.5 * (1.0 + std::cos(pi * static_cast<double>(t) / static_cast<double>(total_steps)));
}

void sgd_update_adapter(AdaptedLinear& layer, const AdapterGrads& grads, double lr) {
    if (!grads.d_a.same_shape(layer.a) || !grads.d_b.same_shape(layer.b) ||
        grads.d_phi.size() != layer.phi.size())
        raise(ErrorKind::Usage, "sgd_update_adapter: gradient shapes do not mirror the layer");
    for (std::size_t i = 0; i < layer.a.data.size(); ++i) layer.a.data[i] -= lr * grads.d_a.data[i];
    for (std::size_t i = 0; i < layer.b.data.size(); ++i) layer.b.data[i] -= lr * grads.d_b.data[i];
    if (layer.train_phi)
        for (std::size_t i = 0; i < layer.phi.size(); ++i) layer.phi[i] -= lr * grads.d_phi[i];
}

namespace {

void sgd_step_tower(EncoderTower& tower, const TowerGrads& grads, double lr) {
    if (grads.layers.size() != tower.layers.size())
        raise(ErrorKind::Usage, "sgd_step: grad set does not match tower");
    for (std::size_t i = 0; i < tower.layers.size(); ++i) {
        if (!tower.layers[i].adapter || grads.layers[i].d_phi.empty()) continue;
        sgd_update_adapter(*tower.layers[i].adapter, grads.layers[i], lr);
    }
}

std::string checksum_adapter(const AdaptedLinear& ad) {
    Sha256 h;
    h.update(ad.a.data.data(), ad.a.data.size() * sizeof(double));
    h.update(ad.b.data.data(), ad.b.data.size() * sizeof(double));
    h.update(ad.phi.data(), ad.phi.size() * sizeof(double));
    return h.hex_digest();
}

}  // namespace

void sgd_step(EncoderTower& vis, EncoderTower& txt, const TowerGrads& vis_grads,
              const TowerGrads& txt_grads, double lr) {
    sgd_step_tower(vis, vis_grads, lr);
    sgd_step_tower(txt, txt_grads, lr);
}

TrainResult train(const OpenSetDataset& ds, const EncoderTower& vis_backbone,
                  const EncoderTower& txt_backbone, const TrainConfig& cfg) {
    cfg.validate();
    if (ds.train.empty()) raise(ErrorKind::Data, "train: empty train split");
    if (ds.seen_labels.size() < 2)
        raise(ErrorKind::Data, "train: need >= 2 seen classes, got " +
                                   std::to_string(ds.seen_labels.size()));

    // label -> class index, and descriptions in class-index order
    std::vector<Vec> descriptions(ds.seen_labels.size());
    for (std::size_t i = 0; i < ds.seen_labels.size(); ++i) {
        const std::string& lbl = ds.seen_labels[i];
        auto it = std::find_if(ds.class_descriptions.begin(), ds.class_descriptions.end(),
                               [&](const auto& kv) { return kv.first == lbl; });
        if (it == ds.class_descriptions.end())
            raise(ErrorKind::Data, "train: no class description for seen label '" + lbl + "'");
        descriptions[i] = it->second;
    }
    std::vector<std::size_t> obj_class(ds.train.size());
    for (std::size_t k = 0; k < ds.train.size(); ++k) {
        auto it = std::lower_bound(ds.seen_labels.begin(), ds.seen_labels.end(), ds.train[k].label);
        if (it == ds.seen_labels.end() || *it != ds.train[k].label)
            raise(ErrorKind::Data, "train: object '" + ds.train[k].id +
                                       "' has label outside the seen set");
        obj_class[k] = static_cast<std::size_t>(it - ds.seen_labels.begin());
    }

    TrainResult res;
    res.vis = vis_backbone;
    res.txt = txt_backbone;
    validate_tower(res.vis);
    validate_tower(res.txt);

    Rng rng(cfg.seed);
    const bool trainable = cfg.lora_mode != LoraMode::Frozen;
    if (trainable) {
        attach_adapters(res.vis, cfg.rank, cfg.effective_gamma(), cfg.dropout_p, rng);
        attach_adapters(res.txt, cfg.rank, cfg.effective_gamma(), cfg.dropout_p, rng);
        if (cfg.lora_mode == LoraMode::PlainLora) {
            for (auto* tower : {&res.vis, &res.txt})
                for (TowerLayer& l : tower->layers)
                    if (l.adapter) *l.adapter = as_plain_lora(*l.adapter);
        }
    }

    const std::size_t n = ds.train.size();
    const std::size_t batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total_steps = cfg.epochs * batches_per_epoch;

    TrainReport& rep = res.report;
    rep.objects = n;
    rep.classes = ds.seen_labels.size();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates from the run rng
        for (std::size_t i = n; i > 1; --i)
            std::swap(order[i - 1], order[rng.next_below(i)]);

        rep.epoch_lr.push_back(cosine_lr(step, total_steps, cfg.lr));
        Vec object_loss(n, 0.0);  // fixed dataset order, shuffle-independent sum

        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t bn = std::min(cfg.batch_size, n - start);

            std::vector<EncodeCache> class_caches;
            Mat class_w = build_class_weights(res.txt, descriptions, trainable, rng,
                                              trainable ? &class_caches : nullptr);

            Mat g_batch(bn, res.vis.out_dim);
            std::vector<std::size_t> batch_labels(bn);
            std::vector<std::vector<EncodeCache>> batch_caches(bn);
            std::vector<Vec> pooled_raw(bn);  // pre-renormalization, for the Jacobian
            for (std::size_t j = 0; j < bn; ++j) {
                const ObjectRecord& obj = ds.train[order[start + j]];
                batch_labels[j] = obj_class[order[start + j]];
                Vec g = encode_object(res.vis, obj.views, trainable, rng,
                                      trainable ? &batch_caches[j] : nullptr);
                pooled_raw[j] = g;
                if (cfg.renormalize_pooled) g = l2_normalize(g);
                std::copy(g.begin(), g.end(), g_batch.row(j));
            }

            LossGrads lg = contrastive_ce_loss(g_batch, class_w, batch_labels, cfg.tau);
            for (std::size_t j = 0; j < bn; ++j)
                object_loss[order[start + j]] = lg.per_sample[j];

            if (trainable) {
                TowerGrads vis_grads = zero_tower_grads(res.vis);
                TowerGrads txt_grads = zero_tower_grads(res.txt);
                for (std::size_t j = 0; j < bn; ++j) {
                    Vec d_g = lg.d_g.row_vec(j);
                    if (cfg.renormalize_pooled) {
                        const Vec u = l2_normalize(pooled_raw[j]);
                        const double nn = norm2(pooled_raw[j]);
                        const double proj = dot(u, d_g);
                        for (std::size_t i = 0; i < d_g.size(); ++i)
                            d_g[i] = (d_g[i] - u[i] * proj) / nn;
                    }
                    backprop_object(res.vis, batch_caches[j], d_g, vis_grads);
                }
                backprop_class_weights(res.txt, class_caches, lg.d_c, txt_grads);
                sgd_step(res.vis, res.txt, vis_grads, txt_grads, cosine_lr(step, total_steps, cfg.lr));
            }
            ++step;
        }
        double loss_sum = 0.0;
        for (double l : object_loss) loss_sum += l;
        rep.epoch_mean_loss.push_back(loss_sum / static_cast<double>(n));
    }
    rep.steps = step;

    auto collect = [&](const char* tag, const EncoderTower& tower) {
        for (std::size_t i = 0; i < tower.layers.size(); ++i)
            if (tower.layers[i].adapter)
                rep.adapter_checksums.emplace_back(std::string(tag) + ".L" + std::to_string(i),
                                                   checksum_adapter(*tower.layers[i].adapter));
    };
    collect("vis", res.vis);
    collect("txt", res.txt);
    return res;
}

Vec finite_diff_gradient(const std::function<double()>& f, double* p, std::size_t n,
                         double eps) {
    Vec g(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double saved = p[i];
        p[i] = saved + eps;
        const double fp = f();
        p[i] = saved - eps;
        const double fm = f();
        p[i] = saved;
        g[i] = (fp - fm) / (2.0 * eps);
    }
    return g;
}

double max_grad_rel_error(const Vec& analytic, const Vec& fd, double floor) {
    if (analytic.size() != fd.size())
        raise(ErrorKind::Usage, "max_grad_rel_error: size mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double denom = std::max({std::fabs(analytic[i]), std::fabs(fd[i]), floor});
        worst = std::max(worst, std::fabs(analytic[i] - fd[i]) / denom);
    }
    return worst;
}

double grad_check(EncoderTower& vt, EncoderTower& tt,
                  const std::vector<ObjectRecord>& objects,
                  const std::vector<Vec>& class_descriptions,
                  const std::vector<std::size_t>& labels, double tau,
                  double eps) {
    // dropout off: the loss closure must be a pure function of the parameters
    for (auto* tower : {&vt, &tt})
        for (TowerLayer& l : tower->layers)
            if (l.adapter) l.adapter->dropout_p = 0.0;

    Rng dummy(0);
    auto loss_value = [&]() {
        std::vector<EncodeCache> ccaches;
        Mat class_w = build_class_weights(tt, class_descriptions, true, dummy, &ccaches);
        Mat g_batch(objects.size(), vt.out_dim);
        for (std::size_t k = 0; k < objects.size(); ++k) {
            Vec g = encode_object(vt, objects[k].views, true, dummy, nullptr);
            std::copy(g.begin(), g.end(), g_batch.row(k));
        }
        return contrastive_ce_loss(g_batch, class_w, labels, tau).loss;
    };

    // analytic pass
    std::vector<EncodeCache> ccaches;
    Mat class_w;
    {
        class_w = build_class_weights(tt, class_descriptions, true, dummy, &ccaches);
        Mat g_batch(objects.size(), vt.out_dim);
        std::vector<std::vector<EncodeCache>> ocaches(objects.size());
        for (std::size_t k = 0; k < objects.size(); ++k) {
            Vec g = encode_object(vt, objects[k].views, true, dummy, &ocaches[k]);
            std::copy(g.begin(), g.end(), g_batch.row(k));
        }
        LossGrads lg = contrastive_ce_loss(g_batch, class_w, labels, tau);
        TowerGrads vg = zero_tower_grads(vt);
        TowerGrads tg = zero_tower_grads(tt);
        for (std::size_t k = 0; k < objects.size(); ++k)
            backprop_object(vt, ocaches[k], lg.d_g.row_vec(k), vg);
        backprop_class_weights(tt, ccaches, lg.d_c, tg);

        double worst = 0.0;
        auto check_tensor = [&](double* data, std::size_t size, const Vec& analytic) {
            Vec fd = finite_diff_gradient(loss_value, data, size, eps);
            worst = std::max(worst, max_grad_rel_error(analytic, fd));
        };
        auto check_tower = [&](EncoderTower& tower, const TowerGrads& grads) {
            for (std::size_t i = 0; i < tower.layers.size(); ++i) {
                if (!tower.layers[i].adapter) continue;
                AdaptedLinear& ad = *tower.layers[i].adapter;
                const AdapterGrads& g = grads.layers[i];
                check_tensor(ad.a.data.data(), ad.a.data.size(), g.d_a.data);
                check_tensor(ad.b.data.data(), ad.b.data.size(), g.d_b.data);
                check_tensor(ad.phi.data(), ad.phi.size(), g.d_phi);
            }
        };
        check_tower(vt, vg);
        check_tower(tt, tg);
        return worst;
    }
}

}  // namespace dac
