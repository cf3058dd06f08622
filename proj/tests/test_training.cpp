#include <doctest.h>

#include <cmath>

#include "training.hpp"

using namespace dac;

namespace {

EncoderTower toy_tower(std::size_t in_dim, std::size_t hidden, std::size_t out, Rng& rng,
                       bool second_adaptable = false) {
    EncoderTower t;
    TowerLayer l0;
    l0.w = sample_normal(rng, hidden, in_dim);
    for (double& x : l0.w.data) x /= std::sqrt(double(in_dim));
    l0.bias = Vec(hidden, 0.0);
    l0.act = Activation::Tanh;
    l0.adaptable = true;
    t.layers.push_back(std::move(l0));
    TowerLayer l1;
    l1.w = sample_normal(rng, out, hidden);
    for (double& x : l1.w.data) x /= std::sqrt(double(hidden));
    l1.bias = Vec(out, 0.0);
    l1.act = Activation::Identity;
    l1.adaptable = second_adaptable;
    t.layers.push_back(std::move(l1));
    t.out_dim = out;
    return t;
}

// tiny in-memory open-set dataset: `classes` seen classes, `items` objects
// per class, M views each
OpenSetDataset toy_dataset(std::size_t classes, std::size_t items, std::size_t views,
                           std::size_t dim, std::uint64_t seed) {
    OpenSetDataset ds;
    Rng rng(seed);
    std::vector<Vec> protos;
    for (std::size_t c = 0; c < classes; ++c) {
        Vec p(dim);
        for (double& x : p) x = 2.0 * rng.normal();
        protos.push_back(p);
        ds.seen_labels.push_back("c" + std::to_string(c));
        ds.class_descriptions.emplace_back("c" + std::to_string(c), p);
    }
    std::size_t id = 0;
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t i = 0; i < items; ++i) {
            ObjectRecord o;
            o.id = "o" + std::to_string(id++);
            o.label = "c" + std::to_string(c);
            o.split = Split::Train;
            o.views = Mat(views, dim);
            for (std::size_t m = 0; m < views; ++m)
                for (std::size_t k = 0; k < dim; ++k)
                    o.views.at(m, k) = protos[c][k] + 0.3 * rng.normal();
            ds.train.push_back(std::move(o));
        }
    return ds;
}

}  // namespace

TEST_CASE("uniform logits give exactly ln L") {
    // g orthogonal to every class row (d=5: g=e5, rows e1..e4)
    Mat g(1, 5);
    g.at(0, 4) = 1.0;
    Mat c(4, 5);
    for (int i = 0; i < 4; ++i) c.at(i, i) = 1.0;
    LossGrads lg = contrastive_ce_loss(g, c, {0}, 0.07);
    CHECK(std::fabs(lg.loss - std::log(4.0)) < 1e-12);

    // any temperature
    LossGrads lg2 = contrastive_ce_loss(g, c, {2}, 3.7);
    CHECK(std::fabs(lg2.loss - std::log(4.0)) < 1e-12);
}

TEST_CASE("saturated true logit drives the loss to zero") {
    Mat g(1, 3);
    g.at(0, 0) = 1.0;  // equals class row 0
    Mat c(3, 3);
    for (int i = 0; i < 3; ++i) c.at(i, i) = 1.0;
    LossGrads lg = contrastive_ce_loss(g, c, {0}, 0.005);
    CHECK(lg.loss >= 0.0);
    CHECK(lg.loss < 1e-6);
}

TEST_CASE("loss gradients match finite differences") {
    // unit-norm rows on both sides, the domain the pipeline produces
    Rng rng(61);
    Mat g = sample_normal(rng, 3, 6);
    Mat c = sample_normal(rng, 5, 6);
    for (Mat* m : {&g, &c})
        for (std::size_t i = 0; i < m->rows; ++i) {
            Vec row = l2_normalize(m->row_vec(i));
            std::copy(row.begin(), row.end(), m->row(i));
        }
    std::vector<std::size_t> labels = {1, 4, 0};
    const double tau = 0.25;

    LossGrads lg = contrastive_ce_loss(g, c, labels, tau);
    auto loss = [&]() { return contrastive_ce_loss(g, c, labels, tau).loss; };
    Vec fd_g = finite_diff_gradient(loss, g.data.data(), g.data.size());
    CHECK(max_grad_rel_error(lg.d_g.data, fd_g) < 1e-6);
    Vec fd_c = finite_diff_gradient(loss, c.data.data(), c.data.size());
    CHECK(max_grad_rel_error(lg.d_c.data, fd_c) < 1e-6);
}

TEST_CASE("class-gradient rows sum to zero") {
    Rng rng(67);
    Mat g = sample_normal(rng, 4, 5);
    Mat c = sample_normal(rng, 6, 5);
    LossGrads lg = contrastive_ce_loss(g, c, {0, 5, 2, 2}, 0.07);
    for (std::size_t j = 0; j < 5; ++j) {
        double col = 0.0;
        for (std::size_t i = 0; i < 6; ++i) col += lg.d_c.at(i, j);
        CHECK(std::fabs(col) < 1e-12);
    }
}

TEST_CASE("loss rejects bad labels and bad temperature") {
    Mat g(1, 3);
    g.at(0, 0) = 1.0;
    Mat c(2, 3);
    c.at(0, 0) = 1.0;
    c.at(1, 1) = 1.0;
    try {
        contrastive_ce_loss(g, c, {7}, 0.07);
        FAIL("expected data error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Data);
    }
    try {
        contrastive_ce_loss(g, c, {0}, 0.0);
        FAIL("expected config error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
    }
}

TEST_CASE("cosine schedule endpoints and midpoint") {
    CHECK(cosine_lr(0, 100, 2e-4) == 2e-4);
    CHECK(cosine_lr(100, 100, 2e-4) == 0.0);
    CHECK(cosine_lr(50, 100, 2e-4) == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK_THROWS_AS(cosine_lr(101, 100, 2e-4), Error);
}

TEST_CASE("sgd_step leaves params untouched for zero grads or zero lr") {
    Rng rng(71);
    AdaptedLinear l = init_adapter(4, 6, 2, 1.0, 0.0, rng);
    l.w0 = sample_normal(rng, 4, 6);
    AdaptedLinear before = l;
    sgd_update_adapter(l, zero_grads(l), 0.5);
    CHECK(l.a.data == before.a.data);
    CHECK(l.b.data == before.b.data);
    CHECK(l.phi == before.phi);

    AdapterGrads g = zero_grads(l);
    for (double& x : g.d_a.data) x = 1.0;
    sgd_update_adapter(l, g, 0.0);
    CHECK(l.a.data == before.a.data);
}

TEST_CASE("sgd_step applies p - lr * grad by hand") {
    Rng rng(73);
    AdaptedLinear l = init_adapter(2, 3, 1, 1.0, 0.0, rng);
    l.a = Mat(1, 3);
    l.a.at(0, 0) = 1.0;
    l.a.at(0, 1) = 2.0;
    l.a.at(0, 2) = 3.0;
    AdapterGrads g = zero_grads(l);
    g.d_a.at(0, 0) = 10.0;
    g.d_a.at(0, 1) = -20.0;
    g.d_phi[0] = 4.0;
    sgd_update_adapter(l, g, 0.1);
    CHECK(l.a.at(0, 0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(l.a.at(0, 1) == doctest::Approx(4.0).epsilon(1e-15));
    CHECK(l.a.at(0, 2) == 3.0);
    CHECK(l.phi[0] == doctest::Approx(-0.4).epsilon(1e-15));
}

TEST_CASE("identical views split the pooled gradient evenly") {
    Rng setup(79);
    EncoderTower t = toy_tower(5, 4, 3, setup);
    Rng ar(83);
    attach_adapters(t, 2, 1.0, 0.0, ar);

    Vec v(5);
    Rng xs(5);
    for (double& x : v) x = xs.normal();

    Mat one(1, 5), three(3, 5);
    std::copy(v.begin(), v.end(), one.row(0));
    for (int m = 0; m < 3; ++m) std::copy(v.begin(), v.end(), three.row(m));

    Vec d_g = {0.3, -0.7, 1.1};
    Rng f1(0), f2(0);

    std::vector<EncodeCache> c1, c3;
    encode_object(t, one, true, f1, &c1);
    encode_object(t, three, true, f2, &c3);

    TowerGrads g1 = zero_tower_grads(t);
    TowerGrads g3 = zero_tower_grads(t);
    backprop_object(t, c1, d_g, g1);
    backprop_object(t, c3, d_g, g3);

    // three identical views at d_g/3 each must reproduce the single-view grads
    for (std::size_t li = 0; li < g1.layers.size(); ++li) {
        if (g1.layers[li].d_phi.empty()) continue;
        for (std::size_t i = 0; i < g1.layers[li].d_a.data.size(); ++i)
            CHECK(g1.layers[li].d_a.data[i] ==
                  doctest::Approx(g3.layers[li].d_a.data[i]).epsilon(1e-12));
        for (std::size_t i = 0; i < g1.layers[li].d_phi.size(); ++i)
            CHECK(g1.layers[li].d_phi[i] ==
                  doctest::Approx(g3.layers[li].d_phi[i]).epsilon(1e-12));
    }
}

TEST_CASE("full-pipeline gradient check on a toy instance") {
    Rng setup(89);
    EncoderTower vt = toy_tower(6, 5, 4, setup, true);
    EncoderTower tt = toy_tower(6, 5, 4, setup);
    Rng ar(97);
    attach_adapters(vt, 2, 1.0, 0.0, ar);
    attach_adapters(tt, 2, 1.0, 0.0, ar);
    // move the adapters off the zero-init point
    Rng nud(101);
    for (auto* tower : {&vt, &tt})
        for (TowerLayer& l : tower->layers)
            if (l.adapter) {
                for (double& x : l.adapter->b.data) x = 0.2 * nud.normal();
                for (double& x : l.adapter->phi) x = 0.1 * nud.normal();
            }

    std::vector<ObjectRecord> objects;
    Rng xs(103);
    for (int k = 0; k < 2; ++k) {
        ObjectRecord o;
        o.id = "t" + std::to_string(k);
        o.label = "c" + std::to_string(k);
        o.views = Mat(2, 6);
        for (double& x : o.views.data) x = xs.normal();
        objects.push_back(std::move(o));
    }
    std::vector<Vec> descs;
    for (int i = 0; i < 3; ++i) {
        Vec d(6);
        for (double& x : d) x = xs.normal();
        descs.push_back(d);
    }
    const double err = grad_check(vt, tt, objects, descs, {0, 2}, 0.07);
    CHECK(err < 1e-5);
}

TEST_CASE("gradient check on fresh adapters is tight") {
    Rng setup(107);
    EncoderTower vt = toy_tower(5, 4, 3, setup);
    EncoderTower tt = toy_tower(5, 4, 3, setup);
    Rng ar(109);
    attach_adapters(vt, 1, 1.0, 0.25, ar);  // dropout gets disabled by the harness
    attach_adapters(tt, 1, 1.0, 0.25, ar);

    std::vector<ObjectRecord> objects(1);
    objects[0].id = "t0";
    objects[0].label = "c0";
    objects[0].views = Mat(2, 5);
    Rng xs(113);
    for (double& x : objects[0].views.data) x = xs.normal();
    std::vector<Vec> descs;
    for (int i = 0; i < 2; ++i) {
        Vec d(5);
        for (double& x : d) x = xs.normal();
        descs.push_back(d);
    }
    const double err = grad_check(vt, tt, objects, descs, {0}, 0.07);
    CHECK(err < 1e-6);
}

TEST_CASE("harness flags a corrupted gradient") {
    Vec analytic = {0.5, -1.25, 2.0};
    Vec fd = analytic;
    analytic[1] *= 1.01;
    CHECK(max_grad_rel_error(analytic, fd) > 1e-3);
}

TEST_CASE("train is deterministic and frozen mode never moves") {
    OpenSetDataset ds = toy_dataset(3, 4, 2, 6, 5);
    Rng setup(127);
    EncoderTower vis = toy_tower(6, 5, 4, setup);
    EncoderTower txt = toy_tower(6, 5, 4, setup);

    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 3;
    cfg.seed = 7;
    cfg.rank = 2;

    TrainResult r1 = train(ds, vis, txt, cfg);
    TrainResult r2 = train(ds, vis, txt, cfg);
    REQUIRE(r1.report.epoch_mean_loss.size() == 4);
    for (std::size_t e = 0; e < 4; ++e)
        CHECK(r1.report.epoch_mean_loss[e] == r2.report.epoch_mean_loss[e]);
    CHECK(r1.report.adapter_checksums == r2.report.adapter_checksums);

    TrainConfig frozen = cfg;
    frozen.lora_mode = LoraMode::Frozen;
    TrainResult rf = train(ds, vis, txt, frozen);
    for (std::size_t e = 1; e < rf.report.epoch_mean_loss.size(); ++e)
        CHECK(rf.report.epoch_mean_loss[e] == rf.report.epoch_mean_loss[0]);
    for (const TowerLayer& l : rf.vis.layers) CHECK(!l.adapter.has_value());
}

TEST_CASE("training reduces the loss on a separable toy set") {
    OpenSetDataset ds = toy_dataset(4, 6, 2, 8, 11);
    Rng setup(131);
    EncoderTower vis = toy_tower(8, 6, 5, setup);
    EncoderTower txt = toy_tower(8, 6, 5, setup);

    TrainConfig cfg;
    cfg.epochs = 12;
    cfg.batch_size = 4;
    cfg.seed = 7;
    cfg.rank = 2;
    cfg.lr = 0.05;  // toy-scale rate so a short run separates the classes
    cfg.dropout_p = 0.0;

    TrainResult r = train(ds, vis, txt, cfg);
    CHECK(r.report.epoch_mean_loss.back() < r.report.epoch_mean_loss.front());
    for (double l : r.report.epoch_mean_loss) CHECK(l >= 0.0);
}

TEST_CASE("plain-LoRA training never touches phi") {
    OpenSetDataset ds = toy_dataset(3, 4, 2, 6, 17);
    Rng setup(137);
    EncoderTower vis = toy_tower(6, 5, 4, setup);
    EncoderTower txt = toy_tower(6, 5, 4, setup);

    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 2;
    cfg.seed = 3;
    cfg.rank = 2;
    cfg.lr = 0.05;
    cfg.lora_mode = LoraMode::PlainLora;

    TrainResult r = train(ds, vis, txt, cfg);
    bool saw_adapter = false;
    bool b_moved = false;
    for (const auto* tower : {&r.vis, &r.txt})
        for (const TowerLayer& l : tower->layers)
            if (l.adapter) {
                saw_adapter = true;
                for (double x : l.adapter->phi) CHECK(x == 0.0);
                for (double x : l.adapter->b.data)
                    if (x != 0.0) b_moved = true;
            }
    CHECK(saw_adapter);
    CHECK(b_moved);  // the low-rank factors do train
}

TEST_CASE("train rejects an empty train split") {
    OpenSetDataset ds;
    Rng setup(139);
    EncoderTower vis = toy_tower(6, 5, 4, setup);
    EncoderTower txt = toy_tower(6, 5, 4, setup);
    CHECK_THROWS_AS(train(ds, vis, txt, TrainConfig{}), Error);
}

TEST_CASE("config validation bounds") {
    TrainConfig cfg;
    cfg.tau = 0.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = TrainConfig{};
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = TrainConfig{};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = TrainConfig{};
    cfg.lora_alpha = 16.0;
    CHECK(cfg.effective_gamma() == doctest::Approx(2.0));  // 16 / rank 8
}
