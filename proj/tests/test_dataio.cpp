#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "dataio.hpp"
#include "pipeline.hpp"
#include "retrieval.hpp"
#include "sha256.hpp"

using namespace dac;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    fs::path dir = fs::path("dataio_scratch") / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

SynthConfig tiny_cfg(std::uint64_t seed = 7) {
    SynthConfig cfg;
    cfg.seen_classes = 3;
    cfg.unseen_classes = 3;
    cfg.items_per_class = 4;
    cfg.views = 2;
    cfg.input_dim = 8;
    cfg.hidden_dim = 6;
    cfg.embed_dim = 4;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("feature container round-trips bit-exactly") {
    fs::path dir = scratch("roundtrip");
    Rng rng(5);
    Mat m = sample_normal(rng, 10, 16);
    FeatureSection s = section_from_mat("blob", m);
    const std::string path = (dir / "t.dacf").string();
    write_features(path, {s});
    FeatureFile f = read_features(path);
    REQUIRE(f.sections.size() == 1);
    CHECK(f.sections[0].name == "blob");
    CHECK(f.sections[0].rows == 10);
    CHECK(f.sections[0].dim == 16);
    CHECK(f.sections[0].data == s.data);
}

TEST_CASE("truncated container is a format error, not a crash") {
    fs::path dir = scratch("truncated");
    Rng rng(6);
    const std::string path = (dir / "t.dacf").string();
    write_features(path, {section_from_mat("blob", sample_normal(rng, 4, 4))});
    const auto full = fs::file_size(path);
    fs::resize_file(path, full - 7);
    try {
        read_features(path);
        FAIL("expected format error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Format);
    }
}

TEST_CASE("bad magic is rejected") {
    fs::path dir = scratch("magic");
    const std::string path = (dir / "t.dacf").string();
    std::ofstream(path) << "NOPEnope";
    CHECK_THROWS_AS(read_features(path), Error);
}

TEST_CASE("NaN payloads are rejected at write time") {
    fs::path dir = scratch("nan");
    FeatureSection s;
    s.name = "bad";
    s.rows = 1;
    s.dim = 2;
    s.data = {1.0f, std::nanf("")};
    try {
        write_features((dir / "t.dacf").string(), {s});
        FAIL("expected format error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Format);
    }
}

TEST_CASE("declared sizes must match the payload") {
    FeatureSection s;
    s.name = "bad";
    s.rows = 2;
    s.dim = 3;
    s.data = {1.0f, 2.0f};  // 2 values, 6 declared
    fs::path dir = scratch("sizes");
    CHECK_THROWS_AS(write_features((dir / "t.dacf").string(), {s}), Error);
}

TEST_CASE("generator is deterministic per seed") {
    fs::path d1 = scratch("gen_a");
    fs::path d2 = scratch("gen_b");
    SynthConfig cfg = tiny_cfg(7);
    SynthOutput o1 = gen_synthetic(cfg, d1.string());
    SynthOutput o2 = gen_synthetic(cfg, d2.string());
    CHECK(Sha256::of_file(o1.features_path) == Sha256::of_file(o2.features_path));
    CHECK(Sha256::of_file(o1.backbone_path) == Sha256::of_file(o2.backbone_path));
    CHECK(Sha256::of_file(o1.manifest_path) == Sha256::of_file(o2.manifest_path));

    SynthConfig other = tiny_cfg(8);
    fs::path d3 = scratch("gen_c");
    SynthOutput o3 = gen_synthetic(other, d3.string());
    CHECK(Sha256::of_file(o1.features_path) != Sha256::of_file(o3.features_path));
}

TEST_CASE("zero noise and zero shift collapse views onto the prototype") {
    fs::path dir = scratch("collapse");
    SynthConfig cfg = tiny_cfg(9);
    cfg.intra_class_noise = 0.0;
    cfg.domain_shift = 0.0;
    cfg.text_noise = 0.0;
    SynthOutput out = gen_synthetic(cfg, dir.string());
    LoadedDataset ld = load_manifest(out.manifest_path);

    // all views of all objects within one class are identical
    for (const ObjectRecord& a : ld.dataset.train)
        for (const ObjectRecord& b : ld.dataset.train) {
            if (a.label != b.label) continue;
            for (std::size_t m = 0; m < a.views.rows; ++m)
                for (std::size_t k = 0; k < a.views.cols; ++k)
                    CHECK(a.views.at(m, k) == b.views.at(0, k));
        }

    // and they equal the latent prototype up to f32 storage
    const auto protos = synth_prototypes(cfg);
    for (const ObjectRecord& a : ld.dataset.train) {
        const auto it = std::find_if(protos.begin(), protos.end(),
                                     [&](const auto& kv) { return kv.first == a.label; });
        REQUIRE(it != protos.end());
        for (std::size_t k = 0; k < a.views.cols; ++k)
            CHECK(a.views.at(0, k) == static_cast<double>(static_cast<float>(it->second[k])));
    }
}

TEST_CASE("generator output loads and honors the open-set contract") {
    fs::path dir = scratch("contract");
    SynthConfig cfg = tiny_cfg(11);
    SynthOutput out = gen_synthetic(cfg, dir.string());
    LoadedDataset ld = load_manifest(out.manifest_path);

    CHECK(ld.dataset.train.size() == 3 * 4);
    CHECK(ld.dataset.query.size() == 3 * 1);   // items/4 = 1 query per class
    CHECK(ld.dataset.target.size() == 3 * 3);
    CHECK(ld.dataset.seen_labels.size() == 3);
    CHECK(ld.dataset.unseen_labels.size() == 3);
    CHECK(ld.dataset.class_descriptions.size() == 3);
    CHECK(ld.manifest.views_per_object == 2);
    CHECK(ld.manifest.input_dim == 8);

    SplitViolation v = validate_open_set_split(ld.dataset);
    CHECK(v.ok);
    CHECK(v.uncovered_query_labels.empty());

    // the backbone loads and chains
    auto [vis, txt] = load_backbone(out.backbone_path);
    CHECK(vis.out_dim == 4);
    CHECK(txt.out_dim == 4);
    CHECK(vis.in_dim() == 8);
    CHECK(vis.layers[0].adaptable);
    CHECK(!vis.layers[1].adaptable);
}

TEST_CASE("manifest referencing a missing section names it") {
    fs::path dir = scratch("missing_ref");
    SynthConfig cfg = tiny_cfg(13);
    SynthOutput out = gen_synthetic(cfg, dir.string());
    // rewrite the manifest to point one object at a non-existent section
    std::ifstream in(out.manifest_path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const std::string needle = "obj00000.views";
    text.replace(text.find(needle), needle.size(), "obj99999.views");
    std::ofstream(out.manifest_path, std::ios::trunc) << text;
    try {
        load_manifest(out.manifest_path);
        FAIL("expected a load error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("obj99999.views") != std::string::npos);
    }
}

TEST_CASE("manifest with a wrong view count is rejected") {
    fs::path dir = scratch("bad_m");
    SynthConfig cfg = tiny_cfg(15);
    SynthOutput out = gen_synthetic(cfg, dir.string());
    std::ifstream in(out.manifest_path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const std::string needle = "\"views_per_object\": 2";
    REQUIRE(text.find(needle) != std::string::npos);
    text.replace(text.find(needle), needle.size(), "\"views_per_object\": 5");
    std::ofstream(out.manifest_path, std::ios::trunc) << text;
    try {
        load_manifest(out.manifest_path);
        FAIL("expected a load error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Format);
    }
}

TEST_CASE("train-label leakage into retrieval splits fails the load") {
    fs::path dir = scratch("leak");
    SynthConfig cfg = tiny_cfg(17);
    SynthOutput out = gen_synthetic(cfg, dir.string());
    std::ifstream in(out.manifest_path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    // relabel one query object with a seen label
    const std::string needle = "\"label\": \"unseen00\"";
    REQUIRE(text.find(needle) != std::string::npos);
    text.replace(text.find(needle), needle.size(), "\"label\": \"seen00\"");
    std::ofstream(out.manifest_path, std::ios::trunc) << text;
    try {
        load_manifest(out.manifest_path);
        FAIL("expected a data error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Data);
        CHECK(std::string(e.what()).find("seen00") != std::string::npos);
    }
}

TEST_CASE("self-retrieval of clean prototypes is perfect") {
    SynthConfig cfg;  // the full default profile
    const auto protos = synth_prototypes(cfg);
    std::vector<Descriptor> queries, gallery;
    FusionConfig fcfg;
    fcfg.alpha = 0.0;
    fcfg.act = Activation::Identity;
    std::size_t i = 0;
    for (const auto& [label, proto] : protos) {
        if (label.rfind("unseen", 0) != 0) continue;
        queries.push_back(fuse(proto, std::nullopt, fcfg, "q" + std::to_string(i), label));
        gallery.push_back(fuse(proto, std::nullopt, fcfg, "t" + std::to_string(i), label));
        ++i;
    }
    REQUIRE(queries.size() == cfg.unseen_classes);
    MetricsReport rep = evaluate(queries, gallery);
    CHECK(rep.map == doctest::Approx(100.0).epsilon(1e-10));
    CHECK(rep.ndcg == doctest::Approx(100.0).epsilon(1e-10));
    CHECK(rep.anmrr == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("backbone and adapters survive a save/load cycle") {
    fs::path dir = scratch("model_io");
    SynthConfig cfg = tiny_cfg(19);
    SynthOutput out = gen_synthetic(cfg, dir.string());
    auto [vis, txt] = load_backbone(out.backbone_path);

    Rng ar(23);
    attach_adapters(vis, 2, 1.0, 0.25, ar);
    attach_adapters(txt, 2, 1.0, 0.25, ar);
    Rng nud(29);
    for (auto* tower : {&vis, &txt})
        for (TowerLayer& l : tower->layers)
            if (l.adapter) {
                for (double& x : l.adapter->b.data) x = 0.25f * float(nud.normal());
                for (double& x : l.adapter->phi) x = 0.25f * float(nud.normal());
                for (double& x : l.adapter->a.data) x = float(x);  // f32 grid
            }

    const std::string apath = (dir / "adapters.dacf").string();
    save_adapters(apath, vis, txt);

    auto [vis2, txt2] = load_backbone(out.backbone_path);
    load_adapters_into(vis2, txt2, apath);

    // values already on the f32 grid round-trip exactly
    for (std::size_t i = 0; i < vis.layers.size(); ++i) {
        if (!vis.layers[i].adapter) {
            CHECK(!vis2.layers[i].adapter);
            continue;
        }
        CHECK(vis2.layers[i].adapter->a.data == vis.layers[i].adapter->a.data);
        CHECK(vis2.layers[i].adapter->b.data == vis.layers[i].adapter->b.data);
        CHECK(vis2.layers[i].adapter->phi == vis.layers[i].adapter->phi);
        CHECK(vis2.layers[i].adapter->rank == vis.layers[i].adapter->rank);
        CHECK(vis2.layers[i].adapter->gamma == vis.layers[i].adapter->gamma);
        CHECK(vis2.layers[i].adapter->dropout_p == vis.layers[i].adapter->dropout_p);
    }
}

TEST_CASE("descriptor store round-trips ids and constituents") {
    fs::path dir = scratch("desc_io");
    std::vector<Descriptor> descs;
    Rng rng(31);
    FusionConfig fcfg;
    for (int i = 0; i < 5; ++i) {
        Vec g(6), f(6);
        for (double& x : g) x = float(rng.normal());
        for (double& x : f) x = float(rng.normal());
        descs.push_back(fuse(g, i % 2 ? std::optional<Vec>(f) : std::nullopt, fcfg,
                             "obj" + std::to_string(i), "lbl"));
    }
    const std::string path = (dir / "descs.dacf").string();
    save_descriptors(path, descs);
    auto loaded = load_descriptors(path);
    REQUIRE(loaded.size() == 5);
    for (const Descriptor& d : descs) {
        const StoredDescriptor& s = loaded.at(d.id);
        REQUIRE(s.h.size() == d.h.size());
        for (std::size_t i = 0; i < d.h.size(); ++i)
            CHECK(s.h[i] == doctest::Approx(d.h[i]).epsilon(1e-7));
        CHECK(s.f_t.has_value() == d.f_t.has_value());
    }
}

TEST_CASE("synth config validation") {
    SynthConfig cfg = tiny_cfg();
    cfg.seen_classes = 1;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = tiny_cfg();
    cfg.unseen_classes = 1;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = tiny_cfg();
    cfg.items_per_class = 1;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = tiny_cfg();
    cfg.intra_class_noise = -1.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("sha256 reference vectors") {
    CHECK(Sha256::of_bytes("", 0) ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(Sha256::of_bytes("abc", 3) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    const char* msg = "abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq";
    CHECK(Sha256::of_bytes(msg, 56) ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("merging fresh adapters reproduces the backbone file byte for byte") {
    fs::path dir = scratch("fresh_merge");
    SynthConfig cfg = tiny_cfg(23);
    SynthOutput out = gen_synthetic(cfg, dir.string());
    auto [vis, txt] = load_backbone(out.backbone_path);
    Rng ar(29);
    attach_adapters(vis, 2, 1.0, 0.25, ar);
    attach_adapters(txt, 2, 1.0, 0.25, ar);
    const std::string apath = (dir / "fresh_adapters.dacf").string();
    save_adapters(apath, vis, txt);

    MergeResult res = run_merge(out.backbone_path, apath, (dir / "merged.dacf").string(), 16, 3);
    CHECK(res.max_rel_deviation < 1e-12);
    CHECK(Sha256::of_file((dir / "merged.dacf").string()) == Sha256::of_file(out.backbone_path));
}
