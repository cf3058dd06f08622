// dac - command-line front end for the DAC open-set retrieval pipeline.
// Links the C API only; all heavy lifting lives in libdac.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dac/dac.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

int exit_code_for(dac_status s) {
    switch (s) {
        case DAC_OK: return kExitOk;
        case DAC_ERR_CONFIG:
        case DAC_ERR_USAGE: return kExitUsage;
        default: return kExitRuntime;
    }
}

int fail(dac_status s) {
    std::fprintf(stderr, "error (%s): %s\n", dac_status_name(s), dac_last_error());
    return exit_code_for(s);
}

std::string env_out_dir() {
    const char* v = std::getenv("DAC_OUT_DIR");
    return v ? std::string(v) : std::string();
}

// Config file overrides flags, flags override defaults.
json load_config_overrides(const std::string& path, const std::string& section) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) {
        std::fprintf(stderr, "error (io): cannot open config file %s\n", path.c_str());
        std::exit(kExitRuntime);
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        std::fprintf(stderr, "error (format): config parse: %s\n", e.what());
        std::exit(kExitUsage);
    }
    if (j.contains(section) && j.at(section).is_object()) return j.at(section);
    return j.is_object() ? j : json::object();
}

template <typename T>
void override_from(const json& cfg, const char* key, T& value) {
    if (cfg.contains(key)) value = cfg.at(key).get<T>();
}

std::string default_sibling(const std::string& manifest, const char* filename) {
    return (fs::path(manifest).parent_path() / filename).string();
}

void print_metrics(const json& metrics) {
    std::printf("mAP / NDCG / ANMRR: %s\n", metrics.at("format").get<std::string>().c_str());
    std::printf("queries evaluated: %zu, excluded: %zu, gallery: %zu\n",
                metrics.at("queries_evaluated").get<std::size_t>(),
                metrics.at("queries_excluded").get<std::size_t>(),
                metrics.at("gallery_size").get<std::size_t>());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        std::fprintf(stderr, "error (io): cannot write %s\n", path.c_str());
        std::exit(kExitRuntime);
    }
    out << text;
}

struct FusionFlags {
    double alpha = -1.0;  // <0: take profile default
    std::string scheme = "add";
    std::string act = "tanh";
    bool post_norm = false;
    std::string dataset_tag;
    std::string backbone_tag;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--alpha", alpha, "fusion weight in [0,1]; default from the profile tags");
        cmd->add_option("--fusion", scheme, "fusion scheme: add|concat")
            ->check(CLI::IsMember({"add", "concat"}));
        cmd->add_option("--act", act, "fusion activation: tanh|relu|sigmoid|identity")
            ->check(CLI::IsMember({"tanh", "relu", "sigmoid", "identity"}));
        cmd->add_flag("--post-norm", post_norm, "L2-normalize fused descriptors");
        cmd->add_option("--dataset-tag", dataset_tag, "dataset profile tag for the default alpha");
        cmd->add_option("--backbone-tag", backbone_tag, "backbone profile tag for the default alpha");
    }

    void apply_config(const json& cfg) {
        override_from(cfg, "alpha", alpha);
        override_from(cfg, "fusion", scheme);
        override_from(cfg, "act", act);
        override_from(cfg, "post_norm", post_norm);
        override_from(cfg, "dataset_tag", dataset_tag);
        override_from(cfg, "backbone_tag", backbone_tag);
    }

    dac_fusion_config resolve() const {
        dac_fusion_config fc;
        dac_fusion_config_init(&fc);
        fc.alpha = alpha >= 0.0 ? alpha
                                : dac_default_alpha(dataset_tag.c_str(), backbone_tag.c_str());
        fc.scheme = scheme == "concat" ? DAC_FUSION_CONCAT : DAC_FUSION_ADD;
        if (act == "identity") fc.act = DAC_ACT_IDENTITY;
        else if (act == "relu") fc.act = DAC_ACT_RELU;
        else if (act == "sigmoid") fc.act = DAC_ACT_SIGMOID;
        else fc.act = DAC_ACT_TANH;
        fc.post_normalize = post_norm ? 1 : 0;
        return fc;
    }
};

struct TrainFlags {
    dac_train_config tc;
    std::string lora_mode = "ablora";

    TrainFlags() { dac_train_config_init(&tc); }

    void add_to(CLI::App* cmd) {
        cmd->add_option("--epochs", tc.epochs, "training epochs");
        cmd->add_option("--batch", tc.batch_size, "batch size");
        cmd->add_option("--lr", tc.lr, "initial learning rate");
        cmd->add_option("--tau", tc.tau, "softmax temperature");
        cmd->add_option("--rank", tc.rank, "adapter rank");
        cmd->add_option("--gamma", tc.gamma, "adapter scale");
        cmd->add_option("--lora-alpha", tc.lora_alpha, "if > 0, gamma = lora_alpha / rank");
        cmd->add_option("--dropout", tc.dropout_p, "adapter input dropout probability");
        cmd->add_option("--seed", tc.seed, "run seed");
        cmd->add_option("--lora-mode", lora_mode, "ablora|plain_lora|frozen")
            ->check(CLI::IsMember({"ablora", "plain_lora", "frozen"}));
        cmd->add_flag("--renorm-pooled", tc.renormalize_pooled,
                      "re-normalize pooled embeddings before the loss");
    }

    void apply_config(const json& cfg) {
        override_from(cfg, "epochs", tc.epochs);
        override_from(cfg, "batch", tc.batch_size);
        override_from(cfg, "lr", tc.lr);
        override_from(cfg, "tau", tc.tau);
        override_from(cfg, "rank", tc.rank);
        override_from(cfg, "gamma", tc.gamma);
        override_from(cfg, "lora_alpha", tc.lora_alpha);
        override_from(cfg, "dropout", tc.dropout_p);
        override_from(cfg, "seed", tc.seed);
        override_from(cfg, "lora_mode", lora_mode);
        override_from(cfg, "renorm_pooled", tc.renormalize_pooled);
    }

    dac_train_config resolve() const {
        dac_train_config out = tc;
        if (lora_mode == "plain_lora") out.lora_mode = DAC_LORA_PLAIN;
        else if (lora_mode == "frozen") out.lora_mode = DAC_LORA_FROZEN;
        else out.lora_mode = DAC_LORA_ABLORA;
        return out;
    }
};

int run_adapt_cmd(const std::string& manifest, std::string backbone, std::string adapters_out,
                  std::string report_out, const dac_train_config& tc, bool quiet) {
    if (backbone.empty()) backbone = default_sibling(manifest, "backbone.dacf");
    if (adapters_out.empty()) adapters_out = default_sibling(manifest, "adapters.dacf");
    if (!quiet)
        std::printf("adapt: rank=%d dropout=%.2f lr=%g batch=%d epochs=%d tau=%.3f mode=%s seed=%llu\n",
                    tc.rank, tc.dropout_p, tc.lr, tc.batch_size, tc.epochs, tc.tau,
                    tc.lora_mode == DAC_LORA_PLAIN    ? "plain_lora"
                    : tc.lora_mode == DAC_LORA_FROZEN ? "frozen"
                                                      : "ablora",
                    static_cast<unsigned long long>(tc.seed));
    char* report = nullptr;
    dac_status s = dac_adapt(manifest.c_str(), backbone.c_str(), &tc, adapters_out.c_str(), &report);
    if (s != DAC_OK) return fail(s);
    json rep = json::parse(report);
    dac_string_free(report);
    const auto& losses = rep.at("epoch_mean_loss");
    if (!quiet && !losses.empty())
        std::printf("loss: epoch 1 %.6f -> epoch %zu %.6f\n", losses.front().get<double>(),
                    losses.size(), losses.back().get<double>());
    if (report_out.empty()) report_out = default_sibling(manifest, "train_report.json");
    write_text(report_out, rep.dump(2) + "\n");
    if (tc.lora_mode != DAC_LORA_FROZEN) {
        char* hex = nullptr;
        if (dac_file_sha256(adapters_out.c_str(), &hex) == DAC_OK) {
            if (!quiet) std::printf("adapters: %s sha256=%s\n", adapters_out.c_str(), hex);
            dac_string_free(hex);
        }
    }
    if (!quiet) std::printf("report: %s\n", report_out.c_str());
    return kExitOk;
}

int run_embed_cmd(const std::string& manifest, std::string backbone, std::string adapters,
                  bool zero_shot, bool view_norm, const dac_fusion_config& fc, std::string out,
                  bool quiet) {
    if (backbone.empty()) backbone = default_sibling(manifest, "backbone.dacf");
    if (adapters.empty() && !zero_shot) adapters = default_sibling(manifest, "adapters.dacf");
    if (out.empty()) out = default_sibling(manifest, "descriptors.dacf");
    size_t count = 0;
    dac_status s = dac_embed(manifest.c_str(), backbone.c_str(),
                             zero_shot ? nullptr : adapters.c_str(), &fc, zero_shot ? 1 : 0,
                             view_norm ? 1 : 0, out.c_str(), &count);
    if (s != DAC_OK) return fail(s);
    if (!quiet)
        std::printf("embed: %zu descriptors (alpha=%.3f scheme=%s) -> %s\n", count, fc.alpha,
                    fc.scheme == DAC_FUSION_CONCAT ? "concat" : "add", out.c_str());
    return kExitOk;
}

int run_eval_cmd(const std::string& manifest, std::string descriptors, int ndcg_cutoff,
                 const std::string& csv, std::string metrics_out, bool quiet) {
    if (descriptors.empty()) descriptors = default_sibling(manifest, "descriptors.dacf");
    char* metrics = nullptr;
    dac_status s = dac_evaluate(manifest.c_str(), descriptors.c_str(), ndcg_cutoff,
                                csv.empty() ? nullptr : csv.c_str(), &metrics);
    if (s != DAC_OK) return fail(s);
    json j = json::parse(metrics);
    dac_string_free(metrics);
    print_metrics(j);
    if (metrics_out.empty()) metrics_out = default_sibling(manifest, "metrics.json");
    write_text(metrics_out, j.dump(2) + "\n");
    if (!quiet) std::printf("metrics: %s\n", metrics_out.c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DAC open-set 3D object retrieval pipeline"};
    app.require_subcommand(1);
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "suppress progress output");

    // gen-synth
    auto* gen = app.add_subcommand("gen-synth", "generate a synthetic open-set dataset");
    dac_synth_config sc;
    dac_synth_config_init(&sc);
    std::string gen_out = env_out_dir();
    std::string gen_config;
    gen->add_option("--out", gen_out, "output directory")->required(env_out_dir().empty());
    gen->add_option("--seed", sc.seed, "generator seed");
    gen->add_option("--seen", sc.seen_classes, "seen (train) class count");
    gen->add_option("--unseen", sc.unseen_classes, "unseen (retrieval) class count");
    gen->add_option("--items", sc.items_per_class, "objects per class");
    gen->add_option("--views", sc.views, "views per object");
    gen->add_option("--dim", sc.input_dim, "raw feature dimension");
    gen->add_option("--noise", sc.intra_class_noise, "intra-class view noise sigma");
    gen->add_option("--shift", sc.domain_shift, "domain-shift affine strength");
    gen->add_option("--text-noise", sc.text_noise, "per-object description noise");
    gen->add_option("--hidden-dim", sc.hidden_dim, "backbone hidden width");
    gen->add_option("--embed-dim", sc.embed_dim, "embedding dimension");
    gen->add_option("--config", gen_config, "JSON config file (overrides flags)");

    // adapt
    auto* adapt = app.add_subcommand("adapt", "train AB-LoRA adapters on the train split");
    std::string ad_manifest, ad_backbone, ad_out, ad_report, ad_config;
    TrainFlags tf;
    adapt->add_option("--manifest", ad_manifest, "dataset manifest")->required();
    adapt->add_option("--backbone", ad_backbone, "backbone file (default: sibling backbone.dacf)");
    adapt->add_option("--out", ad_out, "adapter state output (default: sibling adapters.dacf)");
    adapt->add_option("--report", ad_report, "training report JSON output");
    tf.add_to(adapt);
    adapt->add_option("--config", ad_config, "JSON config file (overrides flags)");

    // embed
    auto* embed = app.add_subcommand("embed", "encode and fuse query/target descriptors");
    std::string em_manifest, em_backbone, em_adapters, em_out, em_config;
    bool em_zero_shot = false;
    FusionFlags ff;
    embed->add_option("--manifest", em_manifest, "dataset manifest")->required();
    embed->add_option("--backbone", em_backbone, "backbone file (default: sibling backbone.dacf)");
    embed->add_option("--adapters", em_adapters, "adapter state (default: sibling adapters.dacf)");
    embed->add_flag("--zero-shot", em_zero_shot, "skip adapters (frozen backbone only)");
    bool em_no_view_norm = false;
    embed->add_flag("--no-view-norm", em_no_view_norm,
                    "skip per-view L2 normalization before pooling");
    embed->add_option("--out", em_out, "descriptor output (default: sibling descriptors.dacf)");
    ff.add_to(embed);
    embed->add_option("--config", em_config, "JSON config file (overrides flags)");

    // eval
    auto* eval = app.add_subcommand("eval", "rank queries against the target gallery");
    std::string ev_manifest, ev_descriptors, ev_csv, ev_out, ev_config;
    std::string ev_train_manifest, ev_train_backbone, ev_workdir;
    int ev_cutoff = 0;
    eval->add_option("--manifest,--eval-manifest", ev_manifest, "dataset manifest")->required();
    eval->add_option("--descriptors", ev_descriptors, "descriptor file (default: sibling descriptors.dacf)");
    eval->add_option("--ndcg-cutoff", ev_cutoff, "NDCG cutoff (0: full list)");
    eval->add_option("--per-query-csv", ev_csv, "write per-query metrics CSV");
    eval->add_option("--out", ev_out, "metrics JSON output (default: sibling metrics.json)");
    eval->add_option("--train-manifest", ev_train_manifest,
                     "cross-dataset mode: adapt on this manifest first, then embed+eval");
    eval->add_option("--train-backbone", ev_train_backbone,
                     "backbone for cross-dataset mode (default: sibling of train manifest)");
    eval->add_option("--workdir", ev_workdir, "work directory for cross-dataset artifacts");
    eval->add_option("--config", ev_config, "JSON config file (overrides flags)");
    TrainFlags ev_tf;
    ev_tf.add_to(eval);
    FusionFlags ev_ff;
    ev_ff.add_to(eval);

    // merge-lora
    auto* merge = app.add_subcommand("merge-lora", "fold adapters into the backbone");
    std::string mg_backbone, mg_adapters, mg_out, mg_config;
    int mg_probes = 64;
    uint64_t mg_seed = 0;
    merge->add_option("--backbone", mg_backbone, "backbone file")->required();
    merge->add_option("--adapters", mg_adapters, "adapter state")->required();
    merge->add_option("--out", mg_out, "merged backbone output")->required();
    merge->add_option("--probes", mg_probes, "equivalence probe count");
    merge->add_option("--seed", mg_seed, "probe seed");
    merge->add_option("--config", mg_config, "JSON config file (overrides flags)");

    for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    if (gen->parsed()) {
        json cfg = load_config_overrides(gen_config, "gen-synth");
        override_from(cfg, "out", gen_out);
        override_from(cfg, "seed", sc.seed);
        override_from(cfg, "seen", sc.seen_classes);
        override_from(cfg, "unseen", sc.unseen_classes);
        override_from(cfg, "items", sc.items_per_class);
        override_from(cfg, "views", sc.views);
        override_from(cfg, "dim", sc.input_dim);
        override_from(cfg, "noise", sc.intra_class_noise);
        override_from(cfg, "shift", sc.domain_shift);
        override_from(cfg, "text_noise", sc.text_noise);
        if (gen_out.empty()) {
            std::fprintf(stderr, "error (usage): --out is required (or set DAC_OUT_DIR)\n");
            return kExitUsage;
        }
        char* files = nullptr;
        dac_status s = dac_gen_synth(&sc, gen_out.c_str(), &files);
        if (s != DAC_OK) return fail(s);
        json arr = json::parse(files);
        dac_string_free(files);
        for (const json& f : arr)
            std::printf("%s  %s\n", f.at("sha256").get<std::string>().c_str(),
                        f.at("path").get<std::string>().c_str());
        return kExitOk;
    }

    if (adapt->parsed()) {
        json cfg = load_config_overrides(ad_config, "adapt");
        tf.apply_config(cfg);
        override_from(cfg, "manifest", ad_manifest);
        override_from(cfg, "backbone", ad_backbone);
        override_from(cfg, "out", ad_out);
        return run_adapt_cmd(ad_manifest, ad_backbone, ad_out, ad_report, tf.resolve(), quiet);
    }

    if (embed->parsed()) {
        json cfg = load_config_overrides(em_config, "embed");
        ff.apply_config(cfg);
        override_from(cfg, "manifest", em_manifest);
        override_from(cfg, "backbone", em_backbone);
        override_from(cfg, "adapters", em_adapters);
        override_from(cfg, "zero_shot", em_zero_shot);
        override_from(cfg, "out", em_out);
        override_from(cfg, "no_view_norm", em_no_view_norm);
        return run_embed_cmd(em_manifest, em_backbone, em_adapters, em_zero_shot,
                             !em_no_view_norm, ff.resolve(), em_out, quiet);
    }

    if (eval->parsed()) {
        json cfg = load_config_overrides(ev_config, "eval");
        ev_tf.apply_config(cfg);
        ev_ff.apply_config(cfg);
        override_from(cfg, "ndcg_cutoff", ev_cutoff);

        if (!ev_train_manifest.empty()) {
            // cross-dataset transfer: adapt on A, embed+eval on B with A's model
            std::string workdir = ev_workdir.empty()
                                      ? (fs::path(ev_manifest).parent_path() / "transfer").string()
                                      : ev_workdir;
            fs::create_directories(workdir);
            std::string backbone = ev_train_backbone.empty()
                                       ? default_sibling(ev_train_manifest, "backbone.dacf")
                                       : ev_train_backbone;
            const std::string adapters = (fs::path(workdir) / "adapters.dacf").string();
            const std::string report = (fs::path(workdir) / "train_report.json").string();
            int rc = run_adapt_cmd(ev_train_manifest, backbone, adapters, report,
                                   ev_tf.resolve(), quiet);
            if (rc != kExitOk) return rc;
            const std::string descriptors = (fs::path(workdir) / "descriptors.dacf").string();
            rc = run_embed_cmd(ev_manifest, backbone, adapters, false, true, ev_ff.resolve(),
                               descriptors, quiet);
            if (rc != kExitOk) return rc;
            const std::string metrics =
                ev_out.empty() ? (fs::path(workdir) / "metrics.json").string() : ev_out;
            return run_eval_cmd(ev_manifest, descriptors, ev_cutoff, ev_csv, metrics, quiet);
        }
        return run_eval_cmd(ev_manifest, ev_descriptors, ev_cutoff, ev_csv, ev_out, quiet);
    }

    if (merge->parsed()) {
        json cfg = load_config_overrides(mg_config, "merge-lora");
        override_from(cfg, "probes", mg_probes);
        override_from(cfg, "seed", mg_seed);
        double max_dev = 0.0;
        dac_status s = dac_merge_adapters(mg_backbone.c_str(), mg_adapters.c_str(),
                                          mg_out.c_str(), mg_probes, mg_seed, &max_dev);
        if (s != DAC_OK) return fail(s);
        std::printf("merge: %d probes, max relative deviation %.3e -> %s\n", mg_probes, max_dev,
                    mg_out.c_str());
        if (max_dev > 1e-8) {
            std::fprintf(stderr, "error (data): merged/adapted equivalence breach: %.3e > 1e-8\n",
                         max_dev);
            return kExitRuntime;
        }
        return kExitOk;
    }

    return kExitUsage;
}
