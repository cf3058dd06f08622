#include "dac/dac.h"

#include <cstring>
#include <new>
#include <string>

#include <json.hpp>

#include "pipeline.hpp"
#include "sha256.hpp"

using nlohmann::json;

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

dac_status status_of(dac::ErrorKind k) {
    switch (k) {
        case dac::ErrorKind::Shape: return DAC_ERR_SHAPE;
        case dac::ErrorKind::Config: return DAC_ERR_CONFIG;
        case dac::ErrorKind::Data: return DAC_ERR_DATA;
        case dac::ErrorKind::Usage: return DAC_ERR_USAGE;
        case dac::ErrorKind::Format: return DAC_ERR_FORMAT;
        case dac::ErrorKind::Degenerate: return DAC_ERR_DEGENERATE;
        case dac::ErrorKind::Io: return DAC_ERR_IO;
    }
    return DAC_ERR_INTERNAL;
}

template <typename Fn>
dac_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return DAC_OK;
    } catch (const dac::Error& e) {
        g_last_error = e.what();
        return status_of(e.kind());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return DAC_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return DAC_ERR_INTERNAL;
    }
}

dac_status require_arg(const void* p, const char* name) {
    if (p) return DAC_OK;
    g_last_error = std::string("null argument: ") + name;
    return DAC_ERR_USAGE;
}

dac::TrainConfig to_train_config(const dac_train_config& c) {
    dac::TrainConfig out;
    out.epochs = static_cast<std::size_t>(c.epochs);
    out.batch_size = static_cast<std::size_t>(c.batch_size);
    out.lr = c.lr;
    out.tau = c.tau;
    out.rank = static_cast<std::size_t>(c.rank);
    out.gamma = c.gamma;
    out.lora_alpha = c.lora_alpha;
    out.dropout_p = c.dropout_p;
    out.seed = c.seed;
    switch (c.lora_mode) {
        case DAC_LORA_ABLORA: out.lora_mode = dac::LoraMode::AbLora; break;
        case DAC_LORA_PLAIN: out.lora_mode = dac::LoraMode::PlainLora; break;
        case DAC_LORA_FROZEN: out.lora_mode = dac::LoraMode::Frozen; break;
        default:
            dac::raise(dac::ErrorKind::Config,
                       "lora_mode must be one of DAC_LORA_ABLORA/PLAIN/FROZEN");
    }
    out.renormalize_pooled = c.renormalize_pooled != 0;
    if (c.epochs < 1 || c.batch_size < 1 || c.rank < 1)
        dac::raise(dac::ErrorKind::Config, "epochs, batch_size and rank must be >= 1");
    return out;
}

dac::FusionConfig to_fusion_config(const dac_fusion_config& c) {
    dac::FusionConfig out;
    out.alpha = c.alpha;
    switch (c.scheme) {
        case DAC_FUSION_ADD: out.scheme = dac::FusionScheme::Add; break;
        case DAC_FUSION_CONCAT: out.scheme = dac::FusionScheme::Concat; break;
        default: dac::raise(dac::ErrorKind::Config, "bad fusion scheme code");
    }
    switch (c.act) {
        case DAC_ACT_IDENTITY: out.act = dac::Activation::Identity; break;
        case DAC_ACT_RELU: out.act = dac::Activation::Relu; break;
        case DAC_ACT_TANH: out.act = dac::Activation::Tanh; break;
        case DAC_ACT_SIGMOID: out.act = dac::Activation::Sigmoid; break;
        default: dac::raise(dac::ErrorKind::Config, "bad activation code");
    }
    out.post_normalize = c.post_normalize != 0;
    out.validate();
    return out;
}

dac::SynthConfig to_synth_config(const dac_synth_config& c) {
    if (c.seen_classes < 0 || c.unseen_classes < 0 || c.items_per_class < 0 || c.views < 0 ||
        c.input_dim < 0 || c.hidden_dim < 0 || c.embed_dim < 0)
        dac::raise(dac::ErrorKind::Config, "synth config counts must be non-negative");
    dac::SynthConfig out;
    out.seen_classes = static_cast<std::size_t>(c.seen_classes);
    out.unseen_classes = static_cast<std::size_t>(c.unseen_classes);
    out.items_per_class = static_cast<std::size_t>(c.items_per_class);
    out.views = static_cast<std::size_t>(c.views);
    out.input_dim = static_cast<std::size_t>(c.input_dim);
    out.intra_class_noise = c.intra_class_noise;
    out.domain_shift = c.domain_shift;
    out.text_noise = c.text_noise;
    out.seed = c.seed;
    out.hidden_dim = static_cast<std::size_t>(c.hidden_dim);
    out.embed_dim = static_cast<std::size_t>(c.embed_dim);
    return out;
}

}  // namespace

extern "C" {

struct dac_dataset {
    dac::LoadedDataset loaded;
};

const char* dac_status_name(dac_status s) {
    switch (s) {
        case DAC_OK: return "ok";
        case DAC_ERR_SHAPE: return "shape";
        case DAC_ERR_CONFIG: return "config";
        case DAC_ERR_DATA: return "data";
        case DAC_ERR_USAGE: return "usage";
        case DAC_ERR_FORMAT: return "format";
        case DAC_ERR_DEGENERATE: return "degenerate";
        case DAC_ERR_IO: return "io";
        case DAC_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

const char* dac_last_error(void) { return g_last_error.c_str(); }

void dac_string_free(char* s) { delete[] s; }

void dac_synth_config_init(dac_synth_config* cfg) {
    if (!cfg) return;
    dac::SynthConfig d;
    cfg->seen_classes = static_cast<int32_t>(d.seen_classes);
    cfg->unseen_classes = static_cast<int32_t>(d.unseen_classes);
    cfg->items_per_class = static_cast<int32_t>(d.items_per_class);
    cfg->views = static_cast<int32_t>(d.views);
    cfg->input_dim = static_cast<int32_t>(d.input_dim);
    cfg->intra_class_noise = d.intra_class_noise;
    cfg->domain_shift = d.domain_shift;
    cfg->text_noise = d.text_noise;
    cfg->seed = d.seed;
    cfg->hidden_dim = static_cast<int32_t>(d.hidden_dim);
    cfg->embed_dim = static_cast<int32_t>(d.embed_dim);
}

dac_status dac_gen_synth(const dac_synth_config* cfg, const char* out_dir,
                         char** files_json_out) {
    if (dac_status s = require_arg(cfg, "cfg"); s != DAC_OK) return s;
    if (dac_status s = require_arg(out_dir, "out_dir"); s != DAC_OK) return s;
    return guarded([&] {
        dac::SynthOutput out = dac::gen_synthetic(to_synth_config(*cfg), out_dir);
        if (files_json_out) {
            json arr = json::array();
            for (const std::string& p : out.all_paths())
                arr.push_back({{"path", p}, {"sha256", dac::Sha256::of_file(p)}});
            *files_json_out = dup_string(arr.dump(2) + "\n");
        }
    });
}

void dac_train_config_init(dac_train_config* cfg) {
    if (!cfg) return;
    dac::TrainConfig d;
    cfg->epochs = static_cast<int32_t>(d.epochs);
    cfg->batch_size = static_cast<int32_t>(d.batch_size);
    cfg->lr = d.lr;
    cfg->tau = d.tau;
    cfg->rank = static_cast<int32_t>(d.rank);
    cfg->gamma = d.gamma;
    cfg->lora_alpha = d.lora_alpha;
    cfg->dropout_p = d.dropout_p;
    cfg->seed = d.seed;
    cfg->lora_mode = DAC_LORA_ABLORA;
    cfg->renormalize_pooled = d.renormalize_pooled ? 1 : 0;
}

dac_status dac_adapt(const char* manifest_path, const char* backbone_path,
                     const dac_train_config* cfg, const char* adapters_out,
                     char** report_json_out) {
    if (dac_status s = require_arg(manifest_path, "manifest_path"); s != DAC_OK) return s;
    if (dac_status s = require_arg(backbone_path, "backbone_path"); s != DAC_OK) return s;
    if (dac_status s = require_arg(cfg, "cfg"); s != DAC_OK) return s;
    if (dac_status s = require_arg(adapters_out, "adapters_out"); s != DAC_OK) return s;
    return guarded([&] {
        dac::TrainConfig tc = to_train_config(*cfg);
        dac::AdaptResult res = dac::run_adapt(manifest_path, backbone_path, tc, adapters_out);
        if (report_json_out)
            *report_json_out = dup_string(dac::train_report_to_json(tc, res.report));
    });
}

void dac_fusion_config_init(dac_fusion_config* cfg) {
    if (!cfg) return;
    dac::FusionConfig d;
    cfg->alpha = d.alpha;
    cfg->scheme = DAC_FUSION_ADD;
    cfg->act = DAC_ACT_TANH;
    cfg->post_normalize = d.post_normalize ? 1 : 0;
}

dac_status dac_embed(const char* manifest_path, const char* backbone_path,
                     const char* adapters_path, const dac_fusion_config* fusion,
                     int32_t zero_shot, int32_t normalize_views,
                     const char* descriptors_out, size_t* count_out) {
    if (dac_status s = require_arg(manifest_path, "manifest_path"); s != DAC_OK) return s;
    if (dac_status s = require_arg(backbone_path, "backbone_path"); s != DAC_OK) return s;
    if (dac_status s = require_arg(fusion, "fusion"); s != DAC_OK) return s;
    if (dac_status s = require_arg(descriptors_out, "descriptors_out"); s != DAC_OK) return s;
    return guarded([&] {
        dac::EmbedOptions opts;
        opts.fusion = to_fusion_config(*fusion);
        opts.zero_shot = zero_shot != 0;
        opts.normalize_views = normalize_views != 0;
        const std::size_t n =
            dac::run_embed(manifest_path, backbone_path,
                           adapters_path ? adapters_path : "", opts, descriptors_out);
        if (count_out) *count_out = n;
    });
}

double dac_default_alpha(const char* dataset_tag, const char* backbone_tag) {
    return dac::default_alpha(dataset_tag ? dataset_tag : "", backbone_tag ? backbone_tag : "");
}

dac_status dac_evaluate(const char* manifest_path, const char* descriptors_path,
                        int32_t ndcg_cutoff, const char* per_query_csv,
                        char** metrics_json_out) {
    if (dac_status s = require_arg(manifest_path, "manifest_path"); s != DAC_OK) return s;
    if (dac_status s = require_arg(descriptors_path, "descriptors_path"); s != DAC_OK) return s;
    if (ndcg_cutoff < 0) {
        g_last_error = "ndcg_cutoff must be >= 0";
        return DAC_ERR_CONFIG;
    }
    return guarded([&] {
        dac::EvalOptions opts;
        opts.ndcg_cutoff = static_cast<std::size_t>(ndcg_cutoff);
        if (per_query_csv) opts.per_query_csv = per_query_csv;
        dac::MetricsReport rep = dac::run_eval(manifest_path, descriptors_path, opts);
        if (metrics_json_out)
            *metrics_json_out = dup_string(dac::metrics_report_to_json(rep));
    });
}

dac_status dac_merge_adapters(const char* backbone_path, const char* adapters_path,
                              const char* merged_out, int32_t probes, uint64_t seed,
                              double* max_rel_deviation_out) {
    if (dac_status s = require_arg(backbone_path, "backbone_path"); s != DAC_OK) return s;
    if (dac_status s = require_arg(adapters_path, "adapters_path"); s != DAC_OK) return s;
    if (dac_status s = require_arg(merged_out, "merged_out"); s != DAC_OK) return s;
    if (probes < 1) {
        g_last_error = "probes must be >= 1";
        return DAC_ERR_CONFIG;
    }
    return guarded([&] {
        dac::MergeResult res = dac::run_merge(backbone_path, adapters_path, merged_out,
                                              static_cast<std::size_t>(probes), seed);
        if (max_rel_deviation_out) *max_rel_deviation_out = res.max_rel_deviation;
    });
}

dac_status dac_dataset_open(const char* manifest_path, dac_dataset** out) {
    if (dac_status s = require_arg(manifest_path, "manifest_path"); s != DAC_OK) return s;
    if (dac_status s = require_arg(out, "out"); s != DAC_OK) return s;
    return guarded([&] {
        auto* ds = new dac_dataset{dac::load_manifest(manifest_path)};
        *out = ds;
    });
}

void dac_dataset_close(dac_dataset* ds) { delete ds; }

dac_status dac_dataset_count(const dac_dataset* ds, const char* split, size_t* out) {
    if (dac_status s = require_arg(ds, "ds"); s != DAC_OK) return s;
    if (dac_status s = require_arg(split, "split"); s != DAC_OK) return s;
    if (dac_status s = require_arg(out, "out"); s != DAC_OK) return s;
    return guarded([&] {
        switch (dac::split_from_name(split)) {
            case dac::Split::Train: *out = ds->loaded.dataset.train.size(); break;
            case dac::Split::Query: *out = ds->loaded.dataset.query.size(); break;
            case dac::Split::Target: *out = ds->loaded.dataset.target.size(); break;
        }
    });
}

dac_status dac_dataset_input_dim(const dac_dataset* ds, size_t* out) {
    if (dac_status s = require_arg(ds, "ds"); s != DAC_OK) return s;
    if (dac_status s = require_arg(out, "out"); s != DAC_OK) return s;
    *out = ds->loaded.manifest.input_dim;
    return DAC_OK;
}

dac_status dac_dataset_views_per_object(const dac_dataset* ds, size_t* out) {
    if (dac_status s = require_arg(ds, "ds"); s != DAC_OK) return s;
    if (dac_status s = require_arg(out, "out"); s != DAC_OK) return s;
    *out = ds->loaded.manifest.views_per_object;
    return DAC_OK;
}

dac_status dac_file_sha256(const char* path, char** hex_out) {
    if (dac_status s = require_arg(path, "path"); s != DAC_OK) return s;
    if (dac_status s = require_arg(hex_out, "hex_out"); s != DAC_OK) return s;
    return guarded([&] { *hex_out = dup_string(dac::Sha256::of_file(path)); });
}

}  // extern "C"
