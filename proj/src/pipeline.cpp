#include "pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

using nlohmann::json;

namespace dac {

AdaptResult run_adapt(const std::string& manifest_path, const std::string& backbone_path,
                      const TrainConfig& cfg, const std::string& adapters_out) {
    LoadedDataset loaded = load_manifest(manifest_path);
    auto [vis, txt] = load_backbone(backbone_path);
    TrainResult tr = train(loaded.dataset, vis, txt, cfg);
    if (cfg.lora_mode != LoraMode::Frozen)
        save_adapters(adapters_out, tr.vis, tr.txt);
    AdaptResult out;
    out.report = std::move(tr.report);
    out.adapters_path = cfg.lora_mode != LoraMode::Frozen ? adapters_out : "";
    return out;
}

std::size_t run_embed(const std::string& manifest_path, const std::string& backbone_path,
                      const std::string& adapters_path, const EmbedOptions& opts,
                      const std::string& descriptors_out) {
    opts.fusion.validate();
    LoadedDataset loaded = load_manifest(manifest_path);
    auto [vis, txt] = load_backbone(backbone_path);
    if (!opts.zero_shot) {
        if (adapters_path.empty())
            raise(ErrorKind::Usage, "embed: adapters required unless zero-shot is requested");
        load_adapters_into(vis, txt, adapters_path);
    }
    // the switch covers per-view visual normalization only; f_t stays the
    // unit-norm text-tower output
    vis.normalize_output = opts.normalize_views;

    Rng rng(0);  // eval mode draws nothing; placeholder stream
    std::vector<Descriptor> descs;
    auto emit = [&](const std::vector<ObjectRecord>& objs) {
        for (const ObjectRecord& o : objs) {
            Vec g = encode_object(vis, o.views, false, rng);
            std::optional<Vec> f_t;
            if (o.description) f_t = encode(txt, *o.description, false, rng);
            descs.push_back(fuse(g, f_t, opts.fusion, o.id, o.label));
        }
    };
    emit(loaded.dataset.query);
    emit(loaded.dataset.target);
    if (descs.empty()) raise(ErrorKind::Data, "embed: manifest has no query/target objects");
    save_descriptors(descriptors_out, descs);
    return descs.size();
}

MetricsReport run_eval(const std::string& manifest_path, const std::string& descriptors_path,
                       const EvalOptions& opts) {
    LoadedDataset loaded = load_manifest(manifest_path);
    auto stored = load_descriptors(descriptors_path);

    auto collect = [&](const std::vector<ObjectRecord>& objs) {
        std::vector<Descriptor> out;
        out.reserve(objs.size());
        for (const ObjectRecord& o : objs) {
            auto it = stored.find(o.id);
            if (it == stored.end())
                raise(ErrorKind::Data, "eval: descriptor file lacks object '" + o.id + "'");
            Descriptor d;
            d.id = o.id;
            d.label = o.label;
            d.h = it->second.h;
            d.g = it->second.g;
            d.f_t = it->second.f_t;
            out.push_back(std::move(d));
        }
        return out;
    };
    std::vector<Descriptor> queries = collect(loaded.dataset.query);
    std::vector<Descriptor> gallery = collect(loaded.dataset.target);

    MetricsReport rep = evaluate(queries, gallery, opts.ndcg_cutoff);

    if (!opts.per_query_csv.empty()) {
        std::ofstream csv(opts.per_query_csv, std::ios::trunc);
        if (!csv) raise(ErrorKind::Io, "cannot write per-query csv: " + opts.per_query_csv);
        csv << "query_id,ap,ndcg,nmrr,num_relevant\n";
        char buf[128];
        for (const PerQueryMetrics& pq : rep.per_query) {
            std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,%.6f,", pq.ap, pq.ndcg, pq.nmrr);
            csv << pq.query_id << buf << pq.num_relevant << "\n";
        }
    }
    return rep;
}

MergeResult run_merge(const std::string& backbone_path, const std::string& adapters_path,
                      const std::string& merged_out, std::size_t probes, std::uint64_t seed) {
    auto [vis, txt] = load_backbone(backbone_path);
    load_adapters_into(vis, txt, adapters_path);
    EncoderTower vis_merged = merge_tower(vis);
    EncoderTower txt_merged = merge_tower(txt);
    save_backbone(merged_out, vis_merged, txt_merged);

    MergeResult out;
    out.merged_path = merged_out;
    out.probes = probes;
    Rng rng(seed);
    for (std::size_t p = 0; p < probes; ++p) {
        for (auto [adapted, merged] :
             {std::make_pair(&vis, &vis_merged), std::make_pair(&txt, &txt_merged)}) {
            Vec z(adapted->in_dim());
            for (double& x : z) x = 3.0 * rng.normal();
            const Vec a = encode(*adapted, z, false, rng);
            const Vec m = encode(*merged, z, false, rng);
            for (std::size_t i = 0; i < a.size(); ++i) {
                const double dev = std::fabs(m[i] - a[i]) / (std::fabs(a[i]) + 1.0);
                out.max_rel_deviation = std::max(out.max_rel_deviation, dev);
            }
        }
    }
    return out;
}

std::string train_report_to_json(const TrainConfig& cfg, const TrainReport& rep) {
    json j;
    j["config"] = {{"epochs", cfg.epochs},
                   {"batch_size", cfg.batch_size},
                   {"lr", cfg.lr},
                   {"tau", cfg.tau},
                   {"rank", cfg.rank},
                   {"gamma", cfg.effective_gamma()},
                   {"dropout_p", cfg.dropout_p},
                   {"seed", cfg.seed},
                   {"lora_mode", lora_mode_name(cfg.lora_mode)},
                   {"renormalize_pooled", cfg.renormalize_pooled}};
    j["epoch_mean_loss"] = rep.epoch_mean_loss;
    j["epoch_lr"] = rep.epoch_lr;
    j["steps"] = rep.steps;
    j["objects"] = rep.objects;
    j["classes"] = rep.classes;
    json sums = json::object();
    for (const auto& [name, hex] : rep.adapter_checksums) sums[name] = hex;
    j["adapter_checksums"] = sums;
    return j.dump(2) + "\n";
}

std::string metrics_report_to_json(const MetricsReport& rep) {
    auto round2 = [](double v) { return std::round(v * 100.0) / 100.0; };
    json j;
    j["map"] = round2(rep.map);
    j["ndcg"] = round2(rep.ndcg);
    j["anmrr"] = round2(rep.anmrr);
    j["format"] = metrics_report_format(rep);
    j["queries_evaluated"] = rep.queries_evaluated;
    j["queries_excluded"] = rep.queries_excluded;
    j["gallery_size"] = rep.gallery_size;
    json per = json::array();
    for (const PerQueryMetrics& pq : rep.per_query)
        per.push_back({{"id", pq.query_id},
                       {"ap", pq.ap},
                       {"ndcg", pq.ndcg},
                       {"nmrr", pq.nmrr},
                       {"num_relevant", pq.num_relevant}});
    j["per_query"] = per;
    if (!rep.excluded_query_ids.empty()) j["excluded_query_ids"] = rep.excluded_query_ids;
    return j.dump(2) + "\n";
}

std::string metrics_report_format(const MetricsReport& rep) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%.2f / %.2f / %.2f", rep.map, rep.ndcg, rep.anmrr);
    return buf;
}

}  // namespace dac
