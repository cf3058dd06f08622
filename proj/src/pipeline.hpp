#ifndef DAC_PIPELINE_HPP
#define DAC_PIPELINE_HPP

#include <optional>
#include <string>

#include "dataio.hpp"
#include "retrieval.hpp"
#include "training.hpp"

namespace dac {

// High-level pipeline entry points behind the C API and the CLI.

struct AdaptResult {
    TrainReport report;
    std::string adapters_path;
};

// Train adapters on the manifest's train split and write their state.
AdaptResult run_adapt(const std::string& manifest_path, const std::string& backbone_path,
                      const TrainConfig& cfg, const std::string& adapters_out);

struct EmbedOptions {
    FusionConfig fusion;
    bool zero_shot = false;          // skip adapters entirely
    bool normalize_views = true;     // per-view embedding normalization switch
};

// Encode query+target objects into fused descriptors and write them.
// adapters_path may be empty only with zero_shot.
std::size_t run_embed(const std::string& manifest_path, const std::string& backbone_path,
                      const std::string& adapters_path, const EmbedOptions& opts,
                      const std::string& descriptors_out);

struct EvalOptions {
    std::size_t ndcg_cutoff = 0;  // 0: full list
    std::string per_query_csv;    // optional
};

MetricsReport run_eval(const std::string& manifest_path, const std::string& descriptors_path,
                       const EvalOptions& opts);

struct MergeResult {
    double max_rel_deviation = 0.0;
    std::size_t probes = 0;
    std::string merged_path;
};

// Fold adapters into the backbone, write the merged file, and probe the
// adapted-vs-merged equivalence on random inputs.
MergeResult run_merge(const std::string& backbone_path, const std::string& adapters_path,
                      const std::string& merged_out, std::size_t probes, std::uint64_t seed);

std::string train_report_to_json(const TrainConfig& cfg, const TrainReport& rep);
std::string metrics_report_to_json(const MetricsReport& rep);
// The "mAP / NDCG / ANMRR" one-liner used in tables.
std::string metrics_report_format(const MetricsReport& rep);

}  // namespace dac

#endif  // DAC_PIPELINE_HPP
