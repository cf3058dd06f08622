#ifndef DAC_RETRIEVAL_HPP
#define DAC_RETRIEVAL_HPP

#include <optional>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "fusion.hpp"

namespace dac {

// Full gallery ordering for one query, scores descending, ties broken by
// ascending gallery id.
struct RankedList {
    std::string query_id;
    std::vector<std::string> gallery_ids;
    std::vector<double> scores;
    std::vector<int> relevance;  // label match per position
};

struct PerQueryMetrics {
    std::string query_id;
    double ap = 0.0;
    double ndcg = 0.0;
    double nmrr = 0.0;
    std::size_t num_relevant = 0;
};

struct MetricsReport {
    double map = 0.0;    // percentages
    double ndcg = 0.0;
    double anmrr = 0.0;
    std::size_t queries_evaluated = 0;
    std::size_t queries_excluded = 0;
    std::size_t gallery_size = 0;
    std::vector<PerQueryMetrics> per_query;
    std::vector<std::string> excluded_query_ids;
};

struct SplitViolation {
    bool ok = true;
    std::vector<std::string> overlapping_labels;
    std::vector<std::string> uncovered_query_labels;  // informational, not fatal
    std::vector<std::string> messages;
};

// Cosine ranking of one query descriptor against the gallery. A gallery
// entry sharing the query id is excluded from the ranking.
RankedList rank(const Descriptor& q, const std::vector<Descriptor>& gallery);

// AP over the full list: mean of precision@k at each relevant rank.
// nullopt when the list holds no relevant item (excluded-query signal).
std::optional<double> average_precision(const std::vector<int>& rel);

// Binary-gain NDCG with log2(rank+1) discount; cutoff 0 means full list.
std::optional<double> ndcg(const std::vector<int>& rel, std::size_t cutoff = 0);

// MPEG-7 normalized modified retrieval rank for one query.
//   K = min(4*NG, 2*GTM); rank(k) = actual if <= K else 1.25*K
//   AVR = mean rank; MRR = AVR - 0.5 - NG/2; NMRR = MRR / (K + 0.5 - 0.5*NG)
std::optional<double> nmrr(const std::vector<int>& rel, std::size_t gtm);

// All three metrics over every eligible query, as percentages.
MetricsReport evaluate(const std::vector<Descriptor>& queries,
                       const std::vector<Descriptor>& gallery,
                       std::size_t ndcg_cutoff = 0);

// Open-set contract: disjoint seen/unseen labels, nonempty splits,
// query-label coverage in the target split.
SplitViolation validate_open_set_split(const OpenSetDataset& ds);

}  // namespace dac

#endif  // DAC_RETRIEVAL_HPP
