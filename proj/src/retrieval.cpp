#include "retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace dac {

RankedList rank(const Descriptor& q, const std::vector<Descriptor>& gallery) {
    if (gallery.empty()) raise(ErrorKind::Usage, "rank: empty gallery");

    struct Entry {
        double score;
        const Descriptor* d;
    };
    std::vector<Entry> entries;
    entries.reserve(gallery.size());
    for (const Descriptor& g : gallery) {
        if (g.id == q.id) continue;  // never rank a query against itself
        if (g.h.size() != q.h.size())
            raise(ErrorKind::Shape, "rank: descriptor dims disagree (" +
                                        std::to_string(q.h.size()) + " vs " +
                                        std::to_string(g.h.size()) + ")");
        entries.push_back({cosine(q.h, g.h), &g});
    }
    if (entries.empty()) raise(ErrorKind::Usage, "rank: gallery holds only the query itself");

    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.d->id < b.d->id;
    });

    RankedList out;
    out.query_id = q.id;
    out.gallery_ids.reserve(entries.size());
    out.scores.reserve(entries.size());
    out.relevance.reserve(entries.size());
    for (const Entry& e : entries) {
        out.gallery_ids.push_back(e.d->id);
        out.scores.push_back(e.score);
        out.relevance.push_back(e.d->label == q.label ? 1 : 0);
    }
    return out;
}

std::optional<double> average_precision(const std::vector<int>& rel) {
    std::size_t hits = 0;
    double sum = 0.0;
    for (std::size_t k = 0; k < rel.size(); ++k) {
        if (rel[k]) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(k + 1);
        }
    }
    if (hits == 0) return std::nullopt;
    return sum / static_cast<double>(hits);
}

std::optional<double> ndcg(const std::vector<int>& rel, std::size_t cutoff) {
    const std::size_t total_rel =
        static_cast<std::size_t>(std::count(rel.begin(), rel.end(), 1));
    if (total_rel == 0) return std::nullopt;

    const std::size_t depth = (cutoff == 0) ? rel.size() : std::min(cutoff, rel.size());
    double dcg = 0.0;
    for (std::size_t i = 0; i < depth; ++i)
        if (rel[i]) dcg += 1.0 / std::log2(static_cast<double>(i + 2));

    double idcg = 0.0;
    const std::size_t ideal_depth = std::min(depth, total_rel);
    for (std::size_t i = 0; i < ideal_depth; ++i)
        idcg += 1.0 / std::log2(static_cast<double>(i + 2));

    return dcg / idcg;
}

std::optional<double> nmrr(const std::vector<int>& rel, std::size_t gtm) {
    const std::size_t ng = static_cast<std::size_t>(std::count(rel.begin(), rel.end(), 1));
    if (ng == 0) return std::nullopt;
    if (gtm < ng) raise(ErrorKind::Usage, "nmrr: GTM below this query's NG");

    const double k = static_cast<double>(std::min(4 * ng, 2 * gtm));
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < rel.size(); ++i) {
        if (!rel[i]) continue;
        const double r = static_cast<double>(i + 1);
        rank_sum += (r <= k) ? r : 1.25 * k;
    }
    const double avr = rank_sum / static_cast<double>(ng);
    const double mrr = avr - 0.5 - static_cast<double>(ng) / 2.0;
    const double denom = k + 0.5 - 0.5 * static_cast<double>(ng);
    return mrr / denom;
}

MetricsReport evaluate(const std::vector<Descriptor>& queries,
                       const std::vector<Descriptor>& gallery,
                       std::size_t ndcg_cutoff) {
    if (queries.empty()) raise(ErrorKind::Data, "evaluate: no queries");
    if (gallery.empty()) raise(ErrorKind::Data, "evaluate: empty gallery");

    // GTM over queries that have ground truth at all
    std::size_t gtm = 0;
    std::vector<std::size_t> ng_per_query(queries.size(), 0);
    for (std::size_t i = 0; i < queries.size(); ++i) {
        std::size_t ng = 0;
        for (const Descriptor& g : gallery)
            if (g.id != queries[i].id && g.label == queries[i].label) ++ng;
        ng_per_query[i] = ng;
        gtm = std::max(gtm, ng);
    }

    MetricsReport rep;
    rep.gallery_size = gallery.size();
    double ap_sum = 0.0, ndcg_sum = 0.0, nmrr_sum = 0.0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        if (ng_per_query[i] == 0) {
            rep.queries_excluded++;
            rep.excluded_query_ids.push_back(queries[i].id);
            continue;
        }
        RankedList rl = rank(queries[i], gallery);
        PerQueryMetrics pq;
        pq.query_id = queries[i].id;
        pq.num_relevant = ng_per_query[i];
        pq.ap = *average_precision(rl.relevance);
        pq.ndcg = *ndcg(rl.relevance, ndcg_cutoff);
        pq.nmrr = *nmrr(rl.relevance, gtm);
        ap_sum += pq.ap;
        ndcg_sum += pq.ndcg;
        nmrr_sum += pq.nmrr;
        rep.per_query.push_back(std::move(pq));
    }
    rep.queries_evaluated = rep.per_query.size();
    if (rep.queries_evaluated == 0)
        raise(ErrorKind::Data, "evaluate: no eligible queries (no query label occurs in the gallery)");

    const double n = static_cast<double>(rep.queries_evaluated);
    rep.map = 100.0 * ap_sum / n;
    rep.ndcg = 100.0 * ndcg_sum / n;
    rep.anmrr = 100.0 * nmrr_sum / n;
    return rep;
}

SplitViolation validate_open_set_split(const OpenSetDataset& ds) {
    SplitViolation v;

    auto labels_of = [](const std::vector<ObjectRecord>& objs) {
        std::set<std::string> s;
        for (const ObjectRecord& o : objs) s.insert(o.label);
        return s;
    };
    const std::set<std::string> train_labels = labels_of(ds.train);
    const std::set<std::string> query_labels = labels_of(ds.query);
    const std::set<std::string> target_labels = labels_of(ds.target);

    if (ds.train.empty()) {
        v.ok = false;
        v.messages.push_back("train split is empty");
    }
    if (ds.query.empty()) {
        v.ok = false;
        v.messages.push_back("query split is empty");
    }
    if (ds.target.empty()) {
        v.ok = false;
        v.messages.push_back("target split is empty");
    }

    for (const std::string& l : query_labels)
        if (train_labels.count(l)) v.overlapping_labels.push_back(l);
    for (const std::string& l : target_labels)
        if (train_labels.count(l) && !query_labels.count(l)) v.overlapping_labels.push_back(l);
    if (!v.overlapping_labels.empty()) {
        v.ok = false;
        std::string msg = "train labels leak into the retrieval splits:";
        for (const std::string& l : v.overlapping_labels) msg += " '" + l + "'";
        v.messages.push_back(msg);
    }

    for (const std::string& l : query_labels)
        if (!target_labels.count(l)) {
            v.uncovered_query_labels.push_back(l);
            v.messages.push_back("query label '" + l +
                                 "' never occurs in the target split; such queries are excluded");
        }
    return v;
}

}  // namespace dac
