#include "vrel/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "vrel/text.hpp"

namespace vrel {

double iou(const BoundingBox& a, const BoundingBox& b) {
    const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (iw <= 0 || ih <= 0) return 0.0;
    const double inter = iw * ih;
    return inter / (a.area() + b.area() - inter);
}

void MatchPolicy::validate() const {
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) throw ConfigError("IoU threshold must lie in (0,1]");
}

std::vector<Detection> rank_candidates(const PairEmbeddings& embedded, const Batch& pairs,
                                       const QueryEmbedding& query) {
    const Vector logs = log_scores(embedded, query);
    std::vector<Detection> dets;
    dets.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = *pairs[i];
        const double ls = logs(static_cast<Index>(i));
        dets.push_back({p.id, p.image_id, std::exp(ls), ls, p.subject_box, p.object_box});
    }
    std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
        if (a.log_score != b.log_score) return a.log_score > b.log_score;
        return a.pair_id < b.pair_id;
    });
    return dets;
}

std::vector<Detection> rank_candidates(const JointModel& model, const Triplet& query, const Batch& pairs) {
    return rank_candidates(PairEmbeddings(model, pairs), pairs, direct_query(model, query, model.kinds()));
}

std::vector<bool> match_detections(const std::vector<Detection>& ranked, const std::vector<GroundTruth>& truth,
                                   const MatchPolicy& policy) {
    policy.validate();
    std::vector<bool> used(truth.size(), false);
    std::vector<bool> tp(ranked.size(), false);
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        const auto& d = ranked[r];
        // Among free ground truths in the image, take the best joint overlap.
        std::optional<std::size_t> best;
        double best_overlap = -1.0;
        for (std::size_t g = 0; g < truth.size(); ++g) {
            if (used[g] || truth[g].image_id != d.image_id) continue;
            const double si = iou(d.subject_box, truth[g].subject_box);
            const double oi = iou(d.object_box, truth[g].object_box);
            if (si < policy.iou_threshold || oi < policy.iou_threshold) continue;
            const double overlap = std::min(si, oi);
            if (overlap > best_overlap) {
                best_overlap = overlap;
                best = g;
            }
        }
        if (best) {
            used[*best] = true;
            tp[r] = true;
        }
    }
    return tp;
}

APResult average_precision(const std::vector<Detection>& ranked, const std::vector<GroundTruth>& truth,
                           const MatchPolicy& policy, const Triplet& query) {
    APResult res;
    res.query = query;
    res.positives = static_cast<int>(truth.size());
    res.detections = static_cast<int>(ranked.size());
    if (truth.empty()) {
        res.excluded = true;
        return res;
    }
    const auto tp = match_detections(ranked, truth, policy);
    double sum = 0.0;
    int hits = 0;
    for (std::size_t r = 0; r < tp.size(); ++r) {
        if (!tp[r]) continue;
        ++hits;
        sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
    res.ap = sum / static_cast<double>(truth.size());
    return res;
}

double mean_ap(const std::vector<APResult>& results) {
    double sum = 0.0;
    int n = 0;
    for (const auto& r : results) {
        if (r.excluded) continue;
        sum += r.ap;
        ++n;
    }
    if (n == 0) throw ValidationError("mean_ap: every query was excluded (no ground-truth positives)");
    return sum / n;
}

std::vector<GroundTruth> ground_truth(const Dataset& data, const Triplet& query) {
    std::vector<GroundTruth> out;
    for (const auto& p : data.pairs())
        if (p.has_triplet(query)) out.push_back({p.image_id, p.subject_box, p.object_box});
    return out;
}

void write_results(const std::filesystem::path& path, const std::vector<APResult>& results,
                   const Vocabularies& vocabs) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& r : results) {
        if (r.excluded) continue;
        out << "query " << token_to_file(vocabs.subjects.token(r.query.s)) << ' '
            << token_to_file(vocabs.predicates.token(r.query.p)) << ' '
            << token_to_file(vocabs.objects.token(r.query.o)) << " ap " << text::format(r.ap) << " npos "
            << r.positives << " ndet " << r.detections << '\n';
    }
    out << "map " << text::format(mean_ap(results)) << '\n';
}

}  // namespace vrel
