#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "vrel/datamodel.hpp"
#include "vrel/embed.hpp"

namespace vrel {

double iou(const BoundingBox& a, const BoundingBox& b);

struct Detection {
    std::int64_t pair_id = 0;
    std::int64_t image_id = 0;
    double score = 0.0;      // S_{t,i}
    double log_score = 0.0;  // log S_{t,i}; ranking key
    BoundingBox subject_box, object_box;
};

struct GroundTruth {
    std::int64_t image_id = 0;
    BoundingBox subject_box, object_box;
};

// A detection is a true positive when an unmatched ground truth in the same
// image overlaps it with IoU >= threshold on both boxes. Detections are
// matched greedily in rank order; each ground truth is used at most once.
struct MatchPolicy {
    double iou_threshold = 0.5;

    void validate() const;
};

struct APResult {
    Triplet query;
    double ap = 0.0;
    int positives = 0;
    int detections = 0;
    bool excluded = false;  // no ground-truth positives
};

// Descending log score; ties broken by ascending pair id.
std::vector<Detection> rank_candidates(const PairEmbeddings& embedded, const Batch& pairs,
                                       const QueryEmbedding& query);
std::vector<Detection> rank_candidates(const JointModel& model, const Triplet& query, const Batch& pairs);

// Per-detection true-positive flags under `policy`.
std::vector<bool> match_detections(const std::vector<Detection>& ranked, const std::vector<GroundTruth>& truth,
                                   const MatchPolicy& policy);

// Sum of precision at each true-positive rank divided by the number of
// ground-truth positives (no interpolation).
APResult average_precision(const std::vector<Detection>& ranked, const std::vector<GroundTruth>& truth,
                           const MatchPolicy& policy, const Triplet& query = {});

// Unweighted mean over non-excluded queries; throws when all are excluded.
double mean_ap(const std::vector<APResult>& results);

std::vector<GroundTruth> ground_truth(const Dataset& data, const Triplet& query);

void write_results(const std::filesystem::path& path, const std::vector<APResult>& results,
                   const Vocabularies& vocabs);

}  // namespace vrel
