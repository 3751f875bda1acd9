#pragma once

#include <optional>
#include <vector>

#include "vrel/checkpoint.hpp"
#include "vrel/evalkit.hpp"

namespace vrel {

struct TrainOutput {
    Checkpoint checkpoint;
    LossTrace stage1;
    Stage2Result stage2;
};

// Initialization, stage 1 over every branch, then stage 2 unless the Gamma
// kind is absent. All randomness derives from cfg.seed.
TrainOutput train_model(const RunConfig& cfg, const Dataset& train, const WordTable& words);

enum class QueryMode { direct, transfer };

QueryMode parse_query_mode(const std::string& text);

// Query embedding for the configured scoring branches.
QueryEmbedding query_embedding(const Checkpoint& ckpt, const Triplet& t, QueryMode mode,
                               const std::vector<Triplet>& pool);

struct EvalOutput {
    std::vector<APResult> results;
    std::vector<std::vector<Detection>> ranked;  // per query, only when requested
    double map = 0.0;
};

// Throws ValidationError on an empty query list or when every query lacks
// test positives. Transfer mode draws sources from `pool`, or from the
// checkpoint's pool when none is given.
EvalOutput evaluate(const Checkpoint& ckpt, const Dataset& test, const std::vector<Triplet>& queries,
                    QueryMode mode, const std::optional<std::vector<Triplet>>& pool = std::nullopt,
                    bool keep_ranking = false);

}  // namespace vrel
