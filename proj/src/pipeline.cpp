#include "vrel/pipeline.hpp"

#include <cmath>

namespace vrel {

TrainOutput train_model(const RunConfig& cfg, const Dataset& train, const WordTable& words) {
    cfg.validate();
    TrainOutput out;
    auto& c = out.checkpoint;
    c.config = cfg;
    c.appearance_dim = train.appearance_dim();
    c.model = JointModel::create(cfg.model, train.vocabularies(), words, train.appearance_dim(), cfg.seed);
    c.gamma = GammaParams::create(cfg.gamma, cfg.model.embed_dim, cfg.gamma_hidden, cfg.seed);
    c.source_pool = occurrence_rank(train, cfg.rare_threshold).non_rare;

    const LabelSpace labels = LabelSpace::build(train, c.model.kinds(), cfg.vp_negatives);
    out.stage1 = train_stage1(c.model, train, labels, cfg.stage1, cfg.seed);
    if (cfg.gamma != GammaKind::absent && cfg.stage2_epochs > 0) {
        if (!c.model.has(BranchKind::vp)) throw ConfigError("analogy training needs the vp branch");
        out.stage2 = train_stage2(c.model, c.gamma, train, labels, cfg.transfer, cfg.stage2(), cfg.seed,
                                  cfg.rare_threshold);
    }
    return out;
}

QueryMode parse_query_mode(const std::string& text) {
    if (text == "direct") return QueryMode::direct;
    if (text == "transfer") return QueryMode::transfer;
    throw ConfigError("mode must be direct|transfer, got '" + text + "'");
}

QueryEmbedding query_embedding(const Checkpoint& ckpt, const Triplet& t, QueryMode mode,
                               const std::vector<Triplet>& pool) {
    const auto kinds = ckpt.config.scoring_branches();
    if (mode == QueryMode::direct) return direct_query(ckpt.model, t, kinds);
    return transfer_query(ckpt.model, ckpt.gamma, ckpt.config.transfer, t, pool, kinds);
}

EvalOutput evaluate(const Checkpoint& ckpt, const Dataset& test, const std::vector<Triplet>& queries,
                    QueryMode mode, const std::optional<std::vector<Triplet>>& pool, bool keep_ranking) {
    if (queries.empty()) throw ValidationError("empty query list");
    if (!(test.vocabularies() == ckpt.model.vocabs))
        throw ValidationError("test vocabularies differ from the checkpoint's");
    const auto& sources = pool ? *pool : ckpt.source_pool;
    const Batch pairs = batch_of(test.pairs());
    const PairEmbeddings embedded(ckpt.model, pairs);

    EvalOutput out;
    for (const auto& q : queries) {
        const auto ranked = rank_candidates(embedded, pairs, query_embedding(ckpt, q, mode, sources));
        out.results.push_back(average_precision(ranked, ground_truth(test, q), ckpt.config.match, q));
        if (keep_ranking) out.ranked.push_back(ranked);
    }
    out.map = mean_ap(out.results);
    return out;
}

}  // namespace vrel
