#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vrel/embed.hpp"

namespace vrel {

// absent: aggregate raw source embeddings, no analogy training.
// zero:   analogy training, zero correction at transfer time.
// linear: correction is one bias-free linear map.
// deep:   correction is a bias-free two-layer perceptron.
enum class GammaKind { absent, zero, linear, deep };

std::string to_string(GammaKind kind);
GammaKind parse_gamma_kind(const std::string& text);

struct GammaParams {
    GammaKind kind = GammaKind::absent;
    Index embed_dim = 0;
    Matrix linear;     // d x 3d, kind == linear
    Mlp<double> deep;  // 3d -> hidden -> d without biases, kind == deep

    // hidden == 0 selects 3d.
    static GammaParams create(GammaKind kind, Index embed_dim, Index hidden, std::uint64_t seed);
    GammaParams zeros_like() const;
    bool trainable() const { return kind == GammaKind::linear || kind == GammaKind::deep; }

    BlockList<double> blocks();
    std::vector<std::span<const double>> blocks() const;

    bool operator==(const GammaParams& o) const {
        return kind == o.kind && embed_dim == o.embed_dim && linear == o.linear && deep == o.deep;
    }
};

enum class SimilarityInput { embeddings, word_vectors };

struct TransferConfig {
    int k = 5;
    double alpha_s = 0.1;
    double alpha_p = 0.8;
    double alpha_o = 0.1;
    double lambda = 1.0;
    SimilarityInput similarity = SimilarityInput::embeddings;
    bool clamp_g = true;
    bool normalize_aggregation = false;

    void validate() const;  // throws ConfigError
};

// f_w^vp of a single token placed in its slot with the other slots zeroed.
Vector unigram_vp_embedding(const JointModel& model, int token, Slot slot);

// [w_s' - w_s; w_p' - w_p; w_o' - w_o] from unigram vp embeddings of t and u.
Vector gamma_input(const JointModel& model, const Triplet& t, const Triplet& u);

// Gamma(t, u); zero for kinds absent and zero.
Vector gamma_correction(const GammaParams& gamma, const JointModel& model, const Triplet& t, const Triplet& u);

// w_t^vp + Gamma(t, u).
Vector gamma_apply(const GammaParams& gamma, const JointModel& model, const Triplet& t, const Triplet& u);

// Per-token unit embeddings in the s, p and o spaces (or unit word vectors),
// so that G(t, u) is three dot products.
class SimilarityIndex {
public:
    SimilarityIndex(const JointModel& model, const TransferConfig& cfg);

    // Weighted sum of per-slot cosine similarities, clamped at 0 if configured.
    double operator()(const Triplet& t, const Triplet& u) const;
    double raw(const Triplet& t, const Triplet& u) const;

private:
    Matrix subjects_, predicates_, objects_;  // unit columns
    TransferConfig cfg_;
};

double similarity_G(const JointModel& model, const TransferConfig& cfg, const Triplet& t, const Triplet& u);

struct SourceSet {
    Triplet target;
    std::vector<std::pair<Triplet, double>> sources;  // descending G
};

// Top-k of `pool` by G; ties go to the smaller (s, p, o). The caller decides
// whether `u` itself is eligible.
SourceSet select_sources(const SimilarityIndex& index, const TransferConfig& cfg, const Triplet& u,
                         const std::vector<Triplet>& pool);
SourceSet select_sources(const JointModel& model, const TransferConfig& cfg, const Triplet& u,
                         const std::vector<Triplet>& pool);

// sum_t G(t,u) (w_t^vp + Gamma(t,u)), optionally divided by sum_t G(t,u).
Vector transfer_embedding(const JointModel& model, const GammaParams& gamma, const TransferConfig& cfg,
                          const SourceSet& sources);
Vector transfer_embedding(const JointModel& model, const GammaParams& gamma, const TransferConfig& cfg,
                          const Triplet& u, const std::vector<Triplet>& pool);

// Query embeddings for `kinds` with the vp entry replaced by the transfer.
QueryEmbedding transfer_query(const JointModel& model, const GammaParams& gamma, const TransferConfig& cfg,
                              const Triplet& u, const std::vector<Triplet>& pool,
                              const std::vector<BranchKind>& kinds);

// (source, target) pairs.
using AnalogyPairs = std::vector<std::pair<Triplet, Triplet>>;

// Negated analogy log-likelihood averaged over (pair, analogy pair) terms.
// Gradients reach only Gamma and the vp visual projection; language
// projections and the shared visual input receive nothing.
double analogy_loss(const JointModel& model, const GammaParams& gamma, const Batch& batch, const AnalogyPairs& q,
                    const LossOptions& opts = {}, JointModel* grad = nullptr, GammaParams* gamma_grad = nullptr);

// One source per distinct positive target in the batch, drawn uniformly from
// its source set. Targets without sources are counted in `skipped`.
AnalogyPairs sample_analogy_pairs(const Batch& batch, const std::map<Triplet, SourceSet>& sources, Rng& rng,
                                  int* skipped = nullptr);

struct Stage2Result {
    LossTrace trace;
    int skipped_targets = 0;
};

// Freezes everything except the vp branch and Gamma; optimizes
// L_vp + lambda * L_Gamma. Does nothing for GammaKind::absent.
Stage2Result train_stage2(JointModel& model, GammaParams& gamma, const Dataset& data, const LabelSpace& labels,
                          const TransferConfig& cfg, const Schedule& schedule, std::uint64_t seed,
                          int rare_threshold = 10);

}  // namespace vrel
