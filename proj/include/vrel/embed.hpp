#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "vrel/datamodel.hpp"
#include "vrel/numkit.hpp"
#include "vrel/repr.hpp"

namespace vrel {

// Joint embedding spaces: unigrams (s, o, p), the visual phrase (vp), and the
// optional bigrams (sp, po). The enumerator order is the canonical order used
// for parameter layout and checkpoint blocks.
enum class BranchKind { s, o, p, vp, sp, po };

inline constexpr std::array<BranchKind, 6> kAllBranches = {BranchKind::s,  BranchKind::o,  BranchKind::p,
                                                           BranchKind::vp, BranchKind::sp, BranchKind::po};

std::string to_string(BranchKind kind);
BranchKind parse_branch_kind(const std::string& text);
// "s,o,p,vp" -> canonical-order, duplicate-free list.
std::vector<BranchKind> parse_branch_set(const std::string& text);
std::string format_branch_set(const std::vector<BranchKind>& kinds);

LanguageMask language_mask(BranchKind kind);

enum class VisualSelector { subject_appearance, object_appearance, full };
VisualSelector visual_selector(BranchKind kind);

enum class VpNegatives { observed, cartesian };

struct ModelConfig {
    std::vector<BranchKind> branches = {BranchKind::s, BranchKind::o, BranchKind::p, BranchKind::vp};
    Index embed_dim = 64;
    Index hidden_dim = 128;
    double visual_dropout = 0.5;
    double language_dropout = 0.0;
    VisualInputDims visual_input;
    SpatialNorm spatial_norm = SpatialNorm::area;
    bool finetune_words = false;
};

struct EmbeddingBranch {
    BranchKind kind = BranchKind::s;
    Mlp<double> visual;    // f_v: selected visual input -> d
    Mlp<double> language;  // f_w: q_t -> d, output L2-normalized

    bool operator==(const EmbeddingBranch& o) const {
        return kind == o.kind && visual == o.visual && language == o.language;
    }
};

// Which parameter groups an optimizer or a gradient check touches.
struct ParamSelection {
    bool words = false;
    bool visual_input = false;
    std::vector<BranchKind> visual;
    std::vector<BranchKind> language;

    static ParamSelection all(const std::vector<BranchKind>& kinds);
};

struct JointModel {
    ModelConfig config;
    Vocabularies vocabs;
    WordEmbeddings words;
    VisualInputParams visual_input;
    std::vector<EmbeddingBranch> branches;  // canonical order, one per active kind

    static JointModel create(const ModelConfig& cfg, const Vocabularies& vocabs, const WordTable& table,
                             Index appearance_dim, std::uint64_t seed);
    JointModel zeros_like() const;

    bool has(BranchKind kind) const;
    const EmbeddingBranch& branch(BranchKind kind) const;
    EmbeddingBranch& branch(BranchKind kind);
    std::vector<BranchKind> kinds() const;
    Index embed_dim() const { return config.embed_dim; }

    // Fixed order: words (s, p, o tables), visual input, then per branch in
    // canonical order its visual blocks followed by its language blocks.
    BlockList<double> blocks(const ParamSelection& sel);
    std::vector<std::span<const double>> blocks(const ParamSelection& sel) const;

    bool operator==(const JointModel& o) const {
        return vocabs == o.vocabs && words == o.words && visual_input == o.visual_input && branches == o.branches;
    }
};

using Batch = std::vector<const CandidatePair*>;

Batch batch_of(const std::vector<CandidatePair>& pairs);

// Label universe per branch. Keys are triplets with the components a branch
// ignores set to -1 (e.g. the s branch uses {s, -1, -1}).
struct LabelSpace {
    std::map<BranchKind, std::vector<Triplet>> labels;

    static LabelSpace build(const Dataset& train, const std::vector<BranchKind>& kinds,
                            VpNegatives vp_negatives = VpNegatives::observed);
    const std::vector<Triplet>& of(BranchKind kind) const;
};

Triplet label_key(BranchKind kind, const Triplet& t);
bool label_positive(BranchKind kind, const Triplet& key, const CandidatePair& pair);

// v_i^b, not normalized.
Vector embed_visual(const JointModel& model, const CandidatePair& pair, BranchKind kind, bool training = false,
                    Rng* rng = nullptr);
// w_t^b, unit norm.
Vector embed_language(const JointModel& model, const Triplet& t, BranchKind kind);
// Unit-norm language embeddings of several triplets, one column each.
Matrix embed_language(const JointModel& model, const std::vector<Triplet>& ts, BranchKind kind);

struct LossOptions {
    bool training = false;
    Rng* dropout_rng = nullptr;
    // When false, no gradient is propagated into the shared visual input.
    bool visual_input_grad = true;
};

// Negated log-likelihood, averaged over the (pair, label) terms of the batch.
// Gradients are accumulated into `grad` when non-null.
double branch_loss(const JointModel& model, const Batch& batch, BranchKind kind, const LabelSpace& labels,
                   const LossOptions& opts = {}, JointModel* grad = nullptr);

// Sum of branch_loss over `kinds` (all active kinds when empty).
double joint_loss(const JointModel& model, const Batch& batch, const LabelSpace& labels,
                  const LossOptions& opts = {}, JointModel* grad = nullptr,
                  const std::vector<BranchKind>& kinds = {});

// Product of per-branch sigmoids over all active branches (eval mode).
double score(const JointModel& model, const Triplet& t, const CandidatePair& pair);

// Eval-mode visual embeddings of a fixed pair list for every active branch.
class PairEmbeddings {
public:
    PairEmbeddings(const JointModel& model, const Batch& pairs);

    const Matrix& of(BranchKind kind) const;  // d x N
    std::size_t size() const { return size_; }

private:
    std::map<BranchKind, Matrix> embeddings_;
    std::size_t size_ = 0;
};

// Query-side embeddings per branch; the vp entry may be a transferred one.
using QueryEmbedding = std::map<BranchKind, Vector>;

QueryEmbedding direct_query(const JointModel& model, const Triplet& t, const std::vector<BranchKind>& kinds);

// Sum over branches of log sigma(w^b . v_i^b); one entry per pair.
Vector log_scores(const PairEmbeddings& pairs, const QueryEmbedding& query);

struct Schedule {
    int epochs = 10;
    double lr = 1e-3;
    int batch_size = 64;
    double positive_fraction = 0.25;
};

// Mini-batches with a fixed number of positives; negatives are drawn among
// non-interacting pairs that share subject and object category with one of
// the batch positives.
class BatchSampler {
public:
    BatchSampler(const Dataset& data, int batch_size, int positives_per_batch);

    // Indices into data.pairs(); positives first in each batch.
    std::vector<std::vector<std::size_t>> epoch(Rng& rng) const;
    int positives_per_batch() const { return positives_; }

private:
    const Dataset* data_;
    int batch_size_;
    int positives_;
    std::vector<std::size_t> positive_idx_;
    std::vector<std::size_t> negative_idx_;
    std::map<std::pair<int, int>, std::vector<std::size_t>> negatives_by_category_;
};

int positives_per_batch(const Schedule& schedule);

struct LossTrace {
    std::vector<double> epoch_loss;  // mean batch loss per epoch
};

LossTrace train_stage1(JointModel& model, const Dataset& data, const LabelSpace& labels, const Schedule& schedule,
                       std::uint64_t seed);

}  // namespace vrel
