#pragma once

#include <vector>

#include "vrel/datamodel.hpp"
#include "vrel/numkit.hpp"

namespace vrel {

// How box coordinates are renormalized against the union box: `area` divides
// by the union area, `extent` divides x by the union width and y by its height.
enum class SpatialNorm { area, extent };

// [sub x_min, x_max, y_min, y_max, obj x_min, x_max, y_min, y_max], each
// shifted by the union-box origin and divided per `norm`.
Vector spatial_features(const BoundingBox& subject, const BoundingBox& object,
                        SpatialNorm norm = SpatialNorm::area);

struct VisualInputDims {
    Index appearance_proj = 300;
    Index spatial_hidden = 128;
    Index spatial_out = 400;
};

// x_i = [MLP_s(a_s); MLP_o(a_o); MLP_r(r(o_s, o_o))].
struct VisualInputParams {
    Dense<double> subject_proj;
    Dense<double> object_proj;
    Mlp<double> spatial;

    static VisualInputParams create(Index appearance_dim, const VisualInputDims& dims, Rng& rng);
    VisualInputParams zeros_like() const;

    Index appearance_dim() const { return subject_proj.in_dim(); }
    Index output_dim() const { return subject_proj.out_dim() + object_proj.out_dim() + spatial.out_dim(); }

    BlockList<double> blocks();
    std::vector<std::span<const double>> blocks() const;

    bool operator==(const VisualInputParams& o) const {
        return subject_proj == o.subject_proj && object_proj == o.object_proj && spatial == o.spatial;
    }
};

struct VisualFeature {
    Vector x;
    Vector subject_appearance;
    Vector object_appearance;
};

VisualFeature visual_input(const CandidatePair& pair, const VisualInputParams& params,
                           SpatialNorm norm = SpatialNorm::area);

// Column j of every matrix belongs to pairs[j].
struct VisualBatch {
    Matrix x;
    Matrix subject_appearance;
    Matrix object_appearance;
    DenseCache<double> subject_cache, object_cache;
    MlpCache<double> spatial_cache;
};

VisualBatch visual_input_batch(const std::vector<const CandidatePair*>& pairs, const VisualInputParams& params,
                               SpatialNorm norm, bool keep_cache);

// Accumulates into `grad`; `dx` is dL/dx with one column per pair.
void visual_input_backward(const VisualInputParams& params, const VisualBatch& batch, const Matrix& dx,
                           VisualInputParams& grad);

enum class LanguageMask { full, subject, predicate, object, subject_predicate, predicate_object };

bool mask_uses(LanguageMask mask, Slot slot);

// Per-vocabulary word vectors, one column per token, in vocabulary order.
struct WordEmbeddings {
    Matrix subjects, predicates, objects;

    static WordEmbeddings from_table(const WordTable& table, const Vocabularies& vocabs);
    WordEmbeddings zeros_like() const;

    Index dim() const { return subjects.rows(); }
    const Matrix& of(Slot slot) const;
    Matrix& of(Slot slot);

    BlockList<double> blocks();
    std::vector<std::span<const double>> blocks() const;

    bool operator==(const WordEmbeddings&) const = default;
};

// q_t = [e_s; e_p; e_o] with masked slots zeroed. Components of `t` that the
// mask drops are never looked up.
Vector language_input(const Triplet& t, const WordEmbeddings& words, LanguageMask mask);
Vector language_input(const Triplet& t, const WordTable& table, const Vocabularies& vocabs, LanguageMask mask);

// Scatters dL/dq back onto the word columns used by `t`.
void language_input_backward(const Triplet& t, LanguageMask mask, const Vector& dq, WordEmbeddings& grad);

}  // namespace vrel
