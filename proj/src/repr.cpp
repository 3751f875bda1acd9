#include "vrel/repr.hpp"

#include <algorithm>

namespace vrel {

Vector spatial_features(const BoundingBox& sub, const BoundingBox& obj, SpatialNorm norm) {
    const double ux0 = std::min(sub.x_min, obj.x_min);
    const double uy0 = std::min(sub.y_min, obj.y_min);
    const double uw = std::max(sub.x_max, obj.x_max) - ux0;
    const double uh = std::max(sub.y_max, obj.y_max) - uy0;
    const double sx = norm == SpatialNorm::area ? uw * uh : uw;
    const double sy = norm == SpatialNorm::area ? uw * uh : uh;
    Vector r(8);
    r << (sub.x_min - ux0) / sx, (sub.x_max - ux0) / sx, (sub.y_min - uy0) / sy, (sub.y_max - uy0) / sy,
        (obj.x_min - ux0) / sx, (obj.x_max - ux0) / sx, (obj.y_min - uy0) / sy, (obj.y_max - uy0) / sy;
    return r;
}

VisualInputParams VisualInputParams::create(Index appearance_dim, const VisualInputDims& dims, Rng& rng) {
    VisualInputParams p;
    p.subject_proj = Dense<double>::glorot(appearance_dim, dims.appearance_proj, true, rng);
    p.object_proj = Dense<double>::glorot(appearance_dim, dims.appearance_proj, true, rng);
    p.spatial = Mlp<double>::glorot(8, dims.spatial_hidden, dims.spatial_out, true, 0.0, rng);
    return p;
}

VisualInputParams VisualInputParams::zeros_like() const {
    return {subject_proj.zeros_like(), object_proj.zeros_like(), spatial.zeros_like()};
}

BlockList<double> VisualInputParams::blocks() {
    auto out = subject_proj.blocks();
    for (auto b : object_proj.blocks()) out.push_back(b);
    for (auto b : spatial.blocks()) out.push_back(b);
    return out;
}

std::vector<std::span<const double>> VisualInputParams::blocks() const {
    auto out = subject_proj.blocks();
    for (auto b : object_proj.blocks()) out.push_back(b);
    for (auto b : spatial.blocks()) out.push_back(b);
    return out;
}

VisualFeature visual_input(const CandidatePair& pair, const VisualInputParams& params, SpatialNorm norm) {
    auto batch = visual_input_batch({&pair}, params, norm, false);
    return {batch.x.col(0), batch.subject_appearance.col(0), batch.object_appearance.col(0)};
}

VisualBatch visual_input_batch(const std::vector<const CandidatePair*>& pairs, const VisualInputParams& params,
                               SpatialNorm norm, bool keep_cache) {
    const Index n = static_cast<Index>(pairs.size());
    const Index da = params.appearance_dim();
    VisualBatch b;
    b.subject_appearance.resize(da, n);
    b.object_appearance.resize(da, n);
    Matrix spatial(8, n);
    for (Index j = 0; j < n; ++j) {
        const auto& p = *pairs[static_cast<std::size_t>(j)];
        require_shape(p.subject_appearance.size() == da, "visual_input subject appearance", da,
                      p.subject_appearance.size());
        require_shape(p.object_appearance.size() == da, "visual_input object appearance", da,
                      p.object_appearance.size());
        b.subject_appearance.col(j) = p.subject_appearance;
        b.object_appearance.col(j) = p.object_appearance;
        spatial.col(j) = spatial_features(p.subject_box, p.object_box, norm);
    }
    Matrix xs = dense_forward(params.subject_proj, b.subject_appearance, keep_cache ? &b.subject_cache : nullptr);
    Matrix xo = dense_forward(params.object_proj, b.object_appearance, keep_cache ? &b.object_cache : nullptr);
    Matrix xr = mlp_forward(params.spatial, spatial, false, nullptr, keep_cache ? &b.spatial_cache : nullptr);
    b.x.resize(params.output_dim(), n);
    b.x << xs, xo, xr;
    return b;
}

void visual_input_backward(const VisualInputParams& params, const VisualBatch& batch, const Matrix& dx,
                           VisualInputParams& grad) {
    require_shape(dx.rows() == params.output_dim(), "visual_input_backward", params.output_dim(), dx.rows());
    const Index ns = params.subject_proj.out_dim();
    const Index no = params.object_proj.out_dim();
    const Index nr = params.spatial.out_dim();
    dense_backward(params.subject_proj, batch.subject_cache, Matrix(dx.topRows(ns)), grad.subject_proj);
    dense_backward(params.object_proj, batch.object_cache, Matrix(dx.middleRows(ns, no)), grad.object_proj);
    mlp_backward(params.spatial, batch.spatial_cache, Matrix(dx.bottomRows(nr)), grad.spatial);
}

bool mask_uses(LanguageMask mask, Slot slot) {
    switch (mask) {
        case LanguageMask::full: return true;
        case LanguageMask::subject: return slot == Slot::subject;
        case LanguageMask::predicate: return slot == Slot::predicate;
        case LanguageMask::object: return slot == Slot::object;
        case LanguageMask::subject_predicate: return slot != Slot::object;
        case LanguageMask::predicate_object: return slot != Slot::subject;
    }
    return false;
}

WordEmbeddings WordEmbeddings::from_table(const WordTable& table, const Vocabularies& vocabs) {
    WordEmbeddings w;
    auto fill = [&](Slot slot) {
        const auto& v = vocabs.of(slot);
        Matrix m(table.dim(), static_cast<Index>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) m.col(static_cast<Index>(i)) = table.at(v.token(static_cast<int>(i)));
        return m;
    };
    w.subjects = fill(Slot::subject);
    w.predicates = fill(Slot::predicate);
    w.objects = fill(Slot::object);
    return w;
}

WordEmbeddings WordEmbeddings::zeros_like() const {
    return {Matrix::Zero(subjects.rows(), subjects.cols()), Matrix::Zero(predicates.rows(), predicates.cols()),
            Matrix::Zero(objects.rows(), objects.cols())};
}

const Matrix& WordEmbeddings::of(Slot slot) const {
    switch (slot) {
        case Slot::subject: return subjects;
        case Slot::predicate: return predicates;
        case Slot::object: return objects;
    }
    throw std::logic_error("bad slot");
}

Matrix& WordEmbeddings::of(Slot slot) {
    return const_cast<Matrix&>(static_cast<const WordEmbeddings&>(*this).of(slot));
}

BlockList<double> WordEmbeddings::blocks() { return {as_span(subjects), as_span(predicates), as_span(objects)}; }

std::vector<std::span<const double>> WordEmbeddings::blocks() const {
    return {as_span(subjects), as_span(predicates), as_span(objects)};
}

namespace {

int component(const Triplet& t, Slot slot) {
    switch (slot) {
        case Slot::subject: return t.s;
        case Slot::predicate: return t.p;
        case Slot::object: return t.o;
    }
    return -1;
}

constexpr Slot kSlots[] = {Slot::subject, Slot::predicate, Slot::object};

}  // namespace

Vector language_input(const Triplet& t, const WordEmbeddings& words, LanguageMask mask) {
    const Index dw = words.dim();
    Vector q = Vector::Zero(3 * dw);
    for (int k = 0; k < 3; ++k) {
        const Slot slot = kSlots[k];
        if (!mask_uses(mask, slot)) continue;
        const int idx = component(t, slot);
        const Matrix& table = words.of(slot);
        if (idx < 0 || idx >= table.cols())
            throw ValidationError("language_input: token index " + std::to_string(idx) + " out of range");
        q.segment(k * dw, dw) = table.col(idx);
    }
    return q;
}

Vector language_input(const Triplet& t, const WordTable& table, const Vocabularies& vocabs, LanguageMask mask) {
    const Index dw = table.dim();
    Vector q = Vector::Zero(3 * dw);
    for (int k = 0; k < 3; ++k) {
        const Slot slot = kSlots[k];
        if (!mask_uses(mask, slot)) continue;
        q.segment(k * dw, dw) = table.at(vocabs.of(slot).token(component(t, slot)));
    }
    return q;
}

void language_input_backward(const Triplet& t, LanguageMask mask, const Vector& dq, WordEmbeddings& grad) {
    const Index dw = grad.dim();
    require_shape(dq.size() == 3 * dw, "language_input_backward", 3 * dw, dq.size());
    for (int k = 0; k < 3; ++k) {
        const Slot slot = kSlots[k];
        if (!mask_uses(mask, slot)) continue;
        grad.of(slot).col(component(t, slot)) += dq.segment(k * dw, dw);
    }
}

}  // namespace vrel
