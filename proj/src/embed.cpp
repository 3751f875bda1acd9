#include "vrel/embed.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace vrel {

std::string to_string(BranchKind kind) {
    switch (kind) {
        case BranchKind::s: return "s";
        case BranchKind::o: return "o";
        case BranchKind::p: return "p";
        case BranchKind::vp: return "vp";
        case BranchKind::sp: return "sp";
        case BranchKind::po: return "po";
    }
    return "?";
}

BranchKind parse_branch_kind(const std::string& text) {
    for (auto k : kAllBranches)
        if (to_string(k) == text) return k;
    throw ConfigError("unknown branch kind '" + text + "'");
}

std::vector<BranchKind> parse_branch_set(const std::string& text) {
    std::set<BranchKind> kinds;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find_first_of(",+", start);
        if (end == std::string::npos) end = text.size();
        const std::string item = text.substr(start, end - start);
        if (!item.empty()) {
            const auto k = parse_branch_kind(item);
            if (!kinds.insert(k).second) throw ConfigError("branch '" + item + "' listed twice");
        }
        start = end + 1;
    }
    if (kinds.empty()) throw ConfigError("empty branch set");
    return {kinds.begin(), kinds.end()};
}

std::string format_branch_set(const std::vector<BranchKind>& kinds) {
    std::string out;
    for (auto k : kinds) out += (out.empty() ? "" : ",") + to_string(k);
    return out;
}

LanguageMask language_mask(BranchKind kind) {
    switch (kind) {
        case BranchKind::s: return LanguageMask::subject;
        case BranchKind::o: return LanguageMask::object;
        case BranchKind::p: return LanguageMask::predicate;
        case BranchKind::vp: return LanguageMask::full;
        case BranchKind::sp: return LanguageMask::subject_predicate;
        case BranchKind::po: return LanguageMask::predicate_object;
    }
    return LanguageMask::full;
}

VisualSelector visual_selector(BranchKind kind) {
    switch (kind) {
        case BranchKind::s: return VisualSelector::subject_appearance;
        case BranchKind::o: return VisualSelector::object_appearance;
        default: return VisualSelector::full;
    }
}

// ---------------------------------------------------------------------------
// Model

ParamSelection ParamSelection::all(const std::vector<BranchKind>& kinds) {
    return {true, true, kinds, kinds};
}

JointModel JointModel::create(const ModelConfig& cfg, const Vocabularies& vocabs, const WordTable& table,
                              Index appearance_dim, std::uint64_t seed) {
    if (cfg.branches.empty()) throw ConfigError("model needs at least one branch");
    if (cfg.embed_dim <= 0 || cfg.hidden_dim <= 0) throw ConfigError("embedding and hidden dims must be positive");
    JointModel m;
    m.config = cfg;
    m.config.branches = parse_branch_set(format_branch_set(cfg.branches));
    m.vocabs = vocabs;
    m.words = WordEmbeddings::from_table(table, vocabs);
    Rng rng = make_rng(seed, SeedStream::init);
    m.visual_input = VisualInputParams::create(appearance_dim, cfg.visual_input, rng);
    const Index dq = 3 * m.words.dim();
    for (auto kind : m.config.branches) {
        Index in = 0;
        switch (visual_selector(kind)) {
            case VisualSelector::subject_appearance:
            case VisualSelector::object_appearance: in = appearance_dim; break;
            case VisualSelector::full: in = m.visual_input.output_dim(); break;
        }
        EmbeddingBranch b;
        b.kind = kind;
        b.visual = Mlp<double>::glorot(in, cfg.hidden_dim, cfg.embed_dim, true, cfg.visual_dropout, rng);
        b.language = Mlp<double>::glorot(dq, cfg.hidden_dim, cfg.embed_dim, true, cfg.language_dropout, rng);
        m.branches.push_back(std::move(b));
    }
    return m;
}

JointModel JointModel::zeros_like() const {
    JointModel g;
    g.config = config;
    g.vocabs = vocabs;
    g.words = words.zeros_like();
    g.visual_input = visual_input.zeros_like();
    for (const auto& b : branches) g.branches.push_back({b.kind, b.visual.zeros_like(), b.language.zeros_like()});
    return g;
}

bool JointModel::has(BranchKind kind) const {
    return std::any_of(branches.begin(), branches.end(), [&](const auto& b) { return b.kind == kind; });
}

const EmbeddingBranch& JointModel::branch(BranchKind kind) const {
    for (const auto& b : branches)
        if (b.kind == kind) return b;
    throw ValidationError("branch '" + to_string(kind) + "' is not active in this model");
}

EmbeddingBranch& JointModel::branch(BranchKind kind) {
    return const_cast<EmbeddingBranch&>(static_cast<const JointModel&>(*this).branch(kind));
}

std::vector<BranchKind> JointModel::kinds() const {
    std::vector<BranchKind> out;
    for (const auto& b : branches) out.push_back(b.kind);
    return out;
}

namespace {

bool contains(const std::vector<BranchKind>& v, BranchKind k) { return std::find(v.begin(), v.end(), k) != v.end(); }

template <typename Model, typename Out>
void collect_blocks(Model& m, const ParamSelection& sel, Out& out) {
    if (sel.words)
        for (auto b : m.words.blocks()) out.push_back(b);
    if (sel.visual_input)
        for (auto b : m.visual_input.blocks()) out.push_back(b);
    for (auto& br : m.branches) {
        if (contains(sel.visual, br.kind))
            for (auto b : br.visual.blocks()) out.push_back(b);
        if (contains(sel.language, br.kind))
            for (auto b : br.language.blocks()) out.push_back(b);
    }
}

}  // namespace

BlockList<double> JointModel::blocks(const ParamSelection& sel) {
    BlockList<double> out;
    collect_blocks(*this, sel, out);
    return out;
}

std::vector<std::span<const double>> JointModel::blocks(const ParamSelection& sel) const {
    std::vector<std::span<const double>> out;
    collect_blocks(*this, sel, out);
    return out;
}

Batch batch_of(const std::vector<CandidatePair>& pairs) {
    Batch b;
    b.reserve(pairs.size());
    for (const auto& p : pairs) b.push_back(&p);
    return b;
}

// ---------------------------------------------------------------------------
// Labels

Triplet label_key(BranchKind kind, const Triplet& t) {
    switch (kind) {
        case BranchKind::s: return {t.s, -1, -1};
        case BranchKind::o: return {-1, -1, t.o};
        case BranchKind::p: return {-1, t.p, -1};
        case BranchKind::vp: return t;
        case BranchKind::sp: return {t.s, t.p, -1};
        case BranchKind::po: return {-1, t.p, t.o};
    }
    return t;
}

// Subject and object labels follow the pair's box categories, so they are
// positive even for non-interacting pairs.
bool label_positive(BranchKind kind, const Triplet& key, const CandidatePair& pair) {
    switch (kind) {
        case BranchKind::s: return key.s == pair.subject_category;
        case BranchKind::o: return key.o == pair.object_category;
        case BranchKind::p: return pair.has_predicate(key.p);
        case BranchKind::vp: return pair.has_triplet(key);
        case BranchKind::sp: return key.s == pair.subject_category && pair.has_predicate(key.p);
        case BranchKind::po: return key.o == pair.object_category && pair.has_predicate(key.p);
    }
    return false;
}

LabelSpace LabelSpace::build(const Dataset& train, const std::vector<BranchKind>& kinds, VpNegatives vp_negatives) {
    const auto& v = train.vocabularies();
    const int ns = static_cast<int>(v.subjects.size());
    const int np = static_cast<int>(v.predicates.size());
    const int no = static_cast<int>(v.objects.size());
    LabelSpace space;
    for (auto kind : kinds) {
        std::set<Triplet> keys;
        switch (kind) {
            case BranchKind::s:
                for (int s = 0; s < ns; ++s) keys.insert({s, -1, -1});
                break;
            case BranchKind::o:
                for (int o = 0; o < no; ++o) keys.insert({-1, -1, o});
                break;
            case BranchKind::p:
                for (int p = 0; p < np; ++p) keys.insert({-1, p, -1});
                break;
            default:
                if (vp_negatives == VpNegatives::cartesian) {
                    for (int s = 0; s < ns; ++s)
                        for (int p = 0; p < np; ++p)
                            for (int o = 0; o < no; ++o) keys.insert(label_key(kind, {s, p, o}));
                } else {
                    for (const auto& t : train.observed()) keys.insert(label_key(kind, t));
                }
        }
        space.labels[kind] = {keys.begin(), keys.end()};
    }
    return space;
}

const std::vector<Triplet>& LabelSpace::of(BranchKind kind) const {
    auto it = labels.find(kind);
    if (it == labels.end()) throw ValidationError("no labels for branch '" + to_string(kind) + "'");
    return it->second;
}

// ---------------------------------------------------------------------------
// Embeddings

namespace {

const Matrix& select_input(const VisualBatch& vb, BranchKind kind) {
    switch (visual_selector(kind)) {
        case VisualSelector::subject_appearance: return vb.subject_appearance;
        case VisualSelector::object_appearance: return vb.object_appearance;
        case VisualSelector::full: return vb.x;
    }
    return vb.x;
}

Matrix language_inputs(const JointModel& model, const std::vector<Triplet>& ts, BranchKind kind) {
    const auto mask = language_mask(kind);
    Matrix q(3 * model.words.dim(), static_cast<Index>(ts.size()));
    for (std::size_t j = 0; j < ts.size(); ++j) q.col(static_cast<Index>(j)) = language_input(ts[j], model.words, mask);
    return q;
}

// Column-wise L2 normalization; returns the norms.
Vector normalize_columns(Matrix& z) {
    Vector norms = z.colwise().norm().transpose();
    for (Index j = 0; j < z.cols(); ++j) {
        if (!(norms(j) > 0.0)) throw NumericError("degenerate language embedding (zero norm before normalization)");
        z.col(j) /= norms(j);
    }
    return norms;
}

}  // namespace

Vector embed_visual(const JointModel& model, const CandidatePair& pair, BranchKind kind, bool training, Rng* rng) {
    const auto& br = model.branch(kind);
    const Batch one{&pair};
    const auto vb = visual_input_batch(one, model.visual_input, model.config.spatial_norm, false);
    return mlp_forward(br.visual, select_input(vb, kind), training, rng).col(0);
}

Matrix embed_language(const JointModel& model, const std::vector<Triplet>& ts, BranchKind kind) {
    const auto& br = model.branch(kind);
    Matrix z = mlp_forward(br.language, language_inputs(model, ts, kind), false, nullptr);
    normalize_columns(z);
    return z;
}

Vector embed_language(const JointModel& model, const Triplet& t, BranchKind kind) {
    return embed_language(model, std::vector<Triplet>{t}, kind).col(0);
}

// ---------------------------------------------------------------------------
// Loss

namespace {

double branch_term(const JointModel& model, const Batch& batch, const VisualBatch& vb, BranchKind kind,
                   const LabelSpace& labels, const LossOptions& opts, JointModel* grad, Matrix* dx) {
    const auto& br = model.branch(kind);
    const auto& keys = labels.of(kind);
    const Index n_pairs = static_cast<Index>(batch.size());
    const Index n_labels = static_cast<Index>(keys.size());
    if (n_labels == 0) return 0.0;

    MlpCache<double> vcache, lcache;
    const Matrix v = mlp_forward(br.visual, select_input(vb, kind), opts.training, opts.dropout_rng,
                                 grad ? &vcache : nullptr);
    const Matrix q = language_inputs(model, keys, kind);
    Matrix w = mlp_forward(br.language, q, opts.training, opts.dropout_rng, grad ? &lcache : nullptr);
    const Vector norms = normalize_columns(w);

    const Matrix logits = w.transpose() * v;  // labels x pairs
    const double scale = 1.0 / static_cast<double>(n_pairs * n_labels);
    double loss = 0.0;
    Matrix dlogits(n_labels, n_pairs);
    for (Index i = 0; i < n_pairs; ++i) {
        const auto& pair = *batch[static_cast<std::size_t>(i)];
        for (Index u = 0; u < n_labels; ++u) {
            const bool y = label_positive(kind, keys[static_cast<std::size_t>(u)], pair);
            const double z = logits(u, i);
            loss += y ? softplus(-z) : softplus(z);
            dlogits(u, i) = (sigmoid(z) - (y ? 1.0 : 0.0)) * scale;
        }
    }
    loss *= scale;
    if (!grad) return loss;

    auto& gbr = grad->branch(kind);
    const Matrix dw = v * dlogits.transpose();  // d x labels
    const Matrix dv = w * dlogits;              // d x pairs
    // Through w = z / |z|: dz = (dw - w (w . dw)) / |z|.
    Matrix dz = dw;
    for (Index u = 0; u < n_labels; ++u) dz.col(u) = (dw.col(u) - w.col(u) * w.col(u).dot(dw.col(u))) / norms(u);
    const Matrix dq = mlp_backward(br.language, lcache, dz, gbr.language);
    if (model.config.finetune_words) {
        const auto mask = language_mask(kind);
        for (Index u = 0; u < n_labels; ++u)
            language_input_backward(keys[static_cast<std::size_t>(u)], mask, dq.col(u), grad->words);
    }
    const Matrix din = mlp_backward(br.visual, vcache, dv, gbr.visual);
    if (dx && visual_selector(kind) == VisualSelector::full) *dx += din;
    return loss;
}

}  // namespace

double joint_loss(const JointModel& model, const Batch& batch, const LabelSpace& labels, const LossOptions& opts,
                  JointModel* grad, const std::vector<BranchKind>& kinds_in) {
    if (batch.empty()) throw ValidationError("loss needs a non-empty batch");
    const auto kinds = kinds_in.empty() ? model.kinds() : kinds_in;
    for (auto k : kinds) model.branch(k);  // validates activity

    const bool need_dx = grad && opts.visual_input_grad &&
                         std::any_of(kinds.begin(), kinds.end(),
                                     [](BranchKind k) { return visual_selector(k) == VisualSelector::full; });
    const auto vb = visual_input_batch(batch, model.visual_input, model.config.spatial_norm, need_dx);
    Matrix dx;
    if (need_dx) dx = Matrix::Zero(vb.x.rows(), vb.x.cols());

    double total = 0.0;
    for (auto kind : kAllBranches) {
        if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) continue;
        total += branch_term(model, batch, vb, kind, labels, opts, grad, need_dx ? &dx : nullptr);
    }
    if (need_dx) visual_input_backward(model.visual_input, vb, dx, grad->visual_input);
    return total;
}

double branch_loss(const JointModel& model, const Batch& batch, BranchKind kind, const LabelSpace& labels,
                   const LossOptions& opts, JointModel* grad) {
    return joint_loss(model, batch, labels, opts, grad, {kind});
}

// ---------------------------------------------------------------------------
// Scoring

double score(const JointModel& model, const Triplet& t, const CandidatePair& pair) {
    double s = 1.0;
    for (auto kind : model.kinds()) s *= sigmoid(embed_language(model, t, kind).dot(embed_visual(model, pair, kind)));
    return s;
}

PairEmbeddings::PairEmbeddings(const JointModel& model, const Batch& pairs) : size_(pairs.size()) {
    if (pairs.empty()) return;
    const auto vb = visual_input_batch(pairs, model.visual_input, model.config.spatial_norm, false);
    for (const auto& br : model.branches)
        embeddings_[br.kind] = mlp_forward(br.visual, select_input(vb, br.kind), false, nullptr);
}

const Matrix& PairEmbeddings::of(BranchKind kind) const {
    auto it = embeddings_.find(kind);
    if (it == embeddings_.end()) throw ValidationError("no pair embeddings for branch '" + to_string(kind) + "'");
    return it->second;
}

QueryEmbedding direct_query(const JointModel& model, const Triplet& t, const std::vector<BranchKind>& kinds) {
    QueryEmbedding q;
    for (auto k : kinds) q[k] = embed_language(model, t, k);
    return q;
}

Vector log_scores(const PairEmbeddings& pairs, const QueryEmbedding& query) {
    Vector out = Vector::Zero(static_cast<Index>(pairs.size()));
    if (pairs.size() == 0) return out;
    for (const auto& [kind, w] : query) {
        const Vector logits = pairs.of(kind).transpose() * w;
        for (Index i = 0; i < out.size(); ++i) out(i) += log_sigmoid(logits(i));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training

int positives_per_batch(const Schedule& schedule) {
    const int k = static_cast<int>(std::lround(schedule.batch_size * schedule.positive_fraction));
    return std::clamp(k, 1, schedule.batch_size);
}

BatchSampler::BatchSampler(const Dataset& data, int batch_size, int positives_per_batch)
    : data_(&data), batch_size_(batch_size), positives_(positives_per_batch) {
    if (batch_size <= 0 || positives_per_batch <= 0 || positives_per_batch > batch_size)
        throw ConfigError("batch sampler: need 0 < positives <= batch size");
    const auto& pairs = data.pairs();
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (pairs[i].is_positive()) {
            positive_idx_.push_back(i);
        } else {
            negative_idx_.push_back(i);
            negatives_by_category_[{pairs[i].subject_category, pairs[i].object_category}].push_back(i);
        }
    }
    if (positive_idx_.empty()) throw ValidationError("training data has no positive pairs");
}

std::vector<std::vector<std::size_t>> BatchSampler::epoch(Rng& rng) const {
    auto order = positive_idx_;
    shuffle(order, rng);
    const std::size_t k = static_cast<std::size_t>(positives_);
    const std::size_t n_batches = (order.size() + k - 1) / k;
    const auto& pairs = data_->pairs();
    std::vector<std::vector<std::size_t>> batches;
    batches.reserve(n_batches);
    for (std::size_t b = 0; b < n_batches; ++b) {
        std::vector<std::size_t> batch;
        for (std::size_t j = b * k; j < std::min(order.size(), (b + 1) * k); ++j) batch.push_back(order[j]);
        // Short final batch: top up with positives drawn with replacement.
        while (batch.size() < k) batch.push_back(positive_idx_[uniform_index(rng, positive_idx_.size())]);
        if (!negative_idx_.empty()) {
            const std::size_t n_neg = static_cast<std::size_t>(batch_size_) - k;
            for (std::size_t j = 0; j < n_neg; ++j) {
                const auto& anchor = pairs[batch[j % k]];
                auto it = negatives_by_category_.find({anchor.subject_category, anchor.object_category});
                const auto& pool = it != negatives_by_category_.end() ? it->second : negative_idx_;
                batch.push_back(pool[uniform_index(rng, pool.size())]);
            }
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

LossTrace train_stage1(JointModel& model, const Dataset& data, const LabelSpace& labels, const Schedule& schedule,
                       std::uint64_t seed) {
    BatchSampler sampler(data, schedule.batch_size, positives_per_batch(schedule));
    Rng batch_rng = make_rng(seed, SeedStream::batches);
    Rng dropout_rng = make_rng(seed, SeedStream::dropout);

    ParamSelection sel = ParamSelection::all(model.kinds());
    sel.words = model.config.finetune_words;
    Adam<double> adam({schedule.lr}, Adam<double>::sizes_of(model.blocks(sel)));

    LossTrace trace;
    const auto& pairs = data.pairs();
    for (int e = 0; e < schedule.epochs; ++e) {
        double sum = 0.0;
        const auto batches = sampler.epoch(batch_rng);
        for (const auto& idx : batches) {
            Batch batch;
            for (auto i : idx) batch.push_back(&pairs[i]);
            JointModel grad = model.zeros_like();
            sum += joint_loss(model, batch, labels, {true, &dropout_rng, true}, &grad);
            adam.step(model.blocks(sel), const_blocks(grad.blocks(sel)));
        }
        trace.epoch_loss.push_back(sum / static_cast<double>(batches.size()));
    }
    return trace;
}

}  // namespace vrel
