#include "vrel/analogy.hpp"

#include <algorithm>
#include <set>

namespace vrel {

std::string to_string(GammaKind kind) {
    switch (kind) {
        case GammaKind::absent: return "absent";
        case GammaKind::zero: return "zero";
        case GammaKind::linear: return "linear";
        case GammaKind::deep: return "deep";
    }
    return "?";
}

GammaKind parse_gamma_kind(const std::string& text) {
    for (auto k : {GammaKind::absent, GammaKind::zero, GammaKind::linear, GammaKind::deep})
        if (to_string(k) == text) return k;
    throw ConfigError("unknown gamma kind '" + text + "' (absent|zero|linear|deep)");
}

GammaParams GammaParams::create(GammaKind kind, Index embed_dim, Index hidden, std::uint64_t seed) {
    GammaParams g;
    g.kind = kind;
    g.embed_dim = embed_dim;
    Rng rng = make_rng(seed, SeedStream::gamma_init);
    const Index in = 3 * embed_dim;
    if (kind == GammaKind::linear) g.linear = glorot_uniform<double>(embed_dim, in, rng);
    if (kind == GammaKind::deep) g.deep = Mlp<double>::glorot(in, hidden > 0 ? hidden : in, embed_dim, false, 0.0, rng);
    return g;
}

GammaParams GammaParams::zeros_like() const {
    GammaParams g;
    g.kind = kind;
    g.embed_dim = embed_dim;
    g.linear = Matrix::Zero(linear.rows(), linear.cols());
    if (kind == GammaKind::deep) g.deep = deep.zeros_like();
    return g;
}

BlockList<double> GammaParams::blocks() {
    if (kind == GammaKind::linear) return {as_span(linear)};
    if (kind == GammaKind::deep) return deep.blocks();
    return {};
}

std::vector<std::span<const double>> GammaParams::blocks() const {
    if (kind == GammaKind::linear) return {as_span(linear)};
    if (kind == GammaKind::deep) return deep.blocks();
    return {};
}

void TransferConfig::validate() const {
    if (k < 1) throw ConfigError("k must be at least 1");
    if (alpha_s < 0 || alpha_p < 0 || alpha_o < 0) throw ConfigError("alpha weights must be non-negative");
    if (std::abs(alpha_s + alpha_p + alpha_o - 1.0) > 1e-9) throw ConfigError("alpha weights must sum to 1");
    if (lambda < 0) throw ConfigError("lambda must be non-negative");
}

// ---------------------------------------------------------------------------

Vector unigram_vp_embedding(const JointModel& model, int token, Slot slot) {
    Triplet t{-1, -1, -1};
    LanguageMask mask = LanguageMask::subject;
    switch (slot) {
        case Slot::subject: t.s = token; mask = LanguageMask::subject; break;
        case Slot::predicate: t.p = token; mask = LanguageMask::predicate; break;
        case Slot::object: t.o = token; mask = LanguageMask::object; break;
    }
    const auto& br = model.branch(BranchKind::vp);
    Vector z = mlp_forward(br.language, language_input(t, model.words, mask), false, nullptr);
    const double n = z.norm();
    if (!(n > 0.0)) throw NumericError("degenerate unigram vp embedding");
    return z / n;
}

namespace {

// Unit vp embeddings of every token of every slot, one column per token.
struct UnigramVp {
    Matrix subjects, predicates, objects;

    explicit UnigramVp(const JointModel& model) {
        auto slot_matrix = [&](Slot slot, Index n) {
            Matrix m(model.embed_dim(), n);
            for (Index i = 0; i < n; ++i) m.col(i) = unigram_vp_embedding(model, static_cast<int>(i), slot);
            return m;
        };
        subjects = slot_matrix(Slot::subject, static_cast<Index>(model.vocabs.subjects.size()));
        predicates = slot_matrix(Slot::predicate, static_cast<Index>(model.vocabs.predicates.size()));
        objects = slot_matrix(Slot::object, static_cast<Index>(model.vocabs.objects.size()));
    }

    Vector input(const Triplet& t, const Triplet& u) const {
        const Index d = subjects.rows();
        Vector x(3 * d);
        x.segment(0, d) = subjects.col(u.s) - subjects.col(t.s);
        x.segment(d, d) = predicates.col(u.p) - predicates.col(t.p);
        x.segment(2 * d, d) = objects.col(u.o) - objects.col(t.o);
        return x;
    }
};

Matrix correction(const GammaParams& gamma, const Matrix& inputs) {
    switch (gamma.kind) {
        case GammaKind::linear: return gamma.linear * inputs;
        case GammaKind::deep: return mlp_forward(gamma.deep, inputs, false, nullptr);
        default: return Matrix::Zero(gamma.embed_dim, inputs.cols());
    }
}

}  // namespace

Vector gamma_input(const JointModel& model, const Triplet& t, const Triplet& u) {
    const Index d = model.embed_dim();
    Vector x(3 * d);
    x.segment(0, d) = unigram_vp_embedding(model, u.s, Slot::subject) - unigram_vp_embedding(model, t.s, Slot::subject);
    x.segment(d, d) =
        unigram_vp_embedding(model, u.p, Slot::predicate) - unigram_vp_embedding(model, t.p, Slot::predicate);
    x.segment(2 * d, d) = unigram_vp_embedding(model, u.o, Slot::object) - unigram_vp_embedding(model, t.o, Slot::object);
    return x;
}

Vector gamma_correction(const GammaParams& gamma, const JointModel& model, const Triplet& t, const Triplet& u) {
    if (!gamma.trainable()) return Vector::Zero(model.embed_dim());
    Matrix x = gamma_input(model, t, u);
    return correction(gamma, x).col(0);
}

Vector gamma_apply(const GammaParams& gamma, const JointModel& model, const Triplet& t, const Triplet& u) {
    return embed_language(model, t, BranchKind::vp) + gamma_correction(gamma, model, t, u);
}

// ---------------------------------------------------------------------------
// Similarity

SimilarityIndex::SimilarityIndex(const JointModel& model, const TransferConfig& cfg) : cfg_(cfg) {
    auto unit_columns = [](Matrix m) {
        for (Index j = 0; j < m.cols(); ++j) {
            const double n = m.col(j).norm();
            if (n > 0) m.col(j) /= n;
        }
        return m;
    };
    if (cfg.similarity == SimilarityInput::word_vectors) {
        subjects_ = unit_columns(model.words.subjects);
        predicates_ = unit_columns(model.words.predicates);
        objects_ = unit_columns(model.words.objects);
        return;
    }
    auto slot_embeddings = [&](BranchKind kind, Index n, auto make) {
        std::vector<Triplet> ts;
        for (Index i = 0; i < n; ++i) ts.push_back(make(static_cast<int>(i)));
        return embed_language(model, ts, kind);
    };
    subjects_ = slot_embeddings(BranchKind::s, static_cast<Index>(model.vocabs.subjects.size()),
                                [](int i) { return Triplet{i, -1, -1}; });
    predicates_ = slot_embeddings(BranchKind::p, static_cast<Index>(model.vocabs.predicates.size()),
                                  [](int i) { return Triplet{-1, i, -1}; });
    objects_ = slot_embeddings(BranchKind::o, static_cast<Index>(model.vocabs.objects.size()),
                               [](int i) { return Triplet{-1, -1, i}; });
}

double SimilarityIndex::raw(const Triplet& t, const Triplet& u) const {
    return cfg_.alpha_s * subjects_.col(t.s).dot(subjects_.col(u.s)) +
           cfg_.alpha_p * predicates_.col(t.p).dot(predicates_.col(u.p)) +
           cfg_.alpha_o * objects_.col(t.o).dot(objects_.col(u.o));
}

double SimilarityIndex::operator()(const Triplet& t, const Triplet& u) const {
    const double g = raw(t, u);
    return cfg_.clamp_g ? std::max(0.0, g) : g;
}

double similarity_G(const JointModel& model, const TransferConfig& cfg, const Triplet& t, const Triplet& u) {
    return SimilarityIndex(model, cfg)(t, u);
}

SourceSet select_sources(const SimilarityIndex& index, const TransferConfig& cfg, const Triplet& u,
                         const std::vector<Triplet>& pool) {
    if (pool.empty()) throw ValidationError("select_sources: empty source pool");
    std::vector<std::pair<Triplet, double>> scored;
    scored.reserve(pool.size());
    for (const auto& t : pool) scored.emplace_back(t, index(t, u));
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (scored.size() > static_cast<std::size_t>(cfg.k)) scored.resize(static_cast<std::size_t>(cfg.k));
    return {u, std::move(scored)};
}

SourceSet select_sources(const JointModel& model, const TransferConfig& cfg, const Triplet& u,
                         const std::vector<Triplet>& pool) {
    return select_sources(SimilarityIndex(model, cfg), cfg, u, pool);
}

Vector transfer_embedding(const JointModel& model, const GammaParams& gamma, const TransferConfig& cfg,
                          const SourceSet& set) {
    Vector sum = Vector::Zero(model.embed_dim());
    double total = 0.0;
    for (const auto& [t, g] : set.sources) {
        if (g == 0.0) continue;
        sum += g * gamma_apply(gamma, model, t, set.target);
        total += g;
    }
    if (total == 0.0) throw ValidationError("no informative sources for transfer");
    if (cfg.normalize_aggregation) sum /= total;
    return sum;
}

Vector transfer_embedding(const JointModel& model, const GammaParams& gamma, const TransferConfig& cfg,
                          const Triplet& u, const std::vector<Triplet>& pool) {
    return transfer_embedding(model, gamma, cfg, select_sources(model, cfg, u, pool));
}

QueryEmbedding transfer_query(const JointModel& model, const GammaParams& gamma, const TransferConfig& cfg,
                              const Triplet& u, const std::vector<Triplet>& pool,
                              const std::vector<BranchKind>& kinds) {
    QueryEmbedding q;
    for (auto k : kinds)
        q[k] = k == BranchKind::vp ? transfer_embedding(model, gamma, cfg, u, pool) : embed_language(model, u, k);
    return q;
}

// ---------------------------------------------------------------------------
// Analogy loss

double analogy_loss(const JointModel& model, const GammaParams& gamma, const Batch& batch, const AnalogyPairs& q,
                    const LossOptions& opts, JointModel* grad, GammaParams* gamma_grad) {
    if (batch.empty()) throw ValidationError("analogy loss needs a non-empty batch");
    if (q.empty()) return 0.0;
    const auto& vp = model.branch(BranchKind::vp);
    const Index n_pairs = static_cast<Index>(batch.size());
    const Index n_q = static_cast<Index>(q.size());
    const Index d = model.embed_dim();

    const auto vb = visual_input_batch(batch, model.visual_input, model.config.spatial_norm, false);
    MlpCache<double> vcache;
    const Matrix v = mlp_forward(vp.visual, vb.x, opts.training, opts.dropout_rng, grad ? &vcache : nullptr);

    // Source embeddings and Gamma inputs are constants here: no gradient
    // reaches the language projections.
    std::vector<Triplet> src;
    for (const auto& [t, u] : q) src.push_back(t);
    const Matrix w_src = embed_language(model, src, BranchKind::vp);
    Matrix x(3 * d, n_q);
    if (gamma.trainable()) {
        const UnigramVp uni(model);
        for (Index j = 0; j < n_q; ++j) {
            const auto& [t, u] = q[static_cast<std::size_t>(j)];
            x.col(j) = uni.input(t, u);
        }
    }
    MlpCache<double> gcache;
    Matrix corr;
    switch (gamma.kind) {
        case GammaKind::linear: corr = gamma.linear * x; break;
        case GammaKind::deep: corr = mlp_forward(gamma.deep, x, false, nullptr, gamma_grad ? &gcache : nullptr); break;
        default: corr = Matrix::Zero(d, n_q);
    }
    const Matrix e = w_src + corr;  // d x |Q|

    const Matrix logits = e.transpose() * v;  // |Q| x pairs
    const double scale = 1.0 / static_cast<double>(n_pairs * n_q);
    double loss = 0.0;
    Matrix dlogits(n_q, n_pairs);
    for (Index i = 0; i < n_pairs; ++i) {
        const auto& pair = *batch[static_cast<std::size_t>(i)];
        for (Index j = 0; j < n_q; ++j) {
            const bool y = pair.has_triplet(q[static_cast<std::size_t>(j)].second);
            const double z = logits(j, i);
            loss += y ? softplus(-z) : softplus(z);
            dlogits(j, i) = (sigmoid(z) - (y ? 1.0 : 0.0)) * scale;
        }
    }
    loss *= scale;

    if (gamma_grad && gamma.trainable()) {
        const Matrix de = v * dlogits.transpose();  // d x |Q|
        if (gamma.kind == GammaKind::linear) gamma_grad->linear.noalias() += de * x.transpose();
        else mlp_backward(gamma.deep, gcache, de, gamma_grad->deep);
    }
    if (grad) mlp_backward(vp.visual, vcache, Matrix(e * dlogits), grad->branch(BranchKind::vp).visual);
    return loss;
}

AnalogyPairs sample_analogy_pairs(const Batch& batch, const std::map<Triplet, SourceSet>& sources, Rng& rng,
                                  int* skipped) {
    std::set<Triplet> targets;
    for (const auto* p : batch)
        for (const auto& t : p->positives()) targets.insert(t);
    AnalogyPairs q;
    for (const auto& t : targets) {
        auto it = sources.find(t);
        if (it == sources.end() || it->second.sources.empty()) {
            if (skipped) ++*skipped;
            continue;
        }
        const auto& s = it->second.sources;
        q.emplace_back(s[uniform_index(rng, s.size())].first, t);
    }
    return q;
}

namespace {

void axpy(const std::vector<std::span<const double>>& x, double a, const BlockList<double>& y) {
    for (std::size_t b = 0; b < x.size(); ++b)
        for (std::size_t j = 0; j < x[b].size(); ++j) y[b][j] += a * x[b][j];
}

}  // namespace

Stage2Result train_stage2(JointModel& model, GammaParams& gamma, const Dataset& data, const LabelSpace& labels,
                          const TransferConfig& cfg, const Schedule& schedule, std::uint64_t seed,
                          int rare_threshold) {
    Stage2Result result;
    if (gamma.kind == GammaKind::absent) return result;
    cfg.validate();
    if (gamma.embed_dim != model.embed_dim()) throw ShapeError("gamma and model embedding dims differ");
    model.branch(BranchKind::vp);

    BatchSampler sampler(data, schedule.batch_size, positives_per_batch(schedule));
    Rng batch_rng = make_rng(seed, SeedStream::stage2_batches);
    Rng dropout_rng = make_rng(seed, SeedStream::stage2_dropout);
    Rng source_rng = make_rng(seed, SeedStream::sources);

    ParamSelection sel;
    sel.visual = {BranchKind::vp};
    sel.language = {BranchKind::vp};
    auto param_blocks = [&] {
        auto b = model.blocks(sel);
        for (auto g : gamma.blocks()) b.push_back(g);
        return b;
    };
    Adam<double> adam({schedule.lr}, Adam<double>::sizes_of(param_blocks()));

    const auto pool = occurrence_rank(data, rare_threshold).non_rare;
    const auto& pairs = data.pairs();
    for (int e = 0; e < schedule.epochs; ++e) {
        // Source sets follow the current embeddings.
        std::map<Triplet, SourceSet> sources;
        const SimilarityIndex index(model, cfg);
        for (const auto& t : data.observed()) {
            std::vector<Triplet> eligible;
            for (const auto& c : pool)
                if (c != t) eligible.push_back(c);
            if (!eligible.empty()) sources[t] = select_sources(index, cfg, t, eligible);
        }

        double sum = 0.0;
        const auto batches = sampler.epoch(batch_rng);
        for (const auto& idx : batches) {
            Batch batch;
            for (auto i : idx) batch.push_back(&pairs[i]);
            JointModel grad = model.zeros_like();
            const LossOptions opts{true, &dropout_rng, false};
            double loss = joint_loss(model, batch, labels, opts, &grad, {BranchKind::vp});

            const auto q = sample_analogy_pairs(batch, sources, source_rng, &result.skipped_targets);
            JointModel agrad = model.zeros_like();
            GammaParams ggrad = gamma.zeros_like();
            loss += cfg.lambda * analogy_loss(model, gamma, batch, q, opts, &agrad, &ggrad);
            axpy(const_blocks(agrad.blocks(sel)), cfg.lambda, grad.blocks(sel));

            auto grads = grad.blocks(sel);
            auto gblocks = ggrad.blocks();
            for (std::size_t b = 0; b < gblocks.size(); ++b)
                for (auto& g : gblocks[b]) g *= cfg.lambda;
            for (auto g : gblocks) grads.push_back(g);
            adam.step(param_blocks(), const_blocks(grads));
            sum += loss;
        }
        result.trace.epoch_loss.push_back(sum / static_cast<double>(batches.size()));
    }
    return result;
}

}  // namespace vrel
