// Planted synthetic relations.
//
// Every token belongs to a semantic group. Word vectors are one-hot group and
// item codes plus small noise, so tokens of the same group have nearby vectors.
// Appearance features are linear images of the same codes:
//
//   subject box: proto_s[s] + pose[p] + interaction * R_p code(o) + noise
//   object box:  proto_o[o] + noise
//
// R_p code(o) is the predicate/object interaction: how a predicate looks
// depends on the object it is applied to, smoothly across objects of a group.
// Non-interacting (negative) pairs carry neither the pose nor the interaction
// term. Object boxes are placed relative to the subject with a
// predicate-specific offset and scale.

#include <algorithm>
#include <set>

#include "vrel/datamodel.hpp"

namespace vrel {

namespace {

int group_of(int item, int items, int groups) { return item * groups / items; }

Vector gaussian(Index n, Rng& rng) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = standard_normal(rng);
    return v;
}

Matrix gaussian(Index r, Index c, Rng& rng) {
    Matrix m(r, c);
    for (Index j = 0; j < c; ++j)
        for (Index i = 0; i < r; ++i) m(i, j) = standard_normal(rng);
    return m;
}

// Group one-hot followed by a scaled item one-hot.
Vector semantic_code(int item, int items, int groups) {
    Vector c = Vector::Zero(groups + items);
    c(group_of(item, items, groups)) = 1.0;
    c(groups + item) = 0.6;
    return c;
}

struct Geometry {
    double dx, dy, scale;
};

struct Planted {
    Matrix subject_proto, object_proto, pose;  // columns are prototypes
    std::vector<Matrix> interaction;           // per predicate
    std::vector<Geometry> geometry;            // per predicate
};

std::vector<std::string> names(const char* prefix, int n) {
    std::vector<std::string> v;
    for (int i = 0; i < n; ++i) v.push_back(prefix + std::to_string(i));
    return v;
}

Matrix grouped_prototypes(Index dim, int items, int groups, double spread, Rng& rng) {
    Matrix centers = gaussian(dim, groups, rng);
    Matrix protos(dim, items);
    for (int i = 0; i < items; ++i)
        protos.col(i) = centers.col(group_of(i, items, groups)) + spread * gaussian(dim, rng);
    return protos;
}

class PairFactory {
public:
    PairFactory(const SynthConfig& cfg, const Planted& planted, Rng& rng)
        : cfg_(cfg), planted_(planted), rng_(rng) {}

    CandidatePair make(int s, int o, std::optional<int> p) {
        CandidatePair pair;
        pair.id = next_id_;
        pair.image_id = next_id_;
        ++next_id_;
        pair.subject_category = s;
        pair.object_category = o;

        const double w = uniform(rng_, 50, 150);
        const double h = uniform(rng_, 50, 150);
        const double x0 = uniform(rng_, 0, 400);
        const double y0 = uniform(rng_, 0, 300);
        pair.subject_box = {x0, y0, x0 + w, y0 + h};
        Geometry g{uniform(rng_, -2.0, 2.0), uniform(rng_, -2.0, 2.0), uniform(rng_, 0.4, 1.6)};
        if (p) g = planted_.geometry[static_cast<std::size_t>(*p)];
        const double jitter = cfg_.geometry_jitter;
        const double ow = std::max(5.0, w * g.scale * (1 + 0.1 * standard_normal(rng_)));
        const double oh = std::max(5.0, h * g.scale * (1 + 0.1 * standard_normal(rng_)));
        const double ox = x0 + w * (g.dx + jitter * standard_normal(rng_));
        const double oy = y0 + h * (g.dy + jitter * standard_normal(rng_));
        pair.object_box = {ox, oy, ox + ow, oy + oh};

        Vector a_s = planted_.subject_proto.col(s);
        Vector a_o = planted_.object_proto.col(o);
        if (p) {
            a_s += planted_.pose.col(*p);
            a_s += cfg_.interaction * planted_.interaction[static_cast<std::size_t>(*p)] *
                   semantic_code(o, cfg_.objects, cfg_.object_groups);
            pair.predicates = {*p};
        }
        if (cfg_.noise > 0) {
            a_s += cfg_.noise * gaussian(cfg_.appearance_dim, rng_);
            a_o += cfg_.noise * gaussian(cfg_.appearance_dim, rng_);
        }
        pair.subject_appearance = std::move(a_s);
        pair.object_appearance = std::move(a_o);
        return pair;
    }

private:
    const SynthConfig& cfg_;
    const Planted& planted_;
    Rng& rng_;
    std::int64_t next_id_ = 0;
};

void check_config(const SynthConfig& c) {
    auto positive = [](int v, const char* name) {
        if (v <= 0) throw ConfigError(std::string("synth: ") + name + " must be positive");
    };
    positive(c.subjects, "subjects");
    positive(c.predicates, "predicates");
    positive(c.objects, "objects");
    positive(c.subject_groups, "subject_groups");
    positive(c.predicate_groups, "predicate_groups");
    positive(c.object_groups, "object_groups");
    positive(c.train_pairs_per_triplet, "train_pairs_per_triplet");
    positive(c.test_pairs_per_triplet, "test_pairs_per_triplet");
    if (c.appearance_dim <= 0) throw ConfigError("synth: appearance_dim must be positive");
    if (c.subject_groups > c.subjects || c.predicate_groups > c.predicates || c.object_groups > c.objects)
        throw ConfigError("synth: more groups than tokens");
    if (c.subjects_per_predicate < 1 || c.subjects_per_predicate > c.subjects)
        throw ConfigError("synth: subjects_per_predicate out of range");
    if (c.object_groups_per_predicate < 1 || c.object_groups_per_predicate > c.object_groups)
        throw ConfigError("synth: object_groups_per_predicate out of range");
    if (c.heldout < 0) throw ConfigError("synth: heldout must be non-negative");
    if (c.noise < 0 || c.word_noise < 0 || c.pose < 0 || c.object_spread < 0 || c.interaction < 0 || c.geometry_jitter < 0)
        throw ConfigError("synth: noise, pose, interaction and jitter scales must be non-negative");
}

}  // namespace

SynthData synth_generate(const SynthConfig& cfg, std::uint64_t seed) {
    check_config(cfg);
    Rng rng(seed);

    Vocabularies vocabs{Vocabulary(names("s", cfg.subjects)), Vocabulary(names("p", cfg.predicates)),
                        Vocabulary(names("o", cfg.objects))};

    // Word vectors: [subject codes | predicate codes | object codes].
    const int ds = cfg.subject_groups + cfg.subjects;
    const int dp = cfg.predicate_groups + cfg.predicates;
    const int dob = cfg.object_groups + cfg.objects;
    WordTable words(ds + dp + dob);
    auto add_words = [&](Slot slot, int items, int groups, int offset) {
        for (int i = 0; i < items; ++i) {
            Vector v = Vector::Zero(words.dim());
            v.segment(offset, groups + items) = semantic_code(i, items, groups);
            for (Index k = 0; k < v.size(); ++k) v(k) += cfg.word_noise * standard_normal(rng);
            words.set(vocabs.of(slot).token(i), std::move(v));
        }
    };
    add_words(Slot::subject, cfg.subjects, cfg.subject_groups, 0);
    add_words(Slot::predicate, cfg.predicates, cfg.predicate_groups, ds);
    add_words(Slot::object, cfg.objects, cfg.object_groups, ds + dp);

    Planted planted;
    const Index da = cfg.appearance_dim;
    planted.subject_proto = grouped_prototypes(da, cfg.subjects, cfg.subject_groups, 0.8, rng);
    planted.object_proto = grouped_prototypes(da, cfg.objects, cfg.object_groups, cfg.object_spread, rng);
    planted.pose = grouped_prototypes(da, cfg.predicates, cfg.predicate_groups, 0.8, rng) * cfg.pose;
    for (int p = 0; p < cfg.predicates; ++p) planted.interaction.push_back(gaussian(da, dob, rng) / std::sqrt(2.0));
    for (int p = 0; p < cfg.predicates; ++p)
        planted.geometry.push_back({uniform(rng, -1.5, 1.5), uniform(rng, -1.5, 1.5), uniform(rng, 0.5, 1.5)});

    // Observed triplets: each predicate links a few subjects with whole object groups.
    std::set<Triplet> observed;
    for (int p = 0; p < cfg.predicates; ++p) {
        std::vector<int> subjects(static_cast<std::size_t>(cfg.subjects));
        for (int i = 0; i < cfg.subjects; ++i) subjects[static_cast<std::size_t>(i)] = i;
        shuffle(subjects, rng);
        std::vector<int> groups(static_cast<std::size_t>(cfg.object_groups));
        for (int i = 0; i < cfg.object_groups; ++i) groups[static_cast<std::size_t>(i)] = i;
        shuffle(groups, rng);
        const int ngroups = 1 + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(cfg.object_groups_per_predicate)));
        for (int si = 0; si < cfg.subjects_per_predicate; ++si)
            for (int gi = 0; gi < ngroups; ++gi)
                for (int o = 0; o < cfg.objects; ++o)
                    if (group_of(o, cfg.objects, cfg.object_groups) == groups[static_cast<std::size_t>(gi)])
                        observed.insert({subjects[static_cast<std::size_t>(si)], p, o});
    }

    // Held-out triplets keep at least one same-group sibling (same subject and
    // predicate, object from the same group) among the seen triplets.
    std::vector<Triplet> candidates(observed.begin(), observed.end());
    shuffle(candidates, rng);
    auto has_seen_sibling = [&](const Triplet& t, const std::set<Triplet>& held) {
        for (const auto& u : observed)
            if (u.s == t.s && u.p == t.p && u.o != t.o && !held.count(u) &&
                group_of(u.o, cfg.objects, cfg.object_groups) == group_of(t.o, cfg.objects, cfg.object_groups))
                return true;
        return false;
    };
    std::set<Triplet> heldout;
    for (const auto& t : candidates) {
        if (static_cast<int>(heldout.size()) == cfg.heldout) break;
        auto trial = heldout;
        trial.insert(t);
        if (std::all_of(trial.begin(), trial.end(), [&](const Triplet& h) { return has_seen_sibling(h, trial); }))
            heldout = std::move(trial);
    }
    if (static_cast<int>(heldout.size()) < cfg.heldout)
        throw ConfigError("synth: cannot hold out " + std::to_string(cfg.heldout) + " triplets; only " +
                          std::to_string(heldout.size()) + " qualify");

    std::set<std::pair<int, int>> categories;
    for (const auto& t : observed) categories.insert({t.s, t.o});

    auto build = [&](bool train) {
        PairFactory factory(cfg, planted, rng);
        std::vector<CandidatePair> pairs;
        for (const auto& t : observed) {
            int n = 0;
            if (train) {
                if (heldout.count(t)) continue;
                n = static_cast<int>(std::lround(cfg.train_pairs_per_triplet * uniform(rng, 0.5, 1.5)));
                n = std::max(n, 1);
            } else {
                n = heldout.count(t) ? std::max(cfg.test_pairs_per_triplet, 20) : cfg.test_pairs_per_triplet;
            }
            for (int i = 0; i < n; ++i) pairs.push_back(factory.make(t.s, t.o, t.p));
        }
        const int negatives = train ? cfg.train_negatives_per_category : cfg.test_negatives_per_category;
        for (const auto& [s, o] : categories)
            for (int i = 0; i < negatives; ++i) pairs.push_back(factory.make(s, o, std::nullopt));
        return Dataset(vocabs, da, std::move(pairs));
    };

    SynthData out;
    out.train = build(true);
    out.test = build(false);
    out.words = std::move(words);
    out.heldout.assign(heldout.begin(), heldout.end());
    out.observed.assign(observed.begin(), observed.end());
    return out;
}

}  // namespace vrel
