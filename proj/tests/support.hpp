#pragma once

// Fixtures shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "vrel/analogy.hpp"
#include "vrel/datamodel.hpp"
#include "vrel/embed.hpp"
#include "vrel/config.hpp"
#include "vrel/evalkit.hpp"

namespace vrel::testing {

inline Vocabularies tiny_vocabs(int n = 5) {
    auto names = [n](const char* prefix) {
        std::vector<std::string> v;
        for (int i = 0; i < n; ++i) v.push_back(prefix + std::to_string(i));
        return Vocabulary(v);
    };
    return {names("s"), names("p"), names("o")};
}

inline WordTable tiny_table(const Vocabularies& vocabs, Index dim, Rng& rng) {
    WordTable t(dim);
    for (const auto* v : {&vocabs.subjects, &vocabs.predicates, &vocabs.objects})
        for (const auto& tok : v->tokens()) {
            Vector e(dim);
            for (Index i = 0; i < dim; ++i) e(i) = standard_normal(rng);
            t.set(tok, e);
        }
    return t;
}

inline BoundingBox random_box(Rng& rng) {
    const double x = uniform(rng, 0, 50), y = uniform(rng, 0, 50);
    return {x, y, x + uniform(rng, 5, 40), y + uniform(rng, 5, 40)};
}

// Random pairs; roughly half carry one or two predicates.
inline std::vector<CandidatePair> random_pairs(const Vocabularies& vocabs, Index appearance_dim, int n, Rng& rng) {
    std::vector<CandidatePair> pairs;
    for (int i = 0; i < n; ++i) {
        CandidatePair p;
        p.id = i;
        p.image_id = i;
        p.subject_box = random_box(rng);
        p.object_box = random_box(rng);
        p.subject_appearance.resize(appearance_dim);
        p.object_appearance.resize(appearance_dim);
        for (Index k = 0; k < appearance_dim; ++k) {
            p.subject_appearance(k) = standard_normal(rng);
            p.object_appearance(k) = standard_normal(rng);
        }
        p.subject_category = static_cast<int>(uniform_index(rng, vocabs.subjects.size()));
        p.object_category = static_cast<int>(uniform_index(rng, vocabs.objects.size()));
        if (uniform01(rng) < 0.6) {
            const int np = 1 + static_cast<int>(uniform_index(rng, 2));
            for (int k = 0; k < np; ++k) p.predicates.push_back(static_cast<int>(uniform_index(rng, vocabs.predicates.size())));
            std::sort(p.predicates.begin(), p.predicates.end());
            p.predicates.erase(std::unique(p.predicates.begin(), p.predicates.end()), p.predicates.end());
        }
        pairs.push_back(std::move(p));
    }
    return pairs;
}

// Small dims so finite differences stay cheap.
inline ModelConfig tiny_model_config(Index d = 8, std::vector<BranchKind> branches = {kAllBranches.begin(),
                                                                                    kAllBranches.end()}) {
    ModelConfig cfg;
    cfg.branches = std::move(branches);
    cfg.embed_dim = d;
    cfg.hidden_dim = 16;
    cfg.visual_dropout = 0.0;
    cfg.visual_input = {5, 4, 3};
    return cfg;
}

struct Toy {
    Vocabularies vocabs;
    WordTable table;
    Dataset data;
    JointModel model;
};

// d=8, 5-token vocabularies, `pairs` random pairs, word dim 4, appearance dim 3.
inline Toy make_toy(std::uint64_t seed, int pairs = 10, Index d = 8,
                    std::vector<BranchKind> branches = {kAllBranches.begin(), kAllBranches.end()}) {
    Rng rng(seed);
    Toy t;
    t.vocabs = tiny_vocabs();
    t.table = tiny_table(t.vocabs, 4, rng);
    t.data = Dataset(t.vocabs, 3, random_pairs(t.vocabs, 3, pairs, rng));
    auto cfg = tiny_model_config(d, std::move(branches));
    cfg.finetune_words = true;
    t.model = JointModel::create(cfg, t.vocabs, t.table, 3, seed);
    return t;
}

struct GradCheck {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
};

// Relative error with a floor on the denominator. Central differences at step
// 1e-5 carry ~1e-11 of rounding noise, so components below the floor are in
// effect held to an absolute error of 1e-10.
inline double rel_err(double analytic, double numeric, double floor = 1e-5) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Compares analytic block gradients against central differences of `loss`
// perturbing `params` in place.
template <typename LossFn, typename Blocks>
GradCheck check_gradient(LossFn&& loss, const BlockList<double>& params, const Blocks& analytic,
                         double step = 1e-5) {
    GradCheck out;
    const auto numeric = finite_diff_grad<double>(loss, params, step);
    for (std::size_t b = 0; b < params.size(); ++b)
        for (std::size_t j = 0; j < params[b].size(); ++j) {
            out.max_rel_err = std::max(out.max_rel_err, rel_err(analytic[b][j], numeric[b][j]));
            ++out.checked;
        }
    return out;
}

// Smallest |hidden pre-activation| of `m` over the columns of `x`.
inline double relu_margin(const Mlp<double>& m, const Matrix& x) {
    Matrix pre = m.layer1().weight() * x;
    if (m.has_bias()) pre.colwise() += m.layer1().bias();
    return pre.size() ? pre.cwiseAbs().minCoeff() : std::numeric_limits<double>::infinity();
}

// Smallest distance of any ReLU in the joint loss from its kink. Central
// differences are only a valid oracle when this exceeds the probe step.
inline double relu_margin(const JointModel& m, const std::vector<const CandidatePair*>& batch,
                          const LabelSpace& labels) {
    const auto vis = visual_input_batch(batch, m.visual_input, m.config.spatial_norm, false);
    Matrix spatial(8, static_cast<Index>(batch.size()));
    for (std::size_t j = 0; j < batch.size(); ++j)
        spatial.col(static_cast<Index>(j)) =
            spatial_features(batch[j]->subject_box, batch[j]->object_box, m.config.spatial_norm);
    double out = relu_margin(m.visual_input.spatial, spatial);
    for (const auto& br : m.branches) {
        switch (visual_selector(br.kind)) {
            case VisualSelector::subject_appearance: out = std::min(out, relu_margin(br.visual, vis.subject_appearance)); break;
            case VisualSelector::object_appearance: out = std::min(out, relu_margin(br.visual, vis.object_appearance)); break;
            case VisualSelector::full: out = std::min(out, relu_margin(br.visual, vis.x)); break;
        }
        const auto& keys = labels.of(br.kind);
        Matrix q(3 * m.words.dim(), static_cast<Index>(keys.size()));
        for (std::size_t j = 0; j < keys.size(); ++j)
            q.col(static_cast<Index>(j)) = language_input(keys[j], m.words, language_mask(br.kind));
        out = std::min(out, relu_margin(br.language, q));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Retrieval oracles, written without reference to the library routines.

inline double iou_by_hand(const BoundingBox& a, const BoundingBox& b) {
    const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (iw <= 0 || ih <= 0) return 0.0;
    const double inter = iw * ih;
    const double area_a = (a.x_max - a.x_min) * (a.y_max - a.y_min);
    const double area_b = (b.x_max - b.x_min) * (b.y_max - b.y_min);
    return inter / (area_a + area_b - inter);
}

struct ApInstance {
    std::vector<Detection> ranked;
    std::vector<GroundTruth> truth;
};

// Up to 20 detections over 3 images, up to 8 ground truths. Detections are
// often jittered copies of a ground truth, sometimes duplicated, so matches,
// near misses and double detections all occur.
inline ApInstance random_ap_instance(Rng& rng) {
    ApInstance inst;
    const auto n_truth = uniform_index(rng, 9);
    for (std::size_t g = 0; g < n_truth; ++g)
        inst.truth.push_back({static_cast<std::int64_t>(uniform_index(rng, 3)), random_box(rng), random_box(rng)});
    const auto n_det = 1 + uniform_index(rng, 20);
    for (std::size_t r = 0; r < n_det; ++r) {
        Detection d;
        d.pair_id = static_cast<std::int64_t>(r);
        if (!inst.truth.empty() && uniform01(rng) < 0.6) {
            const auto& g = inst.truth[uniform_index(rng, inst.truth.size())];
            const double j = uniform(rng, 0, 6);
            d.image_id = uniform01(rng) < 0.9 ? g.image_id : (g.image_id + 1) % 3;
            d.subject_box = g.subject_box.translated(j, -j);
            d.object_box = g.object_box.translated(-j, uniform(rng, 0, 6));
        } else {
            d.image_id = static_cast<std::int64_t>(uniform_index(rng, 3));
            d.subject_box = random_box(rng);
            d.object_box = random_box(rng);
        }
        d.log_score = -static_cast<double>(r);
        inst.ranked.push_back(d);
    }
    return inst;
}

// Greedy one-to-one matching, then AP as the sum over true-positive ranks of
// precision recounted from scratch at that rank.
inline double brute_force_ap(const ApInstance& inst, double threshold) {
    const auto& det = inst.ranked;
    const auto& gt = inst.truth;
    std::vector<int> owner(gt.size(), -1);
    std::vector<bool> tp(det.size(), false);
    for (std::size_t r = 0; r < det.size(); ++r) {
        int pick = -1;
        double pick_overlap = -1.0;
        for (std::size_t g = 0; g < gt.size(); ++g) {
            if (owner[g] >= 0 || gt[g].image_id != det[r].image_id) continue;
            const double a = iou_by_hand(det[r].subject_box, gt[g].subject_box);
            const double b = iou_by_hand(det[r].object_box, gt[g].object_box);
            if (a >= threshold && b >= threshold && std::min(a, b) > pick_overlap) {
                pick = static_cast<int>(g);
                pick_overlap = std::min(a, b);
            }
        }
        if (pick >= 0) {
            owner[static_cast<std::size_t>(pick)] = static_cast<int>(r);
            tp[r] = true;
        }
    }
    double sum = 0.0;
    for (std::size_t r = 0; r < det.size(); ++r) {
        if (!tp[r]) continue;
        int hits = 0;
        for (std::size_t q = 0; q <= r; ++q) hits += tp[q] ? 1 : 0;
        sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
    return gt.empty() ? 0.0 : sum / static_cast<double>(gt.size());
}

// A full run small enough to train in well under a second.
inline RunConfig tiny_run_config() {
    RunConfig c;
    c.synth.subjects = 4;
    c.synth.predicates = 4;
    c.synth.objects = 6;
    c.synth.subject_groups = 2;
    c.synth.predicate_groups = 2;
    c.synth.object_groups = 2;
    c.synth.object_groups_per_predicate = 1;
    c.synth.train_pairs_per_triplet = 12;
    c.synth.test_pairs_per_triplet = 3;
    c.synth.train_negatives_per_category = 6;
    c.synth.test_negatives_per_category = 2;
    c.synth.appearance_dim = 6;
    c.synth.heldout = 2;
    c.model.embed_dim = 8;
    c.model.hidden_dim = 16;
    c.model.visual_input = {6, 8, 6};
    c.stage1.epochs = 2;
    c.stage1.batch_size = 16;
    c.stage2_epochs = 1;
    c.rare_threshold = 5;
    return c;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("vrel_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace vrel::testing
