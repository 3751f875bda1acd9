#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <set>

#include "support.hpp"
#include "vrel/datamodel.hpp"

using namespace vrel;
namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

void write_vocab_files(const fs::path& dir, const std::string& s, const std::string& p, const std::string& o) {
    write_file(dir / "subjects.txt", s);
    write_file(dir / "predicates.txt", p);
    write_file(dir / "objects.txt", o);
}

const char* kHeader =
    "#appearance_dim 2\n#vocab_subject subjects.txt\n#vocab_predicate predicates.txt\n#vocab_object objects.txt\n";

// Independent recount straight from the pair list.
std::map<Triplet, int> recount(const std::vector<CandidatePair>& pairs) {
    std::map<Triplet, int> c;
    for (const auto& p : pairs)
        for (int q : p.predicates) ++c[{p.subject_category, q, p.object_category}];
    return c;
}

Dataset counted_dataset(const std::vector<int>& counts) {
    auto vocabs = vrel::testing::tiny_vocabs();
    std::vector<CandidatePair> pairs;
    std::int64_t id = 0;
    for (std::size_t t = 0; t < counts.size(); ++t)
        for (int k = 0; k < counts[t]; ++k) {
            CandidatePair p;
            p.id = p.image_id = id++;
            p.subject_appearance = p.object_appearance = Vector::Zero(1);
            p.subject_category = static_cast<int>(t);
            p.object_category = 0;
            p.predicates = {0};
            pairs.push_back(p);
        }
    return Dataset(vocabs, 1, pairs);
}

}  // namespace

TEST_CASE("load_dataset: empty pair list") {
    const auto dir = vrel::testing::scratch_dir("dm_empty");
    write_vocab_files(dir, "person\n", "ride\n", "horse\n");
    write_file(dir / "d.txt", kHeader);
    const Dataset d = load_dataset(dir / "d.txt");
    CHECK(d.size() == 0);
    CHECK(d.observed().empty());
}

TEST_CASE("load_dataset: one positive pair counts once") {
    const auto dir = vrel::testing::scratch_dir("dm_one");
    write_vocab_files(dir, "person\n", "ride\nhold\n", "horse\n");
    write_file(dir / "d.txt", std::string(kHeader) +
                                  "pair 0 7 sub 0 0 10 10 obj 5 5 20 20 scat person ocat horse afeat_s 1 2 "
                                  "afeat_o 3 4 labels ride\n");
    const Dataset d = load_dataset(dir / "d.txt");
    REQUIRE(d.size() == 1);
    CHECK(d.occurrence({0, 0, 0}) == 1);
    CHECK(d.occurrence({0, 1, 0}) == 0);
    CHECK(d.pairs()[0].image_id == 7);
    CHECK(d.pairs()[0].object_appearance(1) == 4.0);
}

TEST_CASE("load_dataset: malformed lines report their line number") {
    const auto dir = vrel::testing::scratch_dir("dm_bad");
    write_vocab_files(dir, "person\n", "ride\n", "horse\n");
    const std::string good = "pair 0 0 sub 0 0 1 1 obj 0 0 1 1 scat person ocat horse afeat_s 1 2 afeat_o 3 4 labels\n";
    auto message = [&](const std::string& body) {
        write_file(dir / "d.txt", std::string(kHeader) + good + body);
        try {
            load_dataset(dir / "d.txt");
        } catch (const Error& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    // Wrong appearance dimension.
    CHECK(message("pair 1 0 sub 0 0 1 1 obj 0 0 1 1 scat person ocat horse afeat_s 1 afeat_o 3 4 labels\n")
              .find(":6") != std::string::npos);
    // Unknown token.
    CHECK(message("pair 1 0 sub 0 0 1 1 obj 0 0 1 1 scat cat ocat horse afeat_s 1 2 afeat_o 3 4 labels\n")
              .find("cat") != std::string::npos);
    // Degenerate box.
    CHECK_FALSE(message("pair 1 0 sub 0 0 0 1 obj 0 0 1 1 scat person ocat horse afeat_s 1 2 afeat_o 3 4 labels\n")
                    .empty());
    CHECK_FALSE(message("garbage\n").empty());
}

TEST_CASE("dataset: 50-pair fixture counts equal an independent recount") {
    Rng rng(4);
    const auto vocabs = vrel::testing::tiny_vocabs();
    auto pairs = vrel::testing::random_pairs(vocabs, 3, 50, rng);
    const Dataset d(vocabs, 3, pairs);
    CHECK(d.occurrences() == recount(pairs));
    std::vector<Triplet> observed;
    for (const auto& [t, n] : recount(pairs)) observed.push_back(t);
    CHECK(d.observed() == observed);
}

TEST_CASE("dataset: write then read reproduces the dataset") {
    Rng rng(8);
    const auto vocabs = Vocabularies{Vocabulary({"person", "dog"}), Vocabulary({"ride", "next to"}),
                                     Vocabulary({"horse", "sports ball", "car"})};
    std::vector<CandidatePair> pairs;
    for (int i = 0; i < 30; ++i) {
        CandidatePair p;
        p.id = 100 + i;
        p.image_id = i / 3;
        p.subject_box = vrel::testing::random_box(rng);
        p.object_box = vrel::testing::random_box(rng);
        p.subject_appearance = Vector::NullaryExpr(4, [&] { return standard_normal(rng) * 1e3; });
        p.object_appearance = Vector::NullaryExpr(4, [&] { return standard_normal(rng) * 1e-7; });
        p.subject_category = i % 2;
        p.object_category = i % 3;
        if (i % 3 != 0) p.predicates = {0};
        if (i % 5 == 0) p.predicates = {0, 1};
        pairs.push_back(p);
    }
    const Dataset d(vocabs, 4, pairs);
    const auto dir = vrel::testing::scratch_dir("dm_roundtrip");
    write_dataset(dir / "d.txt", d);
    const Dataset back = load_dataset(dir / "d.txt");
    CHECK(back == d);
    CHECK(back.occurrences() == d.occurrences());
}

TEST_CASE("dataset: labels must agree with the pair categories") {
    const auto vocabs = vrel::testing::tiny_vocabs();
    CandidatePair p;
    p.subject_appearance = p.object_appearance = Vector::Zero(2);
    p.predicates = {9};
    CHECK_THROWS_AS(Dataset(vocabs, 2, {p}), ValidationError);
    p.predicates = {1};
    p.subject_appearance = Vector::Zero(3);
    CHECK_THROWS_AS(Dataset(vocabs, 2, {p}), ValidationError);
}

TEST_CASE("word table: exact vocabulary is returned verbatim") {
    const auto dir = vrel::testing::scratch_dir("wt_exact");
    const Vocabularies v{Vocabulary({"a"}), Vocabulary({"b"}), Vocabulary({"c"})};
    write_file(dir / "w.txt", "dim 4\na 1 2 3 4\nb 0.5 -0.25 1e-3 7\nc 0 0 0 1\n");
    const WordTable t = load_word_table(dir / "w.txt", v);
    CHECK(t.dim() == 4);
    CHECK(t.at("b")(1) == -0.25);
    CHECK(t.at("b")(2) == 1e-3);
    CHECK(t.at("a")(3) == 4.0);
}

TEST_CASE("word table: extra tokens are dropped") {
    const auto dir = vrel::testing::scratch_dir("wt_extra");
    const Vocabularies v{Vocabulary({"a"}), Vocabulary({"b"}), Vocabulary({"c"})};
    write_file(dir / "w.txt", "dim 2\nzebra 9 9\na 1 2\nb 3 4\nc 5 6\nqueen 1 1\n");
    const WordTable t = load_word_table(dir / "w.txt", v);
    CHECK(t.entries().size() == 3);
    CHECK_FALSE(t.contains("zebra"));
}

TEST_CASE("word table: every missing token is listed") {
    const auto dir = vrel::testing::scratch_dir("wt_missing");
    const Vocabularies v{Vocabulary({"a"}), Vocabulary({"b", "x"}), Vocabulary({"c", "y"})};
    write_file(dir / "w.txt", "dim 2\na 1 2\nb 3 4\nc 5 6\n");
    try {
        load_word_table(dir / "w.txt", v);
        FAIL("expected an error");
    } catch (const ValidationError& e) {
        const std::string m = e.what();
        CHECK(m.find('x') != std::string::npos);
        CHECK(m.find('y') != std::string::npos);
    }
}

TEST_CASE("word table: multi-word tokens survive the writer and reader") {
    const auto dir = vrel::testing::scratch_dir("wt_multi");
    const Vocabularies v{Vocabulary({"person"}), Vocabulary({"next to"}), Vocabulary({"sports ball"})};
    WordTable t(3);
    t.set("person", Vector::Constant(3, 0.1));
    t.set("next to", Vector::Constant(3, -2.5));
    t.set("sports ball", Vector::LinSpaced(3, 0.0, 1.0));
    write_word_table(dir / "w.txt", t);
    std::ifstream in(dir / "w.txt");
    const std::string text((std::istreambuf_iterator<char>(in)), {});
    CHECK(text.find("sports_ball") != std::string::npos);
    CHECK(load_word_table(dir / "w.txt", v) == t);
    CHECK(token_from_file(token_to_file("sports ball")) == "sports ball");
}

TEST_CASE("occurrence_rank: threshold boundary") {
    SUBCASE("all counts 9 leave nothing non-rare") {
        const auto r = occurrence_rank(counted_dataset({9, 9, 9}));
        CHECK(r.non_rare.empty());
    }
    SUBCASE("counts {5, 10, 11} keep the latter two") {
        const auto r = occurrence_rank(counted_dataset({5, 10, 11}));
        CHECK(r.non_rare == std::vector<Triplet>{{1, 0, 0}, {2, 0, 0}});
        CHECK(r.counts.at({0, 0, 0}) == 5);
    }
    SUBCASE("threshold is configurable") {
        CHECK(occurrence_rank(counted_dataset({5, 10, 11}), 11).non_rare.size() == 1);
    }
    SUBCASE("fixture dataset matches a recount") {
        Rng rng(12);
        const auto vocabs = vrel::testing::tiny_vocabs(2);
        const auto pairs = vrel::testing::random_pairs(vocabs, 2, 200, rng);
        const auto r = occurrence_rank(Dataset(vocabs, 2, pairs), 6);
        std::vector<Triplet> expected;
        for (const auto& [t, n] : recount(pairs))
            if (n >= 6) expected.push_back(t);
        CHECK(r.counts == recount(pairs));
        CHECK(r.non_rare == expected);
    }
}

TEST_CASE("triplet lists round-trip") {
    const auto dir = vrel::testing::scratch_dir("triplets");
    const Vocabularies v{Vocabulary({"person", "dog"}), Vocabulary({"ride", "next to"}), Vocabulary({"sports ball"})};
    const std::vector<Triplet> ts{{0, 1, 0}, {1, 0, 0}};
    write_triplets(dir / "t.txt", ts, v);
    CHECK(load_triplets(dir / "t.txt", v) == ts);
}

TEST_CASE("synth: equal seeds are bit-identical, different seeds differ") {
    SynthConfig cfg;
    cfg.train_pairs_per_triplet = 4;
    cfg.train_negatives_per_category = 4;
    cfg.test_pairs_per_triplet = 2;
    const auto a = synth_generate(cfg, 5);
    const auto b = synth_generate(cfg, 5);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    CHECK(a.words == b.words);
    CHECK(a.heldout == b.heldout);
    CHECK_FALSE(synth_generate(cfg, 6).train == a.train);
}

TEST_CASE("synth: held-out triplets are absent from train and well covered in test") {
    SynthConfig cfg;
    cfg.train_pairs_per_triplet = 3;
    cfg.train_negatives_per_category = 2;
    cfg.test_pairs_per_triplet = 2;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto d = synth_generate(cfg, seed);
        REQUIRE(d.heldout.size() == 10);
        for (const auto& t : d.heldout) {
            CHECK(d.train.occurrence(t) == 0);
            CHECK(d.test.occurrence(t) >= 20);
        }
    }
}

TEST_CASE("synth: one held-out triplet") {
    SynthConfig cfg;
    cfg.heldout = 1;
    cfg.train_pairs_per_triplet = 2;
    const auto d = synth_generate(cfg, 1);
    REQUIRE(d.heldout.size() == 1);
    CHECK(d.train.occurrence(d.heldout[0]) == 0);
    CHECK(d.test.occurrence(d.heldout[0]) >= 20);
}

TEST_CASE("synth: too many held-out triplets is an error") {
    SynthConfig cfg;
    cfg.heldout = 10000;
    CHECK_THROWS_AS(synth_generate(cfg, 0), ConfigError);
}

TEST_CASE("synth: with zero noise every positive of a triplet has the same features") {
    SynthConfig cfg;
    cfg.noise = 0.0;
    cfg.heldout = 0;
    cfg.train_pairs_per_triplet = 3;
    cfg.train_negatives_per_category = 2;
    const auto d = synth_generate(cfg, 2);
    std::map<Triplet, const CandidatePair*> first;
    std::size_t compared = 0;
    for (const auto& p : d.train.pairs()) {
        if (!p.is_positive()) continue;
        const Triplet t{p.subject_category, p.predicates[0], p.object_category};
        auto [it, fresh] = first.emplace(t, &p);
        if (fresh) continue;
        CHECK(p.subject_appearance == it->second->subject_appearance);
        CHECK(p.object_appearance == it->second->object_appearance);
        ++compared;
    }
    CHECK(compared > 0);
}

TEST_CASE("synth: similar objects get nearby word vectors") {
    const auto d = synth_generate(SynthConfig{}, 0);
    const auto& objs = d.train.vocabularies().objects;
    // Default: 12 objects in 4 groups of 3.
    const double same = (d.words.at(objs.token(0)) - d.words.at(objs.token(1))).norm();
    const double other = (d.words.at(objs.token(0)) - d.words.at(objs.token(3))).norm();
    CHECK(same < other);
}

TEST_CASE("synth: least-squares probe recovers object identity on the default config") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto d = synth_generate(SynthConfig{}, seed);
        const Index da = d.train.appearance_dim();
        const auto nobj = static_cast<Index>(d.train.vocabularies().objects.size());
        auto design = [&](const Dataset& ds) {
            Matrix x(static_cast<Index>(ds.size()), da + 1);
            for (std::size_t i = 0; i < ds.size(); ++i) {
                x.row(static_cast<Index>(i)).head(da) = ds.pairs()[i].object_appearance.transpose();
                x(static_cast<Index>(i), da) = 1.0;
            }
            return x;
        };
        const Matrix x = design(d.train);
        Matrix y = Matrix::Zero(x.rows(), nobj);
        for (std::size_t i = 0; i < d.train.size(); ++i) y(static_cast<Index>(i), d.train.pairs()[i].object_category) = 1;
        const Matrix w = x.colPivHouseholderQr().solve(y);
        const Matrix scores = design(d.test) * w;
        int correct = 0;
        for (Index i = 0; i < scores.rows(); ++i) {
            Index best;
            scores.row(i).maxCoeff(&best);
            correct += best == d.test.pairs()[static_cast<std::size_t>(i)].object_category;
        }
        const double acc = static_cast<double>(correct) / static_cast<double>(scores.rows());
        INFO("seed " << seed << " accuracy " << acc);
        CHECK(acc >= 0.95);
    }
}
