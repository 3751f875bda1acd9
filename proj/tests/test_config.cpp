#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "support.hpp"
#include "vrel/config.hpp"

using namespace vrel;

namespace {

std::string error_of(const std::string& text) {
    try {
        parse_config(text, "cfg.txt");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("default run configuration") {
    const RunConfig c;
    CHECK(c.stage1.lr == 1e-3);
    CHECK(c.stage1.batch_size == 64);
    CHECK(c.stage1.positive_fraction == 0.25);
    CHECK(c.stage1.epochs == 10);
    CHECK(c.stage2_epochs == 5);
    CHECK(c.transfer.k == 5);
    CHECK(c.transfer.alpha_s == 0.1);
    CHECK(c.transfer.alpha_p == 0.8);
    CHECK(c.transfer.alpha_o == 0.1);
    CHECK(c.transfer.lambda == 1.0);
    CHECK(c.rare_threshold == 10);
    CHECK(c.match.iou_threshold == 0.5);
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("to_text and parse_config round-trip") {
    RunConfig c;
    c.seed = 1234567890123ULL;
    c.train_data = "/tmp/data dir/train.txt";
    c.model.branches = parse_branch_set("s,o,p,vp,sp,po");
    c.score_branches = parse_branch_set("s,o,vp");
    c.model.embed_dim = 16;
    c.model.visual_dropout = 0.25;
    c.model.spatial_norm = SpatialNorm::extent;
    c.model.finetune_words = true;
    c.stage1.lr = 3.5e-4;
    c.transfer.k = 3;
    c.transfer.alpha_s = 0.2;
    c.transfer.alpha_p = 0.6;
    c.transfer.alpha_o = 0.2;
    c.transfer.clamp_g = false;
    c.transfer.similarity = SimilarityInput::word_vectors;
    c.gamma = GammaKind::linear;
    c.vp_negatives = VpNegatives::cartesian;
    c.match.iou_threshold = 0.3;
    c.synth.noise = 0.1;
    c.synth.heldout = 3;
    const RunConfig back = parse_config(c.to_text());
    CHECK(back == c);
    CHECK(back.seed == c.seed);
    CHECK(back.stage1.lr == c.stage1.lr);
    CHECK(back.model.branches == c.model.branches);
    CHECK(back.train_data == c.train_data);
    CHECK(parse_config(RunConfig{}.to_text()) == RunConfig{});
}

TEST_CASE("comments, blank lines and booleans") {
    const auto c = parse_config("# run\n\nseed = 7  # trailing\nfinetune_words = 1\nclamp_g=false\n");
    CHECK(c.seed == 7);
    CHECK(c.model.finetune_words);
    CHECK_FALSE(c.transfer.clamp_g);
}

TEST_CASE("bad input is rejected with its line") {
    CHECK(error_of("seed = 1\nbogus = 3\n").find("cfg.txt:2") != std::string::npos);
    CHECK(error_of("seed = 1\nbogus = 3\n").find("bogus") != std::string::npos);
    CHECK_FALSE(error_of("k = five\n").empty());
    CHECK_FALSE(error_of("finetune_words = maybe\n").empty());
    CHECK_FALSE(error_of("no equals sign\n").empty());
    CHECK_FALSE(error_of("gamma = wide\n").empty());
}

TEST_CASE("validation") {
    CHECK_FALSE(error_of("alpha_p = 0.5\n").empty());
    CHECK_FALSE(error_of("k = 0\n").empty());
    CHECK_FALSE(error_of("visual_dropout = 1.0\n").empty());
    CHECK_FALSE(error_of("lr = -1\n").empty());
    CHECK_FALSE(error_of("positive_fraction = 0\n").empty());
    CHECK_FALSE(error_of("branches = s,o\nscore_branches = s,vp\n").empty());
    CHECK_FALSE(error_of("iou_threshold = 0\n").empty());
    CHECK(error_of("branches = s,o,vp\nscore_branches = s,vp\n").empty());
}

TEST_CASE("set_config_value and load_config") {
    RunConfig c;
    set_config_value(c, "embed_dim", "32");
    set_config_value(c, "synth_objects", "9");
    CHECK(c.model.embed_dim == 32);
    CHECK(c.synth.objects == 9);
    CHECK_THROWS_AS(set_config_value(c, "nope", "1"), ConfigError);

    const auto dir = vrel::testing::scratch_dir("config");
    std::ofstream(dir / "c.txt") << c.to_text();
    CHECK(load_config(dir / "c.txt") == c);
    CHECK_THROWS_AS(load_config(dir / "missing.txt"), IoError);
}
