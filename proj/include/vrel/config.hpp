#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "vrel/analogy.hpp"
#include "vrel/datamodel.hpp"
#include "vrel/embed.hpp"
#include "vrel/evalkit.hpp"

namespace vrel {

// Every knob of a run. Parsed from `key = value` lines; unknown keys are
// rejected. Defaults: Adam at 1e-3, 64-pair batches with 25% positives,
// 10 + 5 epochs, k = 5, alpha = (0.1, 0.8, 0.1), lambda = 1, at a
// desk-scale embedding size.
struct RunConfig {
    std::uint64_t seed = 0;

    std::string train_data;
    std::string test_data;
    std::string word_table;
    std::string query_list;

    ModelConfig model;
    // Branches multiplied at scoring time; empty means all trained branches.
    std::vector<BranchKind> score_branches;
    Schedule stage1;
    int stage2_epochs = 5;
    TransferConfig transfer;
    GammaKind gamma = GammaKind::deep;
    Index gamma_hidden = 0;
    VpNegatives vp_negatives = VpNegatives::observed;
    int rare_threshold = 10;
    MatchPolicy match;
    int dump_top = 0;

    SynthConfig synth;

    Schedule stage2() const {
        Schedule s = stage1;
        s.epochs = stage2_epochs;
        return s;
    }
    std::vector<BranchKind> scoring_branches() const {
        return score_branches.empty() ? model.branches : score_branches;
    }
    void validate() const;

    bool operator==(const RunConfig& o) const { return to_text() == o.to_text(); }
    std::string to_text() const;
};

RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);
// Applies one `key=value` override.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

}  // namespace vrel
