#include "vrel/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include "vrel/text.hpp"

namespace vrel {

namespace {

struct Key {
    const char* name;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

double real(const std::string& v, const char* key) { return text::to_double(v, std::string("config key ") + key); }

template <typename Int>
Int integer(const std::string& v, const char* key) {
    return text::to_int<Int>(v, std::string("config key ") + key);
}

bool boolean(const std::string& v, const char* key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(std::string("config key ") + key + ": expected true|false, got '" + v + "'");
}

std::string b2s(bool b) { return b ? "true" : "false"; }

#define VREL_REAL(key, field) \
    Key { key, [](const RunConfig& c) { return text::format(c.field); }, \
          [](RunConfig& c, const std::string& v) { c.field = real(v, key); } }
#define VREL_INT(key, field) \
    Key { key, [](const RunConfig& c) { return std::to_string(c.field); }, \
          [](RunConfig& c, const std::string& v) { c.field = integer<decltype(c.field)>(v, key); } }
#define VREL_BOOL(key, field) \
    Key { key, [](const RunConfig& c) { return b2s(c.field); }, \
          [](RunConfig& c, const std::string& v) { c.field = boolean(v, key); } }
#define VREL_STR(key, field) \
    Key { key, [](const RunConfig& c) { return c.field; }, [](RunConfig& c, const std::string& v) { c.field = v; } }

const std::vector<Key>& keys() {
    static const std::vector<Key> k = {
        VREL_INT("seed", seed),
        VREL_STR("train_data", train_data),
        VREL_STR("test_data", test_data),
        VREL_STR("word_table", word_table),
        VREL_STR("query_list", query_list),
        Key{"branches", [](const RunConfig& c) { return format_branch_set(c.model.branches); },
            [](RunConfig& c, const std::string& v) { c.model.branches = parse_branch_set(v); }},
        Key{"score_branches", [](const RunConfig& c) { return format_branch_set(c.score_branches); },
            [](RunConfig& c, const std::string& v) {
                c.score_branches = v.empty() ? std::vector<BranchKind>{} : parse_branch_set(v);
            }},
        VREL_INT("embed_dim", model.embed_dim),
        VREL_INT("hidden_dim", model.hidden_dim),
        VREL_INT("appearance_proj_dim", model.visual_input.appearance_proj),
        VREL_INT("spatial_hidden_dim", model.visual_input.spatial_hidden),
        VREL_INT("spatial_dim", model.visual_input.spatial_out),
        VREL_REAL("visual_dropout", model.visual_dropout),
        VREL_REAL("language_dropout", model.language_dropout),
        Key{"spatial_norm", [](const RunConfig& c) { return c.model.spatial_norm == SpatialNorm::area ? "area" : "extent"; },
            [](RunConfig& c, const std::string& v) {
                if (v == "area") c.model.spatial_norm = SpatialNorm::area;
                else if (v == "extent") c.model.spatial_norm = SpatialNorm::extent;
                else throw ConfigError("spatial_norm must be area|extent");
            }},
        VREL_BOOL("finetune_words", model.finetune_words),
        VREL_REAL("lr", stage1.lr),
        VREL_INT("batch_size", stage1.batch_size),
        VREL_REAL("positive_fraction", stage1.positive_fraction),
        VREL_INT("stage1_epochs", stage1.epochs),
        VREL_INT("stage2_epochs", stage2_epochs),
        VREL_INT("k", transfer.k),
        VREL_REAL("alpha_s", transfer.alpha_s),
        VREL_REAL("alpha_p", transfer.alpha_p),
        VREL_REAL("alpha_o", transfer.alpha_o),
        VREL_REAL("lambda", transfer.lambda),
        Key{"similarity_input",
            [](const RunConfig& c) {
                return c.transfer.similarity == SimilarityInput::embeddings ? "embeddings" : "word_vectors";
            },
            [](RunConfig& c, const std::string& v) {
                if (v == "embeddings") c.transfer.similarity = SimilarityInput::embeddings;
                else if (v == "word_vectors") c.transfer.similarity = SimilarityInput::word_vectors;
                else throw ConfigError("similarity_input must be embeddings|word_vectors");
            }},
        VREL_BOOL("clamp_g", transfer.clamp_g),
        VREL_BOOL("normalize_aggregation", transfer.normalize_aggregation),
        Key{"gamma", [](const RunConfig& c) { return to_string(c.gamma); },
            [](RunConfig& c, const std::string& v) { c.gamma = parse_gamma_kind(v); }},
        VREL_INT("gamma_hidden", gamma_hidden),
        Key{"vp_negatives",
            [](const RunConfig& c) { return c.vp_negatives == VpNegatives::observed ? "observed" : "cartesian"; },
            [](RunConfig& c, const std::string& v) {
                if (v == "observed") c.vp_negatives = VpNegatives::observed;
                else if (v == "cartesian") c.vp_negatives = VpNegatives::cartesian;
                else throw ConfigError("vp_negatives must be observed|cartesian");
            }},
        VREL_INT("rare_threshold", rare_threshold),
        VREL_REAL("iou_threshold", match.iou_threshold),
        VREL_INT("dump_top", dump_top),
        VREL_INT("synth_subjects", synth.subjects),
        VREL_INT("synth_predicates", synth.predicates),
        VREL_INT("synth_objects", synth.objects),
        VREL_INT("synth_subject_groups", synth.subject_groups),
        VREL_INT("synth_predicate_groups", synth.predicate_groups),
        VREL_INT("synth_object_groups", synth.object_groups),
        VREL_INT("synth_subjects_per_predicate", synth.subjects_per_predicate),
        VREL_INT("synth_object_groups_per_predicate", synth.object_groups_per_predicate),
        VREL_INT("synth_train_pairs_per_triplet", synth.train_pairs_per_triplet),
        VREL_INT("synth_test_pairs_per_triplet", synth.test_pairs_per_triplet),
        VREL_INT("synth_train_negatives_per_category", synth.train_negatives_per_category),
        VREL_INT("synth_test_negatives_per_category", synth.test_negatives_per_category),
        VREL_INT("synth_appearance_dim", synth.appearance_dim),
        VREL_REAL("synth_noise", synth.noise),
        VREL_REAL("synth_object_spread", synth.object_spread),
        VREL_REAL("synth_pose", synth.pose),
        VREL_REAL("synth_interaction", synth.interaction),
        VREL_REAL("synth_geometry_jitter", synth.geometry_jitter),
        VREL_REAL("synth_word_noise", synth.word_noise),
        VREL_INT("synth_heldout", synth.heldout),
    };
    return k;
}

#undef VREL_REAL
#undef VREL_INT
#undef VREL_BOOL
#undef VREL_STR

}  // namespace

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& k : keys()) {
        if (key == k.name) {
            try {
                k.set(cfg, value);
            } catch (const ParseError& e) {
                throw ConfigError(e.what());
            }
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

std::string RunConfig::to_text() const {
    std::ostringstream os;
    for (const auto& k : keys()) os << k.name << " = " << k.get(*this) << '\n';
    return os.str();
}

void RunConfig::validate() const {
    if (model.embed_dim <= 0 || model.hidden_dim <= 0) throw ConfigError("embed_dim and hidden_dim must be positive");
    if (model.visual_input.appearance_proj <= 0 || model.visual_input.spatial_hidden <= 0 ||
        model.visual_input.spatial_out <= 0)
        throw ConfigError("visual input dims must be positive");
    if (!(model.visual_dropout >= 0 && model.visual_dropout < 1) ||
        !(model.language_dropout >= 0 && model.language_dropout < 1))
        throw ConfigError("dropout rates must lie in [0,1)");
    if (stage1.lr < 0) throw ConfigError("lr must be non-negative");
    if (stage1.batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (!(stage1.positive_fraction > 0 && stage1.positive_fraction <= 1))
        throw ConfigError("positive_fraction must lie in (0,1]");
    if (stage1.epochs < 0 || stage2_epochs < 0) throw ConfigError("epoch counts must be non-negative");
    if (gamma_hidden < 0) throw ConfigError("gamma_hidden must be non-negative");
    if (rare_threshold < 0) throw ConfigError("rare_threshold must be non-negative");
    if (dump_top < 0) throw ConfigError("dump_top must be non-negative");
    transfer.validate();
    match.validate();
    for (auto k : score_branches)
        if (std::find(model.branches.begin(), model.branches.end(), k) == model.branches.end())
            throw ConfigError("score_branches must be a subset of branches");
}

RunConfig parse_config(const std::string& content, const std::string& origin) {
    RunConfig cfg;
    std::istringstream in(content);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        const auto t = text::trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError(text::where(origin, lineno) + ": expected key = value");
        const std::string key(text::trim(t.substr(0, eq)));
        const std::string value(text::trim(t.substr(eq + 1)));
        try {
            set_config_value(cfg, key, value);
        } catch (const Error& e) {
            throw ConfigError(text::where(origin, lineno) + ": " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

}  // namespace vrel
