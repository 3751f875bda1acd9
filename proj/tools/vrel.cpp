// vrel: synthesize data, train, evaluate and inspect relation embeddings.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "vrel/checkpoint.hpp"
#include "vrel/pipeline.hpp"
#include "vrel/text.hpp"

namespace fs = std::filesystem;
using namespace vrel;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = ".";
    std::vector<std::string> set;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "key = value config file");
    cmd->add_option("--seed", c.seed, "master seed (overrides the config)");
    cmd->add_option("--out", c.out, "output directory");
    cmd->add_option("--set", c.set, "config override key=value (repeatable)");
}

void apply_overrides(RunConfig& cfg, const Common& c) {
    for (const auto& kv : c.set) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        set_config_value(cfg, std::string(text::trim(kv.substr(0, eq))), std::string(text::trim(kv.substr(eq + 1))));
    }
    if (c.seed) cfg.seed = *c.seed;
    cfg.validate();
}

RunConfig resolve_config(const Common& c) {
    RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
    apply_overrides(cfg, c);
    return cfg;
}

fs::path out_dir(const Common& c) {
    fs::path dir(c.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
    return dir;
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    if (!out) throw IoError("write failed for " + path.string());
}

std::string require_path(const std::string& value, const char* what) {
    if (value.empty()) throw ConfigError(std::string("no ") + what + " given");
    return value;
}

Triplet parse_triplet_arg(const std::string& arg, const Vocabularies& vocabs) {
    const auto parts = text::split(arg);
    if (parts.size() != 3) throw ValidationError("triplet must be 'subject predicate object', got '" + arg + "'");
    return parse_triplet(token_from_file(std::string(parts[0])), token_from_file(std::string(parts[1])),
                         token_from_file(std::string(parts[2])), vocabs);
}

std::string slot_token(const Vocabularies& v, Slot slot, int index) {
    return index < 0 ? "-" : token_to_file(v.of(slot).token(index));
}

std::string triplet_text(const Vocabularies& v, const Triplet& t) {
    return slot_token(v, Slot::subject, t.s) + ' ' + slot_token(v, Slot::predicate, t.p) + ' ' +
           slot_token(v, Slot::object, t.o);
}

// ---------------------------------------------------------------------------

void cmd_synth(const Common& c) {
    RunConfig cfg = resolve_config(c);
    const fs::path dir = out_dir(c);
    const SynthData data = synth_generate(cfg.synth, cfg.seed);
    write_dataset(dir / "train.txt", data.train);
    write_dataset(dir / "test.txt", data.test);
    write_word_table(dir / "words.txt", data.words);
    write_triplets(dir / "heldout.txt", data.heldout, data.train.vocabularies());
    write_triplets(dir / "observed.txt", data.observed, data.train.vocabularies());
    // The emitted config points at the generated files so it can drive train.
    cfg.train_data = fs::absolute(dir / "train.txt").lexically_normal().string();
    cfg.test_data = fs::absolute(dir / "test.txt").lexically_normal().string();
    cfg.word_table = fs::absolute(dir / "words.txt").lexically_normal().string();
    cfg.query_list = fs::absolute(dir / "heldout.txt").lexically_normal().string();
    write_text(dir / "config.txt", cfg.to_text());
}

void cmd_train(const Common& c) {
    const RunConfig cfg = resolve_config(c);
    const fs::path dir = out_dir(c);
    const Dataset train = load_dataset(require_path(cfg.train_data, "train_data"));
    const WordTable words = load_word_table(require_path(cfg.word_table, "word_table"), train.vocabularies());
    const TrainOutput out = train_model(cfg, train, words);
    save_checkpoint(dir / "model.ckpt", out.checkpoint);
    std::string trace;
    for (std::size_t e = 0; e < out.stage1.epoch_loss.size(); ++e)
        trace += "stage1 epoch " + std::to_string(e + 1) + " loss " + text::format(out.stage1.epoch_loss[e]) + '\n';
    for (std::size_t e = 0; e < out.stage2.trace.epoch_loss.size(); ++e)
        trace += "stage2 epoch " + std::to_string(e + 1) + " loss " +
                 text::format(out.stage2.trace.epoch_loss[e]) + '\n';
    trace += "stage2 skipped_targets " + std::to_string(out.stage2.skipped_targets) + '\n';
    write_text(dir / "loss.txt", trace);
    write_text(dir / "config.txt", cfg.to_text());
}

struct EvalArgs {
    std::string checkpoint, dataset, queries, mode = "direct";
};

void cmd_eval(const Common& c, const EvalArgs& a) {
    Checkpoint ckpt = load_checkpoint(require_path(a.checkpoint, "--checkpoint"));
    // Evaluation knobs come from --config when given; model knobs always come
    // from the checkpoint.
    if (!c.config.empty()) {
        const RunConfig file = load_config(c.config);
        ckpt.config.test_data = file.test_data;
        ckpt.config.query_list = file.query_list;
        ckpt.config.score_branches = file.score_branches;
        ckpt.config.transfer = file.transfer;
        ckpt.config.match = file.match;
        ckpt.config.dump_top = file.dump_top;
    }
    apply_overrides(ckpt.config, c);
    const QueryMode mode = parse_query_mode(a.mode);
    const fs::path dir = out_dir(c);
    const Dataset test = load_dataset(a.dataset.empty() ? require_path(ckpt.config.test_data, "test dataset")
                                                        : a.dataset);
    const auto queries = load_triplets(a.queries.empty() ? require_path(ckpt.config.query_list, "query list")
                                                         : a.queries,
                                       test.vocabularies());
    const int top = ckpt.config.dump_top;
    const EvalOutput out = evaluate(ckpt, test, queries, mode, std::nullopt, top > 0);
    write_results(dir / "results.txt", out.results, test.vocabularies());
    for (const auto& r : out.results)
        if (r.excluded)
            std::cerr << "excluded (no test positives): " << triplet_text(test.vocabularies(), r.query) << '\n';
    if (top > 0) {
        std::ostringstream os;
        for (std::size_t q = 0; q < queries.size(); ++q) {
            const auto truth = ground_truth(test, queries[q]);
            const auto tp = match_detections(out.ranked[q], truth, ckpt.config.match);
            os << "query " << triplet_text(test.vocabularies(), queries[q]) << '\n';
            const auto n = std::min<std::size_t>(static_cast<std::size_t>(top), out.ranked[q].size());
            for (std::size_t r = 0; r < n; ++r) {
                const auto& d = out.ranked[q][r];
                os << "rank " << r + 1 << " pair " << d.pair_id << " image " << d.image_id << " log_score "
                   << text::format(d.log_score) << " tp " << (tp[r] ? 1 : 0) << '\n';
            }
        }
        write_text(dir / "topk.txt", os.str());
    }
    std::cout << "map " << text::format(out.map) << '\n';
}

struct InspectArgs {
    std::string checkpoint, what, triplet, file;
};

void cmd_inspect(const Common& c, const InspectArgs& a) {
    Checkpoint ckpt = load_checkpoint(require_path(a.checkpoint, "--checkpoint"));
    apply_overrides(ckpt.config, c);
    const auto& m = ckpt.model;
    const auto& v = m.vocabs;
    std::ostringstream os;
    auto row = [&](const std::string& label, const Vector& e) {
        os << label;
        for (Index i = 0; i < e.size(); ++i) os << ' ' << text::format(e(i));
        os << '\n';
    };
    if (a.what == "embeddings") {
        // Language embeddings: one line per unigram token of the s/o/p spaces
        // and per pooled or requested triplet of the vp space.
        std::vector<Triplet> triplets = ckpt.source_pool;
        if (!a.triplet.empty()) triplets.push_back(parse_triplet_arg(a.triplet, v));
        for (auto kind : m.kinds()) {
            std::vector<Triplet> keys;
            if (kind == BranchKind::s)
                for (int i = 0; i < static_cast<int>(v.subjects.size()); ++i) keys.push_back({i, -1, -1});
            else if (kind == BranchKind::p)
                for (int i = 0; i < static_cast<int>(v.predicates.size()); ++i) keys.push_back({-1, i, -1});
            else if (kind == BranchKind::o)
                for (int i = 0; i < static_cast<int>(v.objects.size()); ++i) keys.push_back({-1, -1, i});
            else
                for (const auto& t : triplets) keys.push_back(label_key(kind, t));
            std::sort(keys.begin(), keys.end());
            keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
            for (const auto& k : keys) {
                const Triplet full{std::max(k.s, 0), std::max(k.p, 0), std::max(k.o, 0)};
                row(to_string(kind) + ' ' + triplet_text(v, k), embed_language(m, full, kind));
            }
        }
    } else if (a.what == "sources") {
        const Triplet u = parse_triplet_arg(require_path(a.triplet, "--triplet"), v);
        const SourceSet set = select_sources(m, ckpt.config.transfer, u, ckpt.source_pool);
        os << "target " << triplet_text(v, u) << '\n';
        for (const auto& [t, g] : set.sources) os << "source " << triplet_text(v, t) << " G " << text::format(g) << '\n';
    } else {
        throw ConfigError("--what must be embeddings|sources, got '" + a.what + "'");
    }
    if (a.file.empty()) {
        std::cout << os.str();
    } else {
        write_text(out_dir(c) / a.file, os.str());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Visual relation embeddings with analogy transfer"};
    app.require_subcommand(1);
    Common common;
    EvalArgs eval_args;
    InspectArgs inspect_args;

    auto* synth = app.add_subcommand("synth", "write a planted synthetic benchmark");
    add_common(synth, common);
    auto* train = app.add_subcommand("train", "train both stages and write a checkpoint");
    add_common(train, common);
    auto* eval = app.add_subcommand("eval", "retrieval mAP for a query list");
    add_common(eval, common);
    eval->add_option("--checkpoint", eval_args.checkpoint, "model checkpoint")->required();
    eval->add_option("--dataset", eval_args.dataset, "test dataset (default: config test_data)");
    eval->add_option("--queries", eval_args.queries, "query triplets (default: config query_list)");
    eval->add_option("--mode", eval_args.mode, "direct|transfer");
    auto* inspect = app.add_subcommand("inspect", "dump embeddings or source sets");
    add_common(inspect, common);
    inspect->add_option("--checkpoint", inspect_args.checkpoint, "model checkpoint")->required();
    inspect->add_option("--what", inspect_args.what, "embeddings|sources")->required();
    inspect->add_option("--triplet", inspect_args.triplet, "'subject predicate object'");
    inspect->add_option("--file", inspect_args.file, "write to <out>/<file> instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << '\n';
        return 2;
    }

    try {
        if (*synth) cmd_synth(common);
        if (*train) cmd_train(common);
        if (*eval) cmd_eval(common, eval_args);
        if (*inspect) cmd_inspect(common, inspect_args);
    } catch (const Error& e) {
        std::cerr << "error: " << e.category() << ": " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
