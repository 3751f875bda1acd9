#include "vrel/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "vrel/random.hpp"
#include "vrel/text.hpp"

namespace vrel {

namespace {

constexpr char kMagic[8] = {'V', 'R', 'E', 'L', 'C', 'K', 'P', 'T'};

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    Reader(const std::string& bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

    std::uint64_t u64() { return take(8); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(take(4)); }
    std::string raw(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }
    std::size_t pos() const { return pos_; }
    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(origin_ + ": byte " + std::to_string(pos_) + ": " + msg);
    }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) fail("truncated checkpoint");
    }
    std::uint64_t take(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    const std::string& bytes_;
    std::string origin_;
    std::size_t pos_ = 0;
};

ParamSelection everything(const JointModel& m) {
    ParamSelection sel = ParamSelection::all(m.kinds());
    sel.words = true;
    sel.visual_input = true;
    return sel;
}

std::string vocab_line(const char* key, const Vocabulary& v) {
    std::string line = key;
    for (const auto& t : v.tokens()) line += ' ' + token_to_file(t);
    return line;
}

std::string header_text(const Checkpoint& c) {
    const auto& m = c.model;
    const std::string cfg = c.config.to_text();
    std::ostringstream os;
    os << "branches " << format_branch_set(m.config.branches) << '\n';
    os << "embed_dim " << m.config.embed_dim << '\n';
    os << "hidden_dim " << m.config.hidden_dim << '\n';
    os << "word_dim " << m.words.dim() << '\n';
    os << "appearance_dim " << c.appearance_dim << '\n';
    os << "visual_input " << m.config.visual_input.appearance_proj << ' ' << m.config.visual_input.spatial_hidden
       << ' ' << m.config.visual_input.spatial_out << '\n';
    os << "gamma " << to_string(c.gamma.kind) << ' ' << c.config.gamma_hidden << '\n';
    os << "seed " << c.config.seed << '\n';
    os << "seed_init " << derive_seed(c.config.seed, SeedStream::init) << '\n';
    os << "seed_gamma " << derive_seed(c.config.seed, SeedStream::gamma_init) << '\n';
    os << "config_hash " << fnv1a64(cfg) << '\n';
    os << vocab_line("vocab_subject", m.vocabs.subjects) << '\n';
    os << vocab_line("vocab_predicate", m.vocabs.predicates) << '\n';
    os << vocab_line("vocab_object", m.vocabs.objects) << '\n';
    os << "source_pool " << c.source_pool.size() << '\n';
    for (const auto& t : c.source_pool) os << "source " << t.s << ' ' << t.p << ' ' << t.o << '\n';
    std::istringstream lines(cfg);
    for (std::string line; std::getline(lines, line);) os << "config " << line << '\n';
    return os.str();
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& c) {
    const std::string header = header_text(c);
    std::string out(kMagic, sizeof kMagic);
    put_u32(out, kCheckpointVersion);
    put_u64(out, header.size());
    out += header;
    auto write_blocks = [&](const std::vector<std::span<const double>>& blocks) {
        for (const auto& b : blocks) {
            put_u64(out, b.size());
            for (double v : b) put_u64(out, std::bit_cast<std::uint64_t>(v));
        }
    };
    write_blocks(c.model.blocks(everything(c.model)));
    write_blocks(c.gamma.blocks());
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes, const std::string& origin) {
    Reader in(bytes, origin);
    if (in.raw(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) in.fail("not a checkpoint (bad magic)");
    const auto version = in.u32();
    if (version != kCheckpointVersion) in.fail("unsupported checkpoint version " + std::to_string(version));
    const auto header_len = in.u64();
    const std::string header = in.raw(header_len);

    std::string config_text;
    std::map<std::string, std::vector<std::string>> fields;
    std::vector<Triplet> pool;
    std::istringstream lines(header);
    std::size_t lineno = 0;
    for (std::string line; std::getline(lines, line);) {
        ++lineno;
        const auto sp = line.find(' ');
        const std::string key = line.substr(0, sp);
        const std::string rest = sp == std::string::npos ? "" : line.substr(sp + 1);
        if (key == "config") {
            config_text += rest + '\n';
            continue;
        }
        std::vector<std::string> parts;
        for (auto p : text::split(rest)) parts.emplace_back(p);
        if (key == "source") {
            const auto at = text::where(origin + " header", lineno);
            if (parts.size() != 3) throw ParseError(at + ": source needs 3 indices");
            pool.push_back({text::to_int<int>(parts[0], at), text::to_int<int>(parts[1], at),
                            text::to_int<int>(parts[2], at)});
            continue;
        }
        fields[key] = std::move(parts);
    }
    auto field = [&](const std::string& key) -> const std::vector<std::string>& {
        auto it = fields.find(key);
        if (it == fields.end()) throw ParseError(origin + ": header lacks '" + key + "'");
        return it->second;
    };
    auto vocab = [&](const std::string& key) {
        std::vector<std::string> tokens;
        for (const auto& t : field(key)) tokens.push_back(token_from_file(t));
        return Vocabulary(std::move(tokens));
    };

    Checkpoint c;
    c.config = parse_config(config_text, origin + " config");
    if (std::to_string(fnv1a64(c.config.to_text())) != field("config_hash").at(0))
        throw ParseError(origin + ": config hash mismatch");
    c.appearance_dim = text::to_int<Index>(field("appearance_dim").at(0), origin);
    const Index word_dim = text::to_int<Index>(field("word_dim").at(0), origin);
    c.source_pool = std::move(pool);
    if (std::to_string(c.source_pool.size()) != field("source_pool").at(0))
        throw ParseError(origin + ": source pool length mismatch");

    Vocabularies vocabs{vocab("vocab_subject"), vocab("vocab_predicate"), vocab("vocab_object")};
    // Shape-only construction, then every block is overwritten.
    WordTable table(word_dim);
    for (const auto* v : {&vocabs.subjects, &vocabs.predicates, &vocabs.objects})
        for (const auto& t : v->tokens()) table.set(t, Vector::Zero(word_dim));
    c.model = JointModel::create(c.config.model, vocabs, table, c.appearance_dim, 0);
    c.gamma = GammaParams::create(c.config.gamma, c.config.model.embed_dim, c.config.gamma_hidden, 0);

    auto read_blocks = [&](BlockList<double> blocks) {
        for (auto& b : blocks) {
            const auto n = in.u64();
            if (n != b.size())
                in.fail("block of " + std::to_string(n) + " values, expected " + std::to_string(b.size()));
            for (auto& v : b) v = std::bit_cast<double>(in.u64());
        }
    };
    read_blocks(c.model.blocks(everything(c.model)));
    read_blocks(c.gamma.blocks());
    if (!in.done()) in.fail("trailing bytes");
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const std::string bytes = encode_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return decode_checkpoint(ss.str(), path.string());
}

}  // namespace vrel
