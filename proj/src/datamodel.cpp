#include "vrel/datamodel.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "vrel/text.hpp"

namespace vrel {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (tokens_[i].empty()) throw ValidationError("vocabulary: empty token at index " + std::to_string(i));
        if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
            throw ValidationError("vocabulary: duplicate token '" + tokens_[i] + "'");
    }
}

const std::string& Vocabulary::token(int index) const {
    if (index < 0 || static_cast<std::size_t>(index) >= tokens_.size())
        throw ValidationError("vocabulary index " + std::to_string(index) + " out of range");
    return tokens_[static_cast<std::size_t>(index)];
}

std::optional<int> Vocabulary::find(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

int Vocabulary::at(const std::string& token) const {
    auto i = find(token);
    if (!i) throw ValidationError("unknown token '" + token + "'");
    return *i;
}

std::string token_to_file(const std::string& token) {
    std::string s = token;
    std::replace(s.begin(), s.end(), ' ', '_');
    return s;
}

std::string token_from_file(const std::string& text) {
    std::string s = text;
    std::replace(s.begin(), s.end(), '_', ' ');
    return s;
}

Vocabulary load_vocabulary(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open vocabulary file " + path.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        auto t = text::trim(line);
        if (t.empty()) continue;
        tokens.push_back(token_from_file(std::string(t)));
    }
    return Vocabulary(std::move(tokens));
}

void write_vocabulary(const fs::path& path, const Vocabulary& vocab) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& t : vocab.tokens()) out << token_to_file(t) << '\n';
}

const Vocabulary& Vocabularies::of(Slot slot) const {
    switch (slot) {
        case Slot::subject: return subjects;
        case Slot::predicate: return predicates;
        case Slot::object: return objects;
    }
    throw std::logic_error("bad slot");
}

std::string to_string(const Triplet& t, const Vocabularies& v) {
    return v.subjects.token(t.s) + " " + v.predicates.token(t.p) + " " + v.objects.token(t.o);
}

Triplet parse_triplet(const std::string& s, const std::string& p, const std::string& o,
                      const Vocabularies& vocabs) {
    return {vocabs.subjects.at(token_from_file(s)), vocabs.predicates.at(token_from_file(p)),
            vocabs.objects.at(token_from_file(o))};
}

// ---------------------------------------------------------------------------
// Pairs and datasets

bool CandidatePair::has_predicate(int p) const {
    return std::binary_search(predicates.begin(), predicates.end(), p);
}

std::vector<Triplet> CandidatePair::positives() const {
    std::vector<Triplet> out;
    for (int p : predicates) out.push_back({subject_category, p, object_category});
    return out;
}

namespace {

std::string check_pair(const CandidatePair& pair, const Vocabularies& v, Index appearance_dim) {
    if (!pair.subject_box.valid()) return "subject box is degenerate";
    if (!pair.object_box.valid()) return "object box is degenerate";
    if (pair.subject_appearance.size() != appearance_dim || pair.object_appearance.size() != appearance_dim)
        return "appearance dimension mismatch (declared " + std::to_string(appearance_dim) + ")";
    if (!pair.subject_appearance.allFinite() || !pair.object_appearance.allFinite())
        return "non-finite appearance feature";
    if (pair.subject_category < 0 || static_cast<std::size_t>(pair.subject_category) >= v.subjects.size())
        return "subject category out of range";
    if (pair.object_category < 0 || static_cast<std::size_t>(pair.object_category) >= v.objects.size())
        return "object category out of range";
    for (std::size_t i = 0; i < pair.predicates.size(); ++i) {
        const int p = pair.predicates[i];
        if (p < 0 || static_cast<std::size_t>(p) >= v.predicates.size()) return "predicate label out of range";
        if (i > 0 && pair.predicates[i - 1] >= p) return "predicate labels must be sorted and unique";
    }
    return {};
}

}  // namespace

Dataset::Dataset(Vocabularies vocabs, Index appearance_dim, std::vector<CandidatePair> pairs)
    : vocabs_(std::move(vocabs)), appearance_dim_(appearance_dim), pairs_(std::move(pairs)) {
    if (appearance_dim_ <= 0) throw ValidationError("appearance dimension must be positive");
    std::set<std::int64_t> ids;
    for (auto& pair : pairs_) {
        std::sort(pair.predicates.begin(), pair.predicates.end());
        pair.predicates.erase(std::unique(pair.predicates.begin(), pair.predicates.end()), pair.predicates.end());
        if (auto err = check_pair(pair, vocabs_, appearance_dim_); !err.empty())
            throw ValidationError("pair " + std::to_string(pair.id) + ": " + err);
        if (!ids.insert(pair.id).second) throw ValidationError("duplicate pair id " + std::to_string(pair.id));
        for (const auto& t : pair.positives()) ++counts_[t];
    }
}

int Dataset::occurrence(const Triplet& t) const {
    auto it = counts_.find(t);
    return it == counts_.end() ? 0 : it->second;
}

std::vector<Triplet> Dataset::observed() const {
    std::vector<Triplet> out;
    for (const auto& [t, n] : counts_) out.push_back(t);
    return out;
}

namespace {

class LineReader {
public:
    LineReader(const std::vector<std::string_view>& tok, std::string where) : tok_(tok), where_(std::move(where)) {}

    std::string_view next() {
        if (i_ >= tok_.size()) throw ParseError(where_ + ": line ends early");
        return tok_[i_++];
    }
    void expect(std::string_view keyword) {
        auto t = next();
        if (t != keyword)
            throw ParseError(where_ + ": expected '" + std::string(keyword) + "', got '" + std::string(t) + "'");
    }
    double real() { return text::to_double(next(), where_); }
    std::int64_t integer() { return text::to_int<std::int64_t>(next(), where_); }
    BoundingBox box() {
        BoundingBox b;
        b.x_min = real();
        b.y_min = real();
        b.x_max = real();
        b.y_max = real();
        return b;
    }
    Vector reals(Index n) {
        Vector v(n);
        for (Index i = 0; i < n; ++i) v(i) = real();
        return v;
    }
    bool done() const { return i_ >= tok_.size(); }
    const std::string& where() const { return where_; }

private:
    const std::vector<std::string_view>& tok_;
    std::string where_;
    std::size_t i_ = 0;
};

}  // namespace

Dataset load_dataset(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset file " + path.string());
    const fs::path dir = path.parent_path();
    const std::string name = path.string();

    Index appearance_dim = 0;
    std::optional<Vocabulary> subj, pred, obj;
    std::vector<CandidatePair> pairs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto tok = text::split(line);
        if (tok.empty()) continue;
        const std::string at = text::where(name, lineno);
        if (tok[0].front() == '#') {
            if (tok.size() != 2) continue;  // comment
            const auto key = tok[0];
            if (key == "#appearance_dim") {
                appearance_dim = text::to_int<Index>(tok[1], at);
                if (appearance_dim <= 0) throw ParseError(at + ": appearance_dim must be positive");
            } else if (key == "#vocab_subject") {
                subj = load_vocabulary(dir / std::string(tok[1]));
            } else if (key == "#vocab_predicate") {
                pred = load_vocabulary(dir / std::string(tok[1]));
            } else if (key == "#vocab_object") {
                obj = load_vocabulary(dir / std::string(tok[1]));
            }
            continue;
        }
        if (tok[0] != "pair") throw ParseError(at + ": unknown record '" + std::string(tok[0]) + "'");
        if (appearance_dim == 0 || !subj || !pred || !obj)
            throw ParseError(at + ": pair line before #appearance_dim and vocabulary headers");

        LineReader r(tok, at);
        r.expect("pair");
        CandidatePair p;
        p.id = r.integer();
        p.image_id = r.integer();
        r.expect("sub");
        p.subject_box = r.box();
        r.expect("obj");
        p.object_box = r.box();
        r.expect("scat");
        {
            auto t = token_from_file(std::string(r.next()));
            auto i = subj->find(t);
            if (!i) throw ParseError(at + ": unknown subject token '" + t + "'");
            p.subject_category = *i;
        }
        r.expect("ocat");
        {
            auto t = token_from_file(std::string(r.next()));
            auto i = obj->find(t);
            if (!i) throw ParseError(at + ": unknown object token '" + t + "'");
            p.object_category = *i;
        }
        r.expect("afeat_s");
        p.subject_appearance = r.reals(appearance_dim);
        r.expect("afeat_o");
        p.object_appearance = r.reals(appearance_dim);
        r.expect("labels");
        while (!r.done()) {
            auto t = token_from_file(std::string(r.next()));
            auto i = pred->find(t);
            if (!i) throw ParseError(at + ": unknown predicate token '" + t + "'");
            p.predicates.push_back(*i);
        }
        std::sort(p.predicates.begin(), p.predicates.end());
        p.predicates.erase(std::unique(p.predicates.begin(), p.predicates.end()), p.predicates.end());
        if (!p.subject_box.valid() || !p.object_box.valid()) throw ParseError(at + ": degenerate box");
        pairs.push_back(std::move(p));
    }
    if (appearance_dim == 0 || !subj || !pred || !obj)
        throw ParseError(name + ": missing #appearance_dim or vocabulary headers");
    try {
        return Dataset(Vocabularies{*subj, *pred, *obj}, appearance_dim, std::move(pairs));
    } catch (const ValidationError& e) {
        throw ValidationError(name + ": " + e.what());
    }
}

void write_dataset(const fs::path& path, const Dataset& dataset, const DatasetFiles& files) {
    const fs::path dir = path.parent_path();
    const auto& v = dataset.vocabularies();
    write_vocabulary(dir / files.subjects, v.subjects);
    write_vocabulary(dir / files.predicates, v.predicates);
    write_vocabulary(dir / files.objects, v.objects);

    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "#appearance_dim " << dataset.appearance_dim() << '\n';
    out << "#vocab_subject " << files.subjects << '\n';
    out << "#vocab_predicate " << files.predicates << '\n';
    out << "#vocab_object " << files.objects << '\n';
    auto box = [&](const BoundingBox& b) {
        out << ' ' << text::format(b.x_min) << ' ' << text::format(b.y_min) << ' ' << text::format(b.x_max) << ' '
            << text::format(b.y_max);
    };
    for (const auto& p : dataset.pairs()) {
        out << "pair " << p.id << ' ' << p.image_id << " sub";
        box(p.subject_box);
        out << " obj";
        box(p.object_box);
        out << " scat " << token_to_file(v.subjects.token(p.subject_category)) << " ocat "
            << token_to_file(v.objects.token(p.object_category)) << " afeat_s";
        for (Index i = 0; i < p.subject_appearance.size(); ++i) out << ' ' << text::format(p.subject_appearance(i));
        out << " afeat_o";
        for (Index i = 0; i < p.object_appearance.size(); ++i) out << ' ' << text::format(p.object_appearance(i));
        out << " labels";
        for (int pr : p.predicates) out << ' ' << token_to_file(v.predicates.token(pr));
        out << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Word tables

void WordTable::set(const std::string& token, Vector v) {
    if (v.size() != dim_) throw ShapeError("word vector for '" + token + "' has wrong dimension");
    table_[token] = std::move(v);
}

const Vector& WordTable::at(const std::string& token) const {
    auto it = table_.find(token);
    if (it == table_.end()) throw ValidationError("word table has no entry for '" + token + "'");
    return it->second;
}

WordTable load_word_table(const fs::path& path, const Vocabularies& vocabs) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open word table " + path.string());
    std::set<std::string> wanted;
    for (auto slot : {Slot::subject, Slot::predicate, Slot::object})
        for (const auto& t : vocabs.of(slot).tokens()) wanted.insert(t);

    std::string line;
    std::size_t lineno = 0;
    std::optional<WordTable> table;
    while (std::getline(in, line)) {
        ++lineno;
        const auto tok = text::split(line);
        if (tok.empty()) continue;
        const std::string at = text::where(path.string(), lineno);
        if (!table) {
            if (tok.size() != 2 || tok[0] != "dim") throw ParseError(at + ": expected 'dim <d_w>' header");
            const auto d = text::to_int<Index>(tok[1], at);
            if (d <= 0) throw ParseError(at + ": dim must be positive");
            table.emplace(d);
            continue;
        }
        if (static_cast<Index>(tok.size()) != table->dim() + 1)
            throw ParseError(at + ": expected token and " + std::to_string(table->dim()) + " reals");
        const std::string token = token_from_file(std::string(tok[0]));
        if (!wanted.count(token)) continue;
        Vector v(table->dim());
        for (Index i = 0; i < table->dim(); ++i) v(i) = text::to_double(tok[static_cast<std::size_t>(i) + 1], at);
        table->set(token, std::move(v));
    }
    if (!table) throw ParseError(path.string() + ": empty word table");
    std::string missing;
    for (const auto& t : wanted)
        if (!table->contains(t)) missing += (missing.empty() ? "" : ", ") + t;
    if (!missing.empty()) throw ValidationError("word table " + path.string() + " lacks tokens: " + missing);
    return *table;
}

void write_word_table(const fs::path& path, const WordTable& table) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "dim " << table.dim() << '\n';
    for (const auto& [token, v] : table.entries()) {
        out << token_to_file(token);
        for (Index i = 0; i < v.size(); ++i) out << ' ' << text::format(v(i));
        out << '\n';
    }
}

// ---------------------------------------------------------------------------

OccurrenceRank occurrence_rank(const Dataset& dataset, int threshold) {
    OccurrenceRank r;
    r.counts = dataset.occurrences();
    for (const auto& [t, n] : r.counts)
        if (n >= threshold) r.non_rare.push_back(t);
    return r;
}

std::vector<Triplet> load_triplets(const fs::path& path, const Vocabularies& vocabs) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open triplet list " + path.string());
    std::vector<Triplet> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto tok = text::split(line);
        if (tok.empty() || tok[0].front() == '#') continue;
        if (tok.size() != 3)
            throw ParseError(text::where(path.string(), lineno) + ": expected '<subject> <predicate> <object>'");
        try {
            out.push_back(parse_triplet(std::string(tok[0]), std::string(tok[1]), std::string(tok[2]), vocabs));
        } catch (const ValidationError& e) {
            throw ValidationError(text::where(path.string(), lineno) + ": " + e.what());
        }
    }
    return out;
}

void write_triplets(const fs::path& path, const std::vector<Triplet>& triplets, const Vocabularies& vocabs) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& t : triplets)
        out << token_to_file(vocabs.subjects.token(t.s)) << ' ' << token_to_file(vocabs.predicates.token(t.p)) << ' '
            << token_to_file(vocabs.objects.token(t.o)) << '\n';
}

}  // namespace vrel
