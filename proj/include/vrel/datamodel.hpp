#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "vrel/numkit.hpp"

namespace vrel {

enum class Slot { subject, predicate, object };

// Ordered token list; the position of a token is its index. Tokens keep their
// spaces in memory and are written with underscores on disk.
class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> tokens);

    std::size_t size() const { return tokens_.size(); }
    const std::string& token(int index) const;
    std::optional<int> find(const std::string& token) const;
    int at(const std::string& token) const;  // throws ValidationError
    const std::vector<std::string>& tokens() const { return tokens_; }

    bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

std::string token_to_file(const std::string& token);
std::string token_from_file(const std::string& text);

Vocabulary load_vocabulary(const std::filesystem::path& path);
void write_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab);

struct Vocabularies {
    Vocabulary subjects, predicates, objects;

    const Vocabulary& of(Slot slot) const;
    bool operator==(const Vocabularies&) const = default;
};

struct Triplet {
    int s = 0;
    int p = 0;
    int o = 0;

    auto operator<=>(const Triplet&) const = default;
};

std::string to_string(const Triplet& t, const Vocabularies& v);

struct BoundingBox {
    double x_min = 0, y_min = 0, x_max = 1, y_max = 1;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }
    bool valid() const { return x_min < x_max && y_min < y_max; }
    BoundingBox translated(double dx, double dy) const { return {x_min + dx, y_min + dy, x_max + dx, y_max + dy}; }

    bool operator==(const BoundingBox&) const = default;
};

struct CandidatePair {
    std::int64_t id = 0;
    std::int64_t image_id = 0;
    BoundingBox subject_box, object_box;
    Vector subject_appearance;
    Vector object_appearance;
    int subject_category = 0;
    int object_category = 0;
    // Interacting predicates, sorted and unique. Empty for a negative pair.
    std::vector<int> predicates;

    bool is_positive() const { return !predicates.empty(); }
    bool has_predicate(int p) const;
    bool has_triplet(const Triplet& t) const {
        return t.s == subject_category && t.o == object_category && has_predicate(t.p);
    }
    std::vector<Triplet> positives() const;

    bool operator==(const CandidatePair&) const = default;
};

// Immutable once built: construction validates every pair and derives the
// occurrence counts.
class Dataset {
public:
    Dataset() = default;
    Dataset(Vocabularies vocabs, Index appearance_dim, std::vector<CandidatePair> pairs);

    const Vocabularies& vocabularies() const { return vocabs_; }
    Index appearance_dim() const { return appearance_dim_; }
    const std::vector<CandidatePair>& pairs() const { return pairs_; }
    std::size_t size() const { return pairs_.size(); }

    // Number of positive pairs per triplet; only observed triplets appear.
    const std::map<Triplet, int>& occurrences() const { return counts_; }
    int occurrence(const Triplet& t) const;
    std::vector<Triplet> observed() const;

    bool operator==(const Dataset& o) const {
        return vocabs_ == o.vocabs_ && appearance_dim_ == o.appearance_dim_ && pairs_ == o.pairs_;
    }

private:
    Vocabularies vocabs_;
    Index appearance_dim_ = 0;
    std::vector<CandidatePair> pairs_;
    std::map<Triplet, int> counts_;
};

struct DatasetFiles {
    std::string subjects = "subjects.txt";
    std::string predicates = "predicates.txt";
    std::string objects = "objects.txt";
};

// Vocabulary paths in the header are resolved relative to the dataset file.
Dataset load_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, const Dataset& dataset,
                   const DatasetFiles& files = {});

class WordTable {
public:
    WordTable() = default;
    explicit WordTable(Index dim) : dim_(dim) {}

    Index dim() const { return dim_; }
    void set(const std::string& token, Vector v);
    const Vector& at(const std::string& token) const;  // throws ValidationError
    bool contains(const std::string& token) const { return table_.count(token) != 0; }
    const std::map<std::string, Vector>& entries() const { return table_; }

    bool operator==(const WordTable& o) const { return dim_ == o.dim_ && table_ == o.table_; }

private:
    Index dim_ = 0;
    std::map<std::string, Vector> table_;
};

// Keeps only tokens of `vocabs`; every vocabulary token must be present.
WordTable load_word_table(const std::filesystem::path& path, const Vocabularies& vocabs);
void write_word_table(const std::filesystem::path& path, const WordTable& table);

struct OccurrenceRank {
    std::map<Triplet, int> counts;
    std::vector<Triplet> non_rare;  // ascending (s,p,o)
};

OccurrenceRank occurrence_rank(const Dataset& dataset, int threshold = 10);

std::vector<Triplet> load_triplets(const std::filesystem::path& path, const Vocabularies& vocabs);
void write_triplets(const std::filesystem::path& path, const std::vector<Triplet>& triplets,
                    const Vocabularies& vocabs);
Triplet parse_triplet(const std::string& s, const std::string& p, const std::string& o,
                      const Vocabularies& vocabs);

// ---------------------------------------------------------------------------
// Planted synthetic relations.

struct SynthConfig {
    int subjects = 6;
    int predicates = 10;
    int objects = 12;
    int subject_groups = 2;
    int predicate_groups = 5;
    int object_groups = 4;
    int subjects_per_predicate = 2;
    int object_groups_per_predicate = 2;
    int train_pairs_per_triplet = 48;
    int test_pairs_per_triplet = 20;
    int train_negatives_per_category = 72;
    int test_negatives_per_category = 10;
    Index appearance_dim = 32;
    double noise = 1.0;
    // Spread of object prototypes around their group centre; small values make
    // objects of a group hard to tell apart from their own box alone.
    double object_spread = 0.8;
    double pose = 0.5;         // scale of the object-independent predicate term
    double interaction = 1.0;  // scale of the predicate/object term
    double geometry_jitter = 0.25;
    double word_noise = 0.05;
    int heldout = 10;
};

struct SynthData {
    Dataset train;
    Dataset test;
    WordTable words;
    std::vector<Triplet> heldout;
    std::vector<Triplet> observed;  // every planted triplet, ascending
};

SynthData synth_generate(const SynthConfig& cfg, std::uint64_t seed);

}  // namespace vrel
