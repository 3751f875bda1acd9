#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vrel/analogy.hpp"
#include "vrel/config.hpp"
#include "vrel/embed.hpp"

namespace vrel {

// Everything needed to score and transfer without the training data.
struct Checkpoint {
    RunConfig config;
    Index appearance_dim = 0;
    JointModel model;
    GammaParams gamma;
    // Non-rare training triplets, the default source pool at transfer time.
    std::vector<Triplet> source_pool;

    bool operator==(const Checkpoint& o) const {
        return config == o.config && appearance_dim == o.appearance_dim && model == o.model && gamma == o.gamma &&
               source_pool == o.source_pool;
    }
};

// Layout:
//   8 bytes   magic "VRELCKPT"
//   u32       format version
//   u64       header length in bytes
//   header    text lines: dims, branch set, gamma kind, seeds, config hash,
//             vocabularies, source pool, then the effective config
//   blocks    for each parameter block: u64 count, count f64 values
// Integers and reals are little-endian. Block order: word tables (s, p, o),
// visual input, each branch in canonical order (visual then language), Gamma.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes, const std::string& origin = "<checkpoint>");

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vrel
