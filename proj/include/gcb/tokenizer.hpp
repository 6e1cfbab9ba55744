// Discrete vocabulary over Semantic-ID codes and item <-> token conversion.

#pragma once

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "gcb/codemap.hpp"
#include "gcb/data_model.hpp"

namespace gcb {

// Token layout: PAD=0, EOS=1, BOS=2, then disjoint per-position code ranges:
// token(position p, code c) = 3 + sum of earlier positions' ranges + c.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kEos = 1;
    static constexpr int kBos = 2;
    static constexpr int kSpecialCount = 3;

    Vocabulary() = default;
    explicit Vocabulary(std::vector<int> position_sizes);

    static Vocabulary from_codemap(const CodeMap& map) {
        return Vocabulary(map.level_sizes());
    }

    int positions() const { return static_cast<int>(position_sizes_.size()); }
    const std::vector<int>& position_sizes() const { return position_sizes_; }
    int size() const { return total_; }

    // position is 0-based; code in 0..position_sizes[position)-1.
    int encode(int position, int code) const;

    // (position, code) for a code token; nullopt for PAD/EOS/BOS or out of range.
    std::optional<std::pair<int, int>> decode(int token) const;

private:
    std::vector<int> position_sizes_;
    std::vector<int> offsets_;  // token base per position
    int total_ = kSpecialCount;
};

struct TokenSequence {
    std::vector<int> tokens;
    std::vector<std::uint8_t> mask;  // 1 = content, 0 = PAD; PAD trails content
};

// A decoded block that does not correspond to any item.
struct Unmappable {
    bool operator==(const Unmappable&) const = default;
};
using DecodedBlock = std::variant<ItemId, Unmappable>;

// Oldest items drop first when the history exceeds max_len; truncation never
// splits an item's block. Right-padded with PAD. Throws UnknownItem.
TokenSequence tokenize_history(const std::vector<ItemId>& items, const CodeMap& map,
                               const Vocabulary& vocab, int max_len);

// k*Lc code tokens followed by EOS; no padding. Throws UnknownItem.
TokenSequence tokenize_target(const FutureTarget& target, const CodeMap& map,
                              const Vocabulary& vocab);

// Strip the trailing EOS/PAD run, partition into Lc-sized blocks, decode each
// to codes and look the tuple up. Wrong-position or out-of-range tokens,
// unknown tuples and a trailing partial block all yield Unmappable.
std::vector<DecodedBlock> detokenize_blocks(const std::vector<int>& tokens,
                                            const CodeMap& map, const Vocabulary& vocab);

}  // namespace gcb
