#include "gcb/tokenizer.hpp"

#include <algorithm>

namespace gcb {

Vocabulary::Vocabulary(std::vector<int> position_sizes)
    : position_sizes_(std::move(position_sizes)) {
    GCB_CHECK(!position_sizes_.empty(), ErrorCode::ConfigError, "vocabulary needs positions");
    int at = kSpecialCount;
    for (int size : position_sizes_) {
        GCB_CHECK(size >= 1, ErrorCode::ConfigError, "position size must be >= 1");
        offsets_.push_back(at);
        at += size;
    }
    total_ = at;
}

int Vocabulary::encode(int position, int code) const {
    GCB_CHECK(position >= 0 && position < positions(), ErrorCode::ShapeMismatch,
              "vocab position out of range");
    GCB_CHECK(code >= 0 && code < position_sizes_[std::size_t(position)],
              ErrorCode::ShapeMismatch, "code out of range for position");
    return offsets_[std::size_t(position)] + code;
}

std::optional<std::pair<int, int>> Vocabulary::decode(int token) const {
    if (token < kSpecialCount || token >= total_) return std::nullopt;
    // positions() is small; linear scan.
    for (int p = positions() - 1; p >= 0; --p) {
        if (token >= offsets_[std::size_t(p)]) {
            return std::make_pair(p, token - offsets_[std::size_t(p)]);
        }
    }
    return std::nullopt;
}

namespace {

void append_item_tokens(std::vector<int>& out, ItemId item, const CodeMap& map,
                        const Vocabulary& vocab) {
    if (item < 1 || item > map.item_count()) {
        raise(ErrorCode::UnknownItem, "item " + std::to_string(item));
    }
    const std::vector<int>& code = map.semantic_id(item);
    GCB_CHECK(static_cast<int>(code.size()) == vocab.positions(), ErrorCode::ShapeMismatch,
              "code length != vocabulary positions");
    for (int p = 0; p < vocab.positions(); ++p) {
        out.push_back(vocab.encode(p, code[std::size_t(p)]));
    }
}

}  // namespace

TokenSequence tokenize_history(const std::vector<ItemId>& items, const CodeMap& map,
                               const Vocabulary& vocab, int max_len) {
    GCB_CHECK(max_len >= vocab.positions(), ErrorCode::ConfigError,
              "max_len shorter than one item block");
    const int block = vocab.positions();
    const std::size_t max_items = static_cast<std::size_t>(max_len / block);
    const std::size_t keep = std::min(items.size(), max_items);

    TokenSequence seq;
    seq.tokens.reserve(std::size_t(max_len));
    for (std::size_t i = items.size() - keep; i < items.size(); ++i) {
        append_item_tokens(seq.tokens, items[i], map, vocab);
    }
    seq.mask.assign(seq.tokens.size(), 1);
    while (static_cast<int>(seq.tokens.size()) < max_len) {
        seq.tokens.push_back(Vocabulary::kPad);
        seq.mask.push_back(0);
    }
    return seq;
}

TokenSequence tokenize_target(const FutureTarget& target, const CodeMap& map,
                              const Vocabulary& vocab) {
    TokenSequence seq;
    for (ItemId item : target.items) {
        append_item_tokens(seq.tokens, item, map, vocab);
    }
    seq.tokens.push_back(Vocabulary::kEos);
    seq.mask.assign(seq.tokens.size(), 1);
    return seq;
}

std::vector<DecodedBlock> detokenize_blocks(const std::vector<int>& tokens,
                                            const CodeMap& map, const Vocabulary& vocab) {
    std::size_t end = tokens.size();
    while (end > 0 &&
           (tokens[end - 1] == Vocabulary::kEos || tokens[end - 1] == Vocabulary::kPad)) {
        --end;
    }
    const int block = vocab.positions();
    std::vector<DecodedBlock> out;
    for (std::size_t start = 0; start < end; start += std::size_t(block)) {
        if (start + std::size_t(block) > end) {
            out.emplace_back(Unmappable{});  // trailing partial block
            break;
        }
        std::vector<int> code(std::size_t(block));
        bool ok = true;
        for (int p = 0; p < block; ++p) {
            const auto decoded = vocab.decode(tokens[start + std::size_t(p)]);
            if (!decoded || decoded->first != p) {
                ok = false;  // out-of-range or wrong-position token
                break;
            }
            code[std::size_t(p)] = decoded->second;
        }
        if (!ok) {
            out.emplace_back(Unmappable{});
            continue;
        }
        if (auto item = map.lookup(code)) {
            out.emplace_back(*item);
        } else {
            out.emplace_back(Unmappable{});
        }
    }
    return out;
}

}  // namespace gcb
