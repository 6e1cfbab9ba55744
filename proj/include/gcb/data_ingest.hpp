// Interaction-log parsing, user filtering and leave-k-out splits.

#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "gcb/data_model.hpp"

namespace gcb {

enum class LogFormat { Jsonl, Tsv };

LogFormat parse_log_format(const std::string& name);  // "jsonl" | "tsv"

struct InteractionLog {
    std::vector<UserHistory> histories;  // first-seen user order
    ItemId catalog_size = 0;
    std::vector<std::string> item_keys;               // dense id -> raw key (index id-1)
    std::unordered_map<std::string, ItemId> item_ids; // raw key -> dense id
    std::map<ItemId, std::string> categories;         // optional metadata

    const std::string& item_key(ItemId id) const { return item_keys.at(std::size_t(id) - 1); }
};

enum class Segment { Train, Valid, Test };

const char* segment_name(Segment s);
Segment parse_segment(const std::string& name);

struct SplitExample {
    std::string user;
    Segment segment = Segment::Train;
    std::vector<ItemId> input_items;
    FutureTarget target;
};

struct IngestStats {
    std::size_t records = 0;
    std::size_t users_before = 0;
    std::size_t users_after = 0;
    ItemId items_before = 0;
    ItemId items_after = 0;
};

// Parse a stream of interaction records. Dense item ids are assigned in
// first-seen order; each user's records are stably sorted by timestamp so
// same-timestamp records keep file order.
// Throws MalformedRecord(line) / MissingField(name).
InteractionLog parse_interactions(std::istream& source, LogFormat format);

// Keep users with at least 3k+1 interactions and re-densify the catalog over
// the retained items (relative id order preserved).
InteractionLog filter_users(const InteractionLog& log, int k);

// Nested leave-k-out: train H[1..n-3k] -> H[n-3k+1..n-2k],
// valid H[1..n-2k] -> H[n-2k+1..n-k], test H[1..n-k] -> H[n-k+1..n].
// Output ordered by user key. With augment_train, every train-region prefix
// H[1..i] -> H[i+1..i+k] for i in 1..n-3k becomes a train example.
// Throws HistoryTooShort(user).
std::vector<SplitExample> split_leave_k(const InteractionLog& log, int k,
                                        bool augment_train = false);

// JSONL round trip for split files: {"user","segment","input","target"}.
void write_splits_jsonl(std::ostream& out, const std::vector<SplitExample>& splits);
std::vector<SplitExample> read_splits_jsonl(std::istream& in);

}  // namespace gcb
