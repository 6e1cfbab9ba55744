// Domain types: item ids, user histories, prediction targets and ranked lists.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gcb/common.hpp"

namespace gcb {

// Dense 1-based item id in 1..catalog_size.
using ItemId = std::int32_t;

struct UserHistory {
    std::string user;
    std::vector<ItemId> items;             // time-ordered, repeats allowed
    std::vector<std::int64_t> timestamps;  // seconds, non-decreasing, same length
};

// Exactly k future items for one user.
struct FutureTarget {
    std::vector<ItemId> items;
};

// Ranked candidates for one future step, best first, no duplicates.
struct RankedStepList {
    int step = 0;  // 1-based position in the horizon
    std::vector<ItemId> candidates;
};

// Throws EmptyHistory / NonMonotonicTimestamps / ItemOutOfRange.
// catalog_size <= 0 skips the range check (catalog unknown yet).
void validate_history(const UserHistory& h, ItemId catalog_size);

// Throws InvariantViolated on duplicates or length > K, HorizonMismatch on a
// step outside 1..k.
void validate_ranked_list(const RankedStepList& list, int k, int top_k);

}  // namespace gcb
