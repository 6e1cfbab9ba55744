#include "gcb/data_model.hpp"

#include <unordered_set>

namespace gcb {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::EmptyHistory: return "EmptyHistory";
        case ErrorCode::NonMonotonicTimestamps: return "NonMonotonicTimestamps";
        case ErrorCode::ItemOutOfRange: return "ItemOutOfRange";
        case ErrorCode::MalformedRecord: return "MalformedRecord";
        case ErrorCode::MissingField: return "MissingField";
        case ErrorCode::HistoryTooShort: return "HistoryTooShort";
        case ErrorCode::UnknownItem: return "UnknownItem";
        case ErrorCode::DegenerateInput: return "DegenerateInput";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::GradMismatch: return "GradMismatch";
        case ErrorCode::NoCategories: return "NoCategories";
        case ErrorCode::HorizonMismatch: return "HorizonMismatch";
        case ErrorCode::CheckpointMismatch: return "CheckpointMismatch";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::InvariantViolated: return "InvariantViolated";
    }
    return "UnknownError";
}

void validate_history(const UserHistory& h, ItemId catalog_size) {
    if (h.items.empty()) {
        raise(ErrorCode::EmptyHistory, "user '" + h.user + "' has no interactions");
    }
    GCB_CHECK(h.timestamps.size() == h.items.size(), ErrorCode::ShapeMismatch,
              "items/timestamps length mismatch for user '" + h.user + "'");
    for (std::size_t i = 1; i < h.timestamps.size(); ++i) {
        if (h.timestamps[i] < h.timestamps[i - 1]) {
            raise(ErrorCode::NonMonotonicTimestamps,
                  "user '" + h.user + "' at position " + std::to_string(i));
        }
    }
    if (catalog_size > 0) {
        for (ItemId id : h.items) {
            if (id < 1 || id > catalog_size) {
                raise(ErrorCode::ItemOutOfRange,
                      "item " + std::to_string(id) + " outside 1.." +
                          std::to_string(catalog_size));
            }
        }
    }
}

void validate_ranked_list(const RankedStepList& list, int k, int top_k) {
    if (list.step < 1 || list.step > k) {
        raise(ErrorCode::HorizonMismatch,
              "step " + std::to_string(list.step) + " outside 1.." + std::to_string(k));
    }
    GCB_CHECK(static_cast<int>(list.candidates.size()) <= top_k,
              ErrorCode::InvariantViolated, "ranked list longer than K");
    std::unordered_set<ItemId> seen;
    for (ItemId id : list.candidates) {
        GCB_CHECK(seen.insert(id).second, ErrorCode::InvariantViolated,
                  "duplicate candidate " + std::to_string(id));
    }
}

}  // namespace gcb
