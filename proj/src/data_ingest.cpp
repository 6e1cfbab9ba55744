#include "gcb/data_ingest.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace gcb {

namespace {

struct RawRecord {
    std::string user;
    std::string item;
    std::int64_t ts = 0;
    std::string category;
};

std::int64_t to_timestamp(const nlohmann::json& v, std::size_t line) {
    if (v.is_number_integer() || v.is_number_unsigned()) return v.get<std::int64_t>();
    if (v.is_number_float()) return static_cast<std::int64_t>(v.get<double>());
    if (v.is_string()) {
        try {
            return std::stoll(v.get<std::string>());
        } catch (const std::exception&) {
        }
    }
    raise(ErrorCode::MalformedRecord, "line " + std::to_string(line) + ": bad timestamp");
}

const nlohmann::json* find_field(const nlohmann::json& obj,
                                 std::initializer_list<const char*> names) {
    for (const char* name : names) {
        auto it = obj.find(name);
        if (it != obj.end()) return &*it;
    }
    return nullptr;
}

RawRecord parse_jsonl_line(const std::string& line, std::size_t line_no) {
    nlohmann::json obj;
    try {
        obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::MalformedRecord,
              "line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object()) {
        raise(ErrorCode::MalformedRecord,
              "line " + std::to_string(line_no) + ": not a JSON object");
    }
    RawRecord rec;
    const nlohmann::json* user = find_field(obj, {"user", "reviewerID"});
    if (!user) raise(ErrorCode::MissingField, "user (line " + std::to_string(line_no) + ")");
    const nlohmann::json* item = find_field(obj, {"item", "asin"});
    if (!item) raise(ErrorCode::MissingField, "item (line " + std::to_string(line_no) + ")");
    const nlohmann::json* ts = find_field(obj, {"ts", "unixReviewTime"});
    if (!ts) raise(ErrorCode::MissingField, "ts (line " + std::to_string(line_no) + ")");
    rec.user = user->is_string() ? user->get<std::string>() : user->dump();
    rec.item = item->is_string() ? item->get<std::string>() : item->dump();
    rec.ts = to_timestamp(*ts, line_no);
    if (const nlohmann::json* cat = find_field(obj, {"category"})) {
        if (cat->is_string()) rec.category = cat->get<std::string>();
    }
    return rec;
}

RawRecord parse_tsv_line(const std::string& line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t tab = line.find('\t', start);
        fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    if (fields.size() < 3) {
        raise(ErrorCode::MalformedRecord,
              "line " + std::to_string(line_no) + ": expected user\\titem\\tts");
    }
    RawRecord rec;
    rec.user = fields[0];
    rec.item = fields[1];
    try {
        rec.ts = std::stoll(fields[2]);
    } catch (const std::exception&) {
        raise(ErrorCode::MalformedRecord,
              "line " + std::to_string(line_no) + ": bad timestamp '" + fields[2] + "'");
    }
    if (fields.size() >= 4) rec.category = fields[3];
    return rec;
}

}  // namespace

LogFormat parse_log_format(const std::string& name) {
    if (name == "jsonl") return LogFormat::Jsonl;
    if (name == "tsv") return LogFormat::Tsv;
    raise(ErrorCode::ConfigError, "unknown log format '" + name + "'");
}

const char* segment_name(Segment s) {
    switch (s) {
        case Segment::Train: return "train";
        case Segment::Valid: return "valid";
        case Segment::Test: return "test";
    }
    return "?";
}

Segment parse_segment(const std::string& name) {
    if (name == "train") return Segment::Train;
    if (name == "valid") return Segment::Valid;
    if (name == "test") return Segment::Test;
    raise(ErrorCode::MalformedRecord, "unknown segment '" + name + "'");
}

InteractionLog parse_interactions(std::istream& source, LogFormat format) {
    InteractionLog log;
    std::unordered_map<std::string, std::size_t> user_index;

    struct UserRecord {
        std::int64_t ts;
        ItemId item;
    };
    std::vector<std::vector<UserRecord>> per_user;
    std::vector<std::string> user_order;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(source, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        RawRecord rec = format == LogFormat::Jsonl ? parse_jsonl_line(line, line_no)
                                                   : parse_tsv_line(line, line_no);

        auto [item_it, inserted] =
            log.item_ids.emplace(rec.item, static_cast<ItemId>(log.item_keys.size() + 1));
        if (inserted) log.item_keys.push_back(rec.item);
        const ItemId item_id = item_it->second;
        if (!rec.category.empty() && !log.categories.count(item_id)) {
            log.categories.emplace(item_id, rec.category);
        }

        auto [user_it, user_inserted] = user_index.emplace(rec.user, per_user.size());
        if (user_inserted) {
            per_user.emplace_back();
            user_order.push_back(rec.user);
        }
        per_user[user_it->second].push_back({rec.ts, item_id});
    }

    log.catalog_size = static_cast<ItemId>(log.item_keys.size());
    log.histories.reserve(per_user.size());
    for (std::size_t u = 0; u < per_user.size(); ++u) {
        auto& records = per_user[u];
        std::stable_sort(records.begin(), records.end(),
                         [](const UserRecord& a, const UserRecord& b) { return a.ts < b.ts; });
        UserHistory h;
        h.user = user_order[u];
        h.items.reserve(records.size());
        h.timestamps.reserve(records.size());
        for (const UserRecord& r : records) {
            h.items.push_back(r.item);
            h.timestamps.push_back(r.ts);
        }
        validate_history(h, log.catalog_size);
        log.histories.push_back(std::move(h));
    }
    return log;
}

InteractionLog filter_users(const InteractionLog& log, int k) {
    GCB_CHECK(k >= 1, ErrorCode::ConfigError, "horizon k must be >= 1");
    const std::size_t min_len = 3 * static_cast<std::size_t>(k) + 1;

    InteractionLog out;
    std::vector<bool> item_retained(log.item_keys.size(), false);
    for (const UserHistory& h : log.histories) {
        if (h.items.size() < min_len) continue;
        for (ItemId id : h.items) item_retained[std::size_t(id) - 1] = true;
    }

    // Old -> new id map, preserving relative order of retained ids.
    std::vector<ItemId> remap(log.item_keys.size(), 0);
    for (std::size_t i = 0; i < item_retained.size(); ++i) {
        if (!item_retained[i]) continue;
        out.item_keys.push_back(log.item_keys[i]);
        remap[i] = static_cast<ItemId>(out.item_keys.size());
        out.item_ids.emplace(log.item_keys[i], remap[i]);
    }
    out.catalog_size = static_cast<ItemId>(out.item_keys.size());

    for (const auto& [old_id, category] : log.categories) {
        if (remap[std::size_t(old_id) - 1] != 0) {
            out.categories.emplace(remap[std::size_t(old_id) - 1], category);
        }
    }

    for (const UserHistory& h : log.histories) {
        if (h.items.size() < min_len) continue;
        UserHistory nh;
        nh.user = h.user;
        nh.timestamps = h.timestamps;
        nh.items.reserve(h.items.size());
        for (ItemId id : h.items) nh.items.push_back(remap[std::size_t(id) - 1]);
        out.histories.push_back(std::move(nh));
    }
    return out;
}

std::vector<SplitExample> split_leave_k(const InteractionLog& log, int k, bool augment_train) {
    GCB_CHECK(k >= 1, ErrorCode::ConfigError, "horizon k must be >= 1");

    std::vector<const UserHistory*> order;
    order.reserve(log.histories.size());
    for (const UserHistory& h : log.histories) order.push_back(&h);
    std::sort(order.begin(), order.end(),
              [](const UserHistory* a, const UserHistory* b) { return a->user < b->user; });

    auto make_example = [](const UserHistory& h, Segment seg, std::size_t input_len,
                           std::size_t target_start, int k) {
        SplitExample ex;
        ex.user = h.user;
        ex.segment = seg;
        ex.input_items.assign(h.items.begin(), h.items.begin() + input_len);
        ex.target.items.assign(h.items.begin() + target_start,
                               h.items.begin() + target_start + k);
        return ex;
    };

    std::vector<SplitExample> out;
    for (const UserHistory* hp : order) {
        const UserHistory& h = *hp;
        const std::size_t n = h.items.size();
        if (n < 3 * static_cast<std::size_t>(k) + 1) {
            raise(ErrorCode::HistoryTooShort,
                  "user '" + h.user + "' has " + std::to_string(n) + " < " +
                      std::to_string(3 * k + 1) + " interactions");
        }
        const std::size_t uk = static_cast<std::size_t>(k);
        if (augment_train) {
            for (std::size_t i = 1; i <= n - 3 * uk; ++i) {
                out.push_back(make_example(h, Segment::Train, i, i, k));
            }
        } else {
            out.push_back(make_example(h, Segment::Train, n - 3 * uk, n - 3 * uk, k));
        }
        out.push_back(make_example(h, Segment::Valid, n - 2 * uk, n - 2 * uk, k));
        out.push_back(make_example(h, Segment::Test, n - uk, n - uk, k));
    }
    return out;
}

void write_splits_jsonl(std::ostream& out, const std::vector<SplitExample>& splits) {
    for (const SplitExample& ex : splits) {
        nlohmann::json obj;
        obj["user"] = ex.user;
        obj["segment"] = segment_name(ex.segment);
        obj["input"] = ex.input_items;
        obj["target"] = ex.target.items;
        out << obj.dump() << '\n';
    }
}

std::vector<SplitExample> read_splits_jsonl(std::istream& in) {
    std::vector<SplitExample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            raise(ErrorCode::MalformedRecord,
                  "splits line " + std::to_string(line_no) + ": " + e.what());
        }
        SplitExample ex;
        try {
            ex.user = obj.at("user").get<std::string>();
            ex.segment = parse_segment(obj.at("segment").get<std::string>());
            ex.input_items = obj.at("input").get<std::vector<ItemId>>();
            ex.target.items = obj.at("target").get<std::vector<ItemId>>();
        } catch (const nlohmann::json::exception& e) {
            raise(ErrorCode::MalformedRecord,
                  "splits line " + std::to_string(line_no) + ": " + e.what());
        }
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace gcb
