#include "gcb/codemap.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

namespace gcb {

CodeMap::CodeMap(std::vector<std::vector<int>> codes, std::vector<int> level_sizes)
    : codes_(std::move(codes)), level_sizes_(std::move(level_sizes)) {
    for (std::size_t i = 0; i < codes_.size(); ++i) {
        GCB_CHECK(codes_[i].size() == level_sizes_.size(), ErrorCode::ShapeMismatch,
                  "semantic id length mismatch for item " + std::to_string(i + 1));
        for (std::size_t p = 0; p < codes_[i].size(); ++p) {
            GCB_CHECK(codes_[i][p] >= 0 && codes_[i][p] < level_sizes_[p],
                      ErrorCode::InvariantViolated,
                      "code out of range at position " + std::to_string(p + 1));
        }
        const bool inserted =
            code_to_item_.emplace(codes_[i], static_cast<ItemId>(i + 1)).second;
        GCB_CHECK(inserted, ErrorCode::InvariantViolated,
                  "duplicate semantic id for item " + std::to_string(i + 1));
    }
}

const std::vector<int>& CodeMap::semantic_id(ItemId id) const {
    if (id < 1 || id > item_count()) {
        raise(ErrorCode::UnknownItem, "item " + std::to_string(id));
    }
    return codes_[std::size_t(id) - 1];
}

std::optional<ItemId> CodeMap::lookup(const std::vector<int>& code) const {
    auto it = code_to_item_.find(code);
    if (it == code_to_item_.end()) return std::nullopt;
    return it->second;
}

CodeMap build_codemap(const std::vector<std::vector<int>>& quant_codes,
                      const std::vector<int>& quant_level_sizes) {
    // Group items by code tuple; std::map keeps group iteration deterministic.
    std::map<std::vector<int>, std::vector<ItemId>> groups;
    for (std::size_t i = 0; i < quant_codes.size(); ++i) {
        GCB_CHECK(quant_codes[i].size() == quant_level_sizes.size(), ErrorCode::ShapeMismatch,
                  "quantization code length mismatch");
        groups[quant_codes[i]].push_back(static_cast<ItemId>(i + 1));
    }
    int max_group = 1;
    for (auto& [code, members] : groups) {
        std::sort(members.begin(), members.end());
        max_group = std::max(max_group, static_cast<int>(members.size()));
    }

    std::vector<std::vector<int>> full(quant_codes.size());
    for (const auto& [code, members] : groups) {
        for (std::size_t j = 0; j < members.size(); ++j) {
            std::vector<int> id = code;
            id.push_back(static_cast<int>(j));
            full[std::size_t(members[j]) - 1] = std::move(id);
        }
    }
    std::vector<int> sizes = quant_level_sizes;
    sizes.push_back(max_group);
    return CodeMap(std::move(full), std::move(sizes));
}

void write_codemap_csv(std::ostream& out, const CodeMap& map) {
    out << "item_id";
    for (int p = 1; p <= map.code_length(); ++p) out << ",code_" << p;
    out << '\n';
    for (ItemId id = 1; id <= map.item_count(); ++id) {
        out << id;
        for (int c : map.semantic_id(id)) out << ',' << c;
        out << '\n';
    }
}

CodeMap read_codemap_csv(std::istream& in, const std::vector<int>& level_sizes) {
    std::string line;
    GCB_CHECK(static_cast<bool>(std::getline(in, line)), ErrorCode::MalformedRecord,
              "codemap csv is empty");
    std::vector<std::vector<int>> codes;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<long> values;
        while (std::getline(ss, field, ',')) {
            try {
                values.push_back(std::stol(field));
            } catch (const std::exception&) {
                raise(ErrorCode::MalformedRecord,
                      "codemap line " + std::to_string(line_no) + ": bad field '" + field + "'");
            }
        }
        if (values.size() != level_sizes.size() + 1) {
            raise(ErrorCode::MalformedRecord,
                  "codemap line " + std::to_string(line_no) + ": wrong column count");
        }
        const auto item = static_cast<std::size_t>(values[0]);
        if (codes.size() < item) codes.resize(item);
        codes[item - 1].assign(values.begin() + 1, values.end());
    }
    return CodeMap(std::move(codes), level_sizes);
}

ClusterReport analyze_hierarchy(const CodeMap& map,
                                const std::map<ItemId, std::string>& categories) {
    if (categories.empty()) {
        raise(ErrorCode::NoCategories, "no category metadata supplied");
    }
    GCB_CHECK(map.code_length() >= 1, ErrorCode::ShapeMismatch, "empty code map");
    const bool has_l2 = map.code_length() >= 2;

    auto category_of = [&](ItemId id) -> std::string {
        auto it = categories.find(id);
        return it == categories.end() || it->second.empty() ? "(unknown)" : it->second;
    };

    // l1 -> (l2 -> (category -> count)); l2 = -1 accumulates the whole cluster.
    std::map<int, std::map<int, std::map<std::string, std::int64_t>>> hist;
    std::map<int, std::map<int, std::int64_t>> sizes;
    for (ItemId id = 1; id <= map.item_count(); ++id) {
        const std::vector<int>& code = map.semantic_id(id);
        const int l1 = code[0];
        const int l2 = has_l2 ? code[1] : -1;
        const std::string cat = category_of(id);
        ++hist[l1][-1][cat];
        ++sizes[l1][-1];
        if (has_l2) {
            ++hist[l1][l2][cat];
            ++sizes[l1][l2];
        }
    }

    ClusterReport report;
    for (const auto& [l1, by_l2] : hist) {
        for (const auto& [cat, count] : by_l2.at(-1)) {
            report.rows.push_back({l1, -1, cat, count});
        }
        if (!has_l2) continue;
        // Sub-clusters by size descending, code ascending on ties.
        std::vector<int> l2_codes;
        for (const auto& [l2, counts] : by_l2) {
            if (l2 >= 0) l2_codes.push_back(l2);
        }
        std::sort(l2_codes.begin(), l2_codes.end(), [&](int a, int b) {
            const auto sa = sizes.at(l1).at(a);
            const auto sb = sizes.at(l1).at(b);
            return sa != sb ? sa > sb : a < b;
        });
        for (int l2 : l2_codes) {
            for (const auto& [cat, count] : by_l2.at(l2)) {
                report.rows.push_back({l1, l2, cat, count});
            }
        }
    }
    return report;
}

void write_cluster_report_csv(std::ostream& out, const ClusterReport& report) {
    out << "l1_code,l2_code_or_ALL,category,count\n";
    for (const ClusterReportRow& row : report.rows) {
        out << row.l1 << ',';
        if (row.l2 < 0) {
            out << "ALL";
        } else {
            out << row.l2;
        }
        // Quote the category if it contains separators.
        if (row.category.find_first_of(",\"\n") != std::string::npos) {
            std::string quoted = "\"";
            for (char c : row.category) {
                if (c == '"') quoted += "\"\"";
                else quoted += c;
            }
            quoted += '"';
            out << ',' << quoted;
        } else {
            out << ',' << row.category;
        }
        out << ',' << row.count << '\n';
    }
}

}  // namespace gcb
