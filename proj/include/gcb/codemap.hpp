// Item <-> Semantic-ID assignment with collision avoidance, plus the
// hierarchical cluster report.

#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gcb/data_model.hpp"

namespace gcb {

// Bijective map between items and fixed-length discrete code tuples.
// The final position disambiguates items whose quantization codes collide.
class CodeMap {
public:
    CodeMap() = default;
    CodeMap(std::vector<std::vector<int>> codes, std::vector<int> level_sizes);

    int code_length() const { return static_cast<int>(level_sizes_.size()); }
    const std::vector<int>& level_sizes() const { return level_sizes_; }
    ItemId item_count() const { return static_cast<ItemId>(codes_.size()); }

    // Throws UnknownItem when id is outside 1..M.
    const std::vector<int>& semantic_id(ItemId id) const;

    // Exact reverse lookup; nullopt when the tuple maps to no item.
    std::optional<ItemId> lookup(const std::vector<int>& code) const;

    const std::map<std::vector<int>, ItemId>& code_to_item() const { return code_to_item_; }

private:
    std::vector<std::vector<int>> codes_;  // index id-1 -> code tuple
    std::vector<int> level_sizes_;         // per-position code range
    std::map<std::vector<int>, ItemId> code_to_item_;
};

// Append the collision position to per-item quantization codes: items sharing
// all L codes get 0,1,2,... in ascending item order. The collision position's
// range is the largest collision group. quant_level_sizes are K_1..K_L.
CodeMap build_codemap(const std::vector<std::vector<int>>& quant_codes,
                      const std::vector<int>& quant_level_sizes);

// CSV: header then one row per item: item_id,code_1,...,code_Lc.
void write_codemap_csv(std::ostream& out, const CodeMap& map);
CodeMap read_codemap_csv(std::istream& in, const std::vector<int>& level_sizes);

// ---- Figure-style hierarchy analysis ----

struct ClusterReportRow {
    int l1 = 0;
    int l2 = -1;  // -1 encodes the ALL row for the whole L1 cluster
    std::string category;
    std::int64_t count = 0;
};

struct ClusterReport {
    std::vector<ClusterReportRow> rows;
};

// Per level-1 cluster: category histogram over all items, then per level-2
// sub-cluster histograms ordered by sub-cluster size (desc). Items with no
// category land in "(unknown)". Throws NoCategories when the map is empty.
ClusterReport analyze_hierarchy(const CodeMap& map,
                                const std::map<ItemId, std::string>& categories);

// CSV: l1_code,l2_code_or_ALL,category,count
void write_cluster_report_csv(std::ostream& out, const ClusterReport& report);

}  // namespace gcb
