// Position-wise and aggregate trajectory metrics (HR/NDCG, arithmetic and
// geometric means over the horizon).

#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "gcb/beam_decoder.hpp"
#include "gcb/data_model.hpp"

namespace gcb {

// "1st", "2nd", "3rd", "4th", ... (handles 11/12/13).
std::string ordinal(int j);

// Fraction of users whose step-j truth appears in the top-K candidates.
double step_hr(const std::vector<TrajectoryPrediction>& preds,
               const std::vector<FutureTarget>& truths, int j, int top_k);

// Single-relevant-item NDCG: 1/log2(rank+1) for a hit at 1-based rank <= K.
double step_ndcg(const std::vector<TrajectoryPrediction>& preds,
                 const std::vector<FutureTarget>& truths, int j, int top_k);

struct EvalReport {
    int horizon = 0;
    std::size_t users = 0;
    std::vector<int> top_ks;
    // per K: hr[j-1], ndcg[j-1] for j = 1..k
    std::map<int, std::vector<double>> hr, ndcg;
    std::map<int, double> mhr, mndcg, shr, sndcg;

    // Table-style names: "MHR@5", "SNDCG@10", "1st_HR@5", "2nd_NDCG@10", ...
    std::vector<std::pair<std::string, double>> named_values() const;
};

// MHR = arithmetic mean over positions, SHR = geometric mean (0 if any factor
// is 0); same for the NDCG variants.
EvalReport aggregate(const std::vector<TrajectoryPrediction>& preds,
                     const std::vector<FutureTarget>& truths, int horizon,
                     const std::vector<int>& top_ks);

// CSV: metric,K,position,value (position empty for aggregates).
void write_metrics_csv(std::ostream& out, const EvalReport& report);
// JSON object mapping table-style names to values, plus horizon/user count.
std::string metrics_json(const EvalReport& report);

}  // namespace gcb
