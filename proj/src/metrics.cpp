#include "gcb/metrics.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace gcb {

std::string ordinal(int j) {
    const int mod100 = j % 100;
    const char* suffix = "th";
    if (mod100 < 11 || mod100 > 13) {
        switch (j % 10) {
            case 1: suffix = "st"; break;
            case 2: suffix = "nd"; break;
            case 3: suffix = "rd"; break;
            default: break;
        }
    }
    return std::to_string(j) + suffix;
}

namespace {

void check_inputs(const std::vector<TrajectoryPrediction>& preds,
                  const std::vector<FutureTarget>& truths, int j, int top_k) {
    GCB_CHECK(preds.size() == truths.size(), ErrorCode::HorizonMismatch,
              "prediction/truth count mismatch");
    GCB_CHECK(j >= 1 && top_k >= 1, ErrorCode::HorizonMismatch, "bad step or K");
    for (const FutureTarget& t : truths) {
        if (static_cast<int>(t.items.size()) < j) {
            raise(ErrorCode::HorizonMismatch,
                  "truth shorter than step " + std::to_string(j));
        }
    }
}

// 1-based rank of the truth in the step list, or 0 on a miss. A missing or
// empty step list is a miss.
int hit_rank(const TrajectoryPrediction& pred, ItemId truth, int j, int top_k) {
    if (static_cast<int>(pred.steps.size()) < j) return 0;
    const RankedStepList& list = pred.steps[std::size_t(j) - 1];
    const int limit = std::min<int>(top_k, static_cast<int>(list.candidates.size()));
    for (int r = 0; r < limit; ++r) {
        if (list.candidates[std::size_t(r)] == truth) return r + 1;
    }
    return 0;
}

}  // namespace

double step_hr(const std::vector<TrajectoryPrediction>& preds,
               const std::vector<FutureTarget>& truths, int j, int top_k) {
    check_inputs(preds, truths, j, top_k);
    if (preds.empty()) return 0.0;
    double hits = 0;
    for (std::size_t u = 0; u < preds.size(); ++u) {
        if (hit_rank(preds[u], truths[u].items[std::size_t(j) - 1], j, top_k) > 0) {
            hits += 1;
        }
    }
    return hits / double(preds.size());
}

double step_ndcg(const std::vector<TrajectoryPrediction>& preds,
                 const std::vector<FutureTarget>& truths, int j, int top_k) {
    check_inputs(preds, truths, j, top_k);
    if (preds.empty()) return 0.0;
    double total = 0;
    for (std::size_t u = 0; u < preds.size(); ++u) {
        const int rank = hit_rank(preds[u], truths[u].items[std::size_t(j) - 1], j, top_k);
        if (rank > 0) total += 1.0 / std::log2(double(rank) + 1.0);
    }
    return total / double(preds.size());
}

EvalReport aggregate(const std::vector<TrajectoryPrediction>& preds,
                     const std::vector<FutureTarget>& truths, int horizon,
                     const std::vector<int>& top_ks) {
    GCB_CHECK(horizon >= 1, ErrorCode::HorizonMismatch, "horizon must be >= 1");
    for (const FutureTarget& t : truths) {
        GCB_CHECK(static_cast<int>(t.items.size()) == horizon, ErrorCode::HorizonMismatch,
                  "truth length != horizon");
    }
    EvalReport report;
    report.horizon = horizon;
    report.users = preds.size();
    report.top_ks = top_ks;
    for (int top_k : top_ks) {
        auto& hr = report.hr[top_k];
        auto& ndcg = report.ndcg[top_k];
        double hr_sum = 0, ndcg_sum = 0, hr_prod = 1, ndcg_prod = 1;
        for (int j = 1; j <= horizon; ++j) {
            hr.push_back(step_hr(preds, truths, j, top_k));
            ndcg.push_back(step_ndcg(preds, truths, j, top_k));
            hr_sum += hr.back();
            ndcg_sum += ndcg.back();
            hr_prod *= hr.back();
            ndcg_prod *= ndcg.back();
        }
        report.mhr[top_k] = hr_sum / horizon;
        report.mndcg[top_k] = ndcg_sum / horizon;
        report.shr[top_k] = hr_prod <= 0 ? 0.0 : std::pow(hr_prod, 1.0 / horizon);
        report.sndcg[top_k] = ndcg_prod <= 0 ? 0.0 : std::pow(ndcg_prod, 1.0 / horizon);
    }
    return report;
}

std::vector<std::pair<std::string, double>> EvalReport::named_values() const {
    std::vector<std::pair<std::string, double>> out;
    for (int top_k : top_ks) {
        const std::string k = std::to_string(top_k);
        out.emplace_back("MHR@" + k, mhr.at(top_k));
        out.emplace_back("MNDCG@" + k, mndcg.at(top_k));
        out.emplace_back("SHR@" + k, shr.at(top_k));
        out.emplace_back("SNDCG@" + k, sndcg.at(top_k));
        for (int j = 1; j <= horizon; ++j) {
            out.emplace_back(ordinal(j) + "_HR@" + k, hr.at(top_k)[std::size_t(j) - 1]);
            out.emplace_back(ordinal(j) + "_NDCG@" + k, ndcg.at(top_k)[std::size_t(j) - 1]);
        }
    }
    return out;
}

void write_metrics_csv(std::ostream& out, const EvalReport& report) {
    out << "metric,K,position,value\n";
    std::ostringstream num;
    num.precision(17);
    auto row = [&](const std::string& metric, int top_k, int position, double value) {
        num.str("");
        num << value;
        out << metric << ',' << top_k << ',';
        if (position > 0) out << position;
        out << ',' << num.str() << '\n';
    };
    for (int top_k : report.top_ks) {
        row("MHR", top_k, 0, report.mhr.at(top_k));
        row("MNDCG", top_k, 0, report.mndcg.at(top_k));
        row("SHR", top_k, 0, report.shr.at(top_k));
        row("SNDCG", top_k, 0, report.sndcg.at(top_k));
        for (int j = 1; j <= report.horizon; ++j) {
            row("HR", top_k, j, report.hr.at(top_k)[std::size_t(j) - 1]);
            row("NDCG", top_k, j, report.ndcg.at(top_k)[std::size_t(j) - 1]);
        }
    }
}

std::string metrics_json(const EvalReport& report) {
    nlohmann::json obj;
    obj["horizon"] = report.horizon;
    obj["users"] = report.users;
    nlohmann::json values = nlohmann::json::object();
    for (const auto& [name, value] : report.named_values()) {
        values[name] = value;
    }
    obj["metrics"] = values;
    return obj.dump(2);
}

}  // namespace gcb
