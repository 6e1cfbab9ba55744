// Pipeline subcommand implementations shared by the CLI and the test suites.
// Training runs in float32; checkpoints and reports are deterministic per
// seed.

#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "gcb/config.hpp"
#include "gcb/data_ingest.hpp"
#include "gcb/metrics.hpp"

namespace gcb {

using Real = float;

struct PrepareResult {
    IngestStats stats;
    std::size_t split_examples = 0;
};

struct TrainCodesResult {
    double initial_recon_mse = 0;
    double final_recon_mse = 0;
    std::vector<double> utilization;  // per quantization level
    int code_length = 0;              // including the collision position
    ItemId items = 0;
};

struct TrainGenResult {
    int epochs_run = 0;
    int best_epoch = -1;
    double best_metric = 0;
    double final_loss = 0;
};

struct EvaluateResult {
    EvalReport report;
    std::size_t users = 0;
};

// Parse, filter (3k+1), split; writes splits.jsonl, dataset_meta.json and
// item_categories.tsv (when categories exist) under out_dir.
PrepareResult cmd_prepare(const RunConfig& cfg, std::ostream& log);

// Train the RQ codec on file-provided or random item features; writes the
// codec checkpoint and the CodeMap CSV.
TrainCodesResult cmd_train_codes(const RunConfig& cfg, std::ostream& log);

// Train the generator on the train split with greedy first-step hit rate on
// the validation split for early stopping; writes the model checkpoint and
// the training log CSV.
TrainGenResult cmd_train_gen(const RunConfig& cfg, std::ostream& log);

// Beam-search the test split and emit metrics CSV/JSON plus predictions.
EvaluateResult cmd_evaluate(const RunConfig& cfg, std::ostream& log);

// Emit the L1/L2 category histogram CSV.
void cmd_analyze(const RunConfig& cfg, std::ostream& log);

// ---- helpers shared with tests ----

// History tokens = max_history_items * code length; target adds EOS.
std::vector<GenExample> make_gen_examples(const std::vector<SplitExample>& splits,
                                          Segment segment, const CodeMap& map,
                                          const Vocabulary& vocab, int max_history_items);

void write_categories_tsv(std::ostream& out, const std::map<ItemId, std::string>& categories);
std::map<ItemId, std::string> read_categories_tsv(std::istream& in);

// item_id,v1,...,v_dx rows (comma or tab separated); must cover 1..M.
Matrix<Real> load_features_csv(std::istream& in, ItemId item_count, int d_x);

}  // namespace gcb
