// Run configuration: one JSON file, GCB_<SECTION>_<KEY> environment overrides,
// three named seeds.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gcb/generator.hpp"
#include "gcb/rq_codec.hpp"

namespace gcb {

struct RunConfig {
    struct Data {
        std::string path;
        std::string format = "jsonl";  // jsonl | tsv
        int k = 1;                     // horizon (TARGET_LEN)
        bool augment_sliding_window = false;
        int max_history_items = 20;  // history truncation, in items
        std::string features_path;   // optional item-feature file (csv/tsv)
    } data;

    RqvaeConfig codec;

    struct Model {
        int enc_layers = 4;
        int dec_layers = 4;
        int hidden = 128;
        int ff_dim = 1024;
        int heads = 6;
        double dropout = 0.0;
        double init_std = 0.02;
    } model;

    struct Train {
        double lr = 1e-4;
        int batch = 256;
        int max_epochs = 300;
        int warmup_epochs = 50;
        int patience = 10;
        int eval_every = 1;
        double max_grad_norm = 0.0;
    } train;

    struct Eval {
        int beam_size = 100;
        std::vector<int> metric_ks{5, 10};
    } eval;

    struct Seeds {
        std::uint64_t data = 1;
        std::uint64_t codec = 2;
        std::uint64_t model = 3;
    } seeds;

    std::string out_dir = "out";
    bool quiet = false;

    void validate() const;

    // Paths of pipeline artifacts under out_dir.
    std::filesystem::path splits_path() const;
    std::filesystem::path dataset_meta_path() const;
    std::filesystem::path categories_path() const;
    std::filesystem::path codec_checkpoint_path() const;
    std::filesystem::path codemap_path() const;
    std::filesystem::path model_checkpoint_path() const;
    std::filesystem::path train_log_path() const;
    std::filesystem::path metrics_csv_path() const;
    std::filesystem::path metrics_json_path() const;
    std::filesystem::path predictions_path() const;
    std::filesystem::path cluster_report_path() const;
};

// Parse the JSON config file, then apply GCB_<SECTION>_<KEY> environment
// overrides (values parsed as JSON when possible, else taken as strings).
// Throws ConfigError.
RunConfig load_run_config(const std::filesystem::path& path);

// In-memory variant used by tests; json_text may be "{}" for pure defaults.
RunConfig parse_run_config(const std::string& json_text, bool apply_env = true);

}  // namespace gcb
