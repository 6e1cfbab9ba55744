#include "gcb/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "gcb/beam_decoder.hpp"
#include "gcb/checkpoint.hpp"
#include "gcb/codemap.hpp"
#include "gcb/tokenizer.hpp"

namespace gcb {

namespace {

namespace fs = std::filesystem;

void ensure_out_dir(const RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
}

InteractionLog load_raw(const RunConfig& cfg) {
    std::ifstream in(cfg.data.path);
    if (!in) raise(ErrorCode::IoError, "cannot open dataset " + cfg.data.path);
    return parse_interactions(in, parse_log_format(cfg.data.format));
}

struct DatasetMeta {
    int k = 0;
    ItemId catalog_size = 0;
    std::size_t users = 0;
    std::vector<std::string> item_keys;
};

void write_dataset_meta(const RunConfig& cfg, const InteractionLog& log) {
    nlohmann::json obj;
    obj["format_version"] = 1;
    obj["k"] = cfg.data.k;
    obj["catalog_size"] = log.catalog_size;
    obj["users"] = log.histories.size();
    obj["item_keys"] = log.item_keys;
    obj["seeds"] = {{"data", cfg.seeds.data},
                    {"codec", cfg.seeds.codec},
                    {"model", cfg.seeds.model}};
    write_file_atomic(cfg.dataset_meta_path(), obj.dump(2));
}

DatasetMeta read_dataset_meta(const RunConfig& cfg) {
    nlohmann::json obj;
    try {
        obj = nlohmann::json::parse(read_file(cfg.dataset_meta_path()));
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::IoError, std::string("bad dataset meta: ") + e.what());
    }
    DatasetMeta meta;
    meta.k = obj.at("k").get<int>();
    meta.catalog_size = obj.at("catalog_size").get<ItemId>();
    meta.users = obj.at("users").get<std::size_t>();
    meta.item_keys = obj.at("item_keys").get<std::vector<std::string>>();
    return meta;
}

std::vector<SplitExample> load_splits(const RunConfig& cfg) {
    std::ifstream in(cfg.splits_path());
    if (!in) raise(ErrorCode::IoError, "cannot open splits " + cfg.splits_path().string());
    return read_splits_jsonl(in);
}

CodecCheckpoint<Real> load_codec(const RunConfig& cfg) {
    return load_codec_checkpoint<Real>(read_file(cfg.codec_checkpoint_path()));
}

CodeMap load_codemap(const RunConfig& cfg, const Vocabulary& vocab) {
    std::ifstream in(cfg.codemap_path());
    if (!in) raise(ErrorCode::IoError, "cannot open codemap " + cfg.codemap_path().string());
    return read_codemap_csv(in, vocab.position_sizes());
}

int history_token_budget(const RunConfig& cfg, const Vocabulary& vocab) {
    return cfg.data.max_history_items * vocab.positions();
}

}  // namespace

std::vector<GenExample> make_gen_examples(const std::vector<SplitExample>& splits,
                                          Segment segment, const CodeMap& map,
                                          const Vocabulary& vocab, int max_history_items) {
    std::vector<GenExample> out;
    const int max_len = max_history_items * vocab.positions();
    for (const SplitExample& split : splits) {
        if (split.segment != segment) continue;
        GenExample ex;
        TokenSequence src = tokenize_history(split.input_items, map, vocab, max_len);
        TokenSequence tgt = tokenize_target(split.target, map, vocab);
        ex.src = std::move(src.tokens);
        ex.src_mask = std::move(src.mask);
        ex.tgt = std::move(tgt.tokens);
        out.push_back(std::move(ex));
    }
    return out;
}

void write_categories_tsv(std::ostream& out, const std::map<ItemId, std::string>& categories) {
    for (const auto& [item, category] : categories) {
        out << item << '\t' << category << '\n';
    }
}

std::map<ItemId, std::string> read_categories_tsv(std::istream& in) {
    std::map<ItemId, std::string> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            raise(ErrorCode::MalformedRecord,
                  "categories line " + std::to_string(line_no) + ": missing tab");
        }
        try {
            out[static_cast<ItemId>(std::stol(line.substr(0, tab)))] = line.substr(tab + 1);
        } catch (const std::exception&) {
            raise(ErrorCode::MalformedRecord,
                  "categories line " + std::to_string(line_no) + ": bad item id");
        }
    }
    return out;
}

Matrix<Real> load_features_csv(std::istream& in, ItemId item_count, int d_x) {
    Matrix<Real> features = Matrix<Real>::Zero(item_count, d_x);
    std::vector<bool> seen(std::size_t(item_count), false);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        for (char& c : line) {
            if (c == '\t') c = ',';
        }
        std::stringstream ss(line);
        std::string field;
        std::vector<double> values;
        while (std::getline(ss, field, ',')) {
            try {
                values.push_back(std::stod(field));
            } catch (const std::exception&) {
                raise(ErrorCode::MalformedRecord,
                      "features line " + std::to_string(line_no) + ": bad number");
            }
        }
        if (static_cast<int>(values.size()) != d_x + 1) {
            raise(ErrorCode::MalformedRecord,
                  "features line " + std::to_string(line_no) + ": expected item_id + " +
                      std::to_string(d_x) + " values");
        }
        const auto id = static_cast<ItemId>(values[0]);
        if (id < 1 || id > item_count) {
            raise(ErrorCode::ItemOutOfRange, "features item " + std::to_string(id));
        }
        for (int c = 0; c < d_x; ++c) {
            features(id - 1, c) = static_cast<Real>(values[std::size_t(c) + 1]);
        }
        seen[std::size_t(id) - 1] = true;
    }
    for (ItemId id = 1; id <= item_count; ++id) {
        if (!seen[std::size_t(id) - 1]) {
            raise(ErrorCode::MissingField, "features for item " + std::to_string(id));
        }
    }
    return features;
}

PrepareResult cmd_prepare(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    if (cfg.data.path.empty()) raise(ErrorCode::ConfigError, "data.path not set");
    ensure_out_dir(cfg);

    const InteractionLog raw = load_raw(cfg);
    PrepareResult result;
    result.stats.users_before = raw.histories.size();
    result.stats.items_before = raw.catalog_size;
    for (const UserHistory& h : raw.histories) result.stats.records += h.items.size();

    const InteractionLog filtered = filter_users(raw, cfg.data.k);
    result.stats.users_after = filtered.histories.size();
    result.stats.items_after = filtered.catalog_size;

    const std::vector<SplitExample> splits =
        split_leave_k(filtered, cfg.data.k, cfg.data.augment_sliding_window);
    result.split_examples = splits.size();

    std::ostringstream split_text;
    write_splits_jsonl(split_text, splits);
    write_file_atomic(cfg.splits_path(), split_text.str());
    write_dataset_meta(cfg, filtered);
    if (!filtered.categories.empty()) {
        std::ostringstream cat_text;
        write_categories_tsv(cat_text, filtered.categories);
        write_file_atomic(cfg.categories_path(), cat_text.str());
    }

    if (!cfg.quiet) {
        log << "records: " << result.stats.records << "\n"
            << "users before filter: " << result.stats.users_before
            << ", after (>= " << 3 * cfg.data.k + 1 << " interactions): "
            << result.stats.users_after << "\n"
            << "items before filter: " << result.stats.items_before
            << ", after: " << result.stats.items_after << "\n"
            << "split examples written: " << result.split_examples << "\n";
    }
    return result;
}

TrainCodesResult cmd_train_codes(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    ensure_out_dir(cfg);
    const DatasetMeta meta = read_dataset_meta(cfg);
    GCB_CHECK(meta.catalog_size >= 1, ErrorCode::ConfigError, "empty catalog; run prepare");

    RqvaeConfig codec_cfg = cfg.codec;
    codec_cfg.seed = cfg.seeds.codec;
    codec_cfg.quiet = cfg.quiet;

    Matrix<Real> features;
    if (!cfg.data.features_path.empty()) {
        std::ifstream in(cfg.data.features_path);
        if (!in) raise(ErrorCode::IoError, "cannot open features " + cfg.data.features_path);
        features = load_features_csv(in, meta.catalog_size, codec_cfg.d_x);
    } else {
        features = random_features<Real>(meta.catalog_size, codec_cfg.d_x, cfg.seeds.data).rows;
    }

    RqvaeModel<Real> model = init_rqvae<Real>(codec_cfg);
    const RqvaeTrainStats stats = train_rqvae(model, features);
    const CodeMap map = assign_semantic_ids(features, model);
    const Vocabulary vocab = Vocabulary::from_codemap(map);

    write_file_atomic(cfg.codec_checkpoint_path(), codec_checkpoint_json(model, vocab));
    std::ostringstream map_text;
    write_codemap_csv(map_text, map);
    write_file_atomic(cfg.codemap_path(), map_text.str());

    TrainCodesResult result;
    result.initial_recon_mse = stats.initial_recon_mse;
    result.final_recon_mse = stats.final_recon_mse;
    result.utilization = codebook_utilization(model, features);
    result.code_length = map.code_length();
    result.items = map.item_count();
    if (!cfg.quiet) {
        log << "items: " << result.items << ", code length: " << result.code_length << "\n"
            << "recon MSE: initial " << result.initial_recon_mse << ", final "
            << result.final_recon_mse << "\n";
        for (std::size_t l = 0; l < result.utilization.size(); ++l) {
            log << "level " << l + 1 << " codebook utilization: " << result.utilization[l]
                << "\n";
        }
    }
    return result;
}

TrainGenResult cmd_train_gen(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    ensure_out_dir(cfg);
    const CodecCheckpoint<Real> codec = load_codec(cfg);
    const Vocabulary& vocab = codec.vocab;
    const CodeMap map = load_codemap(cfg, vocab);
    const std::vector<SplitExample> splits = load_splits(cfg);

    const std::vector<GenExample> train_set =
        make_gen_examples(splits, Segment::Train, map, vocab, cfg.data.max_history_items);
    const std::vector<GenExample> valid_set =
        make_gen_examples(splits, Segment::Valid, map, vocab, cfg.data.max_history_items);
    GCB_CHECK(!train_set.empty(), ErrorCode::ConfigError, "no train examples; run prepare");

    const int target_len = cfg.data.k * vocab.positions() + 1;  // codes + EOS
    ModelConfig mcfg;
    mcfg.enc_layers = cfg.model.enc_layers;
    mcfg.dec_layers = cfg.model.dec_layers;
    mcfg.hidden = cfg.model.hidden;
    mcfg.ff_dim = cfg.model.ff_dim;
    mcfg.heads = cfg.model.heads;
    mcfg.dropout = cfg.model.dropout;
    mcfg.init_std = cfg.model.init_std;
    mcfg.vocab_size = vocab.size();
    mcfg.max_positions =
        std::max(history_token_budget(cfg, vocab), target_len) + 1;
    mcfg.seed = cfg.seeds.model;

    TrainConfig tcfg;
    tcfg.lr = cfg.train.lr;
    tcfg.batch = cfg.train.batch;
    tcfg.max_epochs = cfg.train.max_epochs;
    tcfg.warmup_epochs = cfg.train.warmup_epochs;
    tcfg.patience = cfg.train.patience;
    tcfg.eval_every = cfg.train.eval_every;
    tcfg.max_grad_norm = cfg.train.max_grad_norm;
    tcfg.seed = cfg.seeds.model;

    // Early-stopping metric: greedy-decoded first-step hit rate on validation.
    std::function<double(TransformerModel<Real>&)> val_metric;
    std::vector<ItemId> first_truths;
    for (const SplitExample& split : splits) {
        if (split.segment == Segment::Valid) first_truths.push_back(split.target.items[0]);
    }
    if (!valid_set.empty()) {
        const int max_len = target_len;
        val_metric = [&valid_set, &first_truths, &map, &vocab,
                      max_len](TransformerModel<Real>& m) {
            double hits = 0;
            for (std::size_t i = 0; i < valid_set.size(); ++i) {
                const StepScorer scorer =
                    make_model_scorer(m, valid_set[i].src, valid_set[i].src_mask);
                const std::vector<int> tokens =
                    greedy_decode(scorer, m.cfg.vocab_size, max_len);
                const std::vector<DecodedBlock> blocks = detokenize_blocks(tokens, map, vocab);
                if (!blocks.empty() && std::holds_alternative<ItemId>(blocks[0]) &&
                    std::get<ItemId>(blocks[0]) == first_truths[i]) {
                    hits += 1;
                }
            }
            return valid_set.empty() ? 0.0 : hits / double(valid_set.size());
        };
    }

    TransformerModel<Real> model = init_transformer<Real>(mcfg);
    const GenTrainResult train_result = train_generator(model, train_set, val_metric, tcfg);

    write_file_atomic(cfg.model_checkpoint_path(),
                      model_checkpoint_json(model, vocab, train_result.best_epoch));
    std::ostringstream log_text;
    log_text << "epoch,loss,val_metric\n";
    log_text.precision(17);
    for (const TrainLogRow& row : train_result.log) {
        log_text << row.epoch << ',' << row.loss << ',';
        if (row.val_metric) log_text << *row.val_metric;
        log_text << '\n';
    }
    write_file_atomic(cfg.train_log_path(), log_text.str());

    TrainGenResult result;
    result.epochs_run = train_result.log.empty() ? 0 : train_result.log.back().epoch;
    result.best_epoch = train_result.best_epoch;
    result.best_metric = train_result.best_metric;
    result.final_loss = train_result.log.empty() ? 0.0 : train_result.log.back().loss;
    if (!cfg.quiet) {
        log << "epochs run: " << result.epochs_run << ", best epoch: " << result.best_epoch
            << ", best val metric: " << result.best_metric << ", final loss: "
            << result.final_loss << "\n";
    }
    return result;
}

EvaluateResult cmd_evaluate(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    ensure_out_dir(cfg);
    const CodecCheckpoint<Real> codec = load_codec(cfg);
    ModelCheckpoint<Real> model_ckpt =
        load_model_checkpoint<Real>(read_file(cfg.model_checkpoint_path()));
    if (codec.vocab.position_sizes() != model_ckpt.vocab.position_sizes()) {
        raise(ErrorCode::CheckpointMismatch,
              "codec and model checkpoints disagree on the vocabulary");
    }
    const Vocabulary& vocab = codec.vocab;
    const CodeMap map = load_codemap(cfg, vocab);
    const std::vector<SplitExample> splits = load_splits(cfg);

    const int k = cfg.data.k;
    const int max_len = k * vocab.positions() + 1;
    const int top_k = *std::max_element(cfg.eval.metric_ks.begin(), cfg.eval.metric_ks.end());

    std::vector<TrajectoryPrediction> preds;
    std::vector<FutureTarget> truths;
    std::ostringstream pred_text;
    for (const SplitExample& split : splits) {
        if (split.segment != Segment::Test) continue;
        GCB_CHECK(static_cast<int>(split.target.items.size()) == k, ErrorCode::HorizonMismatch,
                  "test target length != k");
        TokenSequence src =
            tokenize_history(split.input_items, map, vocab, history_token_budget(cfg, vocab));
        const std::vector<BeamCandidate> beams =
            beam_search(model_ckpt.model, src.tokens, src.mask, cfg.eval.beam_size, max_len);
        TrajectoryPrediction pred = beams_to_trajectories(beams, map, vocab, k, top_k);

        nlohmann::json row;
        row["user"] = split.user;
        nlohmann::json steps = nlohmann::json::array();
        for (const RankedStepList& list : pred.steps) steps.push_back(list.candidates);
        row["steps"] = std::move(steps);
        row["beam_logprobs"] = pred.beam_logprobs;
        pred_text << row.dump() << '\n';

        preds.push_back(std::move(pred));
        truths.push_back(split.target);
    }

    EvaluateResult result;
    result.users = preds.size();
    result.report = aggregate(preds, truths, k, cfg.eval.metric_ks);

    std::ostringstream metrics_text;
    write_metrics_csv(metrics_text, result.report);
    write_file_atomic(cfg.metrics_csv_path(), metrics_text.str());
    write_file_atomic(cfg.metrics_json_path(), metrics_json(result.report));
    write_file_atomic(cfg.predictions_path(), pred_text.str());

    if (!cfg.quiet) {
        log << "evaluated users: " << result.users << "\n";
        for (const auto& [name, value] : result.report.named_values()) {
            log << name << " = " << value << "\n";
        }
    }
    return result;
}

void cmd_analyze(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    ensure_out_dir(cfg);
    const CodecCheckpoint<Real> codec = load_codec(cfg);
    const CodeMap map = load_codemap(cfg, codec.vocab);
    std::ifstream in(cfg.categories_path());
    if (!in) {
        raise(ErrorCode::NoCategories,
              "no category metadata at " + cfg.categories_path().string());
    }
    const std::map<ItemId, std::string> categories = read_categories_tsv(in);
    const ClusterReport report = analyze_hierarchy(map, categories);
    std::ostringstream text;
    write_cluster_report_csv(text, report);
    write_file_atomic(cfg.cluster_report_path(), text.str());
    if (!cfg.quiet) {
        log << "cluster report rows: " << report.rows.size() << "\n";
    }
}

}  // namespace gcb
