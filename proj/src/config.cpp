#include "gcb/config.hpp"

#include <cstdlib>
#include <fstream>

#include <json.hpp>

extern char** environ;

namespace gcb {

namespace {

using nlohmann::json;

template <class T>
void read_into(const json& obj, const char* key, T& target) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    try {
        target = it->get<T>();
    } catch (const json::exception& e) {
        raise(ErrorCode::ConfigError, std::string("config key '") + key + "': " + e.what());
    }
}

void apply_section(const json& obj, const std::string& name, RunConfig& cfg) {
    if (name == "data") {
        read_into(obj, "path", cfg.data.path);
        read_into(obj, "format", cfg.data.format);
        read_into(obj, "k", cfg.data.k);
        read_into(obj, "augment_sliding_window", cfg.data.augment_sliding_window);
        read_into(obj, "max_history_items", cfg.data.max_history_items);
        read_into(obj, "features_path", cfg.data.features_path);
    } else if (name == "codec") {
        read_into(obj, "level_sizes", cfg.codec.level_sizes);
        read_into(obj, "d_x", cfg.codec.d_x);
        read_into(obj, "d", cfg.codec.d);
        read_into(obj, "mlp_widths", cfg.codec.mlp_widths);
        read_into(obj, "epochs", cfg.codec.epochs);
        read_into(obj, "lr", cfg.codec.lr);
        read_into(obj, "beta", cfg.codec.beta);
        read_into(obj, "batch", cfg.codec.batch);
        read_into(obj, "kmeans_iters", cfg.codec.kmeans_iters);
        read_into(obj, "kmeans_restarts", cfg.codec.kmeans_restarts);
        read_into(obj, "init_std", cfg.codec.init_std);
    } else if (name == "model") {
        read_into(obj, "enc_layers", cfg.model.enc_layers);
        read_into(obj, "dec_layers", cfg.model.dec_layers);
        read_into(obj, "hidden", cfg.model.hidden);
        read_into(obj, "ff_dim", cfg.model.ff_dim);
        read_into(obj, "heads", cfg.model.heads);
        read_into(obj, "dropout", cfg.model.dropout);
        read_into(obj, "init_std", cfg.model.init_std);
    } else if (name == "train") {
        read_into(obj, "lr", cfg.train.lr);
        read_into(obj, "batch", cfg.train.batch);
        read_into(obj, "max_epochs", cfg.train.max_epochs);
        read_into(obj, "warmup_epochs", cfg.train.warmup_epochs);
        read_into(obj, "patience", cfg.train.patience);
        read_into(obj, "eval_every", cfg.train.eval_every);
        read_into(obj, "max_grad_norm", cfg.train.max_grad_norm);
    } else if (name == "eval") {
        read_into(obj, "beam_size", cfg.eval.beam_size);
        read_into(obj, "metric_ks", cfg.eval.metric_ks);
    } else if (name == "seeds") {
        read_into(obj, "data", cfg.seeds.data);
        read_into(obj, "codec", cfg.seeds.codec);
        read_into(obj, "model", cfg.seeds.model);
    } else if (name == "out_dir" || name == "quiet") {
        // handled at top level
    } else {
        raise(ErrorCode::ConfigError, "unknown config section '" + name + "'");
    }
}

std::string to_lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

// GCB_<SECTION>_<KEY>=value; value parsed as JSON when valid, else a string.
void apply_env_overrides(RunConfig& cfg) {
    for (char** env = environ; env && *env; ++env) {
        const std::string entry(*env);
        if (entry.rfind("GCB_", 0) != 0) continue;
        const std::size_t eq = entry.find('=');
        if (eq == std::string::npos) continue;
        const std::string name = entry.substr(4, eq - 4);
        const std::string value = entry.substr(eq + 1);
        const std::size_t sep = name.find('_');
        if (sep == std::string::npos) {
            if (to_lower(name) == "out_dir") {
                cfg.out_dir = value;
            }
            continue;
        }
        const std::string section = to_lower(name.substr(0, sep));
        const std::string key = to_lower(name.substr(sep + 1));
        json parsed;
        try {
            parsed = json::parse(value);
        } catch (const json::exception&) {
            parsed = value;
        }
        if (section == "out" && key == "dir") {
            cfg.out_dir = parsed.is_string() ? parsed.get<std::string>() : value;
            continue;
        }
        json obj = json::object();
        obj[key] = parsed;
        apply_section(obj, section, cfg);
    }
}

}  // namespace

void RunConfig::validate() const {
    if (data.k < 1) raise(ErrorCode::ConfigError, "data.k must be >= 1");
    if (data.format != "jsonl" && data.format != "tsv") {
        raise(ErrorCode::ConfigError, "data.format must be jsonl or tsv");
    }
    if (data.max_history_items < 1) {
        raise(ErrorCode::ConfigError, "data.max_history_items must be >= 1");
    }
    if (codec.level_sizes.empty()) {
        raise(ErrorCode::ConfigError, "codec.level_sizes must be non-empty");
    }
    for (int size : codec.level_sizes) {
        if (size < 1) raise(ErrorCode::ConfigError, "codec.level_sizes entries must be >= 1");
    }
    if (codec.d_x < 1 || codec.d < 1 || codec.epochs < 0 || codec.batch < 1) {
        raise(ErrorCode::ConfigError, "bad codec section");
    }
    if (model.enc_layers < 1 || model.dec_layers < 1 || model.hidden < 1 ||
        model.ff_dim < 1 || model.heads < 1 || model.hidden < model.heads) {
        raise(ErrorCode::ConfigError, "bad model section");
    }
    if (train.batch < 1 || train.max_epochs < 0 || train.warmup_epochs < 0 ||
        train.patience < 1 || train.eval_every < 1 || train.lr < 0) {
        raise(ErrorCode::ConfigError, "bad train section");
    }
    if (eval.beam_size < 1 || eval.metric_ks.empty()) {
        raise(ErrorCode::ConfigError, "bad eval section");
    }
    for (int k : eval.metric_ks) {
        if (k < 1) raise(ErrorCode::ConfigError, "eval.metric_ks entries must be >= 1");
    }
    if (out_dir.empty()) raise(ErrorCode::ConfigError, "out_dir must be set");
}

std::filesystem::path RunConfig::splits_path() const {
    return std::filesystem::path(out_dir) / "splits.jsonl";
}
std::filesystem::path RunConfig::dataset_meta_path() const {
    return std::filesystem::path(out_dir) / "dataset_meta.json";
}
std::filesystem::path RunConfig::categories_path() const {
    return std::filesystem::path(out_dir) / "item_categories.csv";
}
std::filesystem::path RunConfig::codec_checkpoint_path() const {
    return std::filesystem::path(out_dir) / "codec_checkpoint.json";
}
std::filesystem::path RunConfig::codemap_path() const {
    return std::filesystem::path(out_dir) / "codemap.csv";
}
std::filesystem::path RunConfig::model_checkpoint_path() const {
    return std::filesystem::path(out_dir) / "model_checkpoint.json";
}
std::filesystem::path RunConfig::train_log_path() const {
    return std::filesystem::path(out_dir) / "train_log.csv";
}
std::filesystem::path RunConfig::metrics_csv_path() const {
    return std::filesystem::path(out_dir) / "metrics.csv";
}
std::filesystem::path RunConfig::metrics_json_path() const {
    return std::filesystem::path(out_dir) / "metrics.json";
}
std::filesystem::path RunConfig::predictions_path() const {
    return std::filesystem::path(out_dir) / "predictions.jsonl";
}
std::filesystem::path RunConfig::cluster_report_path() const {
    return std::filesystem::path(out_dir) / "cluster_report.csv";
}

RunConfig parse_run_config(const std::string& json_text, bool apply_env) {
    json obj;
    try {
        obj = json::parse(json_text);
    } catch (const json::exception& e) {
        raise(ErrorCode::ConfigError, std::string("config parse: ") + e.what());
    }
    if (!obj.is_object()) raise(ErrorCode::ConfigError, "config root must be an object");

    RunConfig cfg;
    for (const auto& [name, section] : obj.items()) {
        if (name == "out_dir") {
            cfg.out_dir = section.get<std::string>();
        } else if (name == "quiet") {
            cfg.quiet = section.get<bool>();
        } else {
            if (!section.is_object()) {
                raise(ErrorCode::ConfigError, "config section '" + name + "' must be an object");
            }
            apply_section(section, name, cfg);
        }
    }
    if (apply_env) apply_env_overrides(cfg);
    cfg.codec.quiet = cfg.quiet;
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorCode::ConfigError, "cannot open config file " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

}  // namespace gcb
