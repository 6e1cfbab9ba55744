// Versioned JSON checkpoints for the codec and the generator, plus atomic
// file writes. Matrices are stored row-major.

#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "gcb/generator.hpp"
#include "gcb/rq_codec.hpp"
#include "gcb/tokenizer.hpp"

namespace gcb {

inline constexpr int kCheckpointFormatVersion = 1;

// Writes to "<path>.tmp" and renames so readers never observe partial output.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) raise(ErrorCode::IoError, "cannot open " + tmp.string());
        out << content;
        if (!out) raise(ErrorCode::IoError, "write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorCode::IoError, "cannot open " + path.string());
    std::string content((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
    return content;
}

template <class S>
nlohmann::json mat_to_json(const ad::Mat<S>& m) {
    nlohmann::json obj;
    obj["rows"] = m.rows();
    obj["cols"] = m.cols();
    std::vector<double> data;
    data.reserve(std::size_t(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(double(m(r, c)));
    }
    obj["data"] = std::move(data);
    return obj;
}

template <class S>
ad::Mat<S> mat_from_json(const nlohmann::json& obj) {
    const auto rows = obj.at("rows").get<Eigen::Index>();
    const auto cols = obj.at("cols").get<Eigen::Index>();
    const auto data = obj.at("data").get<std::vector<double>>();
    GCB_CHECK(static_cast<Eigen::Index>(data.size()) == rows * cols,
              ErrorCode::CheckpointMismatch, "tensor payload size mismatch");
    ad::Mat<S> m(rows, cols);
    std::size_t i = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = static_cast<S>(data[i++]);
    }
    return m;
}

inline void check_header(const nlohmann::json& obj, const std::string& kind) {
    if (!obj.contains("format_version") ||
        obj.at("format_version").get<int>() != kCheckpointFormatVersion) {
        raise(ErrorCode::CheckpointMismatch, "unsupported checkpoint format_version");
    }
    if (obj.value("kind", "") != kind) {
        raise(ErrorCode::CheckpointMismatch,
              "expected checkpoint kind '" + kind + "', got '" + obj.value("kind", "") + "'");
    }
}

// ---------------------------------------------------------------------------
// Codec checkpoint (encoder/decoder/codebooks + vocabulary spec)
// ---------------------------------------------------------------------------

template <class S>
std::string codec_checkpoint_json(RqvaeModel<S>& model, const Vocabulary& vocab) {
    nlohmann::json obj;
    obj["format_version"] = kCheckpointFormatVersion;
    obj["kind"] = "gcb_rq_codec";
    obj["seed"] = model.cfg.seed;
    obj["config"] = {
        {"level_sizes", model.cfg.level_sizes},
        {"d_x", model.cfg.d_x},
        {"d", model.cfg.d},
        {"mlp_widths", model.cfg.mlp_widths},
        {"epochs", model.cfg.epochs},
        {"lr", model.cfg.lr},
        {"beta", model.cfg.beta},
        {"batch", model.cfg.batch},
        {"kmeans_iters", model.cfg.kmeans_iters},
        {"kmeans_restarts", model.cfg.kmeans_restarts},
        {"init_std", model.cfg.init_std},
    };
    obj["vocab"] = {{"position_sizes", vocab.position_sizes()},
                    {"pad", Vocabulary::kPad},
                    {"eos", Vocabulary::kEos},
                    {"bos", Vocabulary::kBos}};
    nlohmann::json tensors = nlohmann::json::object();
    for (const auto& [name, mat] : model.named_tensors()) {
        tensors[name] = mat_to_json(*mat);
    }
    obj["tensors"] = std::move(tensors);
    return obj.dump();
}

template <class S>
struct CodecCheckpoint {
    RqvaeModel<S> model;
    Vocabulary vocab;
};

template <class S>
CodecCheckpoint<S> load_codec_checkpoint(const std::string& json_text) {
    nlohmann::json obj;
    try {
        obj = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::CheckpointMismatch, std::string("bad codec checkpoint: ") + e.what());
    }
    check_header(obj, "gcb_rq_codec");
    CodecCheckpoint<S> out;
    const nlohmann::json& cfg = obj.at("config");
    out.model.cfg.level_sizes = cfg.at("level_sizes").get<std::vector<int>>();
    out.model.cfg.d_x = cfg.at("d_x").get<int>();
    out.model.cfg.d = cfg.at("d").get<int>();
    out.model.cfg.mlp_widths = cfg.at("mlp_widths").get<std::vector<int>>();
    out.model.cfg.epochs = cfg.at("epochs").get<int>();
    out.model.cfg.lr = cfg.at("lr").get<double>();
    out.model.cfg.beta = cfg.at("beta").get<double>();
    out.model.cfg.batch = cfg.at("batch").get<int>();
    out.model.cfg.kmeans_iters = cfg.at("kmeans_iters").get<int>();
    out.model.cfg.kmeans_restarts = cfg.at("kmeans_restarts").get<int>();
    out.model.cfg.init_std = cfg.at("init_std").get<double>();
    out.model.cfg.seed = obj.at("seed").get<std::uint64_t>();

    // Rebuild with the right shapes, then overwrite every tensor.
    out.model = [&] {
        RqvaeModel<S> m = init_rqvae<S>(out.model.cfg);
        return m;
    }();
    const nlohmann::json& tensors = obj.at("tensors");
    for (auto& [name, mat] : out.model.named_tensors()) {
        if (!tensors.contains(name)) {
            raise(ErrorCode::CheckpointMismatch, "codec checkpoint missing tensor " + name);
        }
        *mat = mat_from_json<S>(tensors.at(name));
    }
    out.vocab = Vocabulary(obj.at("vocab").at("position_sizes").get<std::vector<int>>());
    return out;
}

// ---------------------------------------------------------------------------
// Generator checkpoint
// ---------------------------------------------------------------------------

template <class S>
std::string model_checkpoint_json(TransformerModel<S>& model, const Vocabulary& vocab,
                                  int best_epoch) {
    nlohmann::json obj;
    obj["format_version"] = kCheckpointFormatVersion;
    obj["kind"] = "gcb_generator";
    obj["seed"] = model.cfg.seed;
    obj["best_epoch"] = best_epoch;
    obj["config"] = {
        {"enc_layers", model.cfg.enc_layers}, {"dec_layers", model.cfg.dec_layers},
        {"hidden", model.cfg.hidden},         {"ff_dim", model.cfg.ff_dim},
        {"heads", model.cfg.heads},           {"dropout", model.cfg.dropout},
        {"vocab_size", model.cfg.vocab_size}, {"max_positions", model.cfg.max_positions},
        {"init_std", model.cfg.init_std},
    };
    obj["vocab"] = {{"position_sizes", vocab.position_sizes()}};
    nlohmann::json tensors = nlohmann::json::object();
    for (const auto& [name, mat] : model.named_tensors()) {
        tensors[name] = mat_to_json(*mat);
    }
    obj["tensors"] = std::move(tensors);
    return obj.dump();
}

template <class S>
struct ModelCheckpoint {
    TransformerModel<S> model;
    Vocabulary vocab;
    int best_epoch = -1;
};

template <class S>
ModelCheckpoint<S> load_model_checkpoint(const std::string& json_text) {
    nlohmann::json obj;
    try {
        obj = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::CheckpointMismatch, std::string("bad model checkpoint: ") + e.what());
    }
    check_header(obj, "gcb_generator");
    ModelCheckpoint<S> out;
    const nlohmann::json& cfg = obj.at("config");
    ModelConfig mc;
    mc.enc_layers = cfg.at("enc_layers").get<int>();
    mc.dec_layers = cfg.at("dec_layers").get<int>();
    mc.hidden = cfg.at("hidden").get<int>();
    mc.ff_dim = cfg.at("ff_dim").get<int>();
    mc.heads = cfg.at("heads").get<int>();
    mc.dropout = cfg.at("dropout").get<double>();
    mc.vocab_size = cfg.at("vocab_size").get<int>();
    mc.max_positions = cfg.at("max_positions").get<int>();
    mc.init_std = cfg.at("init_std").get<double>();
    mc.seed = obj.at("seed").get<std::uint64_t>();
    out.model = init_transformer<S>(mc);
    const nlohmann::json& tensors = obj.at("tensors");
    for (auto& [name, mat] : out.model.named_tensors()) {
        if (!tensors.contains(name)) {
            raise(ErrorCode::CheckpointMismatch, "model checkpoint missing tensor " + name);
        }
        *mat = mat_from_json<S>(tensors.at(name));
    }
    out.vocab = Vocabulary(obj.at("vocab").at("position_sizes").get<std::vector<int>>());
    out.best_epoch = obj.value("best_epoch", -1);
    return out;
}

}  // namespace gcb
