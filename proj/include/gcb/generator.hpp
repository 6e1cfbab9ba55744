// Encoder-decoder transformer over Semantic-ID tokens: pre-LN blocks,
// learned absolute positions, multi-head attention, teacher-forced NLL
// training with Adam, warm-up and early stopping.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gcb/autodiff.hpp"
#include "gcb/common.hpp"
#include "gcb/optim.hpp"
#include "gcb/tokenizer.hpp"

namespace gcb {

struct ModelConfig {
    int enc_layers = 4;
    int dec_layers = 4;
    int hidden = 128;
    int ff_dim = 1024;
    // 128 hidden with 6 heads does not divide evenly; head_dim floors and the
    // output projection maps heads*head_dim back to hidden.
    int heads = 6;
    double dropout = 0.0;
    int vocab_size = 0;
    int max_positions = 128;
    double init_std = 0.02;
    std::uint64_t seed = 3;

    int head_dim() const { return hidden / heads; }

    void validate() const {
        GCB_CHECK(enc_layers >= 1 && dec_layers >= 1, ErrorCode::ConfigError,
                  "layer counts must be >= 1");
        GCB_CHECK(hidden >= 1 && ff_dim >= 1 && heads >= 1, ErrorCode::ConfigError,
                  "model dims must be >= 1");
        GCB_CHECK(hidden >= heads, ErrorCode::ConfigError, "hidden must be >= heads");
        GCB_CHECK(vocab_size > Vocabulary::kSpecialCount, ErrorCode::ConfigError,
                  "vocab size not set");
        GCB_CHECK(max_positions >= 1, ErrorCode::ConfigError, "max_positions must be >= 1");
    }
};

// Parameter containers, templated on the element (matrix or tape var) so the
// same traversal drives init, leaf creation, Adam and checkpoints.
template <class T>
struct AttnP {
    T wq, wk, wv, wo, bq, bk, bv, bo;
    template <class F>
    void visit(const std::string& p, F&& f) {
        f(p + ".wq", wq); f(p + ".bq", bq);
        f(p + ".wk", wk); f(p + ".bk", bk);
        f(p + ".wv", wv); f(p + ".bv", bv);
        f(p + ".wo", wo); f(p + ".bo", bo);
    }
};

template <class T>
struct LnP {
    T g, b;
    template <class F>
    void visit(const std::string& p, F&& f) {
        f(p + ".g", g);
        f(p + ".b", b);
    }
};

template <class T>
struct FfnP {
    T w1, b1, w2, b2;
    template <class F>
    void visit(const std::string& p, F&& f) {
        f(p + ".w1", w1); f(p + ".b1", b1);
        f(p + ".w2", w2); f(p + ".b2", b2);
    }
};

template <class T>
struct EncLayerP {
    LnP<T> ln1; AttnP<T> attn; LnP<T> ln2; FfnP<T> ffn;
    template <class F>
    void visit(const std::string& p, F&& f) {
        ln1.visit(p + ".ln1", f);
        attn.visit(p + ".attn", f);
        ln2.visit(p + ".ln2", f);
        ffn.visit(p + ".ffn", f);
    }
};

template <class T>
struct DecLayerP {
    LnP<T> ln1; AttnP<T> self; LnP<T> lnx; AttnP<T> cross; LnP<T> ln2; FfnP<T> ffn;
    template <class F>
    void visit(const std::string& p, F&& f) {
        ln1.visit(p + ".ln1", f);
        self.visit(p + ".self", f);
        lnx.visit(p + ".lnx", f);
        cross.visit(p + ".cross", f);
        ln2.visit(p + ".ln2", f);
        ffn.visit(p + ".ffn", f);
    }
};

template <class T>
struct TransformerP {
    T tok_emb, pos_emb;
    std::vector<EncLayerP<T>> enc;
    LnP<T> enc_final;
    std::vector<DecLayerP<T>> dec;
    LnP<T> dec_final;
    T out_w, out_b;

    template <class F>
    void visit(F&& f) {
        f("tok_emb", tok_emb);
        f("pos_emb", pos_emb);
        for (std::size_t i = 0; i < enc.size(); ++i) {
            enc[i].visit("enc." + std::to_string(i), f);
        }
        enc_final.visit("enc.final_ln", f);
        for (std::size_t i = 0; i < dec.size(); ++i) {
            dec[i].visit("dec." + std::to_string(i), f);
        }
        dec_final.visit("dec.final_ln", f);
        f("out.w", out_w);
        f("out.b", out_b);
    }
};

template <class S>
struct TransformerModel {
    ModelConfig cfg;
    TransformerP<ad::Mat<S>> p;

    std::vector<ad::Mat<S>*> tensor_ptrs() {
        std::vector<ad::Mat<S>*> out;
        p.visit([&](const std::string&, ad::Mat<S>& m) { out.push_back(&m); });
        return out;
    }
    std::vector<std::pair<std::string, ad::Mat<S>*>> named_tensors() {
        std::vector<std::pair<std::string, ad::Mat<S>*>> out;
        p.visit([&](const std::string& n, ad::Mat<S>& m) { out.emplace_back(n, &m); });
        return out;
    }
};

namespace detail {

template <class S>
ad::Mat<S> gauss_mat(Eigen::Index rows, Eigen::Index cols, Rng& rng, double std_dev) {
    ad::Mat<S> m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = static_cast<S>(rng.gauss() * std_dev);
        }
    }
    return m;
}

template <class S>
AttnP<ad::Mat<S>> init_attn(const ModelConfig& cfg, Rng& rng) {
    const int proj = cfg.heads * cfg.head_dim();
    AttnP<ad::Mat<S>> a;
    a.wq = gauss_mat<S>(cfg.hidden, proj, rng, cfg.init_std);
    a.wk = gauss_mat<S>(cfg.hidden, proj, rng, cfg.init_std);
    a.wv = gauss_mat<S>(cfg.hidden, proj, rng, cfg.init_std);
    a.wo = gauss_mat<S>(proj, cfg.hidden, rng, cfg.init_std);
    a.bq = ad::Mat<S>::Zero(1, proj);
    a.bk = ad::Mat<S>::Zero(1, proj);
    a.bv = ad::Mat<S>::Zero(1, proj);
    a.bo = ad::Mat<S>::Zero(1, cfg.hidden);
    return a;
}

template <class S>
LnP<ad::Mat<S>> init_ln(int dim) {
    return {ad::Mat<S>::Ones(1, dim), ad::Mat<S>::Zero(1, dim)};
}

template <class S>
FfnP<ad::Mat<S>> init_ffn(const ModelConfig& cfg, Rng& rng) {
    FfnP<ad::Mat<S>> f;
    f.w1 = gauss_mat<S>(cfg.hidden, cfg.ff_dim, rng, cfg.init_std);
    f.b1 = ad::Mat<S>::Zero(1, cfg.ff_dim);
    f.w2 = gauss_mat<S>(cfg.ff_dim, cfg.hidden, rng, cfg.init_std);
    f.b2 = ad::Mat<S>::Zero(1, cfg.hidden);
    return f;
}

}  // namespace detail

template <class S>
TransformerModel<S> init_transformer(const ModelConfig& cfg) {
    cfg.validate();
    TransformerModel<S> model;
    model.cfg = cfg;
    Rng rng(cfg.seed);
    model.p.tok_emb = detail::gauss_mat<S>(cfg.vocab_size, cfg.hidden, rng, cfg.init_std);
    model.p.pos_emb = detail::gauss_mat<S>(cfg.max_positions, cfg.hidden, rng, cfg.init_std);
    for (int i = 0; i < cfg.enc_layers; ++i) {
        EncLayerP<ad::Mat<S>> layer;
        layer.ln1 = detail::init_ln<S>(cfg.hidden);
        layer.attn = detail::init_attn<S>(cfg, rng);
        layer.ln2 = detail::init_ln<S>(cfg.hidden);
        layer.ffn = detail::init_ffn<S>(cfg, rng);
        model.p.enc.push_back(std::move(layer));
    }
    model.p.enc_final = detail::init_ln<S>(cfg.hidden);
    for (int i = 0; i < cfg.dec_layers; ++i) {
        DecLayerP<ad::Mat<S>> layer;
        layer.ln1 = detail::init_ln<S>(cfg.hidden);
        layer.self = detail::init_attn<S>(cfg, rng);
        layer.lnx = detail::init_ln<S>(cfg.hidden);
        layer.cross = detail::init_attn<S>(cfg, rng);
        layer.ln2 = detail::init_ln<S>(cfg.hidden);
        layer.ffn = detail::init_ffn<S>(cfg, rng);
        model.p.dec.push_back(std::move(layer));
    }
    model.p.dec_final = detail::init_ln<S>(cfg.hidden);
    model.p.out_w = detail::gauss_mat<S>(cfg.hidden, cfg.vocab_size, rng, cfg.init_std);
    model.p.out_b = ad::Mat<S>::Zero(1, cfg.vocab_size);
    return model;
}

// ---------------------------------------------------------------------------
// Graph building
// ---------------------------------------------------------------------------

template <class S>
using GenLeaves = TransformerP<typename ad::Tape<S>::Var>;

template <class S>
GenLeaves<S> make_gen_leaves(ad::Tape<S>& tape, TransformerModel<S>& model) {
    GenLeaves<S> leaves;
    leaves.enc.resize(model.p.enc.size());
    leaves.dec.resize(model.p.dec.size());
    std::vector<ad::Mat<S>*> mats;
    model.p.visit([&](const std::string&, ad::Mat<S>& m) { mats.push_back(&m); });
    std::vector<typename ad::Tape<S>::Var*> vars;
    leaves.visit([&](const std::string&, typename ad::Tape<S>::Var& v) { vars.push_back(&v); });
    GCB_CHECK(mats.size() == vars.size(), ErrorCode::ShapeMismatch, "leaf traversal mismatch");
    for (std::size_t i = 0; i < mats.size(); ++i) *vars[i] = tape.leaf(*mats[i]);
    return leaves;
}

template <class S>
std::vector<typename ad::Tape<S>::Var> gen_leaf_list(GenLeaves<S>& leaves) {
    std::vector<typename ad::Tape<S>::Var> out;
    leaves.visit([&](const std::string&, typename ad::Tape<S>::Var& v) { out.push_back(v); });
    return out;
}

// Collects attention probabilities for inspection in tests.
template <class S>
struct AttnProbe {
    std::vector<typename ad::Tape<S>::Var> probs;
};

namespace detail {

inline constexpr double kMaskNegative = -1e30;

template <class S>
typename ad::Tape<S>::Var attention(ad::Tape<S>& tape, const AttnP<typename ad::Tape<S>::Var>& p,
                                    typename ad::Tape<S>::Var q_in,
                                    typename ad::Tape<S>::Var kv_in, const ad::Mat<S>& add_mask,
                                    int heads, int head_dim, AttnProbe<S>* probe) {
    using Var = typename ad::Tape<S>::Var;
    Var q = tape.add_rowvec(tape.matmul(q_in, p.wq), p.bq);
    Var k = tape.add_rowvec(tape.matmul(kv_in, p.wk), p.bk);
    Var v = tape.add_rowvec(tape.matmul(kv_in, p.wv), p.bv);
    const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(head_dim));
    std::vector<Var> contexts;
    contexts.reserve(std::size_t(heads));
    for (int h = 0; h < heads; ++h) {
        Var qh = tape.cols(q, h * head_dim, head_dim);
        Var kh = tape.cols(k, h * head_dim, head_dim);
        Var vh = tape.cols(v, h * head_dim, head_dim);
        Var scores = tape.scale(tape.matmul_nt(qh, kh), inv_sqrt);
        Var probs = tape.softmax_rows(scores, &add_mask);
        if (probe) probe->probs.push_back(probs);
        contexts.push_back(tape.matmul(probs, vh));
    }
    return tape.add_rowvec(tape.matmul(tape.hcat(contexts), p.wo), p.bo);
}

template <class S>
typename ad::Tape<S>::Var ffn(ad::Tape<S>& tape, const FfnP<typename ad::Tape<S>::Var>& p,
                              typename ad::Tape<S>::Var x) {
    auto h = tape.relu(tape.add_rowvec(tape.matmul(x, p.w1), p.b1));
    return tape.add_rowvec(tape.matmul(h, p.w2), p.b2);
}

template <class S>
ad::Mat<S> key_padding_mask(Eigen::Index rows, const std::vector<std::uint8_t>& key_mask) {
    ad::Mat<S> m = ad::Mat<S>::Zero(rows, static_cast<Eigen::Index>(key_mask.size()));
    for (std::size_t j = 0; j < key_mask.size(); ++j) {
        if (!key_mask[j]) m.col(static_cast<Eigen::Index>(j)).setConstant(S(kMaskNegative));
    }
    return m;
}

template <class S>
ad::Mat<S> causal_mask(Eigen::Index n) {
    ad::Mat<S> m = ad::Mat<S>::Zero(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = r + 1; c < n; ++c) m(r, c) = S(kMaskNegative);
    }
    return m;
}

// Seeded inverted-dropout masks; only used when dropout > 0.
template <class S>
class DropoutCtx {
public:
    DropoutCtx(double p, Rng* rng) : p_(p), rng_(rng) {}
    typename ad::Tape<S>::Var apply(ad::Tape<S>& tape, typename ad::Tape<S>::Var x) {
        if (p_ <= 0.0 || !rng_) return x;
        const auto& v = tape.value(x);
        ad::Mat<S> mask(v.rows(), v.cols());
        const S keep = S(1) - S(p_);
        for (Eigen::Index r = 0; r < v.rows(); ++r) {
            for (Eigen::Index c = 0; c < v.cols(); ++c) {
                mask(r, c) = rng_->uniform() < p_ ? S(0) : S(1) / keep;
            }
        }
        return tape.hadamard(x, tape.constant(mask));
    }

private:
    double p_;
    Rng* rng_;
};

}  // namespace detail

template <class S>
typename ad::Tape<S>::Var build_encoder(ad::Tape<S>& tape, const GenLeaves<S>& leaves,
                                        const ModelConfig& cfg, const std::vector<int>& tokens,
                                        const std::vector<std::uint8_t>& mask,
                                        AttnProbe<S>* probe = nullptr,
                                        detail::DropoutCtx<S>* drop = nullptr) {
    using Var = typename ad::Tape<S>::Var;
    GCB_CHECK(tokens.size() == mask.size(), ErrorCode::ShapeMismatch, "token/mask length");
    GCB_CHECK(static_cast<int>(tokens.size()) <= cfg.max_positions, ErrorCode::ShapeMismatch,
              "sequence longer than max_positions");
    for (int t : tokens) {
        GCB_CHECK(t >= 0 && t < cfg.vocab_size, ErrorCode::ShapeMismatch,
                  "token outside vocabulary");
    }
    std::vector<int> positions(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) positions[i] = static_cast<int>(i);

    Var x = tape.add(tape.gather_rows(leaves.tok_emb, tokens),
                     tape.gather_rows(leaves.pos_emb, positions));
    if (drop) x = drop->apply(tape, x);
    const ad::Mat<S> attn_mask =
        detail::key_padding_mask<S>(static_cast<Eigen::Index>(tokens.size()), mask);
    for (const EncLayerP<Var>& layer : leaves.enc) {
        Var h = tape.layer_norm(x, layer.ln1.g, layer.ln1.b, S(1e-5));
        Var a = detail::attention(tape, layer.attn, h, h, attn_mask, cfg.heads, cfg.head_dim(),
                                  probe);
        if (drop) a = drop->apply(tape, a);
        x = tape.add(x, a);
        h = tape.layer_norm(x, layer.ln2.g, layer.ln2.b, S(1e-5));
        Var f = detail::ffn(tape, layer.ffn, h);
        if (drop) f = drop->apply(tape, f);
        x = tape.add(x, f);
    }
    return tape.layer_norm(x, leaves.enc_final.g, leaves.enc_final.b, S(1e-5));
}

// dec_in must start with BOS. Returns logits (len(dec_in) x vocab); row t only
// sees dec_in[0..t] and the encoder states.
template <class S>
typename ad::Tape<S>::Var build_decoder(ad::Tape<S>& tape, const GenLeaves<S>& leaves,
                                        const ModelConfig& cfg,
                                        typename ad::Tape<S>::Var enc_states,
                                        const std::vector<std::uint8_t>& enc_mask,
                                        const std::vector<int>& dec_in,
                                        AttnProbe<S>* probe = nullptr,
                                        detail::DropoutCtx<S>* drop = nullptr) {
    using Var = typename ad::Tape<S>::Var;
    GCB_CHECK(!dec_in.empty() && dec_in[0] == Vocabulary::kBos, ErrorCode::ShapeMismatch,
              "decoder prefix must start with BOS");
    GCB_CHECK(static_cast<int>(dec_in.size()) <= cfg.max_positions, ErrorCode::ShapeMismatch,
              "decoder prefix longer than max_positions");
    for (int t : dec_in) {
        GCB_CHECK(t >= 0 && t < cfg.vocab_size, ErrorCode::ShapeMismatch,
                  "token outside vocabulary");
    }
    const auto n = static_cast<Eigen::Index>(dec_in.size());
    std::vector<int> positions(dec_in.size());
    for (std::size_t i = 0; i < dec_in.size(); ++i) positions[i] = static_cast<int>(i);

    Var x = tape.add(tape.gather_rows(leaves.tok_emb, dec_in),
                     tape.gather_rows(leaves.pos_emb, positions));
    if (drop) x = drop->apply(tape, x);
    const ad::Mat<S> self_mask = detail::causal_mask<S>(n);
    const ad::Mat<S> cross_mask = detail::key_padding_mask<S>(n, enc_mask);
    for (const DecLayerP<Var>& layer : leaves.dec) {
        Var h = tape.layer_norm(x, layer.ln1.g, layer.ln1.b, S(1e-5));
        Var a = detail::attention(tape, layer.self, h, h, self_mask, cfg.heads, cfg.head_dim(),
                                  probe);
        if (drop) a = drop->apply(tape, a);
        x = tape.add(x, a);
        h = tape.layer_norm(x, layer.lnx.g, layer.lnx.b, S(1e-5));
        Var c = detail::attention(tape, layer.cross, h, enc_states, cross_mask, cfg.heads,
                                  cfg.head_dim(), probe);
        if (drop) c = drop->apply(tape, c);
        x = tape.add(x, c);
        h = tape.layer_norm(x, layer.ln2.g, layer.ln2.b, S(1e-5));
        Var f = detail::ffn(tape, layer.ffn, h);
        if (drop) f = drop->apply(tape, f);
        x = tape.add(x, f);
    }
    x = tape.layer_norm(x, leaves.dec_final.g, leaves.dec_final.b, S(1e-5));
    return tape.add_rowvec(tape.matmul(x, leaves.out_w), leaves.out_b);
}

// ---------------------------------------------------------------------------
// Plain-value inference wrappers
// ---------------------------------------------------------------------------

template <class S>
ad::Mat<S> encode(TransformerModel<S>& model, const std::vector<int>& tokens,
                  const std::vector<std::uint8_t>& mask) {
    ad::Tape<S> tape;
    GenLeaves<S> leaves = make_gen_leaves(tape, model);
    auto out = build_encoder(tape, leaves, model.cfg, tokens, mask);
    return tape.value(out);
}

template <class S>
std::vector<ad::Mat<S>> encode_batch(TransformerModel<S>& model,
                                     const std::vector<std::vector<int>>& tokens,
                                     const std::vector<std::vector<std::uint8_t>>& masks) {
    GCB_CHECK(tokens.size() == masks.size(), ErrorCode::ShapeMismatch, "batch size mismatch");
    std::vector<ad::Mat<S>> out;
    out.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        out.push_back(encode(model, tokens[i], masks[i]));
    }
    return out;
}

template <class S>
ad::Mat<S> decode_logits(TransformerModel<S>& model, const ad::Mat<S>& enc_states,
                         const std::vector<std::uint8_t>& enc_mask,
                         const std::vector<int>& dec_in) {
    ad::Tape<S> tape;
    GenLeaves<S> leaves = make_gen_leaves(tape, model);
    auto enc = tape.constant(enc_states);
    auto logits = build_decoder(tape, leaves, model.cfg, enc, enc_mask, dec_in);
    return tape.value(logits);
}

// Mean over non-PAD target positions of -log softmax(logits)[target].
// All positions masked -> 0.
template <class S>
double nll_loss(const ad::Mat<S>& logits, const std::vector<int>& targets,
                const std::vector<std::uint8_t>& mask) {
    GCB_CHECK(static_cast<Eigen::Index>(targets.size()) == logits.rows() &&
                  targets.size() == mask.size(),
              ErrorCode::ShapeMismatch, "nll_loss target count");
    double total = 0;
    long count = 0;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        if (!mask[std::size_t(r)]) continue;
        GCB_CHECK(targets[std::size_t(r)] >= 0 &&
                      targets[std::size_t(r)] < logits.cols(),
                  ErrorCode::ShapeMismatch, "target token outside vocabulary");
        const double max_v = double(logits.row(r).maxCoeff());
        double z = 0;
        for (Eigen::Index c = 0; c < logits.cols(); ++c) {
            z += std::exp(double(logits(r, c)) - max_v);
        }
        total += std::log(z) + max_v - double(logits(r, targets[std::size_t(r)]));
        ++count;
    }
    return count == 0 ? 0.0 : total / double(count);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    double lr = 1e-4;
    int batch = 256;
    int max_epochs = 300;
    int warmup_epochs = 50;  // no validation evaluation during warm-up
    int patience = 10;       // evaluations without improvement before stopping
    int eval_every = 1;      // epochs between validation evaluations
    double max_grad_norm = 0.0;
    std::uint64_t seed = 3;
    bool verbose = false;
};

struct GenExample {
    std::vector<int> src;
    std::vector<std::uint8_t> src_mask;
    std::vector<int> tgt;  // code tokens + EOS, no BOS
};

struct TrainLogRow {
    int epoch = 0;
    double loss = 0;
    std::optional<double> val_metric;
};

struct GenTrainResult {
    std::vector<TrainLogRow> log;
    int best_epoch = -1;
    double best_metric = 0;
};

// Teacher forcing: decoder input is BOS + tgt[:-1]; loss is the mean NLL over
// non-PAD target tokens in the batch.
template <class S>
double generator_train_step(ad::Tape<S>& tape, GenLeaves<S>& leaves, const ModelConfig& cfg,
                            const std::vector<const GenExample*>& batch,
                            typename ad::Tape<S>::Var* loss_out,
                            detail::DropoutCtx<S>* drop = nullptr) {
    using Var = typename ad::Tape<S>::Var;
    Var total{};
    double count = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const GenExample& ex = *batch[i];
        Var enc = build_encoder(tape, leaves, cfg, ex.src, ex.src_mask, nullptr, drop);
        std::vector<int> dec_in;
        dec_in.reserve(ex.tgt.size());
        dec_in.push_back(Vocabulary::kBos);
        dec_in.insert(dec_in.end(), ex.tgt.begin(), ex.tgt.end() - 1);
        Var logits = build_decoder(tape, leaves, cfg, enc, ex.src_mask, dec_in, nullptr, drop);
        std::vector<S> weights(ex.tgt.size());
        for (std::size_t t = 0; t < ex.tgt.size(); ++t) {
            weights[t] = ex.tgt[t] == Vocabulary::kPad ? S(0) : S(1);
            count += double(weights[t]);
        }
        Var ce = tape.cross_entropy(logits, ex.tgt, weights);
        total = i == 0 ? ce : tape.add(total, ce);
    }
    GCB_CHECK(count > 0, ErrorCode::ShapeMismatch, "batch has no unmasked target tokens");
    *loss_out = tape.scale(total, S(1.0 / count));
    return double(tape.value(*loss_out)(0, 0));
}

// validation_metric: higher is better; invoked after warm-up every eval_every
// epochs. The best-metric parameters are restored into the model on return.
template <class S>
GenTrainResult train_generator(
    TransformerModel<S>& model, const std::vector<GenExample>& train,
    const std::function<double(TransformerModel<S>&)>& validation_metric,
    const TrainConfig& tcfg) {
    GCB_CHECK(!train.empty(), ErrorCode::ConfigError, "empty training set");
    GCB_CHECK(tcfg.batch >= 1 && tcfg.max_epochs >= 0 && tcfg.eval_every >= 1 &&
                  tcfg.patience >= 1,
              ErrorCode::ConfigError, "bad train config");

    Adam<S> opt(model.tensor_ptrs(), S(tcfg.lr));
    Rng rng(tcfg.seed);
    Rng dropout_rng(tcfg.seed + 7001);
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    GenTrainResult result;
    TransformerP<ad::Mat<S>> best_params = model.p;
    bool have_best = false;
    int evals_since_best = 0;

    for (int epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(tcfg.batch)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(tcfg.batch));
            std::vector<const GenExample*> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(&train[order[i]]);

            ad::Tape<S> tape;
            GenLeaves<S> leaves = make_gen_leaves(tape, model);
            typename ad::Tape<S>::Var loss{};
            detail::DropoutCtx<S> drop(model.cfg.dropout, &dropout_rng);
            const double loss_value = generator_train_step(
                tape, leaves, model.cfg, batch, &loss,
                model.cfg.dropout > 0 ? &drop : nullptr);
            if (!std::isfinite(loss_value)) {
                raise(ErrorCode::NonFiniteLoss, "epoch " + std::to_string(epoch));
            }
            loss_sum += loss_value;
            ++batches;
            tape.backward(loss);
            std::vector<ad::Mat<S>> grads;
            for (auto v : gen_leaf_list(leaves)) grads.push_back(tape.grad(v));
            opt.step(grads, S(tcfg.max_grad_norm));
        }

        TrainLogRow row;
        row.epoch = epoch;
        row.loss = loss_sum / double(batches);

        if (validation_metric && epoch > tcfg.warmup_epochs &&
            (epoch - tcfg.warmup_epochs) % tcfg.eval_every == 0) {
            const double metric = validation_metric(model);
            row.val_metric = metric;
            if (!have_best || metric > result.best_metric) {
                have_best = true;
                result.best_metric = metric;
                result.best_epoch = epoch;
                best_params = model.p;
                evals_since_best = 0;
            } else {
                ++evals_since_best;
            }
        }
        if (tcfg.verbose) {
            std::fprintf(stderr, "epoch %d loss %.6f%s\n", epoch, row.loss,
                         row.val_metric ? (" val " + std::to_string(*row.val_metric)).c_str()
                                        : "");
        }
        result.log.push_back(row);
        if (have_best && evals_since_best >= tcfg.patience) break;
    }

    if (have_best) {
        model.p = best_params;
    } else {
        result.best_epoch = tcfg.max_epochs;
    }
    return result;
}

}  // namespace gcb
