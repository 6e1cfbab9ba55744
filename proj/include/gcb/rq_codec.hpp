// Semantic-ID codec: MLP encoder/decoder with L-level residual quantization,
// k-means codebook initialization, straight-through training, and
// collision-resolved Semantic-ID assignment.

#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "gcb/autodiff.hpp"
#include "gcb/codemap.hpp"
#include "gcb/common.hpp"
#include "gcb/kmeans.hpp"
#include "gcb/optim.hpp"

namespace gcb {

// ---------------------------------------------------------------------------
// Item features
// ---------------------------------------------------------------------------

enum class FeatureSource { File, Random };

template <class S>
struct ItemFeatures {
    Matrix<S> rows;  // M x d_x, row i-1 is x_i
    FeatureSource source = FeatureSource::Random;
    std::uint64_t seed = 0;
};

template <class S>
ItemFeatures<S> random_features(int item_count, int dim, std::uint64_t seed) {
    GCB_CHECK(item_count >= 1 && dim >= 1, ErrorCode::ConfigError, "bad feature shape");
    ItemFeatures<S> f;
    f.source = FeatureSource::Random;
    f.seed = seed;
    f.rows.resize(item_count, dim);
    Rng rng(seed);
    for (Eigen::Index r = 0; r < f.rows.rows(); ++r) {
        for (Eigen::Index c = 0; c < f.rows.cols(); ++c) {
            f.rows(r, c) = static_cast<S>(rng.gauss());
        }
    }
    return f;
}

// ---------------------------------------------------------------------------
// MLP encoder / decoder
// ---------------------------------------------------------------------------

template <class T>
struct MlpP {
    std::vector<T> w;  // layer i: in x out
    std::vector<T> b;  // 1 x out

    template <class F>
    void visit(const std::string& prefix, F&& f) {
        for (std::size_t i = 0; i < w.size(); ++i) {
            f(prefix + ".w" + std::to_string(i), w[i]);
            f(prefix + ".b" + std::to_string(i), b[i]);
        }
    }
};

template <class S>
MlpP<ad::Mat<S>> init_mlp(const std::vector<int>& dims, Rng& rng, S init_std) {
    MlpP<ad::Mat<S>> mlp;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        ad::Mat<S> w(dims[i], dims[i + 1]);
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) {
                w(r, c) = static_cast<S>(rng.gauss()) * init_std;
            }
        }
        mlp.w.push_back(std::move(w));
        mlp.b.push_back(ad::Mat<S>::Zero(1, dims[i + 1]));
    }
    return mlp;
}

// ReLU between layers, linear output.
template <class S>
ad::Mat<S> mlp_forward(const MlpP<ad::Mat<S>>& mlp, const ad::Mat<S>& x) {
    ad::Mat<S> h = x;
    for (std::size_t i = 0; i < mlp.w.size(); ++i) {
        h = (h * mlp.w[i]).eval();
        h.rowwise() += mlp.b[i].row(0);
        if (i + 1 < mlp.w.size()) h = h.cwiseMax(S(0));
    }
    return h;
}

template <class S>
typename ad::Tape<S>::Var mlp_build(ad::Tape<S>& tape,
                                    const MlpP<typename ad::Tape<S>::Var>& mlp,
                                    typename ad::Tape<S>::Var x) {
    auto h = x;
    for (std::size_t i = 0; i < mlp.w.size(); ++i) {
        h = tape.add_rowvec(tape.matmul(h, mlp.w[i]), mlp.b[i]);
        if (i + 1 < mlp.w.size()) h = tape.relu(h);
    }
    return h;
}

// ---------------------------------------------------------------------------
// Residual quantization
// ---------------------------------------------------------------------------

template <class S>
struct QuantizationResult {
    std::vector<int> codes;  // selected index per level
    Matrix<S> selected;      // L x d, row l-1 is q^(l)
    Matrix<S> residuals;     // L x d, row l-1 is r^(l) (input residual at level l)
    Eigen::Matrix<S, 1, Eigen::Dynamic> zhat;  // sum of selected codewords
};

// Level-l code = argmin over codewords of squared distance to the residual;
// ties pick the lowest codeword index.
template <class S>
QuantizationResult<S> quantize(const Eigen::Matrix<S, 1, Eigen::Dynamic>& z,
                               const std::vector<Matrix<S>>& books) {
    GCB_CHECK(!books.empty(), ErrorCode::ConfigError, "no codebooks");
    const int levels = static_cast<int>(books.size());
    QuantizationResult<S> res;
    res.codes.resize(levels);
    res.selected.resize(levels, z.cols());
    res.residuals.resize(levels, z.cols());
    res.zhat = Eigen::Matrix<S, 1, Eigen::Dynamic>::Zero(z.cols());

    Eigen::Matrix<S, 1, Eigen::Dynamic> residual = z;
    for (int l = 0; l < levels; ++l) {
        GCB_CHECK(books[l].cols() == z.cols(), ErrorCode::ShapeMismatch,
                  "codebook dim mismatch at level " + std::to_string(l + 1));
        res.residuals.row(l) = residual;
        int best = 0;
        double best_dist = std::numeric_limits<double>::infinity();
        for (int c = 0; c < books[l].rows(); ++c) {
            const double dist = (residual - books[l].row(c)).squaredNorm();
            if (dist < best_dist) {
                best_dist = dist;
                best = c;
            }
        }
        res.codes[l] = best;
        res.selected.row(l) = books[l].row(best);
        res.zhat += books[l].row(best);
        residual -= books[l].row(best);
    }
    return res;
}

// Level 1 is k-means over the encoded vectors; each later level is k-means
// over the residuals left by the previous levels.
template <class S>
std::vector<Matrix<S>> init_codebooks(const Matrix<S>& encoded,
                                      const std::vector<int>& level_sizes,
                                      std::uint64_t seed, int kmeans_iters = 100,
                                      int restarts = 1, bool quiet = false) {
    GCB_CHECK(!level_sizes.empty(), ErrorCode::ConfigError, "level_sizes must be non-empty");
    std::vector<Matrix<S>> books;
    Matrix<S> residuals = encoded;
    for (std::size_t l = 0; l < level_sizes.size(); ++l) {
        GCB_CHECK(level_sizes[l] >= 1, ErrorCode::ConfigError, "level size must be >= 1");
        KmeansResult<S> km =
            kmeans(residuals, level_sizes[l], kmeans_iters, seed + l, restarts, quiet);
        books.push_back(km.centroids);
        // Subtract each point's nearest codeword (lowest-index tie rule).
        for (Eigen::Index i = 0; i < residuals.rows(); ++i) {
            double dist;
            const int c = detail::nearest_centroid(books.back(),
                                                   Eigen::Matrix<S, 1, Eigen::Dynamic>(
                                                       residuals.row(i)),
                                                   &dist);
            residuals.row(i) -= books.back().row(c);
        }
    }
    return books;
}

// ---------------------------------------------------------------------------
// RQ-VAE loss
// ---------------------------------------------------------------------------

struct RqvaeLossBreakdown {
    double total = 0;
    double recon = 0;
    double commit = 0;  // codeword term + beta-weighted encoder term
};

// Value-level loss for one item: recon + sum_l ||sg[r]-q||^2 + beta*||r-sg[q]||^2.
// Stop-gradients affect training flows, not the value.
template <class S>
RqvaeLossBreakdown rqvae_loss(const Eigen::Matrix<S, 1, Eigen::Dynamic>& x,
                              const Eigen::Matrix<S, 1, Eigen::Dynamic>& xhat,
                              const Eigen::Matrix<S, 1, Eigen::Dynamic>& z,
                              const QuantizationResult<S>& qres, double beta) {
    GCB_CHECK(x.cols() == xhat.cols(), ErrorCode::ShapeMismatch, "x/xhat dim mismatch");
    GCB_CHECK(z.cols() == qres.zhat.cols(), ErrorCode::ShapeMismatch, "z/zhat dim mismatch");
    RqvaeLossBreakdown out;
    out.recon = double((x - xhat).squaredNorm());
    double quant = 0;
    for (Eigen::Index l = 0; l < qres.residuals.rows(); ++l) {
        quant += double((qres.residuals.row(l) - qres.selected.row(l)).squaredNorm());
    }
    out.commit = quant * (1.0 + beta);
    out.total = out.recon + out.commit;
    return out;
}

struct RqvaeConfig {
    std::vector<int> level_sizes{32, 32, 32};
    int d_x = 64;
    int d = 32;
    std::vector<int> mlp_widths{64};
    int epochs = 200;
    double lr = 1e-3;
    double beta = 0.25;
    int batch = 64;
    std::uint64_t seed = 2;
    int kmeans_iters = 100;
    int kmeans_restarts = 1;
    double init_std = 0.05;
    bool quiet = false;
};

template <class S>
struct RqvaeModel {
    RqvaeConfig cfg;
    MlpP<ad::Mat<S>> encoder;  // d_x -> widths -> d
    MlpP<ad::Mat<S>> decoder;  // d -> reversed widths -> d_x
    std::vector<ad::Mat<S>> codebooks;

    template <class F>
    void visit(F&& f) {
        encoder.visit("enc", f);
        decoder.visit("dec", f);
        for (std::size_t l = 0; l < codebooks.size(); ++l) {
            f("codebook." + std::to_string(l), codebooks[l]);
        }
    }

    std::vector<ad::Mat<S>*> tensor_ptrs() {
        std::vector<ad::Mat<S>*> out;
        visit([&](const std::string&, ad::Mat<S>& m) { out.push_back(&m); });
        return out;
    }

    std::vector<std::pair<std::string, ad::Mat<S>*>> named_tensors() {
        std::vector<std::pair<std::string, ad::Mat<S>*>> out;
        visit([&](const std::string& n, ad::Mat<S>& m) { out.emplace_back(n, &m); });
        return out;
    }
};

template <class S>
RqvaeModel<S> init_rqvae(const RqvaeConfig& cfg) {
    GCB_CHECK(!cfg.level_sizes.empty(), ErrorCode::ConfigError, "level_sizes must be non-empty");
    RqvaeModel<S> model;
    model.cfg = cfg;
    Rng rng(cfg.seed);
    std::vector<int> enc_dims{cfg.d_x};
    enc_dims.insert(enc_dims.end(), cfg.mlp_widths.begin(), cfg.mlp_widths.end());
    enc_dims.push_back(cfg.d);
    std::vector<int> dec_dims(enc_dims.rbegin(), enc_dims.rend());
    model.encoder = init_mlp<S>(enc_dims, rng, S(cfg.init_std));
    model.decoder = init_mlp<S>(dec_dims, rng, S(cfg.init_std));
    // Codebooks are re-seeded by k-means after the first encoder pass; start
    // with small random values so untrained use is still well-defined.
    for (int size : cfg.level_sizes) {
        ad::Mat<S> book(size, cfg.d);
        for (Eigen::Index r = 0; r < book.rows(); ++r) {
            for (Eigen::Index c = 0; c < book.cols(); ++c) {
                book(r, c) = static_cast<S>(rng.gauss()) * S(cfg.init_std);
            }
        }
        model.codebooks.push_back(std::move(book));
    }
    return model;
}

template <class S>
struct RqvaeLeaves {
    MlpP<typename ad::Tape<S>::Var> encoder, decoder;
    std::vector<typename ad::Tape<S>::Var> codebooks;
};

template <class S>
RqvaeLeaves<S> make_rqvae_leaves(ad::Tape<S>& tape, const RqvaeModel<S>& model) {
    RqvaeLeaves<S> leaves;
    for (const auto& w : model.encoder.w) leaves.encoder.w.push_back(tape.leaf(w));
    for (const auto& b : model.encoder.b) leaves.encoder.b.push_back(tape.leaf(b));
    for (const auto& w : model.decoder.w) leaves.decoder.w.push_back(tape.leaf(w));
    for (const auto& b : model.decoder.b) leaves.decoder.b.push_back(tape.leaf(b));
    for (const auto& book : model.codebooks) leaves.codebooks.push_back(tape.leaf(book));
    return leaves;
}

template <class S>
std::vector<typename ad::Tape<S>::Var> rqvae_leaf_list(const RqvaeLeaves<S>& leaves) {
    std::vector<typename ad::Tape<S>::Var> out;
    for (std::size_t i = 0; i < leaves.encoder.w.size(); ++i) {
        out.push_back(leaves.encoder.w[i]);
        out.push_back(leaves.encoder.b[i]);
    }
    for (std::size_t i = 0; i < leaves.decoder.w.size(); ++i) {
        out.push_back(leaves.decoder.w[i]);
        out.push_back(leaves.decoder.b[i]);
    }
    for (auto v : leaves.codebooks) out.push_back(v);
    return out;
}

template <class S>
struct RqvaeLossGraph {
    typename ad::Tape<S>::Var total;  // scalar, mean over batch rows
    double recon = 0;                 // value of the reconstruction term (mean)
    std::vector<std::vector<int>> codes;  // per level, per batch row
};

// Build the batched loss graph. Codes are chosen by per-row argmin on current
// values unless codes_override pins them (finite-difference replays must hold
// the selection fixed).
template <class S>
RqvaeLossGraph<S> build_rqvae_loss(ad::Tape<S>& tape, const RqvaeLeaves<S>& leaves,
                                   const ad::Mat<S>& x_batch, double beta,
                                   const std::vector<std::vector<int>>* codes_override =
                                       nullptr) {
    using Var = typename ad::Tape<S>::Var;
    const auto batch = x_batch.rows();
    const int levels = static_cast<int>(leaves.codebooks.size());

    Var x = tape.constant(x_batch);
    Var z = mlp_build(tape, leaves.encoder, x);

    RqvaeLossGraph<S> graph;
    graph.codes.resize(levels);

    Var residual = z;
    std::vector<Var> selected;  // gathered codeword rows per level
    Var quant_loss{};
    Var commit_loss{};
    for (int l = 0; l < levels; ++l) {
        std::vector<int> codes;
        if (codes_override) {
            codes = (*codes_override)[l];
        } else {
            codes.resize(batch);
            const ad::Mat<S>& res_v = tape.value(residual);
            const ad::Mat<S>& book_v = tape.value(leaves.codebooks[l]);
            for (Eigen::Index i = 0; i < batch; ++i) {
                int best = 0;
                double best_dist = std::numeric_limits<double>::infinity();
                for (Eigen::Index c = 0; c < book_v.rows(); ++c) {
                    const double dist = (res_v.row(i) - book_v.row(c)).squaredNorm();
                    if (dist < best_dist) {
                        best_dist = dist;
                        best = static_cast<int>(c);
                    }
                }
                codes[i] = best;
            }
        }
        graph.codes[l] = codes;
        Var q = tape.gather_rows(leaves.codebooks[l], codes);
        selected.push_back(q);
        Var q_detached = tape.detach(q);
        // Codeword pull: ||sg[r] - q||^2; encoder commitment: beta*||r - sg[q]||^2.
        Var quant_term = tape.sum_sq(tape.sub(tape.detach(residual), q));
        Var commit_term = tape.sum_sq(tape.sub(residual, q_detached));
        quant_loss = l == 0 ? quant_term : tape.add(quant_loss, quant_term);
        commit_loss = l == 0 ? commit_term : tape.add(commit_loss, commit_term);
        residual = tape.sub(residual, q_detached);
    }

    // Straight-through decoder input: z + sg[zhat - z].
    Var zhat = selected[0];
    for (int l = 1; l < levels; ++l) zhat = tape.add(zhat, selected[l]);
    Var z_st = tape.add(z, tape.detach(tape.sub(zhat, z)));
    Var xhat = mlp_build(tape, leaves.decoder, z_st);
    Var recon = tape.sum_sq(tape.sub(x, xhat));

    const S inv_batch = S(1) / static_cast<S>(batch);
    graph.total = tape.scale(
        tape.add(recon, tape.add(quant_loss, tape.scale(commit_loss, S(beta)))), inv_batch);
    graph.recon = double(tape.value(recon)(0, 0)) / double(batch);
    return graph;
}

// Mean squared reconstruction error per feature entry over all items.
template <class S>
double eval_recon_mse(const RqvaeModel<S>& model, const Matrix<S>& features) {
    double total = 0;
    const ad::Mat<S> z_all = mlp_forward(model.encoder, features);
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        Eigen::Matrix<S, 1, Eigen::Dynamic> z = z_all.row(i);
        QuantizationResult<S> q = quantize(z, model.codebooks);
        ad::Mat<S> xhat = mlp_forward(model.decoder, ad::Mat<S>(q.zhat));
        total += double((features.row(i) - xhat.row(0)).squaredNorm());
    }
    return total / (double(features.rows()) * double(features.cols()));
}

// Fraction of codewords per level selected by at least one item.
template <class S>
std::vector<double> codebook_utilization(const RqvaeModel<S>& model,
                                         const Matrix<S>& features) {
    const ad::Mat<S> z_all = mlp_forward(model.encoder, features);
    std::vector<std::vector<bool>> used;
    for (const auto& book : model.codebooks) {
        used.emplace_back(static_cast<std::size_t>(book.rows()), false);
    }
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        Eigen::Matrix<S, 1, Eigen::Dynamic> z = z_all.row(i);
        QuantizationResult<S> q = quantize(z, model.codebooks);
        for (std::size_t l = 0; l < used.size(); ++l) used[l][std::size_t(q.codes[l])] = true;
    }
    std::vector<double> out;
    for (const auto& level : used) {
        std::size_t count = 0;
        for (bool b : level) count += b ? 1 : 0;
        out.push_back(double(count) / double(level.size()));
    }
    return out;
}

struct RqvaeTrainStats {
    std::vector<double> loss_history;  // mean total loss per epoch
    double initial_recon_mse = 0;      // after k-means init, before training
    double final_recon_mse = 0;
};

// Deterministic given cfg.seed: init MLPs, one encoder pass, k-means codebook
// init, then Adam over encoder/decoder/codebooks.
// Throws NonFiniteLoss(epoch).
template <class S>
RqvaeTrainStats train_rqvae(RqvaeModel<S>& model, const Matrix<S>& features) {
    const RqvaeConfig& cfg = model.cfg;
    GCB_CHECK(features.cols() == cfg.d_x, ErrorCode::ShapeMismatch,
              "feature dim != configured d_x");
    const auto item_count = features.rows();

    const ad::Mat<S> encoded = mlp_forward(model.encoder, features);
    model.codebooks = init_codebooks(encoded, cfg.level_sizes, cfg.seed + 1001,
                                     cfg.kmeans_iters, cfg.kmeans_restarts, cfg.quiet);

    RqvaeTrainStats stats;
    stats.initial_recon_mse = eval_recon_mse(model, features);

    Adam<S> opt(model.tensor_ptrs(), S(cfg.lr));
    Rng shuffle_rng(cfg.seed + 2002);
    std::vector<Eigen::Index> order(item_count);
    for (Eigen::Index i = 0; i < item_count; ++i) order[std::size_t(i)] = i;

    const int batch = std::max(1, std::min<int>(cfg.batch, static_cast<int>(item_count)));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0;
        std::size_t batches = 0;
        for (Eigen::Index start = 0; start < item_count; start += batch) {
            const auto size = std::min<Eigen::Index>(batch, item_count - start);
            ad::Mat<S> x(size, features.cols());
            for (Eigen::Index i = 0; i < size; ++i) {
                x.row(i) = features.row(order[std::size_t(start + i)]);
            }
            ad::Tape<S> tape;
            RqvaeLeaves<S> leaves = make_rqvae_leaves(tape, model);
            RqvaeLossGraph<S> graph = build_rqvae_loss(tape, leaves, x, cfg.beta);
            const double loss = double(tape.value(graph.total)(0, 0));
            if (!std::isfinite(loss)) {
                raise(ErrorCode::NonFiniteLoss, "epoch " + std::to_string(epoch));
            }
            epoch_loss += loss;
            ++batches;
            tape.backward(graph.total);
            std::vector<ad::Mat<S>> grads;
            for (auto v : rqvae_leaf_list(leaves)) grads.push_back(tape.grad(v));
            opt.step(grads);
        }
        stats.loss_history.push_back(epoch_loss / double(batches));
    }
    stats.final_recon_mse = eval_recon_mse(model, features);
    return stats;
}

// Quantize every item and append the collision position.
template <class S>
CodeMap assign_semantic_ids(const Matrix<S>& features, const RqvaeModel<S>& model) {
    const ad::Mat<S> z_all = mlp_forward(model.encoder, features);
    std::vector<std::vector<int>> codes;
    codes.reserve(std::size_t(features.rows()));
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        Eigen::Matrix<S, 1, Eigen::Dynamic> z = z_all.row(i);
        codes.push_back(quantize(z, model.codebooks).codes);
    }
    std::vector<int> sizes;
    for (const auto& book : model.codebooks) sizes.push_back(static_cast<int>(book.rows()));
    return build_codemap(codes, sizes);
}

}  // namespace gcb
